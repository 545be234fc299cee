"""Command-line front end.

Exit codes: 0 success, 1 error (including bad arguments), 2 the run
completed but a soft check failed (CNN-AE rate below a baseline, or a
simulated rate above the theory curve).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cnn_ae, config, harness
from .channel import NoiseSpec

log = logging.getLogger("fblcode")

EXIT_OK, EXIT_ERROR, EXIT_SOFT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _number(text):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None


def parse_snr_list(text: str) -> list:
    """``"0:20:1"`` (inclusive range), ``"6,10,14"``, or a single value."""
    text = text.strip()
    if not text:
        raise UsageError("SNR list is empty")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"SNR range must be start:stop:step, got {text!r}")
        start, stop, step = (_number(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"bad SNR range {text!r}")
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    values = [_number(p) for p in text.split(",") if p.strip()]
    if not values:
        raise UsageError("SNR list is empty")
    return values


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _write_manifest(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _sidecar(args, payload):
    if args.out is not None:
        _write_manifest(Path(str(args.out) + ".manifest.json"), payload)


# ---------------------------------------------------------------------------
# commands

def cmd_theory(args):
    snrs = parse_snr_list(args.snr)
    if not 0 < args.eps < 0.5:
        raise UsageError("--eps must lie in (0, 0.5)")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    points = [harness.theory_point(args.n, args.eps, s) for s in snrs]
    if args.no_log_term:
        from . import theory
        for p in points:
            p.rate = theory.max_rate_fbl(theory.FblParams(args.n, args.eps),
                                         theory.db_to_linear(p.snr_db), log_term=False)
    _emit(harness.write_csv(points), args.out)
    _sidecar(args, {"command": "theory", "n": args.n, "epsilon": args.eps, "snr_db": snrs,
                    "log_term": not args.no_log_term})
    return EXIT_OK


def _model_config(cfg, seed):
    m, t = cfg["model"], cfg["train"]
    return cnn_ae.derive_config(m["n"], m["rate"], m["rcod"], m["kmod"], M1=m["M1"], M2=m["M2"],
                                kernel=m["kernel"], train_snr_db=t["snr_db"], seed=seed)


def _train_config(cfg):
    t = cfg["train"]
    return cnn_ae.TrainConfig(lr=t["lr"], batch_size=t["batch_size"], epochs=t["epochs"],
                              train_frames=t["train_frames"], snr_offset_db=t["snr_offset_db"])


def _report_dict(rep):
    return {"frames": rep.frames, "errors": rep.errors, "fep": rep.fep,
            "ci_low": rep.ci_low, "ci_high": rep.ci_high, "seed": rep.seed}


def _train_fep(model, ae_cfg, tc, frames, seed):
    """FEP on training-set messages at the training SNR (fresh noise)."""
    errors = done = 0
    batch = 0
    while done < frames:
        size = min(tc.batch_size, frames - done)
        bits = cnn_ae._message_batch(ae_cfg.seed, batch, tc.batch_size, ae_cfg.K)[:size]
        noise = NoiseSpec.from_snr_db(ae_cfg.train_snr_db + tc.snr_offset_db, seed, batch)
        errors += int(np.count_nonzero(np.any(cnn_ae.infer(bits, model, noise) != bits, axis=1)))
        done += size
        batch += 1
    return harness.FepReport.from_counts(errors, done, seed)


def cmd_train(args):
    cfg = config.load(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    cfg["seed"] = seed
    out = Path(args.out or cfg["output"]["dir"])
    ae_cfg = _model_config(cfg, seed)
    tc = _train_config(cfg)
    model = cnn_ae.build_model(ae_cfg)
    log.info("training K=%d N=%d n=%d (L=%d, K'=%d, N'=%d), %d parameters", ae_cfg.K, ae_cfg.N,
             ae_cfg.n, ae_cfg.L, ae_cfg.K_sub, ae_cfg.N_sub, model.num_params)
    result = cnn_ae.train(model, ae_cfg, tc)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = cnn_ae.save_checkpoint(model, ae_cfg, out / "model.fblae")
    trace = "step,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(result.losses))
    (out / "loss_trace.csv").write_text(trace)
    eval_snr = cfg["eval"]["snr_db"]
    eval_snr = ae_cfg.train_snr_db if eval_snr is None else eval_snr
    test = harness.estimate_fep(cnn_ae.AeSystem(model), eval_snr, cfg["eval"]["frames"],
                                harness.derive_seed(seed, "test"), args.workers)
    train_rep = _train_fep(model, ae_cfg, tc, min(tc.train_frames, cfg["eval"]["frames"]),
                           harness.derive_seed(seed, "train-eval"))
    manifest = {"command": "train", "config": cfg, "config_hash": config.config_hash(cfg),
                "seed": seed, "checkpoint": ckpt.name,
                "checkpoint_sha256": cnn_ae.checkpoint_digest(ckpt),
                "param_count": model.num_params, "steps": result.steps,
                "final_loss": result.losses[-1], "eval_snr_db": eval_snr,
                "train_fep": _report_dict(train_rep), "test_fep": _report_dict(test)}
    _write_manifest(out / "manifest.json", manifest)
    print(f"checkpoint {ckpt}  test FEP {test.fep:.3g} [{test.ci_low:.3g}, {test.ci_high:.3g}] "
          f"over {test.frames} frames")
    return EXIT_OK


def _report_point(scheme, rep, snr, n, eps, rate, rcod, kmod):
    return harness.RatePoint(scheme, snr, n, eps, rate, rcod, kmod, rep.fep, rep.ci_low,
                             rep.ci_high, rep.frames, rep.meets(eps), rep.seed)


def cmd_eval(args):
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    model = cnn_ae.load_checkpoint(args.checkpoint)
    c = model.cfg
    seed = 0 if args.seed is None else args.seed
    rep = harness.estimate_fep(cnn_ae.AeSystem(model), args.snr, args.frames, seed, args.workers)
    print(f"FEP {rep.fep:.4g} ({rep.errors}/{rep.frames}), 95% CI [{rep.ci_low:.4g}, {rep.ci_high:.4g}]",
          file=sys.stderr)
    point = _report_point("cnn_ae", rep, args.snr, c.n, args.eps, float(c.rate), float(c.r_cod), c.k_mod)
    _emit(harness.write_csv([point]), args.out)
    _sidecar(args, {"command": "eval", "checkpoint": str(args.checkpoint),
                    "checkpoint_sha256": cnn_ae.checkpoint_digest(args.checkpoint),
                    "snr_db": args.snr, "frames": args.frames, "seed": seed,
                    "report": _report_dict(rep)})
    return EXIT_OK


def cmd_baseline(args):
    from fractions import Fraction

    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    seed = 0 if args.seed is None else args.seed
    if args.scheme == "polar_qam":
        k = Fraction(args.rcod) * args.n * args.kmod
        if k.denominator != 1:
            raise UsageError("R_cod * n * k_mod must be an integer")
        system = harness.PolarQamSystem(args.n, int(k), args.kmod, args.snr,
                                        harness.derive_seed(seed, "construct", args.snr, args.kmod))
    else:
        if args.r is None:
            raise UsageError("rm_qam needs --r")
        system = harness.RmQamSystem(args.n, args.r, args.kmod)
    rep = harness.estimate_fep(system, args.snr, args.frames, seed, args.workers)
    N = args.n * args.kmod
    point = _report_point(args.scheme, rep, args.snr, args.n, args.eps, system.k / args.n,
                          system.k / N, args.kmod)
    _emit(harness.write_csv([point]), args.out)
    _sidecar(args, {"command": "baseline", "scheme": args.scheme, "snr_db": args.snr,
                    "k": system.k, "kmod": args.kmod, "frames": args.frames, "seed": seed,
                    "report": _report_dict(rep)})
    return EXIT_OK


def _ae_training(cfg):
    m = cfg["model"]
    return harness.AeTraining(M1=m["M1"], M2=m["M2"], kernel=m["kernel"],
                              train_cfg=_train_config(cfg),
                              snr_offset_db=cfg["train"]["snr_offset_db"])


def _load_optional(path):
    return config.load(path) if path else config.resolve({})


def cmd_rate_search(args):
    cfg = _load_optional(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    sw = cfg["sweep"]
    n = args.n or cfg["model"]["n"]
    eps = args.eps or sw["epsilon"]
    frames = args.frames or sw["frames"]
    point = harness.rate_search(args.scheme, n, eps, args.snr, frames=frames, seed=seed,
                                workers=args.workers, ae=_ae_training(cfg))
    for d in point.diagnostics:
        print(json.dumps(d), file=sys.stderr)
    _emit(harness.write_csv([point]), args.out)
    _sidecar(args, {"command": "rate-search", "scheme": args.scheme, "snr_db": args.snr,
                    "config": cfg, "config_hash": config.config_hash(cfg), "seed": seed,
                    "diagnostics": point.diagnostics})
    return EXIT_OK


def cmd_sweep(args):
    cfg = config.load(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    cfg["seed"] = seed
    sw = cfg["sweep"]
    unknown = set(sw["schemes"]) - set(harness.SCHEMES)
    if unknown:
        raise UsageError(f"unknown scheme(s): {', '.join(sorted(unknown))}")
    points = harness.sweep(sw["schemes"], sw["snr_db"], n=cfg["model"]["n"], epsilon=sw["epsilon"],
                           frames=sw["frames"], seed=seed, workers=args.workers,
                           ae=_ae_training(cfg))
    out = Path(args.out) if args.out else Path(cfg["output"]["dir"]) / "sweep.csv"
    _emit(harness.write_csv(points), out)
    converse = harness.converse_violations(points)
    order = harness.ordering_violations(points)
    for p in converse:
        print(f"SOFT-FAIL converse: {p.scheme} rate {p.rate} above theory at {p.snr_db} dB",
              file=sys.stderr)
    for snr, rate, other, orate in order:
        print(f"SOFT-FAIL ordering: cnn_ae rate {rate} < {other} rate {orate} at {snr} dB",
              file=sys.stderr)
    _write_manifest(Path(str(out) + ".manifest.json"), {
        "command": "sweep", "config": cfg, "config_hash": config.config_hash(cfg), "seed": seed,
        "diagnostics": {f"{p.scheme}@{p.snr_db}": p.diagnostics for p in points},
        "converse_violations": len(converse), "ordering_violations": order})
    return EXIT_SOFT_FAIL if converse or order else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    common.add_argument("--workers", type=int, default=1, help="Monte-Carlo evaluation threads")
    common.add_argument("--out", default=None, help="output file (or directory for train)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = Parser(prog="fblcode", description="Finite-blocklength coding lab for the AWGN channel.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    s = sub.add_parser("theory", parents=[common], help="normal-approximation rate curve")
    s.add_argument("--n", type=int, default=128)
    s.add_argument("--eps", type=float, default=1e-2)
    s.add_argument("--snr", required=True, help="start:stop:step or comma list, in dB")
    s.add_argument("--no-log-term", action="store_true", help="drop the log2(n)/(2n) term")
    s.set_defaults(func=cmd_theory)

    s = sub.add_parser("train", parents=[common], help="train a CNN autoencoder")
    s.add_argument("config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="Monte-Carlo FEP of a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--snr", type=float, required=True)
    s.add_argument("--frames", type=int, default=1_000_000)
    s.add_argument("--eps", type=float, default=1e-2)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("baseline", parents=[common], help="FEP of one coded-QAM baseline")
    s.add_argument("--scheme", choices=["polar_qam", "rm_qam"], required=True)
    s.add_argument("--snr", type=float, required=True)
    s.add_argument("--n", type=int, default=128)
    s.add_argument("--kmod", type=int, default=2)
    s.add_argument("--rcod", default="1/2", help="coding rate (polar_qam)")
    s.add_argument("--r", type=int, default=None, help="Reed-Muller order (rm_qam)")
    s.add_argument("--frames", type=int, default=10_000)
    s.add_argument("--eps", type=float, default=1e-2)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("rate-search", parents=[common], help="highest rate meeting epsilon at one SNR")
    s.add_argument("--scheme", choices=list(harness.SCHEMES), required=True)
    s.add_argument("--snr", type=float, required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--frames", type=int, default=None)
    s.set_defaults(func=cmd_rate_search)

    s = sub.add_parser("sweep", parents=[common], help="rate-vs-SNR curves for several schemes")
    s.add_argument("config")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, config.ConfigFileError, cnn_ae.ConfigError) as exc:
        print(f"fblcode {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (cnn_ae.CheckpointError, cnn_ae.TrainingDiverged, OSError, ValueError) as exc:
        print(f"fblcode {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
