"""Monte-Carlo frame error estimation, rate search, and rate-vs-SNR sweeps.

A *system* is any object with ``k`` (message bits), ``encode(bits)`` mapping
``(frames, k)`` bits to ``(frames, n, 2)`` unit-power symbols, and
``decode(y)`` mapping received symbols back to ``(frames, k)`` bits.

Frames are processed in fixed chunks of :data:`CHUNK_FRAMES`. Chunk ``c``
draws its messages and its channel noise from substreams keyed by ``c``, so
the outcome depends only on the seed and never on how many workers share
the chunks.
"""

import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import beta

from . import channel, theory
from .modem import QamSpec, qam_demodulate_hard, qam_modulate
from .polar import PolarCode, bsc_llr, polar_encode, sc_decode
from .reed_muller import RmCode, rm_decode_reed, rm_encode

log = logging.getLogger(__name__)

CHUNK_FRAMES = 1000
SCHEMES = ("theory", "cnn_ae", "polar_qam", "rm_qam")
DEFAULT_RCODS = (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2),
                 Fraction(2, 3), Fraction(3, 4), Fraction(5, 6))
DEFAULT_KMODS = (1, 2, 4, 6, 8)
# baseline code lengths n * k_mod must be powers of two
BASELINE_KMODS = (1, 2, 4, 8)
CONSTRUCTION_BITS = 1_000_000


def derive_seed(seed: int, *parts) -> int:
    """Stable 63-bit seed derived from a base seed and a label tuple."""
    text = repr((int(seed),) + tuple(str(p) for p in parts)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little") >> 1


# ---------------------------------------------------------------------------
# FEP estimation

def clopper_pearson(errors: int, frames: int, confidence: float = 0.95):
    """Exact two-sided binomial confidence interval."""
    if frames < 1 or not 0 <= errors <= frames:
        raise ValueError(f"need 0 <= errors <= frames and frames >= 1, got {errors}/{frames}")
    a = 1.0 - confidence
    lo = 0.0 if errors == 0 else float(beta.ppf(a / 2, errors, frames - errors + 1))
    hi = 1.0 if errors == frames else float(beta.ppf(1 - a / 2, errors + 1, frames - errors))
    return lo, hi


@dataclass(frozen=True)
class FepReport:
    frames: int
    errors: int
    fep: float
    ci_low: float
    ci_high: float
    seed: int

    @classmethod
    def from_counts(cls, errors: int, frames: int, seed: int) -> "FepReport":
        lo, hi = clopper_pearson(errors, frames)
        return cls(frames, errors, errors / frames, lo, hi, seed)

    def meets(self, epsilon: float) -> bool:
        """Conservative acceptance: the upper confidence bound is at most epsilon."""
        return self.ci_high <= epsilon


def _run_chunk(system, n0, seed, chunk, size):
    msg = channel.substream(seed, channel.MESSAGES, chunk).integers(
        0, 2, size=(size, system.k), dtype=np.uint8)
    x = system.encode(msg)
    y = channel.transmit(x, channel.NoiseSpec(n0, seed, chunk))
    return int(np.count_nonzero(np.any(system.decode(y) != msg, axis=1)))


def estimate_fep(system, snr_db: float, frames: int, seed: int, workers: int = 1,
                 stop_errors: int = None) -> FepReport:
    """Monte-Carlo frame error probability at ``snr_db``.

    A frame is in error if any of its ``k`` bits is wrong. With
    ``stop_errors`` the run ends after the first chunk (in index order) that
    brings the error count to that value; the report then covers only the
    frames simulated so far.
    """
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    n0 = 10.0 ** (-snr_db / 10.0)
    sizes = [min(CHUNK_FRAMES, frames - s) for s in range(0, frames, CHUNK_FRAMES)]
    errors = done = 0

    def job(c):
        return _run_chunk(system, n0, seed, c, sizes[c])

    if workers <= 1:
        results = map(job, range(len(sizes)))
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(job, range(len(sizes)))
    try:
        for c, e in enumerate(results):
            errors += e
            done += sizes[c]
            if stop_errors is not None and errors >= stop_errors:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)
    return FepReport.from_counts(errors, done, seed)


def failing_error_count(frames: int, epsilon: float) -> int:
    """Smallest error count whose upper bound over ``frames`` exceeds epsilon."""
    lo, hi = 0, frames
    while lo < hi:
        mid = (lo + hi) // 2
        if clopper_pearson(mid, frames)[1] > epsilon:
            hi = mid
        else:
            lo = mid + 1
    return lo


# ---------------------------------------------------------------------------
# conventional baselines

def estimate_bit_error(spec: QamSpec, snr_db: float, seed: int,
                       bits: int = CONSTRUCTION_BITS) -> float:
    """Uncoded hard-decision bit error rate of ``spec`` at ``snr_db``."""
    rng = channel.substream(seed, channel.CONSTRUCTION)
    nbits = bits - bits % spec.k_mod
    b = rng.integers(0, 2, size=nbits, dtype=np.uint8)
    x = qam_modulate(b, spec)
    w = channel.gaussian_noise(x.shape, 10.0 ** (-snr_db / 10.0), rng)
    return float(np.mean(qam_demodulate_hard(x + w, spec) != b))


def _clip_crossover(p, bits):
    return min(max(p, 0.5 / bits), 0.49)


class PolarQamSystem:
    """Polar code + Gray QAM with hard detection and SC decoding.

    The code is built for the BSC that hard QAM detection induces at the
    operating SNR; its crossover is measured by simulation.
    """

    def __init__(self, n: int, k: int, k_mod: int, snr_db: float, seed: int = 0):
        self.n, self.k, self.k_mod = n, k, k_mod
        self.spec = QamSpec(k_mod)
        self.p_bit = _clip_crossover(estimate_bit_error(self.spec, snr_db, seed), CONSTRUCTION_BITS)
        self.code = PolarCode.construct(n * k_mod, k, self.p_bit)

    def encode(self, bits):
        return qam_modulate(polar_encode(bits, self.code), self.spec)

    def decode(self, y):
        hard = qam_demodulate_hard(y, self.spec)
        return sc_decode(bsc_llr(hard, self.p_bit), self.code)


class RmQamSystem:
    """Reed-Muller code + Gray QAM with hard detection and Reed decoding."""

    def __init__(self, n: int, r: int, k_mod: int):
        m = (n * k_mod).bit_length() - 1
        if 1 << m != n * k_mod:
            raise ValueError(f"n * k_mod = {n * k_mod} is not a power of two")
        self.n, self.k_mod = n, k_mod
        self.code = RmCode(r, m)
        self.k = self.code.K
        self.spec = QamSpec(k_mod)

    def encode(self, bits):
        return qam_modulate(rm_encode(bits, self.code), self.spec)

    def decode(self, y):
        return rm_decode_reed(qam_demodulate_hard(y, self.spec), self.code)


# ---------------------------------------------------------------------------
# rate search

@dataclass(frozen=True)
class Candidate:
    """One rung of a rate ladder: ``k`` message bits, coding rate, modulation order."""

    k: int
    rcod: Fraction
    kmod: int
    r: int = None  # Reed-Muller order when the candidate is an RM code

    def rate(self, n: int) -> Fraction:
        return Fraction(self.k, n)


def default_ladder(scheme: str, n: int, rcods=DEFAULT_RCODS, kmods=None) -> list:
    """Candidates for ``scheme`` sorted by rate, highest first."""
    out = []
    if scheme == "rm_qam":
        for kmod in kmods or BASELINE_KMODS:
            N = n * kmod
            m = N.bit_length() - 1
            if 1 << m != N:
                continue
            for r in range(m + 1):
                K = sum(math.comb(m, i) for i in range(r + 1))
                out.append(Candidate(K, Fraction(K, N), kmod, r))
    else:
        if kmods is None:
            kmods = BASELINE_KMODS if scheme == "polar_qam" else DEFAULT_KMODS
        for kmod in kmods:
            N = n * kmod
            if scheme == "polar_qam" and N & (N - 1):
                continue
            for rc in rcods:
                K = N * Fraction(rc)
                if K.denominator == 1 and K >= 1:
                    out.append(Candidate(int(K), Fraction(rc), kmod))
    return sorted(out, key=lambda c: (-c.k, c.kmod, c.rcod))


@dataclass
class RatePoint:
    scheme: str
    snr_db: float
    n: int
    epsilon: float
    rate: float
    rcod: float = None
    kmod: int = None
    fep: float = None
    ci_low: float = None
    ci_high: float = None
    frames: int = None
    meets_target: bool = False
    seed: int = None
    diagnostics: list = field(default_factory=list, compare=False, repr=False)


CSV_FIELDS = ("scheme", "snr_db", "n", "epsilon", "rate", "rcod", "kmod", "fep",
              "ci_low", "ci_high", "frames", "meets_target", "seed")


def theory_point(n: int, epsilon: float, snr_db: float) -> RatePoint:
    rate = theory.max_rate_fbl(theory.FblParams(n, epsilon), theory.db_to_linear(snr_db))
    return RatePoint("theory", snr_db, n, epsilon, rate, meets_target=True)


@dataclass
class AeTraining:
    """What the cnn_ae scheme needs to train one candidate."""

    M1: int = 200
    M2: int = 100
    kernel: int = 5
    train_cfg: object = None
    snr_offset_db: float = 0.0
    dtype: object = np.float32


def _build_system(scheme, cand, n, snr_db, seed, ae=None):
    if scheme == "polar_qam":
        return PolarQamSystem(n, cand.k, cand.kmod, snr_db, derive_seed(seed, "construct", snr_db, cand.kmod))
    if scheme == "rm_qam":
        return RmQamSystem(n, cand.r, cand.kmod)
    if scheme == "cnn_ae":
        from . import cnn_ae

        ae = ae or AeTraining()
        cfg = cnn_ae.derive_config(n, cand.rate(n), cand.rcod, cand.kmod, M1=ae.M1, M2=ae.M2,
                                   kernel=ae.kernel, train_snr_db=snr_db,
                                   seed=derive_seed(seed, "train", cand.k, cand.rcod, cand.kmod, snr_db))
        model = cnn_ae.build_model(cfg, ae.dtype)
        tc = ae.train_cfg or cnn_ae.TrainConfig()
        if ae.snr_offset_db:
            tc = cnn_ae.TrainConfig(**{**tc.__dict__, "snr_offset_db": ae.snr_offset_db})
        log.info("training cnn_ae R=%s (R_cod=%s, k_mod=%d) at %.1f dB",
                 cand.rate(n), cand.rcod, cand.kmod, snr_db)
        cnn_ae.train(model, cfg, tc)
        return cnn_ae.AeSystem(model)
    raise ValueError(f"unknown scheme {scheme!r}")


def rate_search(scheme: str, n: int, epsilon: float, snr_db: float, ladder=None,
                frames: int = 1_000_000, seed: int = 0, workers: int = 1,
                ae: AeTraining = None, prune_above_theory: bool = None,
                early_stop: bool = True) -> RatePoint:
    """Highest-rate ladder entry whose FEP upper confidence bound is <= epsilon.

    Candidates are tried from the highest rate down; ``theory`` bypasses the
    search. Each candidate's seeds depend only on the candidate itself, so a
    larger ladder can never lower the result. If nothing is accepted the
    point has rate 0 and ``meets_target=False``; ``diagnostics`` lists every
    candidate tried.
    """
    if scheme == "theory":
        return theory_point(n, epsilon, snr_db)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    min_frames = math.ceil(100 / epsilon)
    if frames < min_frames:
        log.warning("raising frames from %d to %d (100 / epsilon)", frames, min_frames)
        frames = min_frames
    ladder = default_ladder(scheme, n) if ladder is None else list(ladder)
    ladder = sorted(ladder, key=lambda c: (-c.k, c.kmod, c.rcod))
    if prune_above_theory is None:
        prune_above_theory = scheme == "cnn_ae"
    if prune_above_theory:
        cap = theory_point(n, epsilon, snr_db).rate
        ladder = [c for c in ladder if c.rate(n) <= cap]
    stop = failing_error_count(frames, epsilon) if early_stop else None
    diagnostics = []
    for cand in ladder:
        system = _build_system(scheme, cand, n, snr_db, seed, ae)
        eval_seed = derive_seed(seed, "eval", scheme, cand.k, cand.rcod, cand.kmod, cand.r, snr_db)
        rep = estimate_fep(system, snr_db, frames, eval_seed, workers, stop_errors=stop)
        ok = rep.meets(epsilon)
        diagnostics.append({"rate": float(cand.rate(n)), "rcod": str(cand.rcod), "kmod": cand.kmod,
                            "errors": rep.errors, "frames": rep.frames, "ci_high": rep.ci_high,
                            "accepted": ok})
        log.info("%s %.1f dB R=%.4f: %d/%d errors, upper %.3g -> %s", scheme, snr_db,
                 float(cand.rate(n)), rep.errors, rep.frames, rep.ci_high, "ok" if ok else "fail")
        if ok:
            return RatePoint(scheme, snr_db, n, epsilon, float(cand.rate(n)), float(cand.rcod),
                             cand.kmod, rep.fep, rep.ci_low, rep.ci_high, rep.frames, True,
                             eval_seed, diagnostics)
    log.warning("%s at %.1f dB: no candidate met epsilon=%g", scheme, snr_db, epsilon)
    return RatePoint(scheme, snr_db, n, epsilon, 0.0, meets_target=False, seed=seed,
                     diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# sweeps and CSV

def sweep(schemes, snr_grid, n: int = 128, epsilon: float = 1e-2, **search_kw) -> list:
    """One RatePoint per (scheme, SNR); the theory curve is always included."""
    schemes = ["theory"] + [s for s in schemes if s != "theory"]
    points = []
    for scheme in schemes:
        for snr in snr_grid:
            points.append(rate_search(scheme, n, epsilon, float(snr), **search_kw))
    return points


def converse_violations(points) -> list:
    """Simulated points whose rate exceeds the theory rate at the same SNR."""
    limit = {p.snr_db: p.rate for p in points if p.scheme == "theory"}
    bad = []
    for p in points:
        if p.scheme != "theory" and p.snr_db in limit and p.rate > limit[p.snr_db] + 1e-12:
            bad.append(p)
    return bad


def ordering_violations(points, lead="cnn_ae", others=("polar_qam", "rm_qam")) -> list:
    """(snr_db, lead rate, other scheme, other rate) wherever ``lead`` falls behind."""
    by = {(p.scheme, p.snr_db): p.rate for p in points}
    out = []
    for (scheme, snr), rate in sorted(by.items(), key=lambda kv: kv[0][1]):
        if scheme != lead:
            continue
        for other in others:
            if (other, snr) in by and by[(other, snr)] > rate:
                out.append((snr, rate, other, by[(other, snr)]))
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(points, dest=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for p in points:
        w.writerow([_fmt(getattr(p, f)) for f in CSV_FIELDS])
    text = buf.getvalue()
    if dest is not None:
        Path(dest).write_text(text)
    return text


def _parse(name, raw):
    if raw == "":
        return None
    if name == "meets_target":
        if raw not in ("true", "false"):
            raise ValueError(f"meets_target must be true/false, got {raw!r}")
        return raw == "true"
    if name == "scheme":
        if raw not in SCHEMES:
            raise ValueError(f"unknown scheme {raw!r}")
        return raw
    if name in ("n", "kmod", "frames", "seed"):
        return int(raw)
    return float(raw)


def read_csv(source) -> list:
    """Parse CSV text (or a path) written by :func:`write_csv`."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_FIELDS:
        raise ValueError(f"CSV header must be {','.join(CSV_FIELDS)}")
    points = []
    for row in rows[1:]:
        if len(row) != len(CSV_FIELDS):
            raise ValueError(f"row has {len(row)} fields, expected {len(CSV_FIELDS)}")
        points.append(RatePoint(**{k: _parse(k, v) for k, v in zip(CSV_FIELDS, row)}))
    return points
