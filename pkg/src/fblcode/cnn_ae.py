"""Convolutional autoencoder that jointly learns coding and modulation.

A K-bit message is split into L = gcd(K, N) sub-messages of K' bits, laid
out as L positions with K' channels. The transmitter is

    encoder:   Conv(M1, elu) -> Conv(M1, elu) -> Conv(N', elu)   over L positions
    reshape:   (L, N') -> (n, k_mod)
    modulator: Conv(M2, elu) -> Conv(2, linear)                   over n positions
    per-frame power normalization to unit average symbol power

and the receiver mirrors it after the AWGN channel layer:

    demodulator: Conv(M2, elu) -> Conv(k_mod, linear)             over n positions
    reshape:     (n, k_mod) -> (L, N')
    decoder:     Conv(M1, elu) -> Conv(M1, elu) -> Conv(K', sigmoid) over L positions

Each convolution is followed by batch normalization, applied before the
activation so the sigmoid output stays in (0, 1).
"""

import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import channel
from . import nngraph as ng

log = logging.getLogger(__name__)

MAGIC = b"FBLAE1"
FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def as_fraction(x) -> Fraction:
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(4096)


@dataclass(frozen=True)
class AeConfig:
    n: int
    K: int
    N: int
    M1: int = 200
    M2: int = 100
    kernel: int = 5
    train_snr_db: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.K < 1 or self.N < 1:
            raise ConfigError("n, K and N must be positive")
        if self.N % self.n:
            raise ConfigError(f"N={self.N} is not a multiple of n={self.n}")
        if self.M1 < 1 or self.M2 < 1 or self.kernel < 1:
            raise ConfigError("M1, M2 and kernel must be >= 1")

    @property
    def L(self) -> int:
        return math.gcd(self.K, self.N)

    @property
    def K_sub(self) -> int:
        return self.K // self.L

    @property
    def N_sub(self) -> int:
        return self.N // self.L

    @property
    def k_mod(self) -> int:
        return self.N // self.n

    @property
    def r_cod(self) -> Fraction:
        return Fraction(self.K, self.N)

    @property
    def rate(self) -> Fraction:
        return Fraction(self.K, self.n)


def derive_config(n: int, rate, r_cod, k_mod: int, M1: int = 200, M2: int = 100,
                  kernel: int = 5, train_snr_db: float = 10.0, seed: int = 0) -> AeConfig:
    """Bookkeeping for a rate ``R = R_cod * k_mod`` code of blocklength ``n``."""
    rate, r_cod = as_fraction(rate), as_fraction(r_cod)
    if r_cod * k_mod != rate:
        raise ConfigError(f"R_cod * k_mod = {r_cod * k_mod} does not equal R = {rate}")
    N = n * k_mod
    K = N * r_cod
    if K.denominator != 1 or K < 1:
        raise ConfigError(f"K = n * k_mod * R_cod = {K} is not a positive integer")
    return AeConfig(n=n, K=int(K), N=N, M1=M1, M2=M2, kernel=kernel,
                    train_snr_db=train_snr_db, seed=seed)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 500
    epochs: int = 100
    train_frames: int = 1_000_000
    snr_offset_db: float = 0.0
    smoothing_window: int = 100

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch normalization)")
        if self.epochs < 1 or self.train_frames < self.batch_size:
            raise ConfigError("need epochs >= 1 and train_frames >= batch_size")


class Block:
    """Conv1D -> BatchNorm -> activation."""

    def __init__(self, in_ch, out_ch, kernel, activation, rng, dtype, name):
        self.conv = ng.Conv1d(in_ch, out_ch, kernel, rng, dtype, name=f"{name}.conv")
        self.bn = ng.BatchNorm1d(out_ch, dtype, name=f"{name}.bn")
        self.activation = activation
        self.name = name

    def __call__(self, x):
        return ng.ACTIVATIONS[self.activation](self.bn(self.conv(x)))

    def parameters(self):
        return self.conv.parameters() + self.bn.parameters()

    @property
    def num_params(self):
        return self.conv.num_params + self.bn.num_params


class AeModel:
    def __init__(self, cfg: AeConfig, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = channel.substream(cfg.seed, channel.INIT)
        k, L = cfg.kernel, cfg.L

        def block(i, o, act, name):
            return Block(i, o, k, act, rng, self.dtype, name)

        self.encoder = [block(cfg.K_sub, cfg.M1, "elu", "enc0"),
                        block(cfg.M1, cfg.M1, "elu", "enc1"),
                        block(cfg.M1, cfg.N_sub, "elu", "enc2")]
        self.modulator = [block(cfg.k_mod, cfg.M2, "elu", "mod0"),
                          block(cfg.M2, 2, "linear", "mod1")]
        self.demodulator = [block(2, cfg.M2, "elu", "demod0"),
                            block(cfg.M2, cfg.k_mod, "linear", "demod1")]
        self.decoder = [block(cfg.N_sub, cfg.M1, "elu", "dec0"),
                        block(cfg.M1, cfg.M1, "elu", "dec1"),
                        block(cfg.M1, cfg.K_sub, "sigmoid", "dec2")]
        self.training = True
        self.trace_shapes = False  # record per-layer output shapes (not thread-safe)
        self.shape_trace = []
        assert L * cfg.K_sub == cfg.K

    @property
    def blocks(self):
        return self.encoder + self.modulator + self.demodulator + self.decoder

    def parameters(self):
        return [p for b in self.blocks for p in b.parameters()]

    @property
    def num_params(self) -> int:
        return sum(b.num_params for b in self.blocks)

    def train_mode(self, on: bool = True):
        self.training = on
        for b in self.blocks:
            b.bn.training = on
        return self

    def eval_mode(self):
        return self.train_mode(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def _trace(self, name, t):
        if self.trace_shapes:
            self.shape_trace.append((name, tuple(t.shape[1:])))
        return t

    # -- graph pieces ------------------------------------------------------
    def transmitter(self, bits) -> ng.Tensor:
        cfg = self.cfg
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[1] != cfg.K:
            raise ValueError(f"expected (batch, {cfg.K}) message bits, got {bits.shape}")
        B = bits.shape[0]
        if self.trace_shapes:
            self.shape_trace = []
        x = ng.Tensor(bits.astype(self.dtype).reshape(B, cfg.K, 1))
        self._trace("input", x)
        x = ng.reshape(x, (B, cfg.L, cfg.K_sub))
        for blk in self.encoder:
            x = self._trace(blk.name, blk(x))
        x = self._trace("reshape", ng.reshape(x, (B, cfg.n, cfg.k_mod)))
        for blk in self.modulator:
            x = self._trace(blk.name, blk(x))
        return self._trace("normalize", ng.power_normalize(x))

    def receiver(self, y: ng.Tensor) -> ng.Tensor:
        cfg = self.cfg
        B = y.shape[0]
        for blk in self.demodulator:
            y = self._trace(blk.name, blk(y))
        y = self._trace("reshape", ng.reshape(y, (B, cfg.L, cfg.N_sub)))
        for blk in self.decoder:
            y = blk(y)
            if blk is self.decoder[-1]:
                y = ng.reshape(y, (B, cfg.K, 1))
            self._trace(blk.name, y)
        return y

    def forward(self, bits, n0=None, rng=None) -> ng.Tensor:
        """Full chain; returns sigmoid outputs of shape (batch, K, 1).

        ``n0=None`` means a noiseless channel.
        """
        x = self.transmitter(bits)
        if n0 is not None:
            noise = channel.gaussian_noise(x.shape, n0, rng, self.dtype)
            y = ng.add(x, noise)
        else:
            y = ng.add(x, np.zeros(x.shape, dtype=self.dtype))
        self._trace("channel", y)
        return self.receiver(y)

    # -- array-level helpers ----------------------------------------------
    def encode(self, bits) -> np.ndarray:
        return self.transmitter(bits).value

    def decode_soft(self, y) -> np.ndarray:
        y = ng.Tensor(np.asarray(y, dtype=self.dtype))
        return self.receiver(y).value[..., 0]

    def decode(self, y) -> np.ndarray:
        return (self.decode_soft(y) >= 0.5).astype(np.uint8)


def build_model(cfg: AeConfig, dtype=np.float32) -> AeModel:
    return AeModel(cfg, dtype)


def table_shapes(cfg: AeConfig) -> list:
    """Per-row output sizes of the architecture table for ``cfg``."""
    L, n = cfg.L, cfg.n
    return [(L * cfg.K_sub, 1), (L, cfg.M1), (L, cfg.M1), (L, cfg.N_sub), (n, cfg.k_mod),
            (n, cfg.M2), (n, 2), (n, 2), (n, 2), (n, cfg.M2), (n, cfg.k_mod),
            (L, cfg.N_sub), (L, cfg.M1), (L, cfg.M1), (L * cfg.K_sub, 1)]


def encode_forward(msg_bits, model: AeModel, mode: str = "eval") -> np.ndarray:
    """Run the transmitter and return power-normalized ``(batch, n, 2)`` codewords."""
    model.train_mode(mode == "train")
    return model.encode(msg_bits)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    model: AeModel
    losses: list = field(default_factory=list)
    steps: int = 0


def _message_batch(seed, index, batch, K):
    rng = channel.substream(seed, channel.TRAIN_DATA, index)
    return rng.integers(0, 2, size=(batch, K), dtype=np.uint8)


def train(model: AeModel, cfg: AeConfig, train_cfg: TrainConfig, progress=None) -> TrainResult:
    """End-to-end training with Adam on binary cross-entropy.

    The training set is ``train_frames`` iid uniform messages, regenerated
    batch by batch from the seed; each epoch visits the batches in a fresh
    seeded order. Channel noise is drawn anew at every step at
    ``train_snr_db + snr_offset_db`` and is a constant for backprop.
    """
    n0 = 10.0 ** (-(cfg.train_snr_db + train_cfg.snr_offset_db) / 10.0)
    batches = train_cfg.train_frames // train_cfg.batch_size
    state = ng.AdamState(lr=train_cfg.lr)
    params = model.parameters()
    result = TrainResult(model)
    model.train_mode(True)
    step = 0
    for epoch in range(train_cfg.epochs):
        order = channel.substream(cfg.seed, channel.SHUFFLE, epoch).permutation(batches)
        for b in order:
            bits = _message_batch(cfg.seed, int(b), train_cfg.batch_size, cfg.K)
            rng = channel.substream(cfg.seed, channel.TRAIN_NOISE, step)
            model.zero_grad()
            out = model.forward(bits, n0, rng)
            loss = ng.bce_loss(out, bits[..., None])
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingDiverged(f"loss became {value} at epoch {epoch}, step {step}")
            loss.backward()
            ng.adam_step([p.value for p in params], [p.grad for p in params], state)
            result.losses.append(value)
            step += 1
        if progress is not None:
            progress(epoch, step, float(np.mean(result.losses[-batches:])))
        log.info("epoch %d/%d loss %.5f", epoch + 1, train_cfg.epochs,
                 np.mean(result.losses[-batches:]))
    result.steps = step
    model.eval_mode()
    return result


def smoothed_descent_fraction(losses, window: int = 100) -> float:
    """Fraction of consecutive ``window``-step means that do not increase."""
    losses = np.asarray(losses, dtype=np.float64)
    blocks = len(losses) // window
    if blocks < 2:
        return 1.0
    means = losses[:blocks * window].reshape(blocks, window).mean(axis=1)
    return float(np.mean(np.diff(means) <= 0))


# ---------------------------------------------------------------------------
# inference

def infer(msg_bits, model: AeModel, noise: channel.NoiseSpec) -> np.ndarray:
    """Transmit through the AWGN channel and threshold decoder outputs at 0.5."""
    model.eval_mode()
    x = model.encode(msg_bits)
    y = channel.transmit(x, noise)
    return model.decode(y)


class AeSystem:
    """Adapter exposing a trained model to the Monte-Carlo harness."""

    def __init__(self, model: AeModel):
        self.model = model.eval_mode()
        self.k = model.cfg.K
        self.n = model.cfg.n

    def encode(self, bits):
        return self.model.encode(bits)

    def decode(self, y):
        return self.model.decode(y)


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout: b"FBLAE1\n", one line of JSON manifest, b"\n", then every tensor
# listed in the manifest as little-endian float32, in manifest order.

def _tensor_table(model: AeModel):
    for blk in model.blocks:
        entries = [(p.name, p.value, True) for p in blk.parameters()]
        entries += [(f"{blk.bn.name}.{n}", arr, False) for n, arr in blk.bn.buffers()]
        yield blk.name, entries


def checkpoint_bytes(model: AeModel) -> bytes:
    cfg = model.cfg
    layers, chunks = [], []
    for name, entries in _tensor_table(model):
        layers.append({"name": name, "tensors": [
            {"name": t, "shape": list(a.shape), "trainable": tr} for t, a, tr in entries]})
        chunks.extend(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a, _ in entries)
    manifest = {"format_version": FORMAT_VERSION, "config": asdict(cfg), "layers": layers,
                "param_count": model.num_params, "seed": cfg.seed}
    buf = io.BytesIO()
    buf.write(MAGIC + b"\n")
    buf.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
    for c in chunks:
        buf.write(c)
    return buf.getvalue()


def save_checkpoint(model: AeModel, cfg: AeConfig, path) -> Path:
    if cfg != model.cfg:
        raise CheckpointError("config does not match the model being saved")
    path = Path(path)
    path.write_bytes(checkpoint_bytes(model))
    return path


def checkpoint_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_checkpoint(path) -> AeModel:
    data = Path(path).read_bytes()
    magic, _, rest = data.partition(b"\n")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic[:16]!r}")
    header, _, payload = rest.partition(b"\n")
    try:
        manifest = json.loads(header)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable manifest") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('format_version')}")
    cfg = AeConfig(**manifest["config"])
    declared = sum(math.prod(t["shape"]) for layer in manifest["layers"]
                   for t in layer["tensors"] if t["trainable"])
    if declared != manifest["param_count"]:
        raise CheckpointError(f"{path}: manifest lists {declared} trainable values "
                              f"but declares {manifest['param_count']}")
    model = AeModel(cfg, np.float32)
    if model.num_params != manifest["param_count"]:
        raise CheckpointError(f"{path}: config implies {model.num_params} parameters, "
                              f"checkpoint declares {manifest['param_count']}")
    values = np.frombuffer(payload, dtype="<f4")
    offset = 0
    tables = list(_tensor_table(model))
    if [name for name, _ in tables] != [layer["name"] for layer in manifest["layers"]]:
        raise CheckpointError(f"{path}: layer list does not match the architecture")
    for (name, entries), layer in zip(tables, manifest["layers"]):
        for (tname, arr, _), spec in zip(entries, layer["tensors"]):
            if tname != spec["name"] or list(arr.shape) != spec["shape"]:
                raise CheckpointError(f"{path}: tensor {spec['name']} shape mismatch")
            size = arr.size
            if offset + size > values.size:
                raise CheckpointError(f"{path}: truncated parameter data")
            arr[...] = values[offset:offset + size].reshape(arr.shape)
            offset += size
    if offset != values.size:
        raise CheckpointError(f"{path}: {values.size - offset} trailing values")
    return model.eval_mode()
