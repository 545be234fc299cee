"""Complex AWGN channel with reproducible noise streams.

Complex symbols are stored as a trailing axis of length 2 (real, imag).
The transmit power is fixed to P = 1, so the SNR is ``gamma = 1 / n0`` where
``n0`` is the complex noise variance per symbol (``n0 / 2`` per real
dimension).

Every random draw in the package comes from :func:`substream`, which derives
an independent PCG64 generator from ``(seed, *keys)`` with numpy's
``SeedSequence`` spawn keys. Substreams do not depend on call order, which
is what lets Monte-Carlo workers split frames without changing results.
"""

from dataclasses import dataclass

import numpy as np

# spawn-key domains, kept distinct so streams never collide
NOISE = 0
MESSAGES = 1
INIT = 2
TRAIN_DATA = 3
TRAIN_NOISE = 4
SHUFFLE = 5
CONSTRUCTION = 6


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class NoiseSpec:
    n0: float
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError(f"noise variance must be positive, got {self.n0}")

    @classmethod
    def from_snr_db(cls, snr_db: float, seed: int = 0, stream_id: int = 0) -> "NoiseSpec":
        return cls(10.0 ** (-snr_db / 10.0), seed, stream_id)

    def generator(self) -> np.random.Generator:
        return substream(self.seed, NOISE, self.stream_id)


def average_power(x: np.ndarray) -> np.ndarray:
    """Per-frame ``(1/n) sum |x_i|^2`` over the last two axes (n, 2)."""
    x = np.asarray(x)
    return np.sum(x * x, axis=(-2, -1)) / x.shape[-2]


def normalize_power(raw: np.ndarray) -> np.ndarray:
    """Scale each frame (n x 2) to unit average symbol power.

    Works on a single frame or a batch ``(..., n, 2)``.
    """
    raw = np.asarray(raw)
    if not np.issubdtype(raw.dtype, np.floating):
        raw = raw.astype(np.float64)
    if raw.ndim < 2 or raw.shape[-1] != 2:
        raise ValueError(f"expected (..., n, 2) symbols, got shape {raw.shape}")
    power = average_power(raw)
    if np.any(power == 0):
        raise ValueError("cannot normalize an all-zero codeword")
    return raw / np.sqrt(power)[..., None, None]


def gaussian_noise(shape, n0: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Real Gaussian samples of variance ``n0 / 2`` (one complex component)."""
    return rng.standard_normal(shape, dtype=np.float64).astype(dtype, copy=False) * np.sqrt(n0 / 2.0)


def transmit(x: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    """Return ``y = x + w`` with circularly symmetric complex Gaussian ``w``."""
    x = np.asarray(x)
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
    return x + gaussian_noise(x.shape, noise.n0, noise.generator(), dtype)
