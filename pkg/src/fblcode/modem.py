"""Gray-labeled square/rectangular QAM with hard-decision demapping.

Labeling: a ``k_mod``-bit label is read MSB first. The first ``ceil(k/2)``
bits select the in-phase level and the remaining ``floor(k/2)`` bits the
quadrature level, each through a binary-reflected Gray code. Level index
``j`` of an ``M``-PAM axis has amplitude ``M - 1 - 2 j`` (so label 0 sits on
the most positive level), and the whole grid is scaled to unit average
energy. QPSK label ``00`` is therefore ``(+1, +1) / sqrt(2)``.
"""

from dataclasses import dataclass, field

import numpy as np


def gray(j):
    return j ^ (j >> 1)


def _pam_levels(bits: int) -> np.ndarray:
    """Amplitude for each Gray label of an unscaled 2^bits-PAM axis."""
    m = 1 << bits
    levels = np.empty(m)
    for j in range(m):
        levels[gray(j)] = m - 1 - 2 * j
    return levels


@dataclass(frozen=True)
class QamSpec:
    k_mod: int
    constellation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.k_mod <= 8:
            raise ValueError(f"k_mod must be in 1..8, got {self.k_mod}")
        ki, kq = self.bits_i, self.bits_q
        li = _pam_levels(ki)
        lq = _pam_levels(kq) if kq else np.zeros(1)
        labels = np.arange(1 << self.k_mod)
        pts = np.stack([li[labels >> kq], lq[labels & ((1 << kq) - 1)]], axis=-1)
        scale = np.sqrt(np.mean(np.sum(pts**2, axis=-1)))
        object.__setattr__(self, "constellation", pts / scale)
        object.__setattr__(self, "_scale", scale)
        object.__setattr__(self, "_levels_i", li / scale)
        object.__setattr__(self, "_levels_q", lq / scale)

    @property
    def bits_i(self) -> int:
        return (self.k_mod + 1) // 2

    @property
    def bits_q(self) -> int:
        return self.k_mod // 2

    @property
    def order(self) -> int:
        return 1 << self.k_mod


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    k = bits.shape[-1]
    weights = 1 << np.arange(k - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def _int_to_bits(values: np.ndarray, k: int) -> np.ndarray:
    shifts = np.arange(k - 1, -1, -1)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def qam_modulate(bits, spec: QamSpec) -> np.ndarray:
    """Map ``(..., N)`` bits onto ``(..., N / k_mod, 2)`` constellation points."""
    bits = np.asarray(bits)
    N = bits.shape[-1]
    if N % spec.k_mod:
        raise ValueError(f"{N} bits is not a multiple of k_mod={spec.k_mod}")
    groups = bits.reshape(bits.shape[:-1] + (N // spec.k_mod, spec.k_mod))
    return spec.constellation[_bits_to_int(groups)]


def _slice_axis(y: np.ndarray, levels: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, and levels are indexed by label,
    # so exact ties resolve to the smaller label
    return np.argmin(np.abs(y[..., None] - levels), axis=-1)


def qam_demodulate_hard(y, spec: QamSpec) -> np.ndarray:
    """Nearest-point demapping of ``(..., n, 2)`` samples back to bits.

    The grid is separable, so the nearest point is found per axis. Ties go
    to the smaller label.
    """
    y = np.asarray(y)
    if y.shape[-1] != 2:
        raise ValueError(f"expected (..., n, 2) samples, got shape {y.shape}")
    li = _slice_axis(y[..., 0], spec._levels_i)
    if spec.bits_q:
        lq = _slice_axis(y[..., 1], spec._levels_q)
    else:
        lq = np.zeros_like(li)
    labels = (li << spec.bits_q) | lq
    out = _int_to_bits(labels, spec.k_mod)
    return out.reshape(y.shape[:-2] + (-1,))
