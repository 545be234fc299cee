"""Polar codes: Bhattacharyya construction, encoder, and SC decoder.

Codewords are ``x = u F^{(x)m}`` over GF(2) with ``F = [[1, 0], [1, 1]]`` in
natural order (no bit-reversal permutation). With ``u = (u1 | u2)`` this
gives ``x = (enc(u1) ^ enc(u2), enc(u2))``, which is the recursion both the
encoder and the decoder follow. Frozen positions carry zeros.

LLRs use the convention ``log P(bit=0) / P(bit=1)``, so a positive LLR
favours 0.
"""

from dataclasses import dataclass

import numpy as np

LLR_CLIP = 30.0


def _check_length(N: int) -> int:
    if N < 1 or N & (N - 1):
        raise ValueError(f"code length must be a power of 2, got {N}")
    return N.bit_length() - 1


def bhattacharyya_construct(N: int, p: float) -> np.ndarray:
    """Bhattacharyya parameters of the N synthetic channels of a BSC(p).

    Index ``i`` of the result is the reliability of ``u_i`` (smaller is
    better). Uses ``Z- = 2Z - Z^2`` and ``Z+ = Z^2`` from ``Z0 = 2 sqrt(p(1-p))``.
    """
    m = _check_length(N)
    if not 0.0 < p < 0.5:
        raise ValueError(f"BSC crossover must be in (0, 0.5), got {p}")
    z = np.array([2.0 * np.sqrt(p * (1.0 - p))])
    for _ in range(m):
        # interleaving puts the outermost split on the most significant index bit
        z = np.stack([2.0 * z - z * z, z * z], axis=-1).ravel()
    return z


@dataclass(frozen=True)
class PolarCode:
    N: int
    K: int
    info_set: tuple

    def __post_init__(self):
        _check_length(self.N)
        info = tuple(sorted(int(i) for i in self.info_set))
        if len(info) != self.K or len(set(info)) != self.K:
            raise ValueError("info_set must hold K distinct indices")
        if info and (info[0] < 0 or info[-1] >= self.N):
            raise ValueError("info_set index out of range")
        object.__setattr__(self, "info_set", info)

    @classmethod
    def construct(cls, N: int, K: int, p: float) -> "PolarCode":
        """Pick the K synthetic channels with the smallest Bhattacharyya values."""
        if not 0 <= K <= N:
            raise ValueError(f"K must be in [0, N], got {K}")
        z = bhattacharyya_construct(N, p)
        order = np.argsort(z, kind="stable")
        return cls(N, K, tuple(order[:K]))

    @property
    def frozen_mask(self) -> np.ndarray:
        mask = np.ones(self.N, dtype=bool)
        mask[list(self.info_set)] = False
        return mask

    @property
    def rate(self) -> float:
        return self.K / self.N


def polar_transform(u: np.ndarray) -> np.ndarray:
    """Apply ``F^{(x)m}`` along the last axis (GF(2))."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    _check_length(N)
    half = N // 2
    while half >= 1:
        # blocks of size 2*half: left ^= right
        v = x.reshape(x.shape[:-1] + (N // (2 * half), 2, half))
        v[..., 0, :] ^= v[..., 1, :]
        half //= 2
    return x


def polar_encode(msg, code: PolarCode) -> np.ndarray:
    msg = np.asarray(msg, dtype=np.uint8)
    if msg.shape[-1] != code.K:
        raise ValueError(f"message length {msg.shape[-1]} != K={code.K}")
    u = np.zeros(msg.shape[:-1] + (code.N,), dtype=np.uint8)
    u[..., list(code.info_set)] = msg
    return polar_transform(u)


def _sc(llr: np.ndarray, frozen: np.ndarray):
    """Recursive SC on a batch of LLRs; returns (u_hat, x_hat)."""
    N = llr.shape[-1]
    if N == 1:
        if frozen[0]:
            u = np.zeros(llr.shape, dtype=np.uint8)
        else:
            u = (llr < 0).astype(np.uint8)
        return u, u
    h = N // 2
    left, right = llr[:, :h], llr[:, h:]
    # min-sum check-node update
    f = np.sign(left) * np.sign(right) * np.minimum(np.abs(left), np.abs(right))
    u1, a = _sc(f, frozen[:h])
    g = right + (1.0 - 2.0 * a) * left
    u2, b = _sc(g, frozen[h:])
    return np.concatenate([u1, u2], axis=1), np.concatenate([a ^ b, b], axis=1)


def sc_decode(llr, code: PolarCode) -> np.ndarray:
    """Successive-cancellation decoding of ``(N,)`` or ``(frames, N)`` LLRs."""
    llr = np.asarray(llr, dtype=np.float64)
    single = llr.ndim == 1
    llr2 = np.clip(llr.reshape(-1, code.N), -LLR_CLIP, LLR_CLIP)
    u, _ = _sc(llr2, code.frozen_mask)
    msg = u[:, list(code.info_set)]
    return msg[0] if single else msg.reshape(llr.shape[:-1] + (code.K,))


def bsc_llr(hard_bits, p: float) -> np.ndarray:
    """LLRs ``+-log((1-p)/p)`` for hard decisions seen through a BSC(p)."""
    mag = np.log((1.0 - p) / p)
    return (1.0 - 2.0 * np.asarray(hard_bits, dtype=np.float64)) * mag
