"""Reed-Muller codes RM(r, m) with Reed majority-logic decoding.

Coordinate ``j`` of a codeword is the evaluation point whose variable
``x_i`` equals bit ``i`` of ``j``. Generator rows are monomials ordered by
degree, then lexicographically by their variable index tuple, so row 0 is
the constant monomial (the all-ones word).
"""

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np


def monomials(r: int, m: int) -> list:
    return [S for d in range(r + 1) for S in combinations(range(m), d)]


@dataclass(frozen=True)
class RmCode:
    r: int
    m: int
    generator: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 0 or not 0 <= self.r <= self.m:
            raise ValueError(f"need 0 <= r <= m, got r={self.r}, m={self.m}")
        points = (np.arange(self.N)[:, None] >> np.arange(self.m)) & 1
        rows = [np.all(points[:, list(S)] == 1, axis=1) for S in monomials(self.r, self.m)]
        object.__setattr__(self, "generator", np.array(rows, dtype=np.uint8))
        object.__setattr__(self, "_checks", self._build_checks(points))

    @property
    def N(self) -> int:
        return 1 << self.m

    @property
    def K(self) -> int:
        return sum(comb(self.m, i) for i in range(self.r + 1))

    @property
    def rate(self) -> float:
        return self.K / self.N

    @property
    def correction_radius(self) -> int:
        return ((1 << (self.m - self.r)) - 1) // 2

    def _build_checks(self, points):
        # For monomial S, the characteristic sums fix the variables outside S
        # and sum the word over the 2^|S| points that vary x_S. Each row of
        # the index matrix lists one such coset.
        checks = {}
        j = np.arange(self.N)
        for S in monomials(self.r, self.m):
            mask = sum(1 << i for i in S)
            base = j[(j & mask) == 0]
            offsets = np.array([sum(1 << i for i, b in zip(S, bits) if b)
                                for bits in np.ndindex(*(2,) * len(S))], dtype=np.int64)
            checks[S] = base[:, None] | offsets[None, :]
        return checks


def rm_encode(msg, code: RmCode) -> np.ndarray:
    msg = np.asarray(msg, dtype=np.uint8)
    if msg.shape[-1] != code.K:
        raise ValueError(f"message length {msg.shape[-1]} != K={code.K}")
    return ((msg.astype(np.int64) @ code.generator) & 1).astype(np.uint8)


def rm_decode_reed(hard, code: RmCode) -> np.ndarray:
    """Reed decoding of ``(N,)`` or ``(frames, N)`` hard bits.

    Coefficients are decided by majority vote over their characteristic
    sums, highest degree first; the decided part is stripped from the word
    before moving to the next degree. A tied vote decides 0.
    """
    hard = np.asarray(hard, dtype=np.uint8)
    if hard.shape[-1] != code.N:
        raise ValueError(f"word length {hard.shape[-1]} != N={code.N}")
    single = hard.ndim == 1
    word = hard.reshape(-1, code.N).copy()
    mons = monomials(code.r, code.m)
    row_of = {S: i for i, S in enumerate(mons)}
    msg = np.zeros((word.shape[0], code.K), dtype=np.uint8)
    for d in range(code.r, -1, -1):
        layer = [S for S in mons if len(S) == d]
        for S in layer:
            sums = np.bitwise_xor.reduce(word[:, code._checks[S]], axis=-1)
            votes = sums.sum(axis=-1, dtype=np.int64)
            msg[:, row_of[S]] = 2 * votes > sums.shape[-1]
        rows = [row_of[S] for S in layer]
        decided = (msg[:, rows].astype(np.int64) @ code.generator[rows]) & 1
        word ^= decided.astype(np.uint8)
    return msg[0] if single else msg.reshape(hard.shape[:-1] + (code.K,))
