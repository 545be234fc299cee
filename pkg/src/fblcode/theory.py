"""Finite-blocklength limits of the complex AWGN channel.

All rates are in bits per complex-valued channel use.
"""

import math
from dataclasses import dataclass

LOG2E = 1.0 / math.log(2.0)

# Rational approximation of the standard normal quantile (Acklam).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


@dataclass(frozen=True)
class SnrPoint:
    """An SNR value carried in both linear and dB form."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"SNR must be positive, got {self.gamma}")

    @classmethod
    def from_db(cls, snr_db: float) -> "SnrPoint":
        return cls(db_to_linear(snr_db))

    @property
    def snr_db(self) -> float:
        return linear_to_db(self.gamma)


@dataclass(frozen=True)
class FblParams:
    """Blocklength ``n`` (complex symbols) and target frame error probability."""

    n: int
    epsilon: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"blocklength must be >= 1, got {self.n}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def linear_to_db(gamma: float) -> float:
    if not gamma > 0:
        raise ValueError(f"SNR must be positive, got {gamma}")
    return 10.0 * math.log10(gamma)


def capacity(gamma: float) -> float:
    """Shannon capacity ``log2(1 + gamma)``."""
    if not gamma > 0:
        raise ValueError(f"capacity needs gamma > 0, got {gamma}")
    return math.log1p(gamma) * LOG2E


def dispersion(gamma: float) -> float:
    """Channel dispersion ``gamma (gamma + 2) / (gamma + 1)^2 * log2(e)^2``."""
    if not gamma >= 0:
        raise ValueError(f"dispersion needs gamma >= 0, got {gamma}")
    # 1 - 1/(1+g)^2 written without cancellation for small gamma
    frac = gamma * (gamma + 2.0) / (gamma + 1.0) ** 2
    return frac * LOG2E * LOG2E


def q_func(x: float) -> float:
    """Gaussian tail probability ``Q(x) = 0.5 erfc(x / sqrt(2))``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _normal_quantile_guess(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    if p > 1.0 - _P_LOW:
        return -_normal_quantile_guess(1.0 - p)
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def q_inv(p: float) -> float:
    """Inverse of the Gaussian Q-function.

    Starts from a rational approximation of the normal quantile and applies
    two Newton steps on ``Q(x) - p``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"q_inv needs 0 < p < 1, got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -q_inv(1.0 - p)
    x = -_normal_quantile_guess(p)
    for _ in range(2):
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        x += (q_func(x) - p) / pdf
    return x


def max_rate_fbl(params: FblParams, gamma: float, log_term: bool = True) -> float:
    """Normal approximation of the maximum rate at blocklength n and FEP epsilon.

    ``C - sqrt(V / n) Q^{-1}(epsilon) + log2(n) / (2 n)``. The logarithmic
    term is the upper bound on the O(log n) correction; pass
    ``log_term=False`` to drop it. The result can be negative at very low SNR.
    """
    n = params.n
    rate = capacity(gamma) - math.sqrt(dispersion(gamma) / n) * q_inv(params.epsilon)
    if log_term:
        rate += math.log2(n) / (2.0 * n)
    return rate
