"""Closed-form parameter formulas shared by the estimators and the cost predictor.

Keeping them in one place is what lets predicted and measured access counts
agree exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PreconditionError

# Constants of the spectral key property.
KEY_ALPHA_CONST = 3.1588
KEY_DELTA_SQ_CONST = 1.7983
KEY_DELTA_LIN_CONST = 7.480
KEY_C_CONST = 7.635
KEY_DENOM_CONST = 1.25

# A log2 that lands within this of an integer is treated as that integer.
_LOG_SLACK = 1e-12

DEFAULT_D = 2.0
DEFAULT_C = 0.5
DEFAULT_GROVER_CHARGE = 2
METICULOUS_XI = 1.0 / 13.0


def ceil_log2(x: float) -> int:
    return int(math.ceil(math.log2(x) - _LOG_SLACK))


def pow2_at_least(x: float) -> int:
    return 2 ** max(0, ceil_log2(x))


def check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise PreconditionError(f"delta must lie in (0, 1), got {delta!r}")


def boost_repetitions(delta: float, multiplicity: float = 1.0) -> int:
    """Odd repetition count ``2*ceil((18 ln(m/delta) - 1)/2) + 1`` for median boosting."""
    check_delta(delta)
    return 2 * math.ceil((18.0 * math.log(multiplicity / delta) - 1.0) / 2.0) + 1


def key_lambda(s0: float) -> float:
    """Truncation scale ``5 / (4 - 5 s0^2)``."""
    return 5.0 / (4.0 - 5.0 * s0 * s0)


def key_c(s0: float) -> float:
    return KEY_C_CONST * s0 * s0 / (1.0 + s0 * s0)


def key_alpha_bound(eps: float, s0: float) -> float:
    return KEY_ALPHA_CONST * s0 * s0 * eps / (1.0 - KEY_DENOM_CONST * s0 * s0)


def key_delta(eps: float, s0: float) -> float:
    return KEY_DELTA_SQ_CONST * s0 * s0 + KEY_DELTA_LIN_CONST * s0 * eps / (
        1.0 - KEY_DENOM_CONST * s0 * s0)


def key_overlap_bound(eps: float, s0: float) -> float:
    return 1.0 - 0.25 * key_delta(eps, s0)


def state_distance_rhs(eps: float, s0: float, N: int) -> float:
    return key_delta(eps, s0) + (N * key_alpha_bound(eps, s0)) ** 2


# Univariate refinement.
UNI_S0 = math.sqrt(10.0) / 12.0


def uni_resolution(eps: float) -> int:
    return pow2_at_least(24.0 * math.pi / eps)


def uni_lambda() -> float:
    return key_lambda(UNI_S0)


def loglog_deltas(T: int, delta: float) -> np.ndarray:
    j = np.arange(1, T + 1)
    return 6.0 / math.pi ** 2 * delta / (T - j + 1.0) ** 2


def constrained_uni_rounds(n: float, sigma0: float, eps0: float) -> int:
    if sigma0 <= 0 or eps0 <= 0 or n * eps0 / sigma0 <= 1:
        return 0
    return max(0, ceil_log2(n * eps0 / sigma0))


def constrained_uni_eps(rounds: int, sigma0: float, eps0: float) -> np.ndarray:
    return np.array([eps0 / (2.0 ** (ell - 1) * 4.0 * sigma0) for ell in range(1, rounds + 1)])


MOM_BUCKET_SCALE = 4


def mom_layout(n: float, delta: float) -> tuple[int, int]:
    """(bucket count, bucket size) for the univariate median of means."""
    check_delta(delta)
    buckets = 1 if 8.0 * math.log(1.0 / delta) <= 1.0 else boost_like(8.0 * math.log(1.0 / delta))
    return buckets, max(1, math.ceil(MOM_BUCKET_SCALE * n))


def boost_like(x: float) -> int:
    """Smallest odd integer >= x."""
    return 2 * math.ceil((x - 1.0) / 2.0) + 1


# Multivariate simple estimator.
def multi_s0(d: int) -> float:
    return math.sqrt(10.0) / (360.0 * d ** 0.25)


def multi_resolution(eps: float) -> int:
    return pow2_at_least(16.0 * math.pi / eps)


def multi_lambda(d: int) -> float:
    return key_lambda(multi_s0(d))


def multi_trace_bound(d: int, D: float) -> float:
    return (1.0 / (120.0 * d ** 0.25) * math.sqrt(1.0 / (10.0 * D))) ** 2


def multi_eps_cap(d: int) -> float:
    return 1.0 / (900.0 * d ** 0.75)


def simple_scale(d: int, D: float) -> float:
    return 120.0 * d ** 0.25 * math.sqrt(10.0 * D)


def simple_rounds(n: float, sigma0: float, eps0: float) -> int:
    return constrained_uni_rounds(n, sigma0, eps0)


def simple_eps(rounds: int, sigma0: float, eps0: float, d: int, D: float) -> np.ndarray:
    K = simple_scale(d, D)
    return np.array([eps0 / (2.0 ** (ell - 1) * K * sigma0) for ell in range(1, rounds + 1)])


def mean_bound_eps0(sigma0: float, D: float) -> float:
    return 2.0 / 15.0 * math.sqrt(10.0 * D) * sigma0


# Meticulous estimator.
def meticulous_resolution(n: float, D: float) -> int:
    return pow2_at_least(8.0 * math.pi * n * math.sqrt(10.0 * D))


def v_trials(N: int, sigma0: float, xi: float) -> int:
    return math.ceil(3.0 * N * sigma0 / (2.0 * xi))


def v_delta(xi: float) -> float:
    return xi * xi / 9.0


def meticulous_n_floor(d: int, delta: float) -> float:
    """Lower bound ``ln(d/delta)/sqrt(ln d)`` on ``n``; infinite at d = 1."""
    if d < 2:
        return math.inf
    return math.log(d / delta) / math.sqrt(math.log(d))


# Classical stages and reductions.
def classical_multi_layout(n: float, delta: float) -> tuple[int, int]:
    """(bucket count, total draws) for the geometric median of means."""
    check_delta(delta)
    reps = math.ceil(math.log(1.0 / delta))
    return max(1, math.ceil(8.0 * math.log(1.0 / delta))), max(1, math.ceil(n) * max(1, reps))


def notso_multi_classical_n(delta: float, D: float) -> int:
    return math.ceil(225.0 / 4.0 * 10.0 * D * (1.0 + math.sqrt(1.0 / math.log(2.0 / delta))) ** 2)


def full_quantile_p(n: float, C: float) -> float:
    return 25.0 / (52.0 * C * n * n)


def full_inner_n(n: float) -> float:
    return 2.0 * math.sqrt(52.0 / 25.0) * n


def full_classical_n(delta: float) -> int:
    return math.ceil(25.0 * (1.0 + math.sqrt(1.0 / math.log(4.0 / delta))) ** 2)


def full_relative_n(p: float) -> float:
    return 4.0 / math.sqrt(p)


def quantile_constant(C: float) -> float:
    """Sample-count constant ``a`` making the order-statistic sandwich hold.

    With ``T = a ln(1/delta) / p`` draws and the ``max(1, floor((1+C)/2 p T))``-th largest
    draw, Chernoff bounds on the two binomial counts each fail with
    probability at most ``delta/2`` whenever ``delta <= 1/2``.
    """
    if not 0 < C < 1:
        raise PreconditionError(f"C must lie in (0, 1), got {C!r}")
    gap_low = (1.0 - C) / 2.0
    gap_high = (1.0 - C) / (2.0 * C)
    need = max(2.0 / gap_low ** 2, (2.0 + gap_high) / (gap_high ** 2 * C))
    return 2.0 * need


def quantile_draws(p: float, delta: float, C: float) -> int:
    return math.ceil(quantile_constant(C) * math.log(1.0 / delta) / p)


def quantile_charge(p: float, delta: float, C: float) -> int:
    return math.ceil(quantile_constant(C) * math.log(1.0 / delta) / math.sqrt(p))


def bounded_rel_stage2(stage1: float, n: float) -> tuple[float, float]:
    """(sigma0, n) for the second pass of the relative-error estimator.

    After stage one, ``|stage1 - E| <= 1/n``; on [0, 1] the variance is at most
    the mean, so ``sigma0^2 = min(1, stage1 + 1/n)`` bounds it. The second pass
    targets ``sqrt(max(0, stage1 - 1/n))/n + 1/n^2``, which is at most
    ``sqrt(E)/n + 1/n^2``.
    """
    upper = min(1.0, max(stage1, 0.0) + 1.0 / n)
    target = math.sqrt(max(0.0, stage1 - 1.0 / n)) / n + 1.0 / (n * n)
    sigma = math.sqrt(upper)
    return sigma, sigma / target
