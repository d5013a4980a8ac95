"""Grover operator for an angle variable and its closed-form spectrum.

The operator is ``G = (2|1><1| - I) diag(exp(i theta_k))`` with
``|1> = sum_k sqrt(p_k)|k>``. Away from degenerate angles, its eigenphases are
the roots of the non-increasing secular function
``f(beta) = E[tan((theta - beta)/2)]``, one root between each pair of
neighbouring poles ``theta_k - pi``. Each group of two or more positive-mass
outcomes sharing an angle ``phi`` adds the eigenphase ``phi - pi`` with
multiplicity one less than the group size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import params
from .errors import NoSignChange, PoleInBracket, PreconditionError
from .prob import UniRV, moments, to_angle

MAX_OUTCOMES = 64
PHASE_TOL = 1e-9
_TWO_PI = 2.0 * math.pi


def canonical_phase(phase):
    """Map phases into (-pi, pi]."""
    wrapped = np.mod(np.asarray(phase, dtype=float) + math.pi, _TWO_PI) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + _TWO_PI, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def phase_gap(a, b):
    """Distance between two phases modulo 2 pi."""
    diff = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), _TWO_PI)
    return np.minimum(diff, _TWO_PI - diff)


@dataclass(frozen=True)
class GroverOperator:
    theta: UniRV
    matrix: np.ndarray = field(repr=False)

    @property
    def start_state(self) -> np.ndarray:
        return np.sqrt(self.theta.probs).astype(complex)


@dataclass(frozen=True)
class SpectralSolution:
    """An eigenphase with its eigenvector in amplitude form.

    ``amplitudes[k] = sqrt(p_k) * psi_k`` where ``psi`` is the eigen random variable.
    """

    alpha: float
    amplitudes: np.ndarray = field(repr=False)
    overlap: float
    degenerate: bool = False

    def psi(self, probs: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(probs > 0, self.amplitudes / np.sqrt(probs), np.nan)


def grover_matrix(probs: np.ndarray, theta_values: np.ndarray) -> np.ndarray:
    """Dense Grover matrix (or a stack, when ``theta_values`` is 2-D with outcomes last)."""
    root = np.sqrt(probs)
    reflection = 2.0 * np.outer(root, root) - np.eye(probs.size)
    return reflection * np.exp(1j * np.asarray(theta_values))[..., None, :]


def build_grover(theta: UniRV) -> GroverOperator:
    if theta.size > MAX_OUTCOMES:
        raise PreconditionError(f"{theta.size} outcomes exceeds the dense cap of {MAX_OUTCOMES}")
    return GroverOperator(theta, grover_matrix(theta.probs, theta.values))


def secular(theta: UniRV, beta: float) -> float:
    """``E[tan((theta - beta)/2)]``."""
    return float(theta.probs @ np.tan((theta.values - beta) / 2.0))


def _poles_in(theta: UniRV, lo: float, hi: float) -> list[float]:
    """Pole locations ``theta_k - pi + 2 pi m`` of positive-mass outcomes inside [lo, hi]."""
    found = []
    for value, p in zip(theta.values, theta.probs):
        if p <= 0:
            continue
        base = value - math.pi
        m = math.ceil((lo - base) / _TWO_PI)
        pole = base + m * _TWO_PI
        if pole <= hi:
            found.append(pole)
    return sorted(found)


def _bisect(theta: UniRV, lo: float, hi: float) -> float:
    """Root of the decreasing secular function on the open interval (lo, hi)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if secular(theta, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_alpha(theta: UniRV, bracket: tuple[float, float]) -> float:
    """Eigenphase of ``G`` solving ``E[tan((theta - alpha)/2)] = 0`` inside ``bracket``.

    Raises:
        PoleInBracket: some ``theta_k - beta`` hits pi inside the bracket; the
            degenerate branch or a narrower bracket is needed.
        NoSignChange: the secular function does not change sign on the bracket.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise PreconditionError(f"empty bracket [{lo}, {hi}]")
    poles = _poles_in(theta, lo, hi)
    if poles:
        raise PoleInBracket(
            f"pole at beta={poles[0]:.12g} inside [{lo:.12g}, {hi:.12g}]; "
            "use degenerate_spectrum or a narrower bracket")
    f_lo, f_hi = secular(theta, lo), secular(theta, hi)
    if f_lo == 0:
        return canonical_phase(lo)
    if f_hi == 0:
        return canonical_phase(hi)
    if not (f_lo > 0 > f_hi):
        raise NoSignChange(f"secular function is {f_lo:.3g} at {lo:.12g} and {f_hi:.3g} at {hi:.12g}")
    return canonical_phase(_bisect(theta, lo, hi))


def eigvec_for_alpha(theta: UniRV, alpha: float) -> SpectralSolution:
    half = (theta.values - alpha) / 2.0
    if np.any((theta.probs > 0) & (np.abs(np.cos(half)) < 1e-15)):
        raise PoleInBracket(f"alpha={alpha!r} sits on a pole theta_k - pi")
    t = np.tan(half)
    norm_sq = 1.0 + float(theta.probs @ t ** 2)
    amplitudes = np.sqrt(theta.probs) * (1.0 - 1j * t) / math.sqrt(norm_sq)
    return SpectralSolution(canonical_phase(alpha), amplitudes, 1.0 / norm_sq)


def degenerate_classes(theta: UniRV, tol: float = PHASE_TOL) -> list[np.ndarray]:
    """Index groups of positive-mass outcomes whose angles agree modulo 2 pi."""
    idx = np.flatnonzero(theta.probs > 0)
    canon = canonical_phase(theta.values[idx]) if idx.size else np.array([])
    canon = np.atleast_1d(canon)
    order = np.argsort(canon)
    groups: list[list[int]] = []
    for pos in order:
        if groups and phase_gap(canon[pos], canon[groups[-1][-1]]) <= tol:
            groups[-1].append(pos)
        else:
            groups.append([pos])
    # wrap-around: merge first and last groups if they touch across +-pi
    if len(groups) > 1 and phase_gap(canon[groups[0][0]], canon[groups[-1][-1]]) <= tol:
        groups[0] = groups.pop() + groups[0]
    return [idx[np.array(g)] for g in groups]


def degenerate_spectrum(theta: UniRV) -> list[SpectralSolution]:
    """Eigenpairs from angle classes of size >= 2: phase ``phi - pi`` on ``{E[psi] = 0}``."""
    from scipy.linalg import null_space

    solutions = []
    for group in degenerate_classes(theta):
        if group.size < 2:
            continue
        phi = float(theta.values[group[0]])
        root = np.sqrt(theta.probs[group])
        basis = null_space(root[None, :].astype(complex))
        alpha = canonical_phase(phi - math.pi)
        for column in basis.T:
            amplitudes = np.zeros(theta.size, dtype=complex)
            amplitudes[group] = column
            solutions.append(SpectralSolution(alpha, amplitudes, 0.0, degenerate=True))
    return solutions


def _zero_mass_solutions(theta: UniRV) -> list[SpectralSolution]:
    solutions = []
    for k in np.flatnonzero(theta.probs == 0):
        amplitudes = np.zeros(theta.size, dtype=complex)
        amplitudes[k] = 1.0
        solutions.append(SpectralSolution(canonical_phase(theta.values[k] - math.pi),
                                          amplitudes, 0.0, degenerate=True))
    return solutions


def full_spectrum(theta: UniRV) -> list[SpectralSolution]:
    """Every eigenpair: one secular root between neighbouring poles plus the degenerate ones."""
    classes = degenerate_classes(theta)
    poles = np.sort(np.atleast_1d(canonical_phase(
        np.array([theta.values[g[0]] for g in classes]) - math.pi)))
    solutions = []
    for i, left in enumerate(poles):
        right = poles[i + 1] if i + 1 < poles.size else poles[0] + _TWO_PI
        alpha = _bisect(theta, left, right)
        solutions.append(eigvec_for_alpha(theta, alpha))
    return solutions + degenerate_spectrum(theta) + _zero_mass_solutions(theta)


def eigen_residual(op: GroverOperator, sol: SpectralSolution) -> float:
    v = sol.amplitudes
    return float(np.linalg.norm(op.matrix @ v - np.exp(1j * sol.alpha) * v))


@dataclass(frozen=True)
class SpectrumCertificate:
    eps: float
    s0: float
    lam: float
    c: float
    delta: float
    alpha_error: float
    alpha_bound: float
    overlap: float
    overlap_bound: float
    bracket_fallback: bool

    @property
    def alpha_ok(self) -> bool:
        return self.alpha_error <= self.alpha_bound

    @property
    def overlap_ok(self) -> bool:
        return self.overlap >= self.overlap_bound

    @property
    def passed(self) -> bool:
        return self.alpha_ok and self.overlap_ok


def _check_key_preconditions(rv: UniRV, eps: float, s0: float) -> None:
    stats = moments(rv)
    if not 0 < eps <= s0 <= 1.0 / 3.0:
        raise PreconditionError(f"need 0 < eps <= s0 <= 1/3, got eps={eps!r}, s0={s0!r}")
    if abs(stats.mean) > eps:
        raise PreconditionError(f"|E X| = {abs(stats.mean):.6g} exceeds eps = {eps:.6g}")
    if stats.second_moment > s0 * s0:
        raise PreconditionError(f"E X^2 = {stats.second_moment:.6g} exceeds s0^2 = {s0 * s0:.6g}")


def key_solution(rv: UniRV, eps: float, s0: float) -> tuple[UniRV, SpectralSolution, bool]:
    """Principal eigenpair of the Grover operator on the truncated angle of ``rv``."""
    lam = params.key_lambda(s0)
    theta = to_angle(rv, lam, eps)
    centre = float(theta.probs @ np.tan(theta.values / 2.0))
    c = params.key_c(s0)
    bracket = (2.0 * (centre - c * eps), 2.0 * (centre + c * eps))
    fallback = False
    try:
        alpha = solve_alpha(theta, bracket)
    except (PoleInBracket, NoSignChange):
        # widen to the pole-free interval holding 2*E[tan(theta/2)]
        fallback = True
        below = _poles_in(theta, 2.0 * centre - _TWO_PI, 2.0 * centre)
        above = _poles_in(theta, 2.0 * centre, 2.0 * centre + _TWO_PI)
        alpha = canonical_phase(_bisect(theta, below[-1], above[0]))
    return theta, eigvec_for_alpha(theta, alpha), fallback


def certify_key_property(rv: UniRV, eps: float, s0: float) -> tuple[SpectrumCertificate, SpectralSolution]:
    """Check the eigenphase proximity and overlap bounds for the truncated angle of ``rv``."""
    _check_key_preconditions(rv, eps, s0)
    _, sol, fallback = key_solution(rv, eps, s0)
    mean = moments(rv).mean
    cert = SpectrumCertificate(
        eps=eps, s0=s0, lam=params.key_lambda(s0), c=params.key_c(s0),
        delta=params.key_delta(eps, s0),
        alpha_error=float(phase_gap(sol.alpha, mean)),
        alpha_bound=params.key_alpha_bound(eps, s0),
        overlap=sol.overlap, overlap_bound=params.key_overlap_bound(eps, s0),
        bracket_fallback=fallback)
    return cert, sol


def state_distance_bound_check(rv: UniRV, eps: float, s0: float, N: int) -> tuple[float, float]:
    """``(||G^N|1> - exp(i N E X)|1>||^2, bound)`` with ``G^N`` formed densely."""
    _check_key_preconditions(rv, eps, s0)
    if N < 0:
        raise PreconditionError(f"N must be >= 0, got {N}")
    op = build_grover(to_angle(rv, params.key_lambda(s0), eps))
    start = op.start_state
    evolved = np.linalg.matrix_power(op.matrix, N) @ start
    lhs = float(np.linalg.norm(evolved - np.exp(1j * N * moments(rv).mean) * start) ** 2)
    return lhs, params.state_distance_rhs(eps, s0, N)
