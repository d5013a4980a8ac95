"""Multivariate estimators on the hypercubic lattice and the reductions around them.

Readouts ``x`` of lattice phase estimation are phase fractions; a phase
``exp(i N <u, m>)`` per lattice point reads out as ``x = m / (2 pi)``, so
estimates are ``2 pi x`` in the scaled coordinates of each algorithm.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import params
from .errors import GroverMeanError, PreconditionError
from .ledger import CostLedger, pe_registers, v_access_cost, v_registers
from .phase import PEOutcome, lattice_state_after, readout_table
from .prob import FiniteDist, UniRV, covariance, project_rv, truncate_multi
from .sim import STATE_CAP, LatticeSpec, StateVector, check_cap, inverse_qft_lattice, measure_distribution
from .spectrum import grover_matrix
from .trials import child_seed, make_rng
from .univariate import (MOMENT_SLACK, EstimateReport, _finish, _ledger_pair, bounded_rel_estimator,
                         constrained_uni)

TAIL_ENUMERATION_CAP = 2 ** 20
EMPIRICAL_POINTS_CAP = 256
DEFAULT_V_DRAWS = 200
INNER_ESTIMATORS = ("simple", "meticulous")
V_MODES = ("ideal-phase", "empirical")


class MultiEstimateReport(EstimateReport):
    """Vector estimate; ``details['trial_estimates']`` holds the readouts behind the final medians."""

    @property
    def medians(self) -> np.ndarray:
        return np.asarray(self.estimate)


@contextmanager
def _stage(name: str):
    """Prefix errors raised inside a pipeline stage with the stage name."""
    try:
        yield
    except GroverMeanError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = name
            exc.args = (f"stage {name}: {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        raise


def _lattice_fields(lat: LatticeSpec, mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``<u, mean>`` and ``u^T cov u`` over the lattice, shape ``(N,)*d``."""
    coords = lat.coordinates
    axes = [coords.reshape((-1,) + (1,) * (lat.d - 1 - a)) for a in range(lat.d)]
    linear = sum(mean[a] * axes[a] for a in range(lat.d))
    quad = sum(cov[a, b] * axes[a] * axes[b] for a in range(lat.d) for b in range(lat.d))
    shape = (lat.N,) * lat.d
    return np.broadcast_to(linear, shape).astype(float), np.broadcast_to(quad, shape).astype(float)


# Tail gate.
@dataclass(frozen=True)
class TailCheckResult:
    t: np.ndarray = field(repr=False)
    empirical: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    D: float
    trace: float
    violations: list[tuple[float, list[float]]]

    @property
    def passed(self) -> bool:
        return not self.violations


def variance_tail_check(dist: FiniteDist, lat: LatticeSpec, D: float = params.DEFAULT_D,
                        t_grid=None) -> TailCheckResult:
    """Exact ``P_u[Var <u, X> >= t]`` over every lattice point against ``2 exp(-t/(D tr Sigma))``.

    The default grid is zero plus every distinct variance value, which is where
    the step-shaped tail sits highest relative to the decreasing bound.
    """
    if lat.d != dist.dim:
        raise PreconditionError(f"lattice dimension {lat.d} differs from distribution dimension {dist.dim}")
    if not D > 0:
        raise PreconditionError(f"D must be positive, got {D!r}")
    check_cap(lat.num_points, "tail enumeration lattice points", TAIL_ENUMERATION_CAP)
    cov = covariance(dist)
    _, var = _lattice_fields(lat, np.zeros(dist.dim), cov.matrix)
    var = np.maximum(var.ravel(), 0.0)
    t = np.unique(np.concatenate([[0.0], var])) if t_grid is None else np.asarray(t_grid, dtype=float)
    ordered = np.sort(var)
    empirical = 1.0 - np.searchsorted(ordered, t, side="left") / var.size
    if cov.trace > 0:
        bound = 2.0 * np.exp(-t / (D * cov.trace))
    else:
        bound = np.where(t > 0, 0.0, 2.0)
    points = lat.points()
    violations = []
    for ti, emp, bd in zip(t, empirical, bound):
        if emp > bd + 1e-15:
            worst = int(np.flatnonzero(var >= ti)[0])
            violations.append((float(ti), points[worst].tolist()))
    return TailCheckResult(t, empirical, bound, D, cov.trace, violations)


def _check_mean_cov(dist: FiniteDist, trace_bound: float, mean_bound: float, mean_norm: str) -> None:
    cov = covariance(dist)
    if cov.trace > trace_bound + MOMENT_SLACK:
        raise PreconditionError(f"tr Sigma = {cov.trace:.6g} exceeds {trace_bound:.6g}")
    mean = dist.mean()
    size = float(np.abs(mean).max() if mean_norm == "inf" else np.linalg.norm(mean))
    if size > mean_bound + MOMENT_SLACK:
        label = "||E X||_inf" if mean_norm == "inf" else "||E X||_2"
        raise PreconditionError(f"{label} = {size:.6g} exceeds {mean_bound:.6g}")


# Simple estimator.
_MULTI_CACHE: OrderedDict = OrderedDict()
_MULTI_CACHE_SIZE = 4
_MULTI_LOCK = threading.Lock()


def grover_lattice_table(dist: FiniteDist, eps: float, N: int) -> PEOutcome:
    """Exact lattice phase-estimation readout for the controlled Grover family of one refinement step."""
    lat = LatticeSpec(dist.dim, N)
    check_cap(lat.num_points * dist.size, "lattice state dimension", STATE_CAP)
    key = (dist.probs.tobytes(), dist.values.tobytes(), eps, N)
    with _MULTI_LOCK:
        hit = _MULTI_CACHE.get(key)
        if hit is not None:
            _MULTI_CACHE.move_to_end(key)
            return hit
    limit = 1.0 / (params.multi_lambda(dist.dim) * eps)
    probs, values = dist.probs, dist.values

    def family(points: np.ndarray) -> np.ndarray:
        proj = np.clip(points @ values.T, -limit, limit)
        return grover_matrix(probs, 2.0 * np.arctan(0.5 * proj))

    table = readout_table(lattice_state_after(family, lat, np.sqrt(probs), N))
    with _MULTI_LOCK:
        _MULTI_CACHE[key] = table
        while len(_MULTI_CACHE) > _MULTI_CACHE_SIZE:
            _MULTI_CACHE.popitem(last=False)
    return table


def refine_multi(dist: FiniteDist, eps: float, delta: float, seed=None, ledger: CostLedger | None = None,
                 check: bool = True, D: float = params.DEFAULT_D,
                 grover_charge: int | None = None) -> MultiEstimateReport:
    """One multivariate refinement step: per-coordinate medians of lattice phase-estimation readouts.

    Preconditions (``check=True``): ``eps <= 1/(900 d^{3/4})``,
    ``||E X||_inf <= sqrt(d) eps`` and ``tr Sigma <= (1/(120 d^{1/4}) sqrt(1/(10 D)))^2``.
    """
    params.check_delta(delta)
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps!r}")
    d = dist.dim
    if check:
        if eps > params.multi_eps_cap(d):
            raise PreconditionError(f"eps = {eps:.6g} exceeds 1/(900 d^(3/4)) = {params.multi_eps_cap(d):.6g}")
        _check_mean_cov(dist, params.multi_trace_bound(d, D), math.sqrt(d) * eps, "inf")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    N = params.multi_resolution(eps)
    table = grover_lattice_table(dist, eps, N)
    M = params.boost_repetitions(delta, d)
    readouts = 2.0 * math.pi * table.sample_fractions(rng, M)
    for _ in range(M):
        local.charge("refine_multi", N * local.grover_charge)
        local.charge("refine_multi", 1, "pe_invocations")
    local.note_registers(pe_registers(d))
    estimate = np.median(readouts, axis=0)
    return MultiEstimateReport(estimate, _finish(ledger, local, True), seed,
                               {"N": N, "M": M, "trial_estimates": readouts})


def constrained_simple(dist: FiniteDist, n: float, sigma0: float, eps0: float, delta: float, seed=None,
                       ledger: CostLedger | None = None, check: bool = True, D: float = params.DEFAULT_D,
                       grover_charge: int | None = None) -> MultiEstimateReport:
    """Refinement rounds on ``(X - mu)/(K sigma0)`` with ``K = 120 d^{1/4} sqrt(10 D)``.

    With ``tr Sigma <= sigma0^2`` and ``||E X||_2 <= eps0 <= (2/15) sqrt(10 D) sigma0``
    the estimate is within ``sigma0/n`` in every coordinate with probability
    ``1 - delta``. The lattice of the last round is checked against the state
    cap before any round runs.
    """
    params.check_delta(delta)
    if sigma0 < 0 or eps0 < 0 or not n > 0:
        raise PreconditionError(f"need sigma0, eps0 >= 0 and n > 0, got {sigma0!r}, {eps0!r}, {n!r}")
    d = dist.dim
    if check:
        if eps0 > params.mean_bound_eps0(sigma0, D) + MOMENT_SLACK:
            raise PreconditionError(f"eps0 = {eps0:.6g} exceeds (2/15) sqrt(10 D) sigma0 = "
                                    f"{params.mean_bound_eps0(sigma0, D):.6g}")
        _check_mean_cov(dist, sigma0 * sigma0, eps0, "2")
    rounds = params.simple_rounds(n, sigma0, eps0)
    eps_list = params.simple_eps(rounds, sigma0, eps0, d, D)
    delta_list = params.loglog_deltas(rounds, delta)
    if rounds:
        N_last = params.multi_resolution(float(eps_list[-1]))
        check_cap(N_last ** d * dist.size, f"lattice state dimension (N={N_last}, d={d}, outcomes={dist.size})")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    K = params.simple_scale(d, D)
    mu = np.zeros(d)
    for eps_l, delta_l in zip(eps_list, delta_list):
        step = refine_multi(dist.shifted(mu).scaled(1.0 / (K * sigma0)), float(eps_l), float(delta_l),
                            seed=child_seed(rng), ledger=local, check=False, D=D)
        mu = mu + K * sigma0 * step.estimate
    return MultiEstimateReport(mu, _finish(ledger, local, True), seed, {"rounds": rounds})


# Meticulous estimator.
@dataclass(frozen=True)
class VChannel:
    """Approximate phase ``exp(i N E X)`` produced by the quantized univariate estimator.

    ``amplitude`` is the weight left on the clean branch; the remainder is junk
    orthogonal to it. ``deviation_sq`` is the squared distance to the exact phase.
    """

    mode: str
    N: int
    xi: float
    target_phase: float
    amplitude: complex
    deviation_sq: float
    proof_bound: float
    n_v: int
    delta_v: float
    outcomes: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        limit = self.proof_bound if self.mode == "empirical" else self.xi ** 2
        return self.deviation_sq <= limit + 1e-12


def build_v_channel(rv: UniRV, N: int, sigma0: float, eps0: float, xi: float = params.METICULOUS_XI,
                    mode: str = "ideal-phase", seed=None, draws: int = DEFAULT_V_DRAWS,
                    check: bool = True) -> VChannel:
    """Model the phase unitary built from ``constrained_uni`` at ``(ceil(3 N sigma0/(2 xi)), sigma0, eps0, xi^2/9)``.

    ``empirical`` runs the estimator ``draws`` times and uses the empirical
    outcome law ``{(q_j, y_j)}``; ``ideal-phase`` puts ``1 - xi^2/2`` on the
    exact phase so the deviation is exactly ``xi``.
    """
    if mode not in V_MODES:
        raise PreconditionError(f"unknown V mode {mode!r}; expected one of {V_MODES}")
    if not 0 < xi < 1:
        raise PreconditionError(f"xi must lie in (0, 1), got {xi!r}")
    n_v = params.v_trials(N, sigma0, xi)
    delta_v = params.v_delta(xi)
    proof_bound = 4.0 * delta_v + (N * sigma0 / n_v) ** 2
    mu = rv.mean()
    exact = np.exp(1j * N * mu)
    if mode == "ideal-phase":
        amp = (1.0 - xi * xi / 2.0) * exact
        return VChannel(mode, N, xi, N * mu, complex(amp), float(2.0 - 2.0 * (amp * np.conj(exact)).real),
                        proof_bound, n_v, delta_v)
    if draws < 1:
        raise PreconditionError(f"draws must be >= 1, got {draws}")
    rng = make_rng(seed)
    ys = np.array([constrained_uni(rv, sigma0, eps0, n_v, delta_v, seed=child_seed(rng), check=check).estimate
                   for _ in range(draws)])
    values, counts = np.unique(ys, return_counts=True)
    q = counts / draws
    phases = np.exp(1j * N * values)
    amp = complex(q @ phases)
    dev = float(q @ np.abs(phases - exact) ** 2)
    return VChannel(mode, N, xi, N * mu, amp, dev, proof_bound, n_v, delta_v, (q, values))


def v_certificate_sweep(dist: FiniteDist, lat: LatticeSpec, scale: float, xi: float = params.METICULOUS_XI,
                        seed=None, draws: int = DEFAULT_V_DRAWS) -> list[tuple[list[float], VChannel]]:
    """Empirical V channel at every lattice point for ``<u, X>/scale`` with the meticulous parameter map."""
    check_cap(lat.num_points, "empirical V lattice points", EMPIRICAL_POINTS_CAP)
    rng = make_rng(seed)
    out = []
    for u in lat.points():
        rv = project_rv(dist, u).affine(0.0, 1.0 / scale)
        out.append((u.tolist(), build_v_channel(rv, lat.N, 1.0, 1.0 / 3.0, xi, "empirical",
                                                child_seed(rng), draws)))
    return out


def _lattice_pe_from_amplitudes(lat: LatticeSpec, clean: np.ndarray) -> PEOutcome:
    """Readout when each lattice point keeps ``clean[u]`` on the clean branch and the rest on private junk."""
    state = StateVector(tuple((f"axis{a}", lat.N) for a in range(lat.d)) + (("outcome", 1),),
                        (clean / math.sqrt(lat.num_points))[..., None])
    names = [f"axis{a}" for a in range(lat.d)]
    table = measure_distribution(inverse_qft_lattice(state), names).probs
    junk = float(np.sum(1.0 - np.abs(clean) ** 2)) / lat.num_points
    table = table + junk / lat.num_points
    return PEOutcome(lat.N, table / table.sum())


def constrained_meticulous(dist: FiniteDist, n: float, sigma0: float, delta: float,
                           mode: str = "ideal-phase", seed=None, ledger: CostLedger | None = None,
                           check: bool = True, D: float = params.DEFAULT_D,
                           enforce_n_assumption: bool = True, v_draws: int = DEFAULT_V_DRAWS,
                           grover_charge: int | None = None) -> MultiEstimateReport:
    """Lattice phase estimation where each point applies the V channel for ``<u, X>/K``, ``K = sqrt(10 D) sigma0``.

    Preconditions: ``tr Sigma <= sigma0^2``, ``||E X||_2 <= (2/15) sqrt(10 D) sigma0``
    and, for ``d >= 2`` unless disabled, ``n >= ln(d/delta)/sqrt(ln d)``.
    Lattice points where ``<u, X>/K`` falls outside the V preconditions keep
    no clean amplitude.
    """
    params.check_delta(delta)
    if mode not in V_MODES:
        raise PreconditionError(f"unknown V mode {mode!r}; expected one of {V_MODES}")
    if sigma0 < 0 or not n > 0:
        raise PreconditionError(f"need sigma0 >= 0 and n > 0, got {sigma0!r}, {n!r}")
    d = dist.dim
    if check:
        _check_mean_cov(dist, sigma0 * sigma0, params.mean_bound_eps0(sigma0, D), "2")
    floor = params.meticulous_n_floor(d, delta)
    if enforce_n_assumption and d >= 2 and n < floor:
        raise PreconditionError(f"n = {n:.6g} is below ln(d/delta)/sqrt(ln d) = {floor:.6g}")
    local = _ledger_pair(ledger, grover_charge)
    if sigma0 == 0:
        return MultiEstimateReport(np.zeros(d), _finish(ledger, local, True), seed, {"N": 0, "M": 0})
    rng = make_rng(seed)
    K = math.sqrt(10.0 * D) * sigma0
    N = params.meticulous_resolution(n, D)
    lat = LatticeSpec(d, N)
    check_cap(lat.num_points, f"meticulous lattice points (N={N}, d={d})", STATE_CAP)
    if mode == "empirical":
        check_cap(lat.num_points, "empirical V lattice points", EMPIRICAL_POINTS_CAP)
    xi = params.METICULOUS_XI
    n_v = params.v_trials(N, 1.0, xi)
    cov = covariance(dist)
    mean_u, var_u = _lattice_fields(lat, dist.mean() / K, cov.matrix / (K * K))
    admissible = (var_u <= 1.0 + MOMENT_SLACK) & (np.abs(mean_u) <= 1.0 / 3.0 + MOMENT_SLACK)
    v_cost = None
    if mode == "ideal-phase":
        clean = np.where(admissible, (1.0 - xi * xi / 2.0) * np.exp(1j * N * mean_u), 0.0)
        v_cost = v_access_cost(n_v, local.grover_charge)
    else:
        clean = np.zeros((N,) * d, dtype=complex)
        for idx, u in zip(np.ndindex(*clean.shape), lat.points()):
            if not admissible[idx]:
                continue
            rv = project_rv(dist, u).affine(0.0, 1.0 / K)
            channel = build_v_channel(rv, N, 1.0, 1.0 / 3.0, xi, "empirical", child_seed(rng), v_draws, check=False)
            clean[idx] = channel.amplitude
        probe = CostLedger(local.grover_charge)
        constrained_uni(UniRV(np.ones(1), np.zeros(1)), 1.0, 1.0 / 3.0, n_v, params.v_delta(xi), ledger=probe)
        v_cost = 2 * probe.experiment_accesses
    table = _lattice_pe_from_amplitudes(lat, clean)
    M = params.boost_repetitions(delta, d)
    readouts = 2.0 * math.pi * K * table.sample_fractions(rng, M)
    for _ in range(M):
        local.charge("meticulous_v", v_cost)
        local.charge("meticulous_v", 1, "pe_invocations")
    local.note_registers(pe_registers(d) + v_registers(n_v))
    return MultiEstimateReport(np.median(readouts, axis=0), _finish(ledger, local, True), seed,
                               {"N": N, "M": M, "n_v": n_v, "admissible_fraction": float(admissible.mean()),
                                "trial_estimates": readouts})


# Classical multivariate estimator.
def geometric_median(points: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Weiszfeld iteration with the Vardi-Zhang step at data points."""
    points = np.asarray(points, dtype=float)
    if len(points) == 1:
        return points[0].copy()
    x = np.median(points, axis=0)
    for _ in range(max_iter):
        dist = np.linalg.norm(points - x, axis=1)
        at = dist < 1e-15
        w = 1.0 / dist[~at]
        if w.size == 0:
            return x
        target = (w[:, None] * points[~at]).sum(axis=0) / w.sum()
        if at.any():
            pull = np.linalg.norm((w[:, None] * (points[~at] - x)).sum(axis=0))
            share = min(1.0, at.sum() / pull) if pull > 0 else 1.0
            new = (1.0 - share) * target + share * x
        else:
            new = target
        if np.linalg.norm(new - x) <= tol * max(1.0, np.linalg.norm(x)):
            return new
        x = new
    return x


def classical_multi(draw: Callable[[np.random.Generator, int], np.ndarray], n: float, delta: float,
                    seed=None, ledger: CostLedger | None = None) -> np.ndarray:
    """Geometric median of ``ceil(8 ln(1/delta))`` bucket means over ``n ceil(ln(1/delta))`` draws."""
    buckets, total = params.classical_multi_layout(n, delta)
    rng = make_rng(seed)
    samples = np.asarray(draw(rng, total), dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if ledger is not None:
        ledger.charge("classical_multi", total, "classical_samples")
    origin = samples[0]
    means = np.array([origin + (chunk - origin).mean(axis=0)
                      for chunk in np.array_split(samples, min(buckets, total))])
    return geometric_median(means)


# Quantiles.
def upper_quantile(rv: UniRV, x: float) -> float:
    """``Q(x) = sup{y : P[V >= y] >= x}`` computed exactly."""
    if not 0 < x <= 1:
        raise PreconditionError(f"quantile level must lie in (0, 1], got {x!r}")
    order = np.argsort(-rv.values, kind="stable")
    values = rv.values[order]
    tail = np.cumsum(rv.probs[order])
    # P[V >= v] includes ties, so evaluate at the last index of each tie run.
    last = np.r_[values[1:] != values[:-1], True]
    ok = (tail >= x - 1e-15) & last
    return float(values[np.flatnonzero(ok)[0]])


def quantile_estimate(rv: UniRV, p: float, delta: float, seed=None, C: float = params.DEFAULT_C,
                      ledger: CostLedger | None = None) -> float:
    """Simulated quantile primitive landing in ``[Q(p), Q(Cp)]`` with probability ``1 - delta``.

    Draws ``ceil(a ln(1/delta)/p)`` samples and returns the
    ``max(1, floor((1+C)/2 p T))``-th largest. The ledger is charged the
    quantum count ``ceil(a ln(1/delta)/sqrt(p))``; the classical draws are
    recorded as simulation samples.
    """
    if not 0 < p < 1:
        raise PreconditionError(f"p must lie in (0, 1), got {p!r}")
    params.check_delta(delta)
    T = params.quantile_draws(p, delta, C)
    j = max(1, math.floor((1.0 + C) / 2.0 * p * T))
    rng = make_rng(seed)
    draws = np.sort(rv.sampler()(rng, T))[::-1]
    if ledger is not None:
        ledger.charge("quantile", params.quantile_charge(p, delta, C))
        ledger.charge("quantile", T, "simulation_samples")
    return float(draws[j - 1])


# Reductions.
def notso_multi(dist: FiniteDist, n: float, sigma0: float, delta: float, inner: str = "meticulous",
                seed=None, ledger: CostLedger | None = None, check: bool = True, D: float = params.DEFAULT_D,
                mode: str = "ideal-phase", enforce_n_assumption: bool = True,
                grover_charge: int | None = None) -> MultiEstimateReport:
    """Classical kickstart at ``delta/2``, then the inner constrained estimator on ``X - mu'`` at ``delta/2``.

    Needs only ``tr Sigma <= sigma0^2``.
    """
    params.check_delta(delta)
    if inner not in INNER_ESTIMATORS:
        raise PreconditionError(f"unknown inner estimator {inner!r}; expected one of {INNER_ESTIMATORS}")
    if check:
        trace = covariance(dist).trace
        if trace > sigma0 * sigma0 + MOMENT_SLACK:
            raise PreconditionError(f"tr Sigma = {trace:.6g} exceeds sigma0^2 = {sigma0 * sigma0:.6g}")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    with _stage("classical_kickstart"):
        kick = classical_multi(dist.sampler(), params.notso_multi_classical_n(delta, D), delta / 2,
                               seed=child_seed(rng), ledger=local)
    shifted = dist.shifted(kick)
    with _stage(f"constrained_{inner}"):
        if inner == "simple":
            rep = constrained_simple(shifted, n, sigma0, params.mean_bound_eps0(sigma0, D), delta / 2,
                                     seed=child_seed(rng), ledger=local, check=False, D=D)
        else:
            rep = constrained_meticulous(shifted, n, sigma0, delta / 2, mode=mode, seed=child_seed(rng),
                                         ledger=local, check=False, D=D,
                                         enforce_n_assumption=enforce_n_assumption)
    return MultiEstimateReport(kick + rep.estimate, _finish(ledger, local, True), seed,
                               {"kickstart": kick, "inner": inner, **{k: v for k, v in rep.details.items()
                                                                       if k != "trial_estimates"}})


@dataclass(frozen=True)
class SubCertificate:
    value: float
    bound: float
    passed: bool


def full_estimator(dist: FiniteDist, n: float, delta: float, inner: str = "meticulous", seed=None,
                   ledger: CostLedger | None = None, D: float = params.DEFAULT_D, C: float = params.DEFAULT_C,
                   mode: str = "ideal-phase", enforce_n_assumption: bool = True,
                   grover_charge: int | None = None) -> MultiEstimateReport:
    """Estimate within ``sqrt(tr Sigma)/n`` per coordinate with no prior bounds supplied.

    Stages: classical kickstart, quantile of ``||X - mu'||`` giving the scale
    ``K``, truncation, relative-error estimate of ``E (||Y||/K)^2``, then the
    kickstarted constrained estimator on the truncated variable. Each stage's
    certificate is evaluated exactly on ``dist`` and stored in
    ``details['certificates']``.
    """
    params.check_delta(delta)
    if inner not in INNER_ESTIMATORS:
        raise PreconditionError(f"unknown inner estimator {inner!r}; expected one of {INNER_ESTIMATORS}")
    if not n > 0:
        raise PreconditionError(f"n must be positive, got {n!r}")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    certs: dict[str, SubCertificate] = {}
    trace = covariance(dist).trace
    with _stage("classical_kickstart"):
        kick = classical_multi(dist.sampler(), params.full_classical_n(delta), delta / 4,
                               seed=child_seed(rng), ledger=local)
    gap = float(np.linalg.norm(kick - dist.mean()))
    certs["kickstart"] = SubCertificate(gap, math.sqrt(trace) / 5.0, gap <= math.sqrt(trace) / 5.0 + 1e-12)
    centred = dist.shifted(kick)
    norms = centred.norms()
    p = params.full_quantile_p(n, C)
    with _stage("quantile"):
        K = quantile_estimate(norms, p, delta / 4, seed=child_seed(rng), C=C, ledger=local)
    lo, hi = upper_quantile(norms, p), upper_quantile(norms, C * p)
    certs["quantile_sandwich"] = SubCertificate(K, hi, lo <= K <= hi)
    details: dict[str, Any] = {"kickstart": kick, "p": p, "truncation_scale": K, "quantile_bounds": (lo, hi)}
    if K <= 0:
        # every draw sat at the kickstart point; the truncated variable is zero
        details["certificates"] = certs
        return MultiEstimateReport(kick, _finish(ledger, local, True), seed, details)
    truncated = truncate_multi(centred, K)
    second = float(truncated.probs @ np.sum(truncated.values ** 2, axis=1))
    certs["truncation_moment"] = SubCertificate(second, K * K * p, second >= K * K * p - 1e-12)
    ratio = UniRV(truncated.probs, np.minimum(1.0, np.sum(truncated.values ** 2, axis=1) / (K * K)))
    with _stage("relative_error"):
        rel = bounded_rel_estimator(ratio, params.full_relative_n(p), delta / 4, seed=child_seed(rng),
                                    ledger=local)
    s2 = rel.estimate
    exact = ratio.mean()
    certs["relative_error"] = SubCertificate(abs(s2 - exact), exact / 3.0, abs(s2 - exact) <= exact / 3.0 + 1e-12)
    sigma0 = math.sqrt(1.5) * K * math.sqrt(s2)
    with _stage("notso_multi"):
        rest = notso_multi(truncated, params.full_inner_n(n), sigma0, delta / 4, inner=inner,
                           seed=child_seed(rng), ledger=local, check=False, D=D, mode=mode,
                           enforce_n_assumption=enforce_n_assumption)
    details.update({"stage1_estimate": rel.details["stage1_estimate"], "relative_estimate": s2,
                    "inner_sigma0": sigma0, "certificates": certs})
    return MultiEstimateReport(kick + rest.estimate, _finish(ledger, local, True), seed, details)
