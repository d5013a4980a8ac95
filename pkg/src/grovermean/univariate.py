"""Univariate estimators: refinement, the constrained and kickstarted estimators,
median boosting, the log-log confidence schedule, median of means, and the
relative-error estimator for variables in [0, 1].
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Any, Callable

import numpy as np

from . import params
from .errors import PreconditionError
from .ledger import CostLedger, CostReport, pe_registers
from .phase import PEConfig, PEOutcome, phase_estimate_1d
from .prob import UniRV, moments, to_angle
from .sim import STATE_CAP, check_cap
from .spectrum import grover_matrix
from .trials import child_seed, make_rng

# Absolute slack on moment preconditions, for inputs that meet them with equality.
MOMENT_SLACK = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Accuracy and confidence per round; ``eps_list`` ends at the target accuracy."""

    T: int
    eps_list: np.ndarray = field(repr=False)
    delta_list: np.ndarray = field(repr=False)
    R: float = 2.0

    def cost_ratio(self, eps: float, delta: float) -> float:
        """``sum (1/eps_j) ln(1/delta_j)`` relative to ``(1/eps) ln(1/delta)``."""
        if self.T == 0:
            return 0.0
        total = float(np.sum(np.log(1.0 / self.delta_list) / self.eps_list))
        return total / (math.log(1.0 / delta) / eps)


@dataclass(frozen=True)
class EstimateReport:
    estimate: Any
    cost: CostReport
    seed: Any = None
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def oracle_calls(self) -> int:
        return self.cost.experiment_accesses

    @property
    def pe_invocations(self) -> int:
        return self.cost.pe_invocations

    @property
    def registers_peak(self) -> int:
        return self.cost.registers_peak

    def to_json(self) -> dict[str, Any]:
        est = self.estimate
        est = [float(v) for v in est] if np.ndim(est) else float(est)
        return {"estimate": est, "seed": self.seed, "cost": self.cost.to_json(),
                "details": _jsonable(self.details)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    return obj


def cost_constant(R: float) -> float:
    """Bound on :meth:`Schedule.cost_ratio` valid for every ``T`` and every ``delta <= 1/2``."""
    if R <= 1:
        raise PreconditionError(f"R must exceed 1, got {R!r}")
    total, t = 0.0, 0
    while True:
        term = R ** (-t) * (1.0 + (math.log(math.pi ** 2 / 6.0) + 2.0 * math.log(t + 1)) / math.log(2.0))
        total += term
        if term < 1e-17 * total:
            return total
        t += 1


def loglog_schedule(eps0: float, eps: float, R: float, delta: float) -> Schedule:
    """Geometric accuracy ladder from just below ``eps0`` down to ``eps`` with union-bounded confidences."""
    params.check_delta(delta)
    if not R > 1:
        raise PreconditionError(f"R must exceed 1, got {R!r}")
    if not 0 < eps < eps0:
        raise PreconditionError(f"need 0 < eps < eps0, got eps={eps!r}, eps0={eps0!r}")
    T = max(1, math.ceil(math.log(eps0 / eps, R) - 1e-12))
    j = np.arange(1, T + 1)
    return Schedule(T, eps * R ** (T - j).astype(float), params.loglog_deltas(T, delta), R)


def median_boost(runner: Callable[[np.random.Generator], float], delta: float, seed=None) -> float:
    """Median of ``boost_repetitions(delta)`` independent runs."""
    rng = make_rng(seed)
    M = params.boost_repetitions(delta)
    return float(np.median([runner(np.random.default_rng(child_seed(rng))) for _ in range(M)]))


# Phase-estimation tables depend only on (probabilities, angles, N); the
# shifted variables of later refinement rounds repeat often, so keep a few.
_TABLE_CACHE: OrderedDict = OrderedDict()
_TABLE_CACHE_SIZE = 256
_TABLE_LOCK = threading.Lock()


def grover_pe_table(theta: UniRV, N: int) -> PEOutcome:
    """Exact phase-estimation readout for the Grover operator of ``theta`` on its start state."""
    key = (theta.probs.tobytes(), theta.values.tobytes(), N)
    with _TABLE_LOCK:
        hit = _TABLE_CACHE.get(key)
        if hit is not None:
            _TABLE_CACHE.move_to_end(key)
            return hit
    check_cap(N * theta.size, "phase estimation state dimension", STATE_CAP)
    table = phase_estimate_1d(grover_matrix(theta.probs, theta.values), np.sqrt(theta.probs), PEConfig(N))
    with _TABLE_LOCK:
        _TABLE_CACHE[key] = table
        while len(_TABLE_CACHE) > _TABLE_CACHE_SIZE:
            _TABLE_CACHE.popitem(last=False)
    return table


def _finish(ledger: CostLedger | None, local: CostLedger, merge: bool) -> CostReport:
    report = local.report()
    if ledger is not None and merge:
        for stage, counters in report.breakdown.items():
            for kind, amount in counters.items():
                if amount:
                    ledger.charge(stage, amount, kind)
        ledger.note_registers(report.registers_peak)
    return report


def _ledger_pair(ledger: CostLedger | None, grover_charge: int | None) -> CostLedger:
    if grover_charge is None:
        grover_charge = ledger.grover_charge if ledger is not None else params.DEFAULT_GROVER_CHARGE
    return CostLedger(grover_charge)


def refine_uni(rv: UniRV, eps: float, delta: float, seed=None, ledger: CostLedger | None = None,
               check: bool = True, grover_charge: int | None = None) -> EstimateReport:
    """One refinement step: median of phase-estimation readouts on the truncated angle variable.

    With ``eps <= 1/12``, ``|E X| <= eps`` and ``Var X <= 1/16``, the estimate
    lies within ``eps/2`` of ``E X`` with probability at least ``1 - delta``.
    """
    params.check_delta(delta)
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps!r}")
    if check:
        stats = moments(rv)
        if eps > 1.0 / 12.0:
            raise PreconditionError(f"eps = {eps!r} exceeds 1/12")
        if abs(stats.mean) > eps + MOMENT_SLACK:
            raise PreconditionError(f"|E X| = {abs(stats.mean):.6g} exceeds eps = {eps:.6g}")
        if stats.variance > 1.0 / 16.0 + MOMENT_SLACK:
            raise PreconditionError(f"Var X = {stats.variance:.6g} exceeds 1/16")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    cfg = PEConfig(params.uni_resolution(eps))
    table = grover_pe_table(to_angle(rv, params.uni_lambda(), eps), cfg.N)
    M = params.boost_repetitions(delta)
    readouts = table.sample_fractions(rng, M)[:, 0]
    for _ in range(M):
        local.charge("refine_uni", cfg.N * local.grover_charge)
        local.charge("refine_uni", 1, "pe_invocations")
    local.note_registers(pe_registers(1))
    estimate = float(np.median(2.0 * math.pi * readouts))
    return EstimateReport(estimate, _finish(ledger, local, True), seed, {"N": cfg.N, "M": M})


def constrained_uni(rv: UniRV, sigma0: float, eps0: float, n: float, delta: float, seed=None,
                    ledger: CostLedger | None = None, check: bool = True,
                    grover_charge: int | None = None) -> EstimateReport:
    """Refinement rounds on ``(X - mu)/(4 sigma0)`` with halving accuracy.

    With ``Var X <= sigma0^2`` and ``|E X| <= eps0 <= sigma0/3``, the estimate
    lies within ``sigma0/n`` of ``E X`` with probability at least ``1 - delta``.
    """
    params.check_delta(delta)
    if sigma0 < 0 or eps0 < 0 or not n > 0:
        raise PreconditionError(f"need sigma0, eps0 >= 0 and n > 0, got {sigma0!r}, {eps0!r}, {n!r}")
    if check:
        stats = moments(rv)
        if stats.variance > sigma0 * sigma0 + MOMENT_SLACK:
            raise PreconditionError(f"Var X = {stats.variance:.6g} exceeds sigma0^2 = {sigma0 * sigma0:.6g}")
        if abs(stats.mean) > eps0 + MOMENT_SLACK:
            raise PreconditionError(f"|E X| = {abs(stats.mean):.6g} exceeds eps0 = {eps0:.6g}")
        if eps0 > sigma0 / 3.0 + MOMENT_SLACK:
            raise PreconditionError(f"eps0 = {eps0:.6g} exceeds sigma0/3 = {sigma0 / 3.0:.6g}")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    rounds = params.constrained_uni_rounds(n, sigma0, eps0)
    schedule = Schedule(rounds, params.constrained_uni_eps(rounds, sigma0, eps0),
                        params.loglog_deltas(rounds, delta))
    mu = 0.0
    trace = []
    for eps_l, delta_l in zip(schedule.eps_list, schedule.delta_list):
        step = refine_uni(rv.affine(mu, 1.0 / (4.0 * sigma0)), float(eps_l), float(delta_l),
                          seed=child_seed(rng), ledger=local, check=False)
        mu += 4.0 * sigma0 * step.estimate
        trace.append(mu)
    return EstimateReport(mu, _finish(ledger, local, True), seed,
                          {"rounds": rounds, "trace": trace})


def median_of_means(draw: Callable[[np.random.Generator, int], np.ndarray], n: float, delta: float,
                    seed=None, ledger: CostLedger | None = None) -> float:
    """Median of bucket means; within ``sqrt(Var/n)`` of the mean with probability ``1 - delta``.

    Buckets hold ``ceil(4n)`` draws, so Chebyshev puts each bucket mean inside
    the window with probability at least 3/4; an odd count of at least
    ``8 ln(1/delta)`` buckets then makes the median fail with probability at
    most ``delta`` by Hoeffding.
    """
    buckets, size = params.mom_layout(n, delta)
    rng = make_rng(seed)
    samples = np.asarray(draw(rng, buckets * size), dtype=float).reshape(buckets, size)
    if ledger is not None:
        ledger.charge("median_of_means", buckets * size, "classical_samples")
    return float(np.median(bucket_means(samples)))


def bucket_means(samples: np.ndarray) -> np.ndarray:
    """Row means computed about the first sample, so constant rows come back exactly."""
    origin = samples.reshape(-1, *samples.shape[2:])[0]
    return origin + (samples - origin).mean(axis=1)


def notso_uni(rv: UniRV, sigma0: float, n: float, delta: float, seed=None,
              ledger: CostLedger | None = None, check: bool = True,
              grover_charge: int | None = None) -> EstimateReport:
    """Classical kickstart to within ``sigma0/3``, then the constrained estimator on the residual.

    Needs only ``Var X <= sigma0^2``; succeeds with probability ``1 - delta``.
    """
    params.check_delta(delta)
    if check:
        var = moments(rv).variance
        if var > sigma0 * sigma0 + MOMENT_SLACK:
            raise PreconditionError(f"Var X = {var:.6g} exceeds sigma0^2 = {sigma0 * sigma0:.6g}")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    kick = median_of_means(rv.sampler(), 9, delta / 2, seed=child_seed(rng), ledger=local)
    inner = constrained_uni(rv.affine(kick), sigma0, sigma0 / 3.0, n, delta / 2,
                            seed=child_seed(rng), ledger=local, check=False)
    return EstimateReport(kick + inner.estimate, _finish(ledger, local, True), seed,
                          {"kickstart": kick, "rounds": inner.details["rounds"]})


def bounded_rel_estimator(rv: UniRV, n: float, delta: float, seed=None,
                          ledger: CostLedger | None = None,
                          grover_charge: int | None = None) -> EstimateReport:
    """Estimate within ``sqrt(E X)/n + 1/n^2`` of ``E X`` for ``X`` valued in [0, 1].

    Stage one runs the kickstarted estimator with ``sigma0 = 1``; stage two
    reruns it with the variance bound and accuracy implied by stage one (see
    :func:`grovermean.params.bounded_rel_stage2`). Each stage gets ``delta/2``.
    """
    params.check_delta(delta)
    if not n > 0:
        raise PreconditionError(f"n must be positive, got {n!r}")
    bad = np.flatnonzero((rv.values < 0) | (rv.values > 1))
    if bad.size:
        k = int(bad[0])
        raise PreconditionError(f"outcome {k}: value {rv.values[k]!r} outside [0, 1]")
    rng = make_rng(seed)
    local = _ledger_pair(ledger, grover_charge)
    first = notso_uni(rv, 1.0, n, delta / 2, seed=child_seed(rng), ledger=local, check=False)
    sigma, n2 = params.bounded_rel_stage2(first.estimate, n)
    second = notso_uni(rv, sigma, n2, delta / 2, seed=child_seed(rng), ledger=local, check=False)
    estimate = min(1.0, max(0.0, second.estimate))
    return EstimateReport(estimate, _finish(ledger, local, True), seed,
                          {"stage1_estimate": first.estimate, "stage2_sigma0": sigma, "stage2_n": n2})
