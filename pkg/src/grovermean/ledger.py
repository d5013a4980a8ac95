"""Access counting and closed-form cost prediction.

Estimators charge a :class:`CostLedger` as they run: one Grover step costs
``grover_charge`` experiment accesses (the experiment plus its inverse by
default). :func:`predict` recomputes the same counters from the parameter
formulas alone, so a run and its prediction can be compared for equality.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any

from . import params
from .errors import PreconditionError

COUNTERS = ("experiment_accesses", "pe_invocations", "classical_samples", "simulation_samples")


@dataclass(frozen=True)
class CostReport:
    experiment_accesses: int = 0
    pe_invocations: int = 0
    classical_samples: int = 0
    simulation_samples: int = 0
    registers_peak: int = 0
    breakdown: dict[str, dict[str, int]] = field(default_factory=dict)

    def totals(self) -> dict[str, int]:
        out = {name: getattr(self, name) for name in COUNTERS}
        out["registers_peak"] = self.registers_peak
        return out

    def to_json(self) -> dict[str, Any]:
        return {**self.totals(), "breakdown": {k: dict(v) for k, v in sorted(self.breakdown.items())}}


class CostLedger:
    """Thread-safe monotone counters with a per-stage breakdown."""

    def __init__(self, grover_charge: int = params.DEFAULT_GROVER_CHARGE):
        if grover_charge < 1:
            raise PreconditionError(f"grover_charge must be >= 1, got {grover_charge!r}")
        self.grover_charge = int(grover_charge)
        self._lock = threading.Lock()
        self._totals = dict.fromkeys(COUNTERS, 0)
        self._stages: dict[str, dict[str, int]] = {}
        self._registers_peak = 0

    def charge(self, stage: str, amount: int = 0, kind: str = "experiment_accesses") -> "CostLedger":
        if kind not in COUNTERS:
            raise PreconditionError(f"unknown counter {kind!r}")
        if amount < 0 or int(amount) != amount:
            raise PreconditionError(f"charge must be a nonnegative integer, got {amount!r}")
        amount = int(amount)
        with self._lock:
            self._totals[kind] += amount
            entry = self._stages.setdefault(stage, dict.fromkeys(COUNTERS, 0))
            entry[kind] += amount
        return self

    def note_registers(self, count: int) -> None:
        with self._lock:
            self._registers_peak = max(self._registers_peak, int(count))

    def __getattr__(self, name: str):
        if name in COUNTERS:
            with self._lock:
                return self._totals[name]
        raise AttributeError(name)

    @property
    def registers_peak(self) -> int:
        return self._registers_peak

    def report(self) -> CostReport:
        with self._lock:
            return CostReport(registers_peak=self._registers_peak,
                              breakdown={k: dict(v) for k, v in self._stages.items()},
                              **self._totals)


def charge(ledger: CostLedger, stage: str, amount: int, kind: str = "experiment_accesses") -> CostLedger:
    return ledger.charge(stage, amount, kind)


# Register counts: a phase register per lattice axis plus one outcome register.
def pe_registers(d: int) -> int:
    return d + 1


def v_registers(n_v: float) -> int:
    """Modeled registers held by the quantized univariate estimator: one per stored phase-estimation outcome."""
    rounds = params.constrained_uni_rounds(n_v, 1.0, 1.0 / 3.0)
    deltas = params.loglog_deltas(rounds, params.v_delta(params.METICULOUS_XI))
    return int(sum(params.boost_repetitions(float(x)) for x in deltas))


# Closed forms, each charging a fresh ledger.
def _refine_uni(led: CostLedger, eps: float, delta: float) -> None:
    M = params.boost_repetitions(delta)
    N = params.uni_resolution(eps)
    led.charge("refine_uni", M * N * led.grover_charge)
    led.charge("refine_uni", M, "pe_invocations")
    led.note_registers(pe_registers(1))


def _constrained_uni(led: CostLedger, n: float, sigma0: float, eps0: float, delta: float) -> None:
    rounds = params.constrained_uni_rounds(n, sigma0, eps0)
    eps = params.constrained_uni_eps(rounds, sigma0, eps0)
    deltas = params.loglog_deltas(rounds, delta)
    for e, dl in zip(eps, deltas):
        _refine_uni(led, float(e), float(dl))


def _median_of_means(led: CostLedger, n: float, delta: float) -> None:
    buckets, size = params.mom_layout(n, delta)
    led.charge("median_of_means", buckets * size, "classical_samples")


def _notso_uni(led: CostLedger, sigma0: float, n: float, delta: float) -> None:
    _median_of_means(led, 9, delta / 2)
    _constrained_uni(led, n, sigma0, sigma0 / 3.0, delta / 2)


def _bounded_rel(led: CostLedger, n: float, delta: float, stage1_estimate: float) -> None:
    _notso_uni(led, 1.0, n, delta / 2)
    sigma, n2 = params.bounded_rel_stage2(stage1_estimate, n)
    _notso_uni(led, sigma, n2, delta / 2)


def _refine_multi(led: CostLedger, d: int, eps: float, delta: float) -> None:
    M = params.boost_repetitions(delta, d)
    N = params.multi_resolution(eps)
    led.charge("refine_multi", M * N * led.grover_charge)
    led.charge("refine_multi", M, "pe_invocations")
    led.note_registers(pe_registers(d))


def _constrained_simple(led: CostLedger, d: int, n: float, sigma0: float, eps0: float, delta: float,
                        D: float) -> None:
    rounds = params.simple_rounds(n, sigma0, eps0)
    eps = params.simple_eps(rounds, sigma0, eps0, d, D)
    for e, dl in zip(eps, params.loglog_deltas(rounds, delta)):
        _refine_multi(led, d, float(e), float(dl))


def v_access_cost(n_v: float, grover_charge: int) -> int:
    """Accesses of one V call: the quantized estimator plus its uncomputation."""
    led = CostLedger(grover_charge)
    _constrained_uni(led, n_v, 1.0, 1.0 / 3.0, params.v_delta(params.METICULOUS_XI))
    return 2 * led.experiment_accesses


def _constrained_meticulous(led: CostLedger, d: int, n: float, sigma0: float, delta: float, D: float) -> None:
    if sigma0 <= 0:
        return
    M = params.boost_repetitions(delta, d)
    N = params.meticulous_resolution(n, D)
    n_v = params.v_trials(N, 1.0, params.METICULOUS_XI)
    led.charge("meticulous_v", M * v_access_cost(n_v, led.grover_charge))
    led.charge("meticulous_v", M, "pe_invocations")
    led.note_registers(pe_registers(d) + v_registers(n_v))


def _classical_multi(led: CostLedger, n: float, delta: float) -> None:
    led.charge("classical_multi", params.classical_multi_layout(n, delta)[1], "classical_samples")


def _notso_multi(led: CostLedger, d: int, n: float, sigma0: float, delta: float, inner: str, D: float) -> None:
    _classical_multi(led, params.notso_multi_classical_n(delta, D), delta / 2)
    if inner == "simple":
        _constrained_simple(led, d, n, sigma0, params.mean_bound_eps0(sigma0, D), delta / 2, D)
    elif inner == "meticulous":
        _constrained_meticulous(led, d, n, sigma0, delta / 2, D)
    else:
        raise PreconditionError(f"unknown inner estimator {inner!r}")


def _quantile(led: CostLedger, p: float, delta: float, C: float) -> None:
    led.charge("quantile", params.quantile_charge(p, delta, C))
    led.charge("quantile", params.quantile_draws(p, delta, C), "simulation_samples")


def _full(led: CostLedger, d: int, n: float, delta: float, inner: str, D: float, C: float,
          truncation_scale: float, stage1_estimate: float | None, relative_estimate: float | None) -> None:
    _classical_multi(led, params.full_classical_n(delta), delta / 4)
    p = params.full_quantile_p(n, C)
    _quantile(led, p, delta / 4, C)
    if truncation_scale <= 0:
        return
    _bounded_rel(led, params.full_relative_n(p), delta / 4, stage1_estimate)
    sigma0 = math.sqrt(1.5) * truncation_scale * math.sqrt(relative_estimate)
    _notso_multi(led, d, params.full_inner_n(n), sigma0, delta / 4, inner, D)


_PREDICTORS = {
    "refine_uni": _refine_uni,
    "constrained_uni": _constrained_uni,
    "median_of_means": _median_of_means,
    "notso_uni": _notso_uni,
    "bounded_rel": _bounded_rel,
    "refine_multi": _refine_multi,
    "constrained_simple": _constrained_simple,
    "constrained_meticulous": _constrained_meticulous,
    "classical_multi": _classical_multi,
    "notso_multi": _notso_multi,
    "quantile": _quantile,
    "full_estimator": _full,
}


def predict(algorithm: str, grover_charge: int = params.DEFAULT_GROVER_CHARGE, **kwargs) -> CostReport:
    """Closed-form counters for ``algorithm`` at the given parameters.

    ``bounded_rel`` and ``full_estimator`` branch on values realized during the
    run (the stage-one estimate, the truncation scale, the relative estimate);
    pass those as keyword arguments, taken from the run's report details.
    """
    try:
        fn = _PREDICTORS[algorithm]
    except KeyError:
        raise PreconditionError(f"unknown algorithm {algorithm!r}; known: {sorted(_PREDICTORS)}") from None
    led = CostLedger(grover_charge)
    fn(led, **kwargs)
    return led.report()


def known_algorithms() -> list[str]:
    return sorted(_PREDICTORS)
