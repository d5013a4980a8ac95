"""Finite probability spaces and the value-map algebra built on them.

A :class:`FiniteDist` holds outcome probabilities ``p_k`` and value vectors
``x_k``. A :class:`UniRV` is a scalar value per outcome over the same
probabilities. Every quantity here is an exact finite sum; nothing samples
except :meth:`FiniteDist.sampler` and :meth:`UniRV.sampler`, which exist so the
classical estimators can draw from the same objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DistributionFormatError, PreconditionError

PROB_SUM_TOL = 1e-12
PSD_TOL = 1e-10


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _validate_probs(probs: np.ndarray) -> None:
    if probs.ndim != 1 or probs.size == 0:
        raise PreconditionError("a distribution needs at least one outcome")
    bad = np.flatnonzero(~np.isfinite(probs) | (probs < 0) | (probs > 1))
    if bad.size:
        k = int(bad[0])
        raise PreconditionError(f"outcome {k}: probability {probs[k]!r} outside [0, 1]")
    total = float(probs.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise PreconditionError(f"probabilities sum to {total!r}, not 1")


@dataclass(frozen=True)
class FiniteDist:
    """Explicit finite probability space with vector values.

    Attributes:
        probs: shape ``(K,)`` outcome probabilities.
        values: shape ``(K, d)`` outcome values.
    """

    probs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        _validate_probs(probs)
        if values.ndim != 2 or values.shape[0] != probs.size or values.shape[1] < 1:
            raise PreconditionError(
                f"values shape {values.shape} does not match {probs.size} outcomes")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("non-finite outcome value")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[tuple[float, Sequence[float]]]) -> "FiniteDist":
        return cls(np.array([p for p, _ in outcomes], dtype=float),
                   np.array([list(np.atleast_1d(x)) for _, x in outcomes], dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.probs.size

    def mean(self) -> np.ndarray:
        return self.probs @ self.values

    def coordinate(self, axis: int) -> "UniRV":
        return UniRV(self.probs, self.values[:, axis])

    def map_values(self, fn: Callable[[np.ndarray], np.ndarray]) -> "FiniteDist":
        return FiniteDist(self.probs, fn(np.array(self.values)))

    def shifted(self, offset: Sequence[float]) -> "FiniteDist":
        """Distribution of ``X - offset``."""
        return FiniteDist(self.probs, self.values - np.asarray(offset, dtype=float))

    def scaled(self, factor: float) -> "FiniteDist":
        return FiniteDist(self.probs, self.values * factor)

    def norms(self) -> "UniRV":
        return UniRV(self.probs, np.linalg.norm(self.values, axis=1))

    def sampler(self) -> Callable[[np.random.Generator, int], np.ndarray]:
        """Returns ``draw(rng, count) -> (count, d)`` i.i.d. value draws."""
        probs, values = self.probs, self.values

        def draw(rng: np.random.Generator, count: int) -> np.ndarray:
            return values[rng.choice(probs.size, size=count, p=probs)]

        return draw

    def to_json(self) -> dict[str, Any]:
        return {"dim": self.dim,
                "outcomes": [{"p": float(p), "x": [float(v) for v in x]}
                             for p, x in zip(self.probs, self.values)]}


@dataclass(frozen=True)
class UniRV:
    """Scalar value per outcome of a finite probability space."""

    probs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        values = _frozen(self.values)
        _validate_probs(probs)
        if values.shape != probs.shape:
            raise PreconditionError(
                f"{values.shape[0] if values.ndim else 0} values for {probs.size} outcomes")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("non-finite value")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.probs.size

    def mean(self) -> float:
        return float(self.probs @ self.values)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "UniRV":
        return UniRV(self.probs, fn(np.array(self.values)))

    def affine(self, shift: float = 0.0, scale: float = 1.0) -> "UniRV":
        """Distribution of ``(X - shift) * scale``."""
        return UniRV(self.probs, (self.values - shift) * scale)

    def sampler(self) -> Callable[[np.random.Generator, int], np.ndarray]:
        probs, values = self.probs, self.values

        def draw(rng: np.random.Generator, count: int) -> np.ndarray:
            return values[rng.choice(probs.size, size=count, p=probs)]

        return draw


@dataclass(frozen=True)
class ScalarStats:
    mean: float
    variance: float
    second_moment: float


@dataclass(frozen=True)
class CovSummary:
    matrix: np.ndarray = field(repr=False)
    trace: float


def moments(rv: UniRV) -> ScalarStats:
    mu = float(rv.probs @ rv.values)
    var = float(rv.probs @ (rv.values - mu) ** 2)
    second = float(rv.probs @ rv.values ** 2)
    return ScalarStats(mu, var, second)


def covariance(dist: FiniteDist) -> CovSummary:
    centered = dist.values - dist.mean()
    matrix = (centered * dist.probs[:, None]).T @ centered
    matrix = 0.5 * (matrix + matrix.T)
    return CovSummary(_frozen(matrix), float(np.trace(matrix)))


def _check_threshold(K: float) -> None:
    if not K >= 0:
        raise PreconditionError(f"truncation threshold must be >= 0, got {K!r}")


def truncate_uni(rv: UniRV, K: float) -> UniRV:
    """Clamp every value into ``[-K, K]``."""
    _check_threshold(K)
    return UniRV(rv.probs, np.clip(rv.values, -K, K))


def truncate_multi(dist: FiniteDist, K: float) -> FiniteDist:
    """Replace every value vector with Euclidean norm above ``K`` by the zero vector."""
    _check_threshold(K)
    keep = np.linalg.norm(dist.values, axis=1) <= K
    return FiniteDist(dist.probs, np.where(keep[:, None], dist.values, 0.0))


def to_angle(rv: UniRV, lam: float, eps: float) -> UniRV:
    """Angle variable ``2 arctan(clamp(X, 1/(lam*eps)) / 2)``, valued in (-pi, pi)."""
    if not (lam > 0 and eps > 0):
        raise PreconditionError(f"lambda and eps must be positive, got {lam!r}, {eps!r}")
    clamped = truncate_uni(rv, 1.0 / (lam * eps))
    return UniRV(rv.probs, 2.0 * np.arctan(0.5 * clamped.values))


def project_rv(dist: FiniteDist, u: Sequence[float]) -> UniRV:
    """Scalar variable ``<u, X>``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (dist.dim,):
        raise PreconditionError(f"direction has shape {u.shape}, expected ({dist.dim},)")
    return UniRV(dist.probs, dist.values @ u)


def parse_dist(obj: Any) -> FiniteDist:
    """Validate the JSON form ``{"dim": d, "outcomes": [{"p": f, "x": [...]}, ...]}``.

    Raises:
        DistributionFormatError: naming the first offending field, with its
            outcome index where one applies.
    """
    if not isinstance(obj, dict):
        raise DistributionFormatError("top level: expected an object")
    dim = obj.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise DistributionFormatError(f"field 'dim': expected an integer >= 1, got {dim!r}")
    outcomes = obj.get("outcomes")
    if not isinstance(outcomes, list) or not outcomes:
        raise DistributionFormatError("field 'outcomes': expected a non-empty list")
    probs, values = [], []
    for k, entry in enumerate(outcomes):
        if not isinstance(entry, dict):
            raise DistributionFormatError(f"outcomes[{k}]: expected an object")
        p = entry.get("p")
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not np.isfinite(p):
            raise DistributionFormatError(f"outcomes[{k}].p: expected a number, got {p!r}")
        if not 0 <= p <= 1:
            raise DistributionFormatError(f"outcomes[{k}].p: {p!r} outside [0, 1]")
        x = entry.get("x")
        if not isinstance(x, list) or len(x) != dim:
            raise DistributionFormatError(
                f"outcomes[{k}].x: expected a list of length {dim}, got {x!r}")
        for j, v in enumerate(x):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not np.isfinite(v):
                raise DistributionFormatError(f"outcomes[{k}].x[{j}]: expected a number, got {v!r}")
        probs.append(float(p))
        values.append([float(v) for v in x])
    total = float(np.sum(probs))
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise DistributionFormatError(f"field 'outcomes': probabilities sum to {total!r}, not 1")
    return FiniteDist(np.array(probs), np.array(values))


def load_dist(path: str | Path) -> FiniteDist:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DistributionFormatError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DistributionFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_dist(obj)
