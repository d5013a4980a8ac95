"""Seeding, parallel trial execution and Wilson-interval success checks."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

THREADS_ENV = "GROVERMEAN_THREADS"
WILSON_Z = 3.0

T = TypeVar("T")


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2 ** 63))


def trial_seeds(seed, count: int) -> list[int]:
    """Per-trial seeds derived from one root seed, independent of scheduling."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn: Callable[[int], T], seeds: Sequence[int], threads: int | None = None) -> list[T]:
    """``[fn(s) for s in seeds]``, possibly threaded; results keep input order."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))


@dataclass(frozen=True)
class SuccessRate:
    successes: int
    trials: int
    target: float
    z: float = WILSON_Z

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def wilson_upper(self) -> float:
        return wilson_interval(self.successes, self.trials, self.z)[1]

    @property
    def passed(self) -> bool:
        """Consistent with a true success rate of at least ``target`` at ``z`` standard errors."""
        return self.wilson_upper >= self.target

    def describe(self) -> str:
        return (f"{self.successes}/{self.trials} = {self.rate:.3f} "
                f"(Wilson upper {self.wilson_upper:.3f}, target {self.target:.3f})")


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("need at least one trial")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)
