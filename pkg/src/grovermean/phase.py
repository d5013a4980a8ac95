"""Phase estimation, one-dimensional and on the hypercubic lattice.

Both routines return exact outcome tables. Estimates are phase fractions in
[-1/2, 1/2); an eigenvalue ``exp(2 pi i x)`` is read out as ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur

from .errors import PreconditionError
from .sim import (STATE_CAP, Family, LatticeSpec, StateVector, apply_per_lattice_unitary,
                  check_cap, circular_distance, index_to_fraction, inverse_qft_lattice,
                  is_power_of_two, measure_distribution, uniform_lattice_state)

NOISE_MODES = ("orthogonal-junk", "phase-jitter")


@dataclass(frozen=True)
class PEConfig:
    N: int
    kappa: int = 2

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise PreconditionError(f"N must be a power of two, got {self.N!r}")
        if self.kappa < 2:
            raise PreconditionError(f"kappa must be >= 2, got {self.kappa!r}")


@dataclass(frozen=True)
class PEOutcome:
    """Exact readout table over ``(N,)*d`` basis indices."""

    N: int
    table: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.table.ndim

    @property
    def fractions(self) -> np.ndarray:
        return index_to_fraction(np.arange(self.N), self.N)

    def marginal(self, axis: int = 0) -> np.ndarray:
        others = tuple(a for a in range(self.d) if a != axis)
        return self.table.sum(axis=others) if others else self.table

    def window_mass(self, target: float, kappa: float, axis: int = 0) -> float:
        """Probability that the readout on ``axis`` lies within ``kappa/N`` of ``target`` on the circle."""
        inside = circular_distance(self.fractions, target) <= kappa / self.N + 1e-15
        return float(self.marginal(axis)[inside].sum())

    def failure_mass(self, target: float, kappa: float, axis: int = 0) -> float:
        return 1.0 - self.window_mass(target, kappa, axis)

    def sample_fractions(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` readouts, shape ``(count, d)``."""
        flat = np.clip(self.table.ravel(), 0.0, None)
        draws = rng.choice(flat.size, size=count, p=flat / flat.sum())
        idx = np.stack(np.unravel_index(draws, self.table.shape), axis=1)
        return index_to_fraction(idx, self.N)


def _check_unitary(unitary: np.ndarray) -> None:
    k = unitary.shape[0]
    if unitary.shape != (k, k):
        raise PreconditionError(f"unitary must be square, got shape {unitary.shape}")
    err = np.abs(unitary.conj().T @ unitary - np.eye(k)).max()
    if err > 1e-10:
        raise PreconditionError(f"matrix is not unitary (error {err:.3g})")


def power_table(unitary: np.ndarray, state: np.ndarray, N: int) -> np.ndarray:
    """Rows ``U^j |state>`` for ``j = 0..N-1`` from the Schur form of the normal matrix ``U``."""
    form, basis = schur(np.asarray(unitary, dtype=complex), output="complex")
    eigenvalues = np.diag(form)
    eigenvalues = eigenvalues / np.abs(eigenvalues)
    coeffs = basis.conj().T @ state
    phases = np.angle(eigenvalues)
    powers = np.exp(1j * np.outer(np.arange(N), phases))
    return (powers * coeffs) @ basis.T


def phase_estimate_1d(unitary, input_state, cfg: PEConfig) -> PEOutcome:
    """Textbook phase estimation with controlled ``U^j``, ``j < N``, on ``input_state``."""
    unitary = np.asarray(unitary, dtype=complex)
    _check_unitary(unitary)
    state = np.asarray(input_state, dtype=complex).ravel()
    if state.size != unitary.shape[0]:
        raise PreconditionError(f"input has {state.size} amplitudes, unitary acts on {unitary.shape[0]}")
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-10:
        raise PreconditionError(f"input state has norm {norm!r}")
    check_cap(cfg.N * state.size, "phase estimation state dimension")
    register = power_table(unitary, state, cfg.N) / np.sqrt(cfg.N)
    readout = np.fft.fft(register, axis=0, norm="ortho")
    table = (np.abs(readout) ** 2).sum(axis=1)
    return PEOutcome(cfg.N, table / table.sum())


def exact_phase_family(x) -> Family:
    """Family ``u -> exp(2 pi i <u, x>)`` on a one-outcome register, so its N-th power is a plane wave."""
    x = np.asarray(x, dtype=float)

    def family(points: np.ndarray) -> np.ndarray:
        return np.exp(2j * np.pi * (points @ x))[:, None, None]

    return family


def lattice_state_after(family: Family, lat: LatticeSpec, outcome_init, power: int) -> StateVector:
    state = uniform_lattice_state(lat, outcome_init)
    return apply_per_lattice_unitary(state, family, power, lat)


def readout_table(state: StateVector) -> PEOutcome:
    """Inverse lattice transform, then the exact marginal over the lattice registers."""
    lattice_names = [state.names[a] for a in state.lattice_axes]
    N = state.layout[state.lattice_axes[0]][1]
    table = measure_distribution(inverse_qft_lattice(state), lattice_names).probs
    return PEOutcome(N, table / table.sum())


def multidim_phase_estimate(family: Family, lat: LatticeSpec, outcome_init, power: int | None = None,
                            noise: tuple[float, str, object] | None = None) -> PEOutcome:
    """Lattice phase estimation with ``family(u)**power`` applied per lattice point.

    ``noise``, when given as ``(eps, mode, seed)``, perturbs the state before
    the inverse transform through :func:`noise_injection`.
    """
    outcome_init = np.asarray(outcome_init, dtype=complex).ravel()
    extra = 2 if noise is not None and noise[1] == "orthogonal-junk" else 1
    check_cap(lat.num_points * outcome_init.size * extra, "lattice state dimension", STATE_CAP)
    state = lattice_state_after(family, lat, outcome_init, lat.N if power is None else power)
    if noise is not None:
        state = noise_injection(state, *noise)
    return readout_table(state)


def noise_injection(state: StateVector, eps: float, mode: str = "orthogonal-junk", seed=None) -> StateVector:
    """Perturb ``state`` to a normalized state at 2-norm distance ``eps`` (at most ``eps`` for jitter).

    ``orthogonal-junk`` appends a two-level ``junk`` register and moves weight
    onto a random state flagged ``|1>`` there, so the distance is exact.
    ``phase-jitter`` multiplies amplitudes by random phases scaled to the target distance.
    """
    if not 0 <= eps <= 2:
        raise PreconditionError(f"eps must lie in [0, 2], got {eps!r}")
    if mode not in NOISE_MODES:
        raise PreconditionError(f"unknown noise mode {mode!r}")
    rng = np.random.default_rng(seed)
    amps = state.amplitudes
    if mode == "orthogonal-junk":
        if "junk" in state.names:
            raise PreconditionError("state already carries a junk register")
        keep = 1.0 - eps * eps / 2.0
        junk = rng.normal(size=amps.shape) + 1j * rng.normal(size=amps.shape)
        junk /= np.linalg.norm(junk)
        new = np.stack([keep * amps, np.sqrt(max(0.0, 1.0 - keep * keep)) * junk], axis=-1)
        return StateVector(state.layout + (("junk", 2),), new)
    if eps == 0:
        return state.copy()
    weights = rng.uniform(-1.0, 1.0, size=amps.shape)

    def distance(scale: float) -> float:
        return float(np.linalg.norm(amps * (np.exp(1j * scale * weights) - 1.0)))

    lo, hi = 0.0, np.pi
    if distance(hi) <= eps:
        lo = hi
    else:
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if distance(mid) <= eps:
                lo = mid
            else:
                hi = mid
    return StateVector(state.layout, amps * np.exp(1j * lo * weights))
