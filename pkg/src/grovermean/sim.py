"""Dense statevector engine over lattice and outcome registers.

Amplitudes live in one C-ordered array whose axes are the registers, lattice
axes first. Lattice coordinates are ``u_j = j/N - 1/2 + 1/(2N)``, which are
symmetric about zero and strictly inside (-1/2, 1/2).

The lattice transform is ``F[m, j] = N^{-1/2} exp(-2 pi i u_j m)``, so a plane
wave ``exp(2 pi i u m)`` is mapped exactly onto the basis state ``|m mod N>``.
Basis index ``m`` reads out as the phase fraction ``m/N`` wrapped into
[-1/2, 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapExceeded, NonUnitaryError, PreconditionError

STATE_CAP = 2 ** 22
NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
UNITARY_CHECK_MAX_DIM = 64
_BLOCK_CHUNK = 8192

Family = Callable[[np.ndarray], np.ndarray]


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def index_to_fraction(index, N: int):
    """Map basis index ``m`` to ``m/N`` wrapped into [-1/2, 1/2)."""
    index = np.asarray(index)
    return np.where(index >= N // 2, index - N, index) / N if N > 1 else index * 0.0


def circular_distance(a, b):
    """Distance between phase fractions on the unit circle, in [0, 1/2]."""
    diff = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 1.0)
    return np.minimum(diff, 1.0 - diff)


def check_cap(required: int, what: str, cap: int = STATE_CAP) -> None:
    if required > cap:
        raise CapExceeded(what, required, cap)


@dataclass(frozen=True)
class LatticeSpec:
    d: int
    N: int

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise PreconditionError(f"lattice dimension must be >= 1, got {self.d!r}")
        if not is_power_of_two(self.N):
            raise PreconditionError(f"lattice resolution must be a power of two, got {self.N!r}")

    @property
    def coordinates(self) -> np.ndarray:
        j = np.arange(self.N)
        return (2 * j - self.N + 1) / (2 * self.N)

    @property
    def num_points(self) -> int:
        return self.N ** self.d

    def points(self) -> np.ndarray:
        """All lattice points, shape ``(N**d, d)``, first axis slowest."""
        grids = np.meshgrid(*([self.coordinates] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass
class StateVector:
    """Amplitudes over an ordered register layout.

    ``layout`` is a tuple of ``(name, size)`` pairs; ``amplitudes`` has shape
    ``tuple(size for _, size in layout)``.
    """

    layout: tuple[tuple[str, int], ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.layout = tuple((str(n), int(s)) for n, s in self.layout)
        shape = tuple(s for _, s in self.layout)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(shape)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.layout]

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise PreconditionError(f"no register named {name!r} in {self.names}") from None

    @property
    def lattice_axes(self) -> list[int]:
        return [i for i, n in enumerate(self.names) if n.startswith("axis")]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.amplitudes.copy())


def lattice_layout(lat: LatticeSpec, outcome_size: int) -> tuple[tuple[str, int], ...]:
    return tuple((f"axis{a}", lat.N) for a in range(lat.d)) + (("outcome", outcome_size),)


def uniform_lattice_state(lat: LatticeSpec, outcome_init) -> StateVector:
    """Uniform superposition over the lattice tensored with ``outcome_init``."""
    outcome_init = np.asarray(outcome_init, dtype=complex).ravel()
    norm = np.linalg.norm(outcome_init)
    if abs(norm - 1.0) > NORM_TOL:
        raise PreconditionError(f"outcome state has norm {norm!r}")
    check_cap(lat.num_points * outcome_init.size, "lattice state dimension")
    amps = np.broadcast_to(outcome_init / np.sqrt(lat.num_points),
                           (lat.N,) * lat.d + (outcome_init.size,))
    return StateVector(lattice_layout(lat, outcome_init.size), amps.copy())


def matrix_power_stack(mats: np.ndarray, power: int) -> np.ndarray:
    """Integer power of every matrix in a ``(P, k, k)`` stack by binary multiplication."""
    if power < 0:
        raise PreconditionError(f"power must be >= 0, got {power}")
    result = np.broadcast_to(np.eye(mats.shape[-1], dtype=complex), mats.shape).copy()
    base = mats.astype(complex, copy=True)
    while power:
        if power & 1:
            result = result @ base
        power >>= 1
        if power:
            base = base @ base
    return result


def _check_unitary_stack(mats: np.ndarray, points: np.ndarray) -> None:
    k = mats.shape[-1]
    if k > UNITARY_CHECK_MAX_DIM:
        return
    gram = np.conj(np.swapaxes(mats, -1, -2)) @ mats
    err = np.abs(gram - np.eye(k)).reshape(len(mats), -1).max(axis=1)
    bad = np.flatnonzero(err > UNITARY_TOL)
    if bad.size:
        i = int(bad[0])
        raise NonUnitaryError(
            f"family member at u={points[i].tolist()} is not unitary (error {err[i]:.3g})")


def apply_per_lattice_unitary(state: StateVector, family: Family, power: int,
                              lat: LatticeSpec | None = None) -> StateVector:
    """Multiply the outcome block at each lattice point ``u`` by ``family(u)**power``.

    ``family`` maps an array of lattice points ``(P, d)`` to a ``(P, k, k)``
    stack of unitaries on the outcome register.
    """
    lat_axes = state.lattice_axes
    if not lat_axes:
        raise PreconditionError("state has no lattice registers")
    N = state.layout[lat_axes[0]][1]
    lat = lat or LatticeSpec(len(lat_axes), N)
    out_axis = state.axis("outcome")
    if power == 0:
        return state.copy()
    amps = np.moveaxis(state.amplitudes, out_axis, -1)
    shape = amps.shape
    blocks = amps.reshape(lat.num_points, -1, shape[-1]) if amps.ndim > lat.d + 1 \
        else amps.reshape(lat.num_points, 1, shape[-1])
    points = lat.points()
    out = np.empty_like(blocks)
    for start in range(0, lat.num_points, _BLOCK_CHUNK):
        stop = min(start + _BLOCK_CHUNK, lat.num_points)
        mats = np.asarray(family(points[start:stop]), dtype=complex)
        _check_unitary_stack(mats, points[start:stop])
        powered = matrix_power_stack(mats, power)
        out[start:stop] = np.einsum("pij,pmj->pmi", powered, blocks[start:stop])
    new = np.moveaxis(out.reshape(shape), -1, out_axis)
    return StateVector(state.layout, new)


def _lattice_phase(N: int) -> np.ndarray:
    m = np.arange(N)
    return np.exp(1j * np.pi * (N - 1) * m / N)


def inverse_qft_lattice(state: StateVector) -> StateVector:
    amps = state.amplitudes
    for ax in state.lattice_axes:
        N = amps.shape[ax]
        amps = np.fft.fft(amps, axis=ax, norm="ortho")
        shape = [1] * amps.ndim
        shape[ax] = N
        amps = amps * _lattice_phase(N).reshape(shape)
    return StateVector(state.layout, amps)


def qft_lattice(state: StateVector) -> StateVector:
    amps = state.amplitudes
    for ax in state.lattice_axes:
        N = amps.shape[ax]
        shape = [1] * amps.ndim
        shape[ax] = N
        amps = np.fft.ifft(amps / _lattice_phase(N).reshape(shape), axis=ax, norm="ortho")
    return StateVector(state.layout, amps)


@dataclass(frozen=True)
class MeasurementDistribution:
    registers: tuple[str, ...]
    probs: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probs.shape


def measure_distribution(state: StateVector, registers: Sequence[str]) -> MeasurementDistribution:
    """Exact marginal ``|amplitude|^2`` table over ``registers`` (no collapse)."""
    registers = tuple(registers)
    if not registers:
        raise PreconditionError("measure at least one register")
    keep = [state.axis(r) for r in registers]
    probs = np.abs(state.amplitudes) ** 2
    drop = tuple(i for i in range(probs.ndim) if i not in keep)
    marginal = probs.sum(axis=drop) if drop else probs
    sorted_keep = sorted(keep)
    marginal = np.transpose(marginal, axes=[sorted_keep.index(k) for k in keep])
    return MeasurementDistribution(registers, marginal)


def sample(dist: MeasurementDistribution, seed, trials: int) -> np.ndarray:
    """I.i.d. draws of basis index tuples, shape ``(trials, len(registers))``."""
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    flat = dist.probs.ravel()
    flat = np.clip(flat, 0.0, None)
    flat = flat / flat.sum()
    draws = rng.choice(flat.size, size=trials, p=flat)
    return np.stack(np.unravel_index(draws, dist.shape), axis=1)


def state_distance(a: StateVector, b: StateVector) -> float:
    if a.layout != b.layout:
        raise PreconditionError(f"layouts differ: {a.layout} vs {b.layout}")
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))
