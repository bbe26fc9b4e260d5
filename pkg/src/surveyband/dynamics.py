"""Bilinear net-flow compartment model and its fixed-step RK4 integrator.

Compartment ``i`` changes at rate ``A_i * sum_j gamma[j, i] * A_j`` where
``gamma`` is antisymmetric; ``gamma[i, j] > 0`` moves population from ``i``
to ``j``. Values are percentages, so the total stays at 100.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InvalidArgumentError

DEFAULT_STEP = 0.005
SUM_TOL = 1e-9


def n_free(k: int) -> int:
    """Number of free rates (strict upper triangle) for ``k`` compartments."""
    return k * (k - 1) // 2


def k_from_free(m: int) -> int:
    k = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if n_free(k) != m or k < 2:
        raise InvalidArgumentError(f"{m} free rates do not form a strict upper triangle")
    return k


@dataclass(frozen=True)
class GammaParams:
    """Antisymmetric matrix of net transfer rates (1 / (percent * year))."""

    matrix: np.ndarray

    def __post_init__(self):
        g = np.array(self.matrix, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
            raise InvalidArgumentError(f"gamma must be a square K x K matrix, got shape {g.shape}")
        if np.any(np.diag(g) != 0.0) or np.any(g != -g.T):
            raise InvalidArgumentError("gamma must be antisymmetric with a zero diagonal")
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)

    @classmethod
    def from_upper(cls, values, k: int | None = None) -> "GammaParams":
        """Build from the strict upper triangle in row-major order, e.g. (g12, g13, g23)."""
        v = np.asarray(values, dtype=float).ravel()
        if k is None:
            k = k_from_free(v.size)
        elif v.size != n_free(k):
            raise InvalidArgumentError(f"K={k} needs {n_free(k)} rates, got {v.size}")
        g = np.zeros((k, k))
        iu = np.triu_indices(k, 1)
        g[iu] = v
        g[(iu[1], iu[0])] = -v
        return cls(g)

    @classmethod
    def zeros(cls, k: int) -> "GammaParams":
        return cls(np.zeros((k, k)))

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def upper(self) -> np.ndarray:
        return np.ascontiguousarray(self.matrix[np.triu_indices(self.k, 1)])

    def __getitem__(self, ij) -> float:
        return float(self.matrix[ij])


@dataclass(frozen=True)
class CompartmentState:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InvalidArgumentError("state needs at least two compartments")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidArgumentError(f"compartments must be finite and >= 0, got {v}")
        if abs(v.sum() - 100.0) > SUM_TOL:
            raise InvalidArgumentError(f"compartments must sum to 100, got {v.sum()!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def k(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray  # (len(grid), K)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.shape[0] != grid.size:
            raise InvalidArgumentError("states do not align with grid")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.grid.size

    def category(self, i: int) -> np.ndarray:
        return self.states[:, i]


def _as_state(initial) -> CompartmentState:
    if isinstance(initial, CompartmentState):
        return initial
    return CompartmentState(initial)


def derivative(state, params: GammaParams) -> np.ndarray:
    """Rates of change (percent per year) at ``state``."""
    state = _as_state(state)
    if state.k != params.k:
        raise InvalidArgumentError(f"state has K={state.k}, params have K={params.k}")
    return kernels.derivative(np.ascontiguousarray(state.values), params.upper)


def check_grid(grid) -> np.ndarray:
    g = np.ascontiguousarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise InvalidArgumentError("grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(g)):
        raise InvalidArgumentError("grid contains non-finite times")
    if np.any(np.diff(g) <= 0):
        raise InvalidArgumentError("grid must be strictly increasing")
    return g


def integrate(initial, params: GammaParams, grid, step: float = DEFAULT_STEP) -> Trajectory:
    """Classical RK4 with fixed step ``step``, landing exactly on every grid point.

    ``grid[0]`` must equal the initial state's time. Raises
    :class:`~surveyband.errors.DivergenceError` (with the failure time) if a
    compartment becomes non-finite or drops below -1e-6.
    """
    state = _as_state(initial)
    if state.k != params.k:
        raise InvalidArgumentError(f"state has K={state.k}, params have K={params.k}")
    if not step > 0:
        raise InvalidArgumentError("step must be positive")
    g = check_grid(grid)
    if g[0] != state.time:
        raise InvalidArgumentError(f"grid starts at {g[0]!r} but the state is at t={state.time!r}")
    states = kernels.integrate(np.ascontiguousarray(state.values), params.upper, g, float(step))
    return Trajectory(g, states)


def integrate_raw(a0: np.ndarray, upper: np.ndarray, grid: np.ndarray, step: float) -> np.ndarray:
    """Unchecked fast path used by the pipeline; returns the (len(grid), K) state array."""
    return kernels.integrate(a0, upper, grid, step)
