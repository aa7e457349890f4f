"""Weighted measure/function spaces discretized on a uniform 1D grid.

Measures carry a signed mass per cell (left action objects), functions carry a
value per cell center (right action objects).  The two are dual through a plain
weighted dot product, which keeps the duality exact on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Operands live on different grids (or time grids)."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform discretization of [lower, upper] into n_cells cells."""

    lower: float
    upper: float
    n_cells: int

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if self.n_cells < 2:
            raise ValueError(f"need n_cells >= 2, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return (self.upper - self.lower) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.lower + (np.arange(self.n_cells) + 0.5) * self.dx

    def index_of(self, x: float) -> int:
        """Index of the cell containing x (clipped to the grid)."""
        i = int(np.floor((x - self.lower) / self.dx))
        return min(max(i, 0), self.n_cells - 1)


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True)
class GridFunction:
    """Pointwise values at cell centers; an element of the discrete B(V)."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite function values")

    @classmethod
    def from_callable(cls, grid: Grid1D, f) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.centers), dtype=float))

    @classmethod
    def ones(cls, grid: Grid1D) -> "GridFunction":
        return cls(grid, np.ones(grid.n_cells))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Signed mass per cell; an element of the discrete M(V).

    The positive/negative parts are cellwise (a cell belongs to exactly one
    part), mirroring the mutual singularity of the Hahn-Jordan decomposition.
    """

    grid: Grid1D
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "masses", m)
        if m.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} masses, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite masses")

    @classmethod
    def dirac(cls, grid: Grid1D, x: float, mass: float = 1.0) -> "DiscreteMeasure":
        m = np.zeros(grid.n_cells)
        m[grid.index_of(x)] = mass
        return cls(grid, m)

    @property
    def positive_part(self) -> np.ndarray:
        return np.maximum(self.masses, 0.0)

    @property
    def negative_part(self) -> np.ndarray:
        return np.maximum(-self.masses, 0.0)

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.masses)))


@dataclass(frozen=True)
class Weight:
    """Strictly positive weight V per cell."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} values, got {v.shape}")
        if not np.all(v > 0):
            raise ValueError("weight must be strictly positive everywhere")

    @classmethod
    def ones(cls, grid: Grid1D) -> "Weight":
        return cls(grid, np.ones(grid.n_cells))


def pair(mu: DiscreteMeasure, f: GridFunction) -> float:
    """Duality pairing mu(f) = sum_i mass_i * f(x_i).  Bilinear and exact."""
    _check_same_grid(mu, f)
    return float(np.dot(mu.masses, f.values))


def weighted_function_norm(f: GridFunction, V: Weight) -> float:
    """Discrete ||f||_{B(V)} = max_i |f(x_i)| / V(x_i)."""
    _check_same_grid(f, V)
    return float(np.max(np.abs(f.values) / V.values))


def weighted_measure_norm(mu: DiscreteMeasure, V: Weight) -> float:
    """Discrete weighted total variation: sum_i |mass_i| * V(x_i)."""
    _check_same_grid(mu, V)
    return float(np.dot(np.abs(mu.masses), V.values))


@dataclass(frozen=True)
class TimeMeasure:
    """Probability measure on [0, horizon], either a single atom or a density
    sampled on a uniform node grid with trapezoid weights.

    `weights` always sums to 1 (the per-node probability masses); `density`
    holds the Lebesgue density samples when the measure is absolutely
    continuous, and is None for the atomic case.
    """

    horizon: float
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray | None = None
    atom: float | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != weights.shape:
            raise ValueError("nodes/weights length mismatch")
        if np.any(weights < -1e-12):
            raise ValueError("negative weights")
        total = weights.sum()
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"weights sum to {total}, expected 1")
        if self.density is not None:
            d = np.asarray(self.density, dtype=float)
            object.__setattr__(self, "density", d)
            if d.shape != nodes.shape:
                raise ValueError("density length mismatch")

    @classmethod
    def dirac_at(cls, horizon: float, nodes: np.ndarray, s: float) -> "TimeMeasure":
        nodes = np.asarray(nodes, dtype=float)
        w = np.zeros_like(nodes)
        w[int(np.argmin(np.abs(nodes - s)))] = 1.0
        return cls(horizon, nodes, w, density=None, atom=s)

    @classmethod
    def from_density(cls, horizon: float, nodes: np.ndarray,
                     density: np.ndarray) -> "TimeMeasure":
        """Normalize density samples into per-node trapezoid masses."""
        nodes = np.asarray(nodes, dtype=float)
        density = np.asarray(density, dtype=float)
        w = trapezoid_weights(nodes) * density
        total = w.sum()
        if total <= 0:
            raise ValueError("density has no mass")
        return cls(horizon, nodes, w / total, density=density / total)

    def expectation(self, samples: np.ndarray) -> float:
        """Integrate node-sampled values against the measure."""
        return float(np.dot(self.weights, samples))


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    """Composite trapezoid quadrature weights for a sorted node array."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size == 1:
        return np.ones(1)
    w = np.empty_like(nodes)
    w[0] = (nodes[1] - nodes[0]) / 2
    w[-1] = (nodes[-1] - nodes[-2]) / 2
    w[1:-1] = (nodes[2:] - nodes[:-2]) / 2
    return w


def tv_distance_time_measures(s1: TimeMeasure, s2: TimeMeasure) -> float:
    """Total variation distance sum_j |w1_j - w2_j|; in [0, 2] for
    probability measures."""
    if s1.nodes.shape != s2.nodes.shape or not np.allclose(s1.nodes, s2.nodes):
        raise GridMismatchError("time grids differ")
    return float(np.sum(np.abs(s1.weights - s2.weights)))
