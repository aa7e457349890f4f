"""Model data for the nonlocal transport equation

    d_t u + d_x u = int u(t,y) Q(y,dx) dy + a(x) u(t,x)

A model is a potential a (bounded above, confining for "compliant" models)
plus a mutation kernel Q with a banded Lebesgue lower bound
Q(x,dy) >= kappa0 * 1_{(x-eps, x+eps)}(y) dy for compliant kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .grids import Grid1D


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """Interface: vectorized values a(x) and line integrals of a."""

    def values(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def integral(self, x, y):
        """int_x^y a(s) ds, vectorized over (x, y)."""
        raise NotImplementedError

    @property
    def sup(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticPotential(Potential):
    """a(x) = peak - slope * x^2; confining for slope > 0."""

    peak: float = 0.0
    slope: float = 1.0

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return self.peak - self.slope * x * x

    def integral(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.peak * (y - x) - self.slope * (y**3 - x**3) / 3.0

    @property
    def sup(self):
        return self.peak if self.slope >= 0 else np.inf


@dataclass(frozen=True)
class ConstantPotential(Potential):
    level: float = 0.0

    def values(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.level)

    def integral(self, x, y):
        return self.level * (np.asarray(y, dtype=float) - np.asarray(x, dtype=float))

    @property
    def sup(self):
        return self.level


class TabulatedPotential(Potential):
    """Potential given by (x, value) samples, linearly interpolated and
    clamped to the end values outside the table range."""

    def __init__(self, xs, values):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
            raise ValueError("need matching 1d arrays with >= 2 samples")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("x samples must be strictly increasing")
        self._xs = xs
        self._vals = values
        # fine cumulative integral for integral(x, y)
        n_fine = max(4 * xs.size, 2048)
        self._fine_x = np.linspace(xs[0], xs[-1], n_fine)
        fine_v = np.interp(self._fine_x, xs, values)
        dx = self._fine_x[1] - self._fine_x[0]
        cum = np.concatenate([[0.0], np.cumsum((fine_v[1:] + fine_v[:-1]) / 2 * dx)])
        self._cum = cum

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return np.interp(x, self._xs, self._vals)

    def _antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.interp(x, self._fine_x, self._cum)
        # clamp extrapolation with the boundary values of a
        lo, hi = self._fine_x[0], self._fine_x[-1]
        below = np.minimum(x - lo, 0.0) * self._vals[0]
        above = np.maximum(x - hi, 0.0) * self._vals[-1]
        return inside + below + above

    def integral(self, x, y):
        return self._antiderivative(y) - self._antiderivative(x)

    @property
    def sup(self):
        return float(np.max(self._vals))


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Interface: quadrature weight matrix on a grid plus the constants
    (kappa0, eps, q_bar) entering the hypotheses."""

    kappa0: float = 0.0
    eps: float = 0.0

    def weight_matrix(self, grid: Grid1D) -> sparse.csr_matrix:
        """K[i, j] ~ Q(x_i, cell_j) so that (K f)_i ~ int f dQ(x_i, .)."""
        raise NotImplementedError

    @property
    def q_bar(self) -> float:
        """sup_x Q(x, R)."""
        raise NotImplementedError

    @property
    def has_density_floor(self) -> bool:
        return self.kappa0 > 0 and self.eps > 0


def _banded_overlap_matrix(grid: Grid1D, half_width: float, density_of_offset) -> sparse.csr_matrix:
    """Assemble K[i, j] = density(x_j - x_i) * |cell_j ∩ (x_i - hw, x_i + hw)|.

    Cell boundaries are clipped exactly against the band, so the row mass is
    O(dx^2)-accurate away from the domain boundary.
    """
    n, dx = grid.n_cells, grid.dx
    centers = grid.centers
    reach = int(np.ceil(half_width / dx)) + 1
    offsets = np.arange(-reach, reach + 1)
    rows, cols, vals = [], [], []
    i = np.arange(n)
    for off in offsets:
        j = i + off
        ok = (j >= 0) & (j < n)
        ii, jj = i[ok], j[ok]
        z = centers[jj] - centers[ii]
        lo = np.maximum(z - dx / 2, -half_width)
        hi = np.minimum(z + dx / 2, half_width)
        length = np.maximum(hi - lo, 0.0)
        keep = length > 0
        if not np.any(keep):
            continue
        mid = (lo[keep] + hi[keep]) / 2
        rows.append(ii[keep])
        cols.append(jj[keep])
        vals.append(density_of_offset(mid) * length[keep])
    K = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return K


@dataclass(frozen=True)
class UniformBandKernel(Kernel):
    """Q(x, dy) = kappa0 * 1_{(x-eps, x+eps)}(y) dy."""

    kappa0: float = 1.0
    eps: float = 1.0

    def weight_matrix(self, grid):
        k = self.kappa0
        return _banded_overlap_matrix(grid, self.eps, lambda z: np.full_like(z, k))

    @property
    def q_bar(self):
        return 2.0 * self.kappa0 * self.eps


@dataclass(frozen=True)
class TruncatedGaussianKernel(Kernel):
    """Q(x, dy) = amplitude * exp(-(y-x)^2 / (2 width^2)) on |y-x| <= cutoff."""

    amplitude: float = 1.0
    width: float = 1.0
    cutoff: float = 2.0

    @property
    def kappa0(self):
        return self.amplitude * float(np.exp(-self.cutoff**2 / (2 * self.width**2)))

    @property
    def eps(self):
        return self.cutoff

    def weight_matrix(self, grid):
        amp, w = self.amplitude, self.width
        return _banded_overlap_matrix(
            grid, self.cutoff, lambda z: amp * np.exp(-z * z / (2 * w * w))
        )

    @property
    def q_bar(self):
        from scipy.special import erf

        return self.amplitude * self.width * float(
            np.sqrt(2 * np.pi) * erf(self.cutoff / (self.width * np.sqrt(2)))
        )


@dataclass(frozen=True)
class DiracPairKernel(Kernel):
    """Singular kernel Q(x, .) = delta_{x-1} + delta_{x+1}.

    Atoms are transferred exactly to the nearest cells; the grid spacing
    should divide the atom offset so that the periodic sublattice structure
    is preserved.
    """

    offset: float = 1.0

    kappa0 = 0.0
    eps = 0.0

    def weight_matrix(self, grid):
        n, dx = grid.n_cells, grid.dx
        shift = int(round(self.offset / dx))
        i = np.arange(n)
        rows, cols = [], []
        for s in (-shift, shift):
            j = i + s
            ok = (j >= 0) & (j < n)
            rows.append(i[ok])
            cols.append(j[ok])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        return sparse.csr_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(n, n)
        )

    def lattice_aligned(self, grid: Grid1D) -> bool:
        ratio = self.offset / grid.dx
        return abs(ratio - round(ratio)) < 1e-9

    @property
    def q_bar(self):
        return 2.0


class TabulatedConvolutionKernel(Kernel):
    """Convolution kernel Q(x, dy) = J(y - x) dy with tabulated profile J.

    kappa0/eps describe the banded lower bound and are a user obligation
    (not re-derived from the table).
    """

    def __init__(self, zs, values, kappa0=0.0, eps=0.0):
        zs = np.asarray(zs, dtype=float)
        values = np.asarray(values, dtype=float)
        if zs.shape != values.shape or zs.size < 2:
            raise ValueError("need matching 1d arrays with >= 2 samples")
        if np.any(values < 0):
            raise ValueError("kernel profile must be nonnegative")
        self._zs = zs
        self._vals = values
        self.kappa0 = float(kappa0)
        self.eps = float(eps)

    def weight_matrix(self, grid):
        zs, vals = self._zs, self._vals
        half_width = max(abs(zs[0]), abs(zs[-1]))
        return _banded_overlap_matrix(
            grid, half_width, lambda z: np.interp(z, zs, vals, left=0.0, right=0.0)
        )

    @property
    def q_bar(self):
        return float(np.trapz(self._vals, self._zs))


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ModelSpec:
    """Potential + kernel defining the equation; carries the hypothesis
    constants a_bar, q_bar, kappa0, eps."""

    potential: Potential
    kernel: Kernel

    @property
    def a_bar(self) -> float:
        return float(self.potential.sup)

    @property
    def q_bar(self) -> float:
        return float(self.kernel.q_bar)

    @property
    def kappa0(self) -> float:
        return float(self.kernel.kappa0)

    @property
    def eps(self) -> float:
        return float(self.kernel.eps)

    def is_confining(self, grid: Grid1D, threshold: float = -10.0) -> bool:
        """Check the confinement a -> -inf as far as the truncated grid can
        see it: a at both boundary cells below `threshold`."""
        a = self.potential.values(grid.centers)
        return bool(a[0] < threshold and a[-1] < threshold)

    def is_compliant(self, grid: Grid1D, threshold: float = -10.0) -> bool:
        """Confining potential with finite sup plus a banded kernel lower
        bound: the assumptions under which the ergodicity theorem applies."""
        return (
            np.isfinite(self.a_bar)
            and self.is_confining(grid, threshold)
            and self.kernel.has_density_floor
            and np.isfinite(self.q_bar)
        )
