"""Inductive crossing-law families (sigma^{t,n}_{x,y}, c^{t,n}_{x,y}).

Level 0 is pure transport (Dirac crossing time), level 1 adds one jump
through the kernel's uniform density floor, and the induction widens the
reach band by eps/2 per level.  The families feed the irreducibility (H1')
and overlap (H2') certification on the Lyapunov compact K.

All nested time integrals live on one shared uniform grid over [0, tau] so
that the convolution index t - s' stays on the grid; space integrals use a
uniform z grid with exact window clipping through an interpolated cumulative
trapezoid.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .grids import TimeMeasure, trapezoid_weights
from .models import ModelSpec
from .pde import PDESemigroup


class BandError(ValueError):
    """(x, y, t) outside the admissible reach band of the requested level."""


# ---------------------------------------------------------------------------
# pointwise constructions (levels 0 and 1)


def sigma_level0(model: ModelSpec, x: float, t: float,
                 y: float | None = None) -> tuple[TimeMeasure, float]:
    """Pure transport: sigma = delta_t and c = e^{int_x^{x+t} a}."""
    if y is None:
        y = x + t
    if abs(y - (x + t)) > 1e-12:
        raise BandError("level 0 requires y = x + t exactly")
    c = float(np.exp(model.potential.integral(x, y)))
    nodes = np.linspace(0.0, t, 2)
    return TimeMeasure.dirac_at(t, nodes, t), c


def _level1_profile(model: ModelSpec, x, y: float, t: float,
                    s_nodes: np.ndarray) -> np.ndarray:
    """Unnormalized crossing density g(s) = c * s(s) of the one-jump law,

        g(s) = kappa0 * int_0^s e^{int_x^{x+s'} a + int_{y+s'-s}^{y} a} ds',

    vectorized over an array of start points x; returns [len(x), len(s)]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n_s = s_nodes.size
    sp = s_nodes  # s' lives on the same grid
    # E1[ix, j] = e^{int_x^{x+s'_j} a}
    E1 = np.exp(model.potential.integral(x[:, None], x[:, None] + sp[None, :]))
    # F[i, j] = e^{int_{y + s'_j - s_i}^{y} a}, only j <= i used
    F = np.exp(model.potential.integral(y + sp[None, :] - s_nodes[:, None], y))
    g = np.zeros((x.size, n_s))
    for i in range(1, n_s):
        w = trapezoid_weights(sp[: i + 1])
        g[:, i] = model.kappa0 * (E1[:, : i + 1] * (w * F[i, : i + 1])) @ np.ones(i + 1)
    return g


def sigma_level1(model: ModelSpec, x: float, y: float, t: float,
                 n_time: int = 256) -> tuple[TimeMeasure, float]:
    """One jump through the kernel floor; requires |y - (x + t)| <= eps/2
    and t < eps/2."""
    if model.kappa0 <= 0 or model.eps <= 0:
        raise BandError("kernel has no uniform density floor (kappa0 = 0)")
    if abs(y - (x + t)) > model.eps / 2 + 1e-12:
        raise BandError("y outside the level-1 reach band [x+t-eps/2, x+t+eps/2]")
    if not 0 < t < model.eps / 2 + 1e-12:
        raise BandError("level construction requires 0 < t < eps/2")
    s_nodes = np.linspace(0.0, t, n_time)
    g = _level1_profile(model, x, y, t, s_nodes)[0]
    c = float(np.dot(trapezoid_weights(s_nodes), g))
    if c <= 0:
        raise BandError("degenerate level-1 law (zero mass)")
    return TimeMeasure.from_density(t, s_nodes, g / c), c


# ---------------------------------------------------------------------------
# grid families


@dataclass
class SigmaFamily:
    """Crossing laws for every (x on z_grid, t on s_nodes) against a fixed
    set of target points y.

    profiles[y][iz, it, is] holds the unnormalized density
    c^{t,n}_{z,y} * s^{t,n}_{z,y}(s) at z = z_grid[iz], t = s_nodes[it],
    s = s_nodes[is]; it vanishes off the reach band and for is > it."""

    model: ModelSpec
    level: int
    tau: float
    z_grid: np.ndarray
    s_nodes: np.ndarray
    y_values: np.ndarray
    profiles: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)

    @property
    def reach_radius(self) -> float:
        return self.level * self.model.eps / 2.0

    def _iz(self, x: float) -> int:
        dz = self.z_grid[1] - self.z_grid[0]
        i = int(round((x - self.z_grid[0]) / dz))
        if not 0 <= i < self.z_grid.size or abs(self.z_grid[i] - x) > dz / 2 + 1e-12:
            raise BandError(f"x = {x} off the family's z grid")
        return i

    def _iy(self, y: float) -> int:
        j = int(np.argmin(np.abs(self.y_values - y)))
        if abs(self.y_values[j] - y) > 1e-9:
            raise BandError(f"y = {y} is not a family target")
        return j

    def in_band(self, x: float, y: float, t: float) -> bool:
        return abs(y - (x + t)) <= self.reach_radius + 1e-12

    def c_of(self, x: float, y: float, t: float | None = None) -> float:
        t = self.tau if t is None else t
        it = int(np.argmin(np.abs(self.s_nodes - t)))
        g = self.profiles[self._iy(y)][self._iz(x), it]
        return float(np.dot(trapezoid_weights(self.s_nodes[: it + 1]), g[: it + 1]))

    def law(self, x: float, y: float, t: float | None = None) -> tuple[TimeMeasure, float]:
        t = self.tau if t is None else t
        if not self.in_band(x, y, t):
            raise BandError("(x, y, t) outside the reach band")
        it = int(np.argmin(np.abs(self.s_nodes - t)))
        g = self.profiles[self._iy(y)][self._iz(x), it, : it + 1]
        c = float(np.dot(trapezoid_weights(self.s_nodes[: it + 1]), g))
        if c <= 0:
            raise BandError("zero-mass law: (x, y, t) effectively unreachable")
        return TimeMeasure.from_density(float(self.s_nodes[it]),
                                        self.s_nodes[: it + 1], g / c), c


def build_family_level1(model: ModelSpec, tau: float, z_grid: np.ndarray,
                        y_values: np.ndarray, n_time: int = 26) -> SigmaFamily:
    if model.kappa0 <= 0 or model.eps <= 0:
        raise BandError("kernel has no uniform density floor (kappa0 = 0)")
    if tau >= model.eps / 2:
        raise BandError("level construction requires tau < eps/2; compose "
                        "certificates through the semigroup for larger tau")
    s_nodes = np.linspace(0.0, tau, n_time)
    fam = SigmaFamily(model=model, level=1, tau=tau, z_grid=z_grid,
                      s_nodes=s_nodes, y_values=np.asarray(y_values, dtype=float))
    half = model.eps / 2.0
    for j, y in enumerate(fam.y_values):
        H = _level1_profile(model, z_grid, y, tau, s_nodes)    # [n_z, n_s]
        G = np.zeros((z_grid.size, n_time, n_time))
        for it in range(n_time):
            band = np.abs(y - (z_grid + s_nodes[it])) <= half + 1e-12
            G[band, it, : it + 1] = H[band, : it + 1]
        fam.profiles[j] = G
    return fam


def sigma_induct(fam: SigmaFamily) -> SigmaFamily:
    """One induction step n -> n+1:

        g_{n+1}(x, y, t, s) = kappa0 int_0^s e^{int_x^{x+s'} a}
            int_{W(x,y,t,s')} g_n(z, y, t-s', s-s') dz ds'

    with W = [max(x+s'-eps, y-t+s'-n eps/2), min(x+s'+eps, y-t+s'+n eps/2)].
    The z integral uses an interpolated cumulative trapezoid for exact window
    clipping; the shared time grid keeps t-s' and s-s' on-grid."""
    model, z, s_nodes = fam.model, fam.z_grid, fam.s_nodes
    n_z, n_s = z.size, s_nodes.size
    dz = z[1] - z[0]
    eps, n = model.eps, fam.level
    out = SigmaFamily(model=model, level=n + 1, tau=fam.tau, z_grid=z,
                      s_nodes=s_nodes, y_values=fam.y_values,
                      excluded=list(fam.excluded))
    half_new = (n + 1) * eps / 2.0
    E1 = np.exp(model.potential.integral(z[:, None], z[:, None] + s_nodes[None, :]))

    ds = s_nodes[1] - s_nodes[0]

    def interp_cols(q, C):
        # linear interpolation along z of every column of C at points q,
        # assuming q already clipped to [z[0], z[-1]]
        idx = np.clip(np.searchsorted(z, q), 1, n_z - 1)
        frac = (q - z[idx - 1]) / dz
        return C[idx - 1, :] + frac[:, None] * (C[idx, :] - C[idx - 1, :])

    for j, y in enumerate(fam.y_values):
        Gn = fam.profiles[j]
        # cumulative trapezoid along z for every (t, s) slice
        mid = 0.5 * (Gn[1:] + Gn[:-1]) * dz
        CS = np.concatenate([np.zeros((1, n_s, n_s)), np.cumsum(mid, axis=0)])
        G = np.zeros((n_z, n_s, n_s))
        for it in range(1, n_s):
            t = s_nodes[it]
            band = np.abs(y - (z + t)) <= half_new + 1e-12
            if not np.any(band):
                continue
            zb = z[band]
            # acc[:, i_s] accumulates the s'-quadrature; the window W depends
            # only on (it, jp), so each jp handles all i_s >= jp at once
            acc = np.zeros((zb.size, it + 1))
            for jp in range(it + 1):            # s' index; t-s', s-s' on-grid
                sp = s_nodes[jp]
                lo = np.maximum(zb + sp - eps, y - t + sp - n * eps / 2)
                hi = np.minimum(zb + sp + eps, y - t + sp + n * eps / 2)
                valid = hi > lo
                if not np.any(valid):
                    continue
                lo = np.clip(lo, z[0], z[-1])
                hi = np.clip(hi, z[0], z[-1])
                i0 = max(jp, 1)                 # i_s range [i0, it]
                C = CS[:, it - jp, i0 - jp:it - jp + 1]
                inner = interp_cols(hi, C) - interp_cols(lo, C)
                inner[~valid, :] = 0.0
                # trapezoid over s' in [0, s]: endpoint weight ds/2 at
                # jp = 0 and jp = i_s, interior weight ds
                wq = np.full(it - i0 + 1, ds if jp > 0 else ds / 2.0)
                if jp >= 1:
                    wq[0] = ds / 2.0            # column i0 = jp endpoint
                acc[:, i0:] += (wq[None, :] * inner) * E1[band, jp][:, None]
            G[np.ix_(band, [it], range(1, it + 1))] = (
                model.kappa0 * acc[:, None, 1:])
        if not np.any(G > 0):
            out.excluded.append({"y": float(y), "level": n + 1,
                                 "reason": "empty z-integration interval"})
        out.profiles[j] = G
    return out


def build_family(model: ModelSpec, tau: float, z_grid: np.ndarray,
                 y_values: np.ndarray, level: int,
                 n_time: int = 26) -> SigmaFamily:
    fam = build_family_level1(model, tau, z_grid, y_values, n_time)
    for _ in range(level - 1):
        fam = sigma_induct(fam)
    return fam


# ---------------------------------------------------------------------------
# verification


def random_nonneg_piecewise_linear(grid, rng, n_knots: int = 8) -> np.ndarray:
    knots_x = np.sort(rng.uniform(grid.lower, grid.upper, n_knots))
    knots_v = rng.uniform(0.0, 1.0, n_knots)
    return np.interp(grid.centers, knots_x, knots_v)


@dataclass
class Inequality5Report:
    trials: int
    min_ratio: float
    passed: bool
    relaxation: float
    witness: dict | None

    def to_dict(self):
        return {"condition": "crossing_inequality", "pass": self.passed,
                "trials": self.trials, "min_ratio": self.min_ratio,
                "relaxation": self.relaxation, "witness": self.witness}


def verify_inequality_5(fam: SigmaFamily, S: PDESemigroup, trials: int,
                        seed: int = 0,
                        relaxation: float | None = None) -> Inequality5Report:
    """Random-trial check of M_t f(x) >= c int_0^t M_{t-s} f(y) sigma(ds)
    with seeded nonnegative piecewise-linear f."""
    rng = np.random.default_rng(seed)
    grid = S.grid
    if relaxation is None:
        relaxation = 1e-3 + S.dt * fam.tau
    min_ratio, witness = np.inf, None
    done = 0
    attempts = 0
    while done < trials and attempts < 50 * trials:
        attempts += 1
        y = float(rng.choice(fam.y_values))
        it = int(rng.integers(1, fam.s_nodes.size))
        t = float(fam.s_nodes[it])
        x = float(rng.uniform(max(grid.lower, y - t - fam.reach_radius),
                              min(grid.upper, y - t + fam.reach_radius)))
        # snap to the family's z grid so LHS and law share the same x
        x = float(fam.z_grid[np.argmin(np.abs(fam.z_grid - x))])
        try:
            law, c = fam.law(x, y, t)
        except BandError:
            continue
        f = random_nonneg_piecewise_linear(grid, rng)
        snaps = S.dual_snapshots(f, t - law.nodes)   # rows follow law.nodes
        iy = grid.index_of(y)
        rhs = c * float(np.dot(law.weights, snaps[:, iy]))
        lhs = float(snaps[0, grid.index_of(x)])      # t - s at s = 0 is t
        done += 1
        if rhs <= 0:
            continue
        ratio = lhs / rhs
        if ratio < min_ratio:
            min_ratio = ratio
            witness = {"x": x, "y": y, "t": t, "ratio": ratio, "c": c}
    passed = done == trials and min_ratio >= 1.0 - relaxation
    return Inequality5Report(trials=done, min_ratio=float(min_ratio),
                             passed=bool(passed), relaxation=relaxation,
                             witness=witness)


@dataclass
class H1PrimeReport:
    level: int
    c: float
    epsilon_overlap: float
    ratio_bound: float
    passed: bool
    x_sample: np.ndarray
    y_sample: np.ndarray
    time_nodes: np.ndarray
    time_weights: np.ndarray
    dirac_snapshots: dict
    densities: dict
    continuity_kappa: float
    details: dict = field(default_factory=dict)

    def density_at(self, x_cell: int) -> np.ndarray:
        return self.densities[int(x_cell)]

    def to_dict(self):
        return {"condition": "irreducibility_and_overlap", "pass": self.passed,
                "level": self.level, "c": self.c,
                "epsilon_overlap": self.epsilon_overlap,
                "ratio_bound": self.ratio_bound,
                "continuity_kappa": self.continuity_kappa,
                "details": self.details}


def required_level(construction, eps: float) -> int:
    K = construction.K_indices
    grid = construction.grid
    width = (K[-1] - K[0]) * grid.dx
    return int(math.ceil(2.0 * (width + construction.tau) / eps))


def verify_h1prime_h2prime(S: PDESemigroup, construction,
                           n_time: int = 26, x_stride: int = 4,
                           y_stride: int = 32, z_stride: int = 4,
                           level_cap: int = 16,
                           fam: SigmaFamily | None = None) -> H1PrimeReport:
    """Certify the weighted crossing condition and the overlap condition on
    the Lyapunov compact K.

    Picks the minimal level n with K inside every reach band for x in K,
    sets sigma_{x,y} = sigma^{tau,n}_{x,y} and
    c = min_{K x K} c * inf_K psi / sup_K psi, then evaluates
    m_{x,x',y} = int (M_{tau-s}(psi 1_K)(y)/psi(y)) (sigma_{x,y} ^ sigma_{x',y})(ds)
    and epsilon_overlap = min over (x, x') of max over y of m."""
    model, grid, tau = S.model, construction.grid, construction.tau
    psi, K = construction.psi, construction.K_indices
    n = required_level(construction, model.eps)
    if n > level_cap:
        raise BandError(f"K too large for horizon tau: need level {n} > cap "
                        f"{level_cap}")

    x_cells = K[::x_stride]
    y_cells = K[:: max(1, y_stride)]
    if y_cells[-1] != K[-1]:
        y_cells = np.append(y_cells, K[-1])
    if fam is None:
        fam = build_family(model, tau, grid.centers[::z_stride],
                           grid.centers[y_cells], n, n_time)
    s_nodes = fam.s_nodes
    w_s = trapezoid_weights(s_nodes)

    # c over a K x K sample, with the psi comparability safety factor
    c_vals = np.array([[fam.c_of(grid.centers[ix], grid.centers[iy])
                        for iy in y_cells] for ix in x_cells])
    psi_ratio = float(np.min(psi[K]) / np.max(psi[K]))
    c = float(np.min(c_vals)) * psi_ratio

    # continuity probe on c along x
    kappa = 0.0
    for k, iy in enumerate(y_cells):
        col = c_vals[:, k]
        pos = col > 0
        if np.count_nonzero(pos) > 1:
            rel = np.abs(np.diff(col[pos])) / col[pos][:-1]
            dx_steps = np.diff(x_cells[pos]) * grid.dx
            kappa = max(kappa, float(np.max(rel / dx_steps)))

    # Dirac rows delta_y M_{tau - s_j} for every sampled y (direct evolution)
    snaps = {}
    times = tau - s_nodes
    for iy in y_cells:
        mu = np.zeros(grid.n_cells)
        mu[iy] = 1.0
        snaps[int(iy)] = S.direct_snapshots(mu, times)

    psi_K = np.zeros(grid.n_cells)
    psi_K[K] = psi[K]

    # normalized crossing densities for every sampled x
    densities = {}
    for ix in x_cells:
        dens = np.zeros((y_cells.size, s_nodes.size))
        for k, iy in enumerate(y_cells):
            try:
                law, _ = fam.law(grid.centers[ix], grid.centers[iy])
                dens[k] = law.density
            except BandError:
                pass
        densities[int(ix)] = dens

    # M_{tau-s_j}(psi 1_K)(y) / psi(y) for each sampled y
    m_profile = {int(iy): (snaps[int(iy)] @ psi_K) / psi[iy] for iy in y_cells}

    eps_overlap = np.inf
    worst_pair = None
    for a_i, ix in enumerate(x_cells):
        for ixp in x_cells[a_i:]:
            overlap = np.minimum(densities[int(ix)], densities[int(ixp)])
            best = 0.0
            for k, iy in enumerate(y_cells):
                m = float(np.dot(w_s * overlap[k], m_profile[int(iy)]))
                best = max(best, m)
            if best < eps_overlap:
                eps_overlap = best
                worst_pair = (int(ix), int(ixp))

    # M_tau psi <= C psi on K
    Mpsi = S.evolve_vec(psi, tau, direct=False)
    ratio_bound = float(np.max(Mpsi[K] / psi[K]))

    passed = c > 0 and eps_overlap > 0
    return H1PrimeReport(level=n, c=c, epsilon_overlap=float(eps_overlap),
                         ratio_bound=ratio_bound, passed=bool(passed),
                         x_sample=x_cells, y_sample=y_cells,
                         time_nodes=s_nodes, time_weights=w_s,
                         dirac_snapshots=snaps, densities=densities,
                         continuity_kappa=kappa,
                         details={"worst_pair": worst_pair,
                                  "K_width": float((K[-1] - K[0]) * grid.dx),
                                  "psi_ratio": psi_ratio,
                                  "min_c_raw": float(np.min(c_vals))})


# ---------------------------------------------------------------------------
# persistence: JSON header + CSV density blocks


def save_family(fam: SigmaFamily, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    header = {
        "level": fam.level, "tau": fam.tau,
        "z_grid": [float(fam.z_grid[0]), float(fam.z_grid[-1]), int(fam.z_grid.size)],
        "s_nodes": [0.0, fam.tau, int(fam.s_nodes.size)],
        "y_values": [float(v) for v in fam.y_values],
        "excluded": fam.excluded,
    }
    with open(os.path.join(directory, "family.json"), "w") as fh:
        json.dump(header, fh, indent=2)
    n_s = fam.s_nodes.size
    for j in range(fam.y_values.size):
        path = os.path.join(directory, f"density_{j}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"t{it}_s{i}" for it in range(n_s) for i in range(n_s)])
            for row in fam.profiles[j].reshape(fam.z_grid.size, n_s * n_s):
                writer.writerow([f"{v:.12g}" for v in row])


def load_family(model: ModelSpec, directory: str) -> SigmaFamily:
    with open(os.path.join(directory, "family.json")) as fh:
        header = json.load(fh)
    z0, z1, n_z = header["z_grid"]
    s0, s1, n_s = header["s_nodes"]
    fam = SigmaFamily(model=model, level=int(header["level"]),
                      tau=float(header["tau"]),
                      z_grid=np.linspace(z0, z1, int(n_z)),
                      s_nodes=np.linspace(s0, s1, int(n_s)),
                      y_values=np.asarray(header["y_values"], dtype=float),
                      excluded=header.get("excluded", []))
    for j in range(fam.y_values.size):
        data = np.loadtxt(os.path.join(directory, f"density_{j}.csv"),
                          delimiter=",", skiprows=1, ndmin=2)
        fam.profiles[j] = data.reshape(int(n_z), int(n_s), int(n_s))
    return fam
