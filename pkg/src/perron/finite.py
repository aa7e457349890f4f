"""Exact ground truth on finite state spaces.

Matrix semigroups e^{tG}, phase-type first-hitting laws used as the crossing
measures sigma_{x,y}, and exact verification of the path-crossing (H1) and
overlap (H2) conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .grids import TimeMeasure, trapezoid_weights, tv_distance_time_measures


@dataclass(frozen=True)
class FiniteGenerator:
    """CTMC generator plus a diagonal potential.

    `off_diag` holds the nonnegative jump rates q(i -> j) with zero diagonal;
    the full generator is off_diag - diag(row sums) + diag(diag_extra).
    """

    off_diag: np.ndarray
    diag_extra: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.off_diag, dtype=float)
        object.__setattr__(self, "off_diag", q)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("off_diag must be square")
        if np.any(q < 0):
            raise ValueError("off-diagonal rates must be nonnegative")
        if np.any(np.abs(np.diag(q)) > 0):
            raise ValueError("off_diag must have zero diagonal")
        extra = self.diag_extra
        extra = np.zeros(q.shape[0]) if extra is None else np.asarray(extra, dtype=float)
        object.__setattr__(self, "diag_extra", extra)
        if extra.shape != (q.shape[0],):
            raise ValueError("diag_extra length mismatch")

    @property
    def n_states(self) -> int:
        return self.off_diag.shape[0]

    @property
    def is_conservative(self) -> bool:
        return bool(np.all(self.diag_extra == 0))

    def matrix(self) -> np.ndarray:
        q = self.off_diag
        return q - np.diag(q.sum(axis=1)) + np.diag(self.diag_extra)


@dataclass(frozen=True)
class TransitionMatrix:
    """Entrywise-nonnegative matrix M_t = e^{tG}."""

    entries: np.ndarray
    t: float

    @property
    def n_states(self) -> int:
        return self.entries.shape[0]


def matrix_exponential(gen: FiniteGenerator, t: float) -> TransitionMatrix:
    """M_t = e^{tG} via scaling-and-squaring (scipy's Pade expm)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    M = expm(t * gen.matrix())
    # clip the tiny negative round-off so positivity is exact
    M[M < 0] = np.where(M[M < 0] > -1e-12, 0.0, M[M < 0])
    return TransitionMatrix(M, t)


def uniformization(gen: FiniteGenerator, t: float, tol: float = 1e-14) -> np.ndarray:
    """Independent cross-check of e^{tG} for conservative generators via the
    uniformized jump chain (a positive-term series, no cancellation)."""
    if not gen.is_conservative:
        raise ValueError("uniformization requires a conservative generator")
    G = gen.matrix()
    lam = float(np.max(-np.diag(G)))
    n = gen.n_states
    if lam == 0.0 or t == 0.0:
        return np.eye(n)
    P = np.eye(n) + G / lam
    out = np.zeros((n, n))
    term = np.eye(n)
    weight = np.exp(-lam * t)
    k = 0
    acc = 0.0
    while acc < 1.0 - tol and k < 100000:
        out += weight * term
        acc += weight
        k += 1
        term = term @ P
        weight *= lam * t / k
    return out


@dataclass(frozen=True)
class HittingLaw:
    """Law of the first hitting time of `target` from `source` (first return
    when source == target), conditioned on {0 < T <= horizon}."""

    source: int
    target: int
    horizon: float
    law: TimeMeasure | None
    success_probability: float

    @property
    def reachable(self) -> bool:
        return self.law is not None


@dataclass(frozen=True)
class HypothesisConstants:
    tau: float
    c: float
    global_bound: float
    h2_margin: float = float("nan")

    @property
    def h1_pass(self) -> bool:
        return self.c > 0

    @property
    def h2_pass(self) -> bool:
        return self.h2_margin > 1e-6


def _phase_type_densities(gen: FiniteGenerator, y: int, tau: float,
                          n_time: int) -> tuple[np.ndarray, np.ndarray]:
    """Densities of the first hitting time of y, for every source state, on a
    uniform time grid over [0, tau].

    Sources x != y use the sub-generator on states != y; the first-return law
    for x == y uses an augmented copy of y as a transient start state.
    Returns (nodes, D) with D[x, j] = density of T(x, y) at nodes[j].
    """
    G = gen.matrix()
    n = gen.n_states
    others = [i for i in range(n) if i != y]
    m = len(others)
    # transient states: others + [y_start]; absorption rates into y
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = G[np.ix_(others, others)]
    A[m, :m] = G[y, others]
    A[m, m] = G[y, y]
    b = np.zeros(m + 1)
    b[:m] = G[others, y]

    nodes = np.linspace(0.0, tau, n_time)
    dt = nodes[1] - nodes[0]
    E = expm(dt * A)
    D = np.empty((n, n_time))
    v = b.copy()
    row_of = {s: k for k, s in enumerate(others)}
    for j in range(n_time):
        if j > 0:
            v = E @ v
        for x in range(n):
            D[x, j] = v[row_of[x]] if x != y else v[m]
    D[D < 0] = 0.0
    return nodes, D


def hitting_law(gen: FiniteGenerator, x: int, y: int, tau: float,
                n_time: int = 256) -> HittingLaw:
    """Phase-type law of the first hitting (or return) time, truncated to
    (0, tau] and renormalized; the truncation mass p is reported."""
    if not gen.is_conservative:
        raise ValueError("hitting laws are defined for conservative chains")
    if n_time < 2:
        raise ValueError("n_time >= 2 required")
    nodes, D = _phase_type_densities(gen, y, tau, n_time)
    return _law_from_density(x, y, tau, nodes, D[x])


def _law_from_density(x: int, y: int, tau: float, nodes: np.ndarray,
                      density: np.ndarray) -> HittingLaw:
    p = float(np.dot(trapezoid_weights(nodes), density))
    if p <= 0:
        return HittingLaw(x, y, tau, None, 0.0)
    return HittingLaw(x, y, tau, TimeMeasure.from_density(tau, nodes, density), p)


@dataclass
class H1Report:
    verdict: bool
    constants: HypothesisConstants
    laws: dict[tuple[int, int], HittingLaw]
    worst_margin: float
    failures: list[tuple[int, int]] = field(default_factory=list)


def verify_h1(gen: FiniteGenerator, tau: float, n_time: int = 256,
              safety: float = 0.99) -> H1Report:
    """Construct sigma_{x,y} as hitting laws and certify entrywise

        (M_tau)_{x,z} >= c * sum_j w_j (M_{tau-s_j})_{y,z} - tol

    with c = safety * min_{x,y} P(0 < T(x,y) <= tau).  The tolerance is 1e-9
    plus a per-entry quadrature error estimate (full vs half time grid).
    """
    if not gen.is_conservative:
        raise ValueError("H1 verification operates on conservative chains")
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = gen.n_states
    C = _global_bound(gen, tau)
    if n == 1:
        constants = HypothesisConstants(tau=tau, c=1.0, global_bound=C)
        return H1Report(True, constants, {}, worst_margin=float("inf"))

    nodes = np.linspace(0.0, tau, n_time)
    laws: dict[tuple[int, int], HittingLaw] = {}
    W = np.zeros((n, n, n_time))
    failures = []
    for y in range(n):
        _, D = _phase_type_densities(gen, y, tau, n_time)
        for x in range(n):
            law = _law_from_density(x, y, tau, nodes, D[x])
            laws[(x, y)] = law
            if law.reachable:
                W[x, y] = law.law.weights
            else:
                failures.append((x, y))
    if failures:
        constants = HypothesisConstants(tau=tau, c=0.0, global_bound=C)
        return H1Report(False, constants, laws, worst_margin=-np.inf,
                        failures=failures)

    c = safety * min(law.success_probability for law in laws.values())

    # M_{tau - s_j} on the time grid, built forward so no inversion is needed:
    # T[j] = e^{(n_time-1-j) dt G}
    G = gen.matrix()
    dt = nodes[1] - nodes[0]
    E = expm(dt * G)
    T = np.empty((n_time, n, n))
    acc = np.eye(n)
    for j in range(n_time - 1, -1, -1):
        T[j] = acc
        if j > 0:
            acc = acc @ E

    rhs = np.einsum("xyj,jyz->xyz", W, T)
    # quadrature error estimate: compare with the half grid
    W2 = W[:, :, ::2]
    W2 = W2 / W2.sum(axis=2, keepdims=True)
    rhs2 = np.einsum("xyj,jyz->xyz", W2, T[::2])
    budget = np.abs(rhs - rhs2)

    lhs = expm(tau * G)[:, None, :]  # broadcast over y
    margin = lhs - c * rhs + (1e-9 + budget)
    worst = float(np.min(margin))
    verdict = worst >= 0
    constants = HypothesisConstants(tau=tau, c=float(c), global_bound=C)
    return H1Report(verdict, constants, laws, worst_margin=worst)


def _global_bound(gen: FiniteGenerator, tau: float, n_sample: int = 8) -> float:
    """C >= max(sup M_s 1, 1/inf M_s 1) over s in [0, tau]."""
    ones = np.ones(gen.n_states)
    C = 1.0
    for s in np.linspace(0.0, tau, n_sample):
        v = matrix_exponential(gen, s).entries @ ones
        C = max(C, float(np.max(v)), float(1.0 / np.min(v)))
    return C


def verify_h2(laws: dict[tuple[int, int], HittingLaw]) -> float:
    """h2_margin = 2 - sup_{x,x'} inf_y TV(sigma_{x,y}, sigma_{x',y})."""
    if not laws:
        return 2.0
    states = sorted({x for x, _ in laws})
    targets = sorted({y for _, y in laws})
    all_clean = all(
        law.reachable and law.law.atom is None for law in laws.values())
    if all_clean:
        ref = laws[(states[0], targets[0])].law
        all_clean = all(law.law.nodes.shape == ref.nodes.shape
                        and np.allclose(law.law.nodes, ref.nodes)
                        for law in laws.values())
    if all_clean:
        # shared time grid, densities only: TV reduces to a weight-difference
        # sum, so the (x, x') x y scan vectorizes per target
        W = np.stack([
            np.stack([laws[(x, y)].law.weights for y in targets])
            for x in states])  # [x, y, j]
        best = np.full((len(states), len(states)), np.inf)
        for iy in range(len(targets)):
            tv = np.abs(W[:, None, iy, :] - W[None, :, iy, :]).sum(axis=2)
            best = np.minimum(best, tv)
        iu = np.triu_indices(len(states), k=1)
        worst = float(best[iu].max()) if iu[0].size else 0.0
        return 2.0 - worst
    worst = 0.0
    for x in states:
        for xp in states:
            if xp <= x:
                continue
            best = np.inf
            for y in targets:
                l1, l2 = laws[(x, y)], laws[(xp, y)]
                if not (l1.reachable and l2.reachable):
                    continue
                best = min(best, tv_distance_time_measures(l1.law, l2.law))
            if np.isfinite(best):
                worst = max(worst, best)
            else:
                worst = 2.0
    return 2.0 - worst


def cycle_generator(n: int, rate: float | None = None) -> FiniteGenerator:
    """Deterministic-rotation approximation: each state jumps to its
    successor at rate n (unit cycle time) unless a rate is given."""
    rate = float(n) if rate is None else rate
    q = np.zeros((n, n))
    for i in range(n):
        q[i, (i + 1) % n] = rate
    return FiniteGenerator(q)


def perron_triplet_finite(gen: FiniteGenerator, tau: float, tol: float = 1e-12,
                          max_iter: int = 100000):
    """Power iteration on M_tau and its transpose; see
    `perron.ergodicity.power_triplet` for the iteration itself."""
    from .ergodicity import MatrixSemigroupOracle, power_triplet

    oracle = MatrixSemigroupOracle(matrix_exponential(gen, tau).entries, tau)
    return power_triplet(oracle, tol=tol, max_iter=max_iter)
