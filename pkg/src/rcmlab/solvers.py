"""Tolerance-controlled evolution of the conductance heat equation.

The semigroup is evaluated by uniformization: with Lambda the largest total
vertex conductance, I + L/Lambda is entrywise nonnegative and substochastic
(absorbing at the box boundary ring), and the exponential is the Poisson-
weighted power series, truncated at a rigorously bounded tail.  Nonnegativity
and probabilistic normalization are preserved by construction; mass captured
by the ring is reported as leak.  Boundary-value problems add the forcing by
Duhamel quadrature, exact for data piecewise linear on the stored grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu
from scipy.special import gammainc, gammaln

from ._accel import apply_l, apply_p, apply_p_acc, grid_meta
from .calculus import SpaceTimeField, VertexField
from .environment import ConductanceField
from .errors import DomainError, SolverError, TruncationError
from .lattice import LatticeBox


@dataclass(frozen=True)
class SolverConfig:
    series_tol: float = 1e-10
    radius: int | None = None
    max_mass_leak: float = 1e-12
    time_resolution: float = 1.0

    def __post_init__(self):
        if not 0 < self.series_tol < 1 or not 0 < self.max_mass_leak < 1:
            raise DomainError("tolerances must lie in (0, 1)")


@dataclass
class HeatKernelColumn:
    source: tuple
    t: float
    field: VertexField
    leak: float
    series_tol: float

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def total_mass(self) -> float:
        return float(np.sum(self.field.values))


class BoxOperator:
    """Grid-structured generator of the walk on a box, absorbing at the ring."""

    def __init__(self, omega: ConductanceField):
        self.omega = omega
        self.box = omega.box
        if self.box.radius < 1:
            raise DomainError("need a box of radius at least 1")
        self.w = omega.grid_w()
        self.mu = omega.mu()
        self.meta = grid_meta(self.box.shape)
        interior = self.box.interior_mask()
        self.interior = interior
        self.ring = np.nonzero(~interior)[0]
        self.lam = float(np.max(self.mu[interior]))
        self._buf = np.empty(len(self.box), dtype=np.float64)

    def apply_p(self, u: np.ndarray, out: np.ndarray) -> np.ndarray:
        return apply_p(u, out, self.w, self.mu, 1.0 / self.lam, self.meta)

    def apply_p_acc(self, u, out, y, wk) -> np.ndarray:
        return apply_p_acc(u, out, y, wk, self.w, self.mu, 1.0 / self.lam, self.meta)

    def apply_l(self, u: np.ndarray, out: np.ndarray) -> np.ndarray:
        return apply_l(u, out, self.w, self.mu, self.meta)

    def generator(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        self.apply_l(u, out)
        return out.copy()

    def forcing(self, ring_values: np.ndarray) -> np.ndarray:
        """Interior source produced by boundary data on the ring."""
        v = np.zeros(len(self.box), dtype=np.float64)
        v[self.ring] = ring_values
        out = np.empty_like(v)
        self.apply_l(v, out)
        # only the coupling to the ring: remove the (zero) diagonal part
        return out


def poisson_tail_cut(mean: float, tol: float) -> int:
    """Smallest K with P(Poisson(mean) > K) <= tol."""
    if mean <= 0:
        return 0
    hi = int(mean + 12.0 * math.sqrt(mean + 1.0) + 40.0)
    while gammainc(hi + 1, mean) > tol:
        hi = int(hi * 1.5) + 10
    lo = int(mean)
    while lo < hi:
        mid = (lo + hi) // 2
        if gammainc(mid + 1, mean) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


def poisson_pmf(mean: float, K: int) -> np.ndarray:
    ks = np.arange(K + 1, dtype=np.float64)
    if mean == 0.0:
        w = np.zeros(K + 1)
        w[0] = 1.0
        return w
    return np.exp(-mean + ks * np.log(mean) - gammaln(ks + 1.0))


def _series_apply(op: BoxOperator, vectors, weight_rows, K: int) -> list[np.ndarray]:
    """Accumulate sum_k weights[k] P^k v for several (v, weights) pairs.

    Weights below 1e-18 are skipped in the accumulation (their combined
    contribution is far below the series tolerance); the power iteration
    itself always advances.
    """
    outs = []
    for v, weights in zip(vectors, weight_rows):
        y = np.zeros_like(v)
        cur = v.copy()
        nxt = np.empty_like(v)
        if weights[0] > 1e-18:
            y += weights[0] * cur
        for k in range(1, K + 1):
            wk = weights[k]
            if wk > 1e-18:
                op.apply_p_acc(cur, nxt, y, wk)
            else:
                op.apply_p(cur, nxt)
            cur, nxt = nxt, cur
        outs.append(y)
    return outs


def evolve(omega: ConductanceField, u0: VertexField, t: float,
           cfg: SolverConfig = SolverConfig(), *, op: BoxOperator | None = None,
           check_leak: bool = True) -> VertexField:
    """Heat semigroup applied to u0 on the box, absorbing outside.

    u0 must vanish on the boundary ring.  For nonnegative data the lost mass
    is compared against the configured leak budget.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    op = op or BoxOperator(omega)
    vals = np.asarray(u0.values, dtype=np.float64)
    if np.any(vals[op.ring] != 0.0):
        raise DomainError("initial data must be supported inside the box")
    if t == 0:
        return VertexField(omega.box, vals.copy())
    mean = op.lam * t
    K = poisson_tail_cut(mean, cfg.series_tol)
    weights = poisson_pmf(mean, K)
    # normalize so a conservative operator preserves mass exactly; the
    # truncated-tail redistribution stays within the series tolerance
    weights = weights / float(np.sum(weights))
    (out,) = _series_apply(op, [vals], [weights], K)
    if check_leak and np.all(vals >= 0):
        mass0 = float(np.sum(vals))
        if mass0 > 0:
            leak = (mass0 - float(np.sum(out))) / mass0
            # allowance for float accumulation over K matvecs
            if leak > cfg.max_mass_leak + 64.0 * np.finfo(float).eps * (K + 1):
                raise TruncationError(
                    f"boundary leak {leak:.3e} exceeds budget {cfg.max_mass_leak:.3e}; "
                    "enlarge the ambient box")
    return VertexField(omega.box, out)


def heat_kernel(omega: ConductanceField, x, t: float,
                cfg: SolverConfig = SolverConfig(), *,
                op: BoxOperator | None = None) -> HeatKernelColumn:
    """Transition probabilities from x at time t (one kernel column)."""
    op = op or BoxOperator(omega)
    box = omega.box
    idx = box.index_of(x)
    if not op.interior[idx]:
        raise DomainError("source must be interior to the box")
    delta = np.zeros(len(box), dtype=np.float64)
    delta[idx] = 1.0
    out = evolve(omega, VertexField(box, delta), t, cfg, op=op)
    leak = max(0.0, 1.0 - float(np.sum(out.values)))
    return HeatKernelColumn(tuple(int(v) for v in np.atleast_1d(np.asarray(x))),
                            float(t), out, leak, cfg.series_tol)


def heat_kernel_ladder(omega: ConductanceField, x, ts,
                       cfg: SolverConfig = SolverConfig()) -> list[HeatKernelColumn]:
    """Kernel columns along an increasing time ladder, evolved incrementally."""
    ts = sorted(float(t) for t in ts)
    if any(t < 0 for t in ts):
        raise DomainError("times must be nonnegative")
    op = BoxOperator(omega)
    box = omega.box
    idx = box.index_of(x)
    if not op.interior[idx]:
        raise DomainError("source must be interior to the box")
    cur = np.zeros(len(box), dtype=np.float64)
    cur[idx] = 1.0
    prev_t = 0.0
    out = []
    allowance = 64.0 * np.finfo(float).eps * (op.lam * ts[-1] + 100.0 * len(ts))
    for t in ts:
        cur = evolve(omega, VertexField(box, cur), t - prev_t, cfg,
                     op=op, check_leak=False).values
        leak = max(0.0, 1.0 - float(np.sum(cur)))
        if leak > cfg.max_mass_leak + allowance:
            raise TruncationError(
                f"boundary leak {leak:.3e} at t={t} exceeds budget; enlarge the box")
        out.append(HeatKernelColumn(tuple(int(v) for v in np.atleast_1d(np.asarray(x))),
                                    t, VertexField(box, cur.copy()), leak, cfg.series_tol))
        prev_t = t
    return out


# ---------------------------------------------------------------------------
# initial-boundary value problem


def _phi_weights(mean: float, tol: float):
    """Poisson weights of the exponential and its first two phi-functions."""
    K = poisson_tail_cut(mean, tol) + 2
    w = poisson_pmf(mean, K)
    # survival Q_k = P(N > k) by backward summation (stable for large means)
    q = np.zeros(K + 1)
    acc = 0.0
    for k in range(K, 0, -1):
        acc += w[k]
        q[k - 1] = acc
    if mean == 0.0:
        w1 = np.zeros(K + 1)
        w1[0] = 1.0
        w2 = np.zeros(K + 1)
        w2[0] = 0.5
        return K, w, w1, w2
    w1 = q / mean
    ks = np.arange(K + 1, dtype=np.float64)
    w2 = np.empty(K + 1)
    w2[:-1] = q[:-1] / mean - (ks[:-1] + 1.0) * q[1:] / mean**2
    w2[-1] = q[-1] / mean
    return K, w, w1, w2


def _ibvp_step(op, u, g0, g1, dt, K, w, w1, w2):
    b0 = op.forcing(g0)
    db = op.forcing(g1 - g0)
    eu, f1, f2 = _series_apply(op, [u, b0, db], [w, w1, w2], K)
    return eu + dt * f1 + dt * f2


def solve_caloric_ibvp(omega: ConductanceField, n: int, T: float, lateral: np.ndarray,
                       initial: VertexField, cfg: SolverConfig = SolverConfig(),
                       *, t0: float = 0.0, residual_samples: int = 24) -> SpaceTimeField:
    """March the heat equation on the box with prescribed boundary data.

    lateral[k] holds the ring values at stored instant k (ring vertices in
    lexicographic order); values between instants are linear in time.  The
    returned field carries the full box (ring included).  The residual
    metric is the worst step-doubling defect over sampled steps, relative to
    the solution scale; the step count is refined until it meets 1e-10.
    """
    box = omega.box
    if box.radius != n:
        raise DomainError("ambient box radius does not match n")
    if T <= 0:
        raise DomainError("need a positive time horizon")
    op = BoxOperator(omega)
    m = max(1, int(round(T / cfg.time_resolution)))
    times = np.linspace(0.0, T, m + 1)
    lateral = np.asarray(lateral, dtype=np.float64)
    if lateral.shape != (m + 1, len(op.ring)):
        raise DomainError(f"lateral data must have shape ({m + 1}, {len(op.ring)})")
    if not np.all(np.isfinite(lateral)) or not np.all(np.isfinite(initial.values)):
        raise DomainError("boundary and initial data must be finite")

    substeps = 1
    for _attempt in range(9):
        dt = (times[1] - times[0]) / substeps
        step_tol = cfg.series_tol * dt / T
        K, w, w1, w2 = _phi_weights(op.lam * dt, step_tol)
        vals = np.empty((m + 1, len(box)), dtype=np.float64)
        u = initial.values.copy()
        u[op.ring] = lateral[0]
        vals[0] = u
        u_int = u.copy()
        u_int[op.ring] = 0.0
        for k in range(m):
            cur = u_int
            for j in range(substeps):
                a = j / substeps
                b = (j + 1) / substeps
                g0 = (1 - a) * lateral[k] + a * lateral[k + 1]
                g1 = (1 - b) * lateral[k] + b * lateral[k + 1]
                cur = _ibvp_step(op, cur, g0, g1, dt, K, w, w1, w2)
            u_int = cur
            full = u_int.copy()
            full[op.ring] = lateral[k + 1]
            vals[k + 1] = full

        scale = max(float(np.max(np.abs(vals))), 1e-30)
        defect = _step_doubling_defect(op, vals, lateral, times, substeps, dt,
                                       step_tol, residual_samples)
        if defect / scale <= 1e-10:
            field = SpaceTimeField(t0 + times, box, vals)
            field.residual = defect / scale
            field.series_tol_bound = step_tol * m * substeps
            return field
        substeps *= 2
    raise SolverError("step refinement budget exhausted without meeting the residual tolerance")


def _step_doubling_defect(op, vals, lateral, times, substeps, dt, step_tol,
                          n_samples) -> float:
    m = len(times) - 1
    sample = np.unique(np.linspace(0, m - 1, min(n_samples, m)).astype(int))
    half_dt = dt / 2.0
    K2, w_, w1_, w2_ = _phi_weights(op.lam * half_dt, step_tol / 2.0)
    worst = 0.0
    for k in sample:
        u = vals[k].copy()
        u[op.ring] = 0.0
        cur = u
        for j in range(2 * substeps):
            a = j / (2 * substeps)
            b = (j + 1) / (2 * substeps)
            g0 = (1 - a) * lateral[k] + a * lateral[k + 1]
            g1 = (1 - b) * lateral[k] + b * lateral[k + 1]
            cur = _ibvp_step(op, cur, g0, g1, half_dt, K2, w_, w1_, w2_)
        ref = vals[k + 1].copy()
        ref[op.ring] = 0.0
        worst = max(worst, float(np.max(np.abs(cur - ref))))
    return worst


# ---------------------------------------------------------------------------
# harmonic (Dirichlet) solve


def solve_harmonic(omega: ConductanceField, n: int, dirichlet: np.ndarray) -> VertexField:
    """Solve the conductance Laplace equation with ring data (direct SPD solve)."""
    box = omega.box
    if box.radius != n:
        raise DomainError("ambient box radius does not match n")
    op = BoxOperator(omega)
    g = np.asarray(dirichlet, dtype=np.float64)
    if g.shape != (len(op.ring),):
        raise DomainError(f"dirichlet data must have one value per ring vertex "
                          f"({len(op.ring)})")
    interior_idx = np.nonzero(op.interior)[0]
    compact = -np.ones(len(box), dtype=np.int64)
    compact[interior_idx] = np.arange(len(interior_idx))

    lowers, axes = omega.bonds.lowers, omega.bonds.axes
    flat_lo = (lowers - np.asarray(box.center, dtype=np.int64) + box.radius) \
        @ np.asarray(box.strides, dtype=np.int64)
    flat_hi = flat_lo + np.asarray(box.strides, dtype=np.int64)[axes]
    wv = omega.values

    rows, cols, data = [], [], []
    ni = len(interior_idx)
    diag = np.zeros(ni)
    rhs = np.zeros(ni)
    ring_value = np.zeros(len(box))
    ring_value[op.ring] = g
    lo_int = compact[flat_lo]
    hi_int = compact[flat_hi]
    both = (lo_int >= 0) & (hi_int >= 0)
    np.add.at(diag, lo_int[both], wv[both])
    np.add.at(diag, hi_int[both], wv[both])
    rows.extend(lo_int[both])
    cols.extend(hi_int[both])
    data.extend(-wv[both])
    rows.extend(hi_int[both])
    cols.extend(lo_int[both])
    data.extend(-wv[both])
    lo_only = (lo_int >= 0) & (hi_int < 0)
    np.add.at(diag, lo_int[lo_only], wv[lo_only])
    np.add.at(rhs, lo_int[lo_only], wv[lo_only] * ring_value[flat_hi[lo_only]])
    hi_only = (hi_int >= 0) & (lo_int < 0)
    np.add.at(diag, hi_int[hi_only], wv[hi_only])
    np.add.at(rhs, hi_int[hi_only], wv[hi_only] * ring_value[flat_lo[hi_only]])
    rows.extend(range(ni))
    cols.extend(range(ni))
    data.extend(diag)

    A = coo_matrix((np.asarray(data), (np.asarray(rows), np.asarray(cols))),
                   shape=(ni, ni)).tocsc()
    lu = splu(A)
    x = lu.solve(rhs)
    scale = max(float(np.max(np.abs(x))), float(np.max(np.abs(g))), 1.0)
    for _ in range(3):
        r = A @ x - rhs
        if float(np.max(np.abs(r))) <= 1e-10 * scale * max(float(np.max(diag)), 1.0):
            break
        x = x - lu.solve(r)
    else:
        raise SolverError("harmonic solve did not reach the residual tolerance")
    full = ring_value.copy()
    full[interior_idx] = x
    return VertexField(box, full)


# ---------------------------------------------------------------------------
# closed-form reference for the unit environment


def scaled_bessel_i(k: int, t: float) -> float:
    """exp(-2t) I_k(2t) via the convergent product-of-Poisson series."""
    k = abs(int(k))
    if t == 0.0:
        return 1.0 if k == 0 else 0.0
    M = int(t + 12.0 * math.sqrt(t + 1.0) + 40.0)
    ms = np.arange(M + 1, dtype=np.float64)
    log_p1 = -t + ms * math.log(t) - gammaln(ms + 1.0)
    log_p2 = -t + (ms + k) * math.log(t) - gammaln(ms + k + 1.0)
    return float(np.sum(np.exp(log_p1 + log_p2)))


def bessel_reference(d: int, t: float, x) -> float:
    """Whole-lattice unit-environment kernel: product of 1-d factors."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    pt = np.asarray(x, dtype=np.int64).reshape(-1)
    if pt.shape[0] != d:
        raise DomainError("point dimension mismatch")
    out = 1.0
    for k in range(d):
        out *= scaled_bessel_i(int(pt[k]), t)
    return out
