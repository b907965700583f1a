"""Monte Carlo simulation of the variable-speed walk and its estimators.

Each path draws from its own counter-based stream keyed by (seed, path
index), so aggregates are independent of scheduling and worker count.  A walk
holds at x for an exponential time with mean 1 over the total incident
conductance, then moves across a bond with probability proportional to its
conductance; hitting the ambient-box ring terminates the path with a
truncation flag (recorded, never resampled).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import walk_final_positions, walk_trajectory
from .calculus import VertexField
from .environment import ConductanceField
from .errors import DomainError
from .solvers import BoxOperator


@dataclass
class PathSample:
    jump_times: np.ndarray       # strictly increasing, starts at 0
    visited: np.ndarray          # (k+1, d) vertex coordinates
    seed: int
    index: int
    truncated: bool

    def final_position(self) -> np.ndarray:
        return self.visited[-1]


@dataclass
class SigmaEstimate:
    matrix: np.ndarray           # (d, d) symmetric
    sample_count: int
    standard_errors: np.ndarray  # (d, d)
    truncated_fraction: float


class _WalkSetup:
    def __init__(self, omega: ConductanceField):
        op = BoxOperator(omega)
        self.box = omega.box
        self.w = op.w
        self.mu = op.mu.copy()
        self.mu[op.ring] = 0.0   # ring sentinel: zero rate marks absorption
        self.strides = np.asarray(self.box.strides, dtype=np.int64)
        self.interior = op.interior


def _setup(omega) -> _WalkSetup:
    cached = getattr(omega, "_walk_setup", None)
    if cached is None:
        cached = _WalkSetup(omega)
        omega._walk_setup = cached
    return cached


def sample_path(omega: ConductanceField, x0, T: float, seed: int, index: int) -> PathSample:
    """One trajectory of the walk up to time T (or until it hits the ring)."""
    if T < 0:
        raise DomainError("T must be nonnegative")
    setup = _setup(omega)
    j0 = setup.box.index_of(x0)
    if not setup.interior[j0]:
        raise DomainError("start vertex must be interior to the box")
    times, sites, truncated = walk_trajectory(setup.mu, setup.w, setup.strides,
                                              j0, T, seed, index)
    coords = np.asarray([setup.box.vertex(int(j)) for j in sites], dtype=np.int64)
    return PathSample(times, coords, seed, index, truncated)


def _final_coords(omega, x0, t, n_paths, seed, idx0=0):
    setup = _setup(omega)
    j0 = setup.box.index_of(x0)
    if not setup.interior[j0]:
        raise DomainError("start vertex must be interior to the box")
    flat, trunc, jumps = walk_final_positions(setup.mu, setup.w, setup.strides,
                                              j0, t, seed, idx0, n_paths)
    return setup, flat, trunc.astype(bool), jumps


@dataclass
class EmpiricalKernel:
    field: VertexField
    sample_count: int
    truncated_fraction: float
    warning: bool

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def empirical_kernel(omega: ConductanceField, x0, t: float, N: int, seed: int) -> EmpiricalKernel:
    """Histogram of the walk position at time t over N independent paths.

    Truncated paths are excluded, so the histogram sums to one minus the
    truncated fraction; a fraction above 1 percent raises the warning flag.
    """
    if N < 1:
        raise DomainError("need at least one path")
    setup, flat, trunc, _ = _final_coords(omega, x0, t, N, seed)
    counts = np.zeros(len(setup.box), dtype=np.int64)
    np.add.at(counts, flat[~trunc], 1)
    frac = float(np.count_nonzero(trunc)) / N
    return EmpiricalKernel(VertexField(setup.box, counts / float(N)),
                           N, frac, frac > 0.01)


def estimate_sigma(omega: ConductanceField, n: int, t: float, N: int, seed: int) -> SigmaEstimate:
    """Diffusive covariance estimate from N walk endpoints at time n^2 t.

    Normalized so the unit environment gives twice the identity: the sample
    covariance of the displacement is divided by n^2 t.  Truncated paths are
    dropped from the estimate.
    """
    if N < 2:
        raise DomainError("need at least two paths")
    box = omega.box
    origin = box.center
    horizon = float(n) ** 2 * t
    setup, flat, trunc, _ = _final_coords(omega, origin, horizon, N, seed)
    keep = ~trunc
    m = int(np.count_nonzero(keep))
    if m < 2:
        raise DomainError("too few non-truncated paths for a covariance estimate")
    d = box.dim
    # displacement coordinates are integers: moment sums below are exact
    coords = np.empty((m, d), dtype=np.int64)
    kept = flat[keep]
    for k in range(d):
        rem = kept.copy()
        for axis in range(d):
            c, rem = np.divmod(rem, setup.strides[axis])
            if axis == k:
                coords[:, k] = c - box.radius + box.center[k] - origin[k]
                break
    sums = coords.sum(axis=0)
    prods = coords.T @ coords
    mean = sums.astype(np.float64) / m
    cov = (prods.astype(np.float64) - m * np.outer(mean, mean)) / (m - 1)
    scale = horizon
    sigma2 = cov / scale
    # per-entry Monte Carlo error of the centered product moments
    x = coords.astype(np.float64) - mean
    se = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            v = x[:, i] * x[:, j]
            se[i, j] = float(np.std(v, ddof=1)) / np.sqrt(m) / scale
    return SigmaEstimate(sigma2, m, se, float(np.count_nonzero(trunc)) / N)
