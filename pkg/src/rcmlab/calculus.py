"""Discrete calculus: gradient, divergence, generator, norms, oscillation.

The discrete derivative of f at a canonical bond e is f(upper) - f(lower);
the divergence is its negative adjoint, so the two are linked by summation
by parts on compactly supported fields.  Vertex functions are identified
with bond functions through the arithmetic mean of the two endpoint values
wherever a vertex field appears in a bond sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .lattice import BondSet, LatticeBox, VertexSet


def _domain_indices(domain, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    if isinstance(domain, LatticeBox):
        off = pts - np.asarray(domain.center, dtype=np.int64) + domain.radius
        if np.any(off < 0) or np.any(off >= domain.side):
            raise DomainError("point outside field domain")
        return off @ np.asarray(domain.strides, dtype=np.int64)
    try:
        return domain.indices_of(pts)
    except KeyError as exc:
        raise DomainError(str(exc)) from None


@dataclass
class VertexField:
    domain: object  # LatticeBox or VertexSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.domain),):
            raise ValueError("value array length must equal the domain size")

    def at(self, point) -> float:
        return float(self.values[_domain_indices(self.domain, [point])[0]])

    def copy(self) -> "VertexField":
        return VertexField(self.domain, self.values.copy())


@dataclass
class BondField:
    bonds: BondSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.bonds),):
            raise ValueError("value array length must equal the bond set size")


@dataclass
class SpaceTimeField:
    """Real values on a strictly increasing time grid times a vertex set."""

    times: np.ndarray
    domain: object
    values: np.ndarray  # shape (len(times), len(domain))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if self.values.shape != (len(self.times), len(self.domain)):
            raise ValueError("value array must be (times, vertices)")

    def slice_at(self, k: int) -> VertexField:
        return VertexField(self.domain, self.values[k])

    def time_window(self, t0: float, t1: float) -> np.ndarray:
        """Indices of stored instants inside [t0, t1]."""
        return np.nonzero((self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12))[0]


def gradient(f: VertexField, bonds: BondSet | None = None) -> BondField:
    """Discrete derivative f(upper) - f(lower) on each canonical bond."""
    if bonds is None:
        bonds = _default_bonds(f.domain)
    lo = _domain_indices(f.domain, bonds.lowers) if len(bonds) else np.empty(0, dtype=np.int64)
    hi = _domain_indices(f.domain, bonds.uppers()) if len(bonds) else np.empty(0, dtype=np.int64)
    return BondField(bonds, f.values[hi] - f.values[lo])


def midpoint(f: VertexField, bonds: BondSet) -> BondField:
    """Identify a vertex field with a bond field via the endpoint mean."""
    lo = _domain_indices(f.domain, bonds.lowers)
    hi = _domain_indices(f.domain, bonds.uppers())
    return BondField(bonds, 0.5 * (f.values[hi] + f.values[lo]))


def _default_bonds(domain) -> BondSet:
    from .lattice import bonds_within

    if isinstance(domain, LatticeBox):
        return bonds_within(domain)
    return bonds_within(domain.coords, domain.dim)


def divergence(F: BondField, S, *, missing_zero: bool = False) -> VertexField:
    """Divergence of a bond field at each vertex of S.

    At x this is the sum of F over bonds pointing into x minus the sum over
    bonds pointing out of x.  Bonds absent from F's set raise unless the
    caller opts into treating them as zero.
    """
    S = S if isinstance(S, (LatticeBox, VertexSet)) else VertexSet(S)
    coords = S.coords
    d = coords.shape[1]
    lo = np.minimum(coords.min(axis=0), F.bonds.lowers.min(axis=0)) - 1 \
        if len(F.bonds) else coords.min(axis=0) - 1
    hi = np.maximum(coords.max(axis=0), F.bonds.lowers.max(axis=0)) + 1 \
        if len(F.bonds) else coords.max(axis=0) + 1
    shape = (hi - lo + 1).astype(np.int64)
    if int(np.prod(shape)) > 5 * 10**7:
        raise DomainError("divergence domain too large to grid")
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]
    size = int(np.prod(shape))
    grid = np.zeros((d, size), dtype=np.float64)
    exists = np.zeros((d, size), dtype=bool)
    if len(F.bonds):
        flat = (F.bonds.lowers - lo) @ strides
        grid[F.bonds.axes, flat] = F.values
        exists[F.bonds.axes, flat] = True
    flat_s = (coords - lo) @ strides
    out = np.zeros(len(S), dtype=np.float64)
    for k in range(d):
        into = flat_s - strides[k]
        if not missing_zero:
            missing = ~(exists[k, into] & exists[k, flat_s])
            if np.any(missing):
                i = int(np.nonzero(missing)[0][0])
                raise DomainError(
                    f"bond incident to {tuple(int(v) for v in coords[i])} on axis {k} "
                    "missing and zero-fill not enabled")
        out += grid[k, into] - grid[k, flat_s]
    return VertexField(S, out)


def apply_generator(omega, u: VertexField, x) -> float:
    """Conductance-weighted graph Laplacian of u at x.

    Equals minus the divergence of (omega * gradient u) at x; requires all
    2d neighbor bonds of x inside omega's ambient box.
    """
    box = omega.box
    pt = np.asarray(x, dtype=np.int64)
    if box.sup_distance(tuple(int(v) for v in pt)) >= box.radius and box.radius > 0:
        raise DomainError(f"{tuple(pt)} lies on the ambient-box boundary")
    ux = u.at(tuple(int(v) for v in pt))
    acc = 0.0
    for k in range(box.dim):
        for sgn in (-1, 1):
            nb = pt.copy()
            nb[k] += sgn
            lower = nb if sgn < 0 else pt
            w = omega.value_at(tuple(int(v) for v in lower), k)
            acc += w * (u.at(tuple(int(v) for v in nb)) - ux)
    return acc


def lp(values: np.ndarray, p, normalized: bool = False) -> float:
    """The (optionally count-normalized) l^p norm; p may be any positive real or inf."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError("norm over an empty set")
    if p == np.inf:
        return float(np.max(np.abs(arr)))
    p = float(p)
    if p <= 0:
        raise DomainError("p must be positive or inf")
    total = float(np.sum(np.abs(arr) ** p))
    if normalized:
        total /= arr.size
    return total ** (1.0 / p)


def norm(f, p, normalized: bool = False, on: np.ndarray | None = None) -> float:
    """Norm of a vertex or bond field, optionally restricted to given indices."""
    values = f.values if hasattr(f, "values") else np.asarray(f)
    if on is not None:
        values = values[on]
    return lp(values, p, normalized)


def oscillation(values) -> float:
    """max - min over the given (nonempty) values."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError("oscillation over an empty set")
    return float(np.max(arr) - np.min(arr))


def oscillation_on(u, time_idx=None, vertex_idx=None) -> float:
    """Oscillation of a space-time or vertex field over a sub-cylinder."""
    if isinstance(u, SpaceTimeField):
        vals = u.values
        if time_idx is not None:
            vals = vals[time_idx]
        if vertex_idx is not None:
            vals = vals[:, vertex_idx] if vals.ndim == 2 else vals[vertex_idx]
        return oscillation(vals)
    vals = u.values if hasattr(u, "values") else np.asarray(u)
    if vertex_idx is not None:
        vals = vals[vertex_idx]
    return oscillation(vals)


def measure_m(interval_length: float, n_vertices: int) -> float:
    """Product measure of a time-interval times vertex-set cylinder."""
    if interval_length < 0 or n_vertices < 0:
        raise DomainError("cylinder measure needs nonnegative factors")
    return float(interval_length) * float(n_vertices)
