"""Geometry of Z^d at desk scale: boxes, boundaries, bonds, spheres.

Vertices are integer points, enumerated lexicographically; every dense array
over a vertex set is keyed by that order.  Bonds are stored in canonical
orientation: a bond is the pair (lower endpoint, axis) with the upper
endpoint one step along the positive axis direction.  Axes are 0-based in
code (the on-disk environment format uses 1-based axes).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

Point = tuple[int, ...]


def _as_coords(points, d: int | None = None) -> np.ndarray:
    arr = np.asarray(points, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {arr.shape[1]}")
    return arr


def as_point(x, d: int) -> Point:
    arr = np.asarray(x, dtype=np.int64).reshape(-1)
    if arr.shape[0] != d:
        raise ValueError(f"expected a point of dimension {d}, got {arr.shape[0]}")
    return tuple(int(v) for v in arr)


@dataclass(frozen=True)
class Bond:
    """Nearest-neighbor bond in canonical orientation (axis is 0-based)."""

    lower: Point
    axis: int

    @property
    def upper(self) -> Point:
        up = list(self.lower)
        up[self.axis] += 1
        return tuple(up)


class VertexSet:
    """Finite vertex set with the dense lexicographic index (round-trip exact)."""

    def __init__(self, coords: np.ndarray):
        coords = _as_coords(coords)
        order = np.lexsort(coords.T[::-1])
        self.coords = np.ascontiguousarray(coords[order])
        self.dim = self.coords.shape[1]
        self._lookup = {tuple(int(v) for v in row): i for i, row in enumerate(self.coords)}
        if len(self._lookup) != len(self.coords):
            raise ValueError("duplicate vertices in set")

    def __len__(self) -> int:
        return self.coords.shape[0]

    def vertex(self, i: int) -> Point:
        return tuple(int(v) for v in self.coords[i])

    def index_of(self, point) -> int:
        key = as_point(point, self.dim)
        idx = self._lookup.get(key)
        if idx is None:
            raise KeyError(f"vertex {key} not in set")
        return idx

    def contains(self, point) -> bool:
        return as_point(point, self.dim) in self._lookup

    def indices_of(self, points) -> np.ndarray:
        pts = _as_coords(points, self.dim)
        return np.fromiter((self.index_of(tuple(p)) for p in pts), dtype=np.int64, count=len(pts))


class LatticeBox:
    """Sup-norm ball B(center, n): all vertices within sup-distance n."""

    def __init__(self, center, radius: int, dim: int):
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.center = as_point(center, dim)
        self.radius = int(radius)
        self.dim = int(dim)
        self.side = 2 * self.radius + 1
        self.shape = (self.side,) * self.dim
        self.strides = tuple(int(self.side**k) for k in range(self.dim - 1, -1, -1))

    def __len__(self) -> int:
        return self.side**self.dim

    def __eq__(self, other) -> bool:
        return (isinstance(other, LatticeBox)
                and self.center == other.center
                and self.radius == other.radius
                and self.dim == other.dim)

    def vertices(self) -> np.ndarray:
        cached = getattr(self, "_verts", None)
        if cached is None:
            axes = [np.arange(c - self.radius, c + self.radius + 1, dtype=np.int64)
                    for c in self.center]
            grid = np.meshgrid(*axes, indexing="ij")
            cached = np.stack([g.ravel() for g in grid], axis=1)
            self._verts = cached
        return cached

    @property
    def coords(self) -> np.ndarray:
        return self.vertices()

    def index_of(self, point) -> int:
        pt = as_point(point, self.dim)
        idx = 0
        for k in range(self.dim):
            off = pt[k] - self.center[k] + self.radius
            if off < 0 or off >= self.side:
                raise KeyError(f"vertex {pt} not in box")
            idx += off * self.strides[k]
        return idx

    def vertex(self, i: int) -> Point:
        out = []
        for k in range(self.dim):
            c, i = divmod(i, self.strides[k])
            out.append(c + self.center[k] - self.radius)
        return tuple(out)

    def contains(self, point) -> bool:
        pt = as_point(point, self.dim)
        return all(abs(pt[k] - self.center[k]) <= self.radius for k in range(self.dim))

    def sup_distance(self, point) -> int:
        pt = as_point(point, self.dim)
        return max(abs(pt[k] - self.center[k]) for k in range(self.dim))

    def interior_mask(self) -> np.ndarray:
        """True for vertices at sup-distance < radius from the center."""
        if self.radius == 0:
            return np.zeros(1, dtype=bool)
        offs = self.vertices() - np.asarray(self.center, dtype=np.int64)
        return np.max(np.abs(offs), axis=1) < self.radius

    def boundary_indices(self) -> np.ndarray:
        return np.nonzero(~self.interior_mask())[0]

    def shrink(self, by: int) -> "LatticeBox":
        if by > self.radius:
            raise ValueError("cannot shrink below radius 0")
        return LatticeBox(self.center, self.radius - by, self.dim)


def ball(center, n: int, d: int) -> np.ndarray:
    """All (2n+1)^d vertices of B(center, n) in lexicographic order."""
    return LatticeBox(center, n, d).vertices()


def interior_boundary(S, d: int) -> np.ndarray:
    """Vertices of S having at least one nearest neighbor outside S."""
    coords = _as_coords(S, d)
    members = {tuple(int(v) for v in row) for row in coords}
    out = []
    for row in coords:
        pt = tuple(int(v) for v in row)
        on_edge = False
        for k in range(d):
            for sgn in (-1, 1):
                nb = list(pt)
                nb[k] += sgn
                if tuple(nb) not in members:
                    on_edge = True
                    break
            if on_edge:
                break
        if on_edge:
            out.append(pt)
    if not out:
        return np.empty((0, d), dtype=np.int64)
    arr = np.asarray(out, dtype=np.int64)
    order = np.lexsort(arr.T[::-1])
    return arr[order]


class BondSet:
    """Canonical, lexicographically ordered list of bonds (lower, axis)."""

    def __init__(self, lowers: np.ndarray, axes: np.ndarray, presorted: bool = False):
        lowers = _as_coords(lowers) if len(lowers) else np.asarray(lowers, dtype=np.int64).reshape(0, 0)
        axes = np.asarray(axes, dtype=np.int64)
        if not presorted and len(axes):
            keys = np.concatenate([lowers, axes.reshape(-1, 1)], axis=1)
            order = np.lexsort(keys.T[::-1])
            lowers, axes = lowers[order], axes[order]
        self.lowers = lowers
        self.axes = axes
        self._lookup: dict | None = None

    def __len__(self) -> int:
        return len(self.axes)

    @property
    def dim(self) -> int:
        return self.lowers.shape[1]

    def uppers(self) -> np.ndarray:
        up = self.lowers.copy()
        if len(self.axes):
            up[np.arange(len(self.axes)), self.axes] += 1
        return up

    def bond(self, i: int) -> Bond:
        return Bond(tuple(int(v) for v in self.lowers[i]), int(self.axes[i]))

    def index_of(self, lower, axis: int) -> int:
        if self._lookup is None:
            self._lookup = {
                (tuple(int(v) for v in self.lowers[i]), int(self.axes[i])): i
                for i in range(len(self.axes))
            }
        key = (as_point(lower, self.dim), int(axis))
        idx = self._lookup.get(key)
        if idx is None:
            raise KeyError(f"bond {key} not in set")
        return idx

    def __iter__(self) -> Iterable[Bond]:
        return (self.bond(i) for i in range(len(self)))


def bonds_within(S, d: int | None = None) -> BondSet:
    """All bonds with both endpoints in S, once each, canonical orientation."""
    if isinstance(S, LatticeBox):
        return _box_bonds(S)
    coords = _as_coords(S, d)
    d = coords.shape[1]
    members = {tuple(int(v) for v in row) for row in coords}
    lowers, axes = [], []
    order = np.lexsort(coords.T[::-1])
    for row in coords[order]:
        pt = tuple(int(v) for v in row)
        for k in range(d):
            nb = list(pt)
            nb[k] += 1
            if tuple(nb) in members:
                lowers.append(pt)
                axes.append(k)
    if not lowers:
        return BondSet(np.empty((0, d), dtype=np.int64), np.empty(0, dtype=np.int64), presorted=True)
    return BondSet(np.asarray(lowers, dtype=np.int64), np.asarray(axes, dtype=np.int64), presorted=True)


def _box_bonds(box: LatticeBox) -> BondSet:
    verts = box.vertices()
    lowers, axes = [], []
    hi = np.asarray(box.center, dtype=np.int64) + box.radius
    for k in range(box.dim):
        keep = verts[:, k] < hi[k]
        lowers.append(verts[keep])
        axes.append(np.full(int(keep.sum()), k, dtype=np.int64))
    lowers = np.concatenate(lowers, axis=0)
    axes = np.concatenate(axes)
    return BondSet(lowers, axes)


def sphere_bonds(m: int, d: int) -> BondSet:
    """Bonds with one endpoint at sup-norm m and the other at sup-norm m+1."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    outer = LatticeBox((0,) * d, m + 1, d)
    bonds = _box_bonds(outer)
    lo_norm = np.max(np.abs(bonds.lowers), axis=1)
    up_norm = np.max(np.abs(bonds.uppers()), axis=1)
    keep = ((lo_norm == m) & (up_norm == m + 1)) | ((lo_norm == m + 1) & (up_norm == m))
    return BondSet(bonds.lowers[keep], bonds.axes[keep], presorted=True)
