"""Conductance environments: generation, shifting, traps, and persistence.

Per-bond randomness is derived by counter-based hashing of
(seed, lower-endpoint coordinates, axis), so a field depends only on the law,
the seed, and the bond coordinates - never on enumeration order or worker
count.  The mixture law draws, with probability 1/2 each, a heavy-upper-tail
value U^(-1/a) or a heavy-lower-tail value U^(1/b) from one uniform U.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from ._accel import hash_bond_uniforms
from .errors import ConfigurationError, DomainError, FormatError
from .lattice import BondSet, LatticeBox, bonds_within


class ConductanceField:
    """Strictly positive weights on the bonds of a finite box."""

    def __init__(self, box: LatticeBox, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        self.box = box
        self.bonds = bonds_within(box)
        if values.shape != (len(self.bonds),):
            raise ValueError("need one value per bond of the box")
        if np.any(~(values > 0.0)):
            raise DomainError("conductances must be strictly positive")
        self.values = values
        self._grid_w: np.ndarray | None = None
        self._mu: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.box.dim

    def _flat_lowers(self) -> np.ndarray:
        off = self.bonds.lowers - np.asarray(self.box.center, dtype=np.int64) + self.box.radius
        return off @ np.asarray(self.box.strides, dtype=np.int64)

    def grid_w(self) -> np.ndarray:
        """(d, |box|) array: grid_w[k][flat vertex] = value of bond (vertex, k)."""
        if self._grid_w is None:
            w = np.zeros((self.box.dim, len(self.box)), dtype=np.float64)
            w[self.bonds.axes, self._flat_lowers()] = self.values
            self._grid_w = w
        return self._grid_w

    def mu(self) -> np.ndarray:
        """Total conductance incident to each vertex within the box."""
        if self._mu is None:
            mu = np.zeros(len(self.box), dtype=np.float64)
            flat_lo = self._flat_lowers()
            strides = np.asarray(self.box.strides, dtype=np.int64)
            flat_hi = flat_lo + strides[self.bonds.axes]
            np.add.at(mu, flat_lo, self.values)
            np.add.at(mu, flat_hi, self.values)
            self._mu = mu
        return self._mu

    def value_at(self, lower, axis: int) -> float:
        idx = self.box.index_of(lower)
        w = self.grid_w()[axis, idx]
        up = list(lower)
        up[axis] += 1
        if w == 0.0 and not self.box.contains(tuple(up)):
            raise DomainError(f"bond ({tuple(lower)}, axis {axis}) not inside the box")
        return float(w)

    def bond_norm(self, p, normalized: bool = True, radius: int | None = None) -> float:
        """Norm of the conductances over the bonds of a centered sub-box."""
        from .calculus import lp

        if radius is None or radius == self.box.radius:
            return lp(self.values, p, normalized)
        sub = LatticeBox(self.box.center, radius, self.box.dim)
        return lp(restrict(self, sub.radius).values, p, normalized)

    def inverse(self) -> "ConductanceField":
        return ConductanceField(self.box, 1.0 / self.values)


@dataclass(frozen=True)
class EnvironmentLaw:
    """Declarative description of a conductance law, plus its seed."""

    kind: str
    seed: int = 0
    c: float = 1.0
    a: float = 8.0
    b: float = 8.0
    trap_n: int = 1
    trap_qprime: float = 1.0
    path: str = ""

    def __post_init__(self):
        if self.kind not in ("constant", "pareto_mixture", "trap", "file"):
            raise ConfigurationError(f"unknown law kind {self.kind!r}")
        if self.kind == "constant" and not self.c > 0:
            raise ConfigurationError("constant law requires c > 0")
        if self.kind == "pareto_mixture" and not (self.a > 1 and self.b > 0):
            raise ConfigurationError("pareto_mixture requires a > 1 and b > 0")
        if self.kind == "trap" and not (self.trap_n >= 1 and self.trap_qprime > 0):
            raise ConfigurationError("trap requires n >= 1 and q' > 0")


def pareto_mixture_values(seed: int, lowers: np.ndarray, axes: np.ndarray,
                          a: float, b: float) -> np.ndarray:
    """Counter-based i.i.d. draws of the two-sided heavy-tail mixture."""
    u_branch = hash_bond_uniforms(seed, lowers, axes, stream=1)
    u_val = hash_bond_uniforms(seed, lowers, axes, stream=2)
    heavy = u_branch < 0.5
    vals = np.where(heavy, u_val ** (-1.0 / a), u_val ** (1.0 / b))
    return vals


def pareto_mixture_moment(a: float, b: float, p: float) -> float:
    """Analytic p-th moment of the mixture law (finite for p < a)."""
    if p >= a:
        raise DomainError("moment diverges for p >= a")
    return 0.5 * a / (a - p) + 0.5 * b / (b + p)


def generate(law: EnvironmentLaw, box: LatticeBox) -> ConductanceField:
    """Realize the law on the bonds of the box (deterministic in law, seed, bonds)."""
    bonds = bonds_within(box)
    if law.kind == "constant":
        return ConductanceField(box, np.full(len(bonds), law.c, dtype=np.float64))
    if law.kind == "pareto_mixture":
        vals = pareto_mixture_values(law.seed, bonds.lowers, bonds.axes, law.a, law.b)
        return ConductanceField(box, vals)
    if law.kind == "trap":
        return trap_environment(law.trap_n, law.trap_qprime, box.dim, box)
    if law.kind == "file":
        f = load(law.path)
        if f.box != box:
            raise ConfigurationError("environment file box does not match the requested box")
        return f
    raise ConfigurationError(f"unknown law kind {law.kind!r}")


def trap_environment(n: int, qprime: float, d: int, box: LatticeBox) -> ConductanceField:
    """Unit environment with tiny conductances n^(-d/q') on the bonds at the origin."""
    if n < 1 or qprime <= 0:
        raise ConfigurationError("trap requires n >= 1 and q' > 0")
    origin = (0,) * d
    if box.dim != d:
        raise ConfigurationError("box dimension does not match d")
    if box.sup_distance(origin) >= box.radius:
        raise ConfigurationError("origin must be interior to the box")
    bonds = bonds_within(box)
    vals = np.ones(len(bonds), dtype=np.float64)
    low = float(n) ** (-d / qprime)
    for k in range(d):
        for lower in (origin, tuple(-1 if i == k else 0 for i in range(d))):
            vals[bonds.index_of(lower, k)] = low
    return ConductanceField(box, vals)


def shift(omega: ConductanceField, x) -> ConductanceField:
    """Environment seen from x: new bond value at e is the old value at e + x.

    The result keeps the center and loses sup-norm(x) of radius, since only
    those bonds have their shifted counterpart inside the original box.
    """
    box = omega.box
    pt = np.asarray(x, dtype=np.int64).reshape(-1)
    if pt.shape[0] != box.dim:
        raise DomainError("shift vector dimension mismatch")
    drop = int(np.max(np.abs(pt))) if box.dim else 0
    if drop == 0:
        return ConductanceField(box, omega.values.copy())
    if drop >= box.radius:
        raise DomainError("shift exits the ambient box")
    new_box = LatticeBox(box.center, box.radius - drop, box.dim)
    new_bonds = bonds_within(new_box)
    src_lowers = new_bonds.lowers + pt
    off = src_lowers - np.asarray(box.center, dtype=np.int64) + box.radius
    flat = off @ np.asarray(box.strides, dtype=np.int64)
    vals = omega.grid_w()[new_bonds.axes, flat]
    return ConductanceField(new_box, vals)


def restrict(omega: ConductanceField, radius: int) -> ConductanceField:
    """Restriction to the centered sub-box of the given radius."""
    box = omega.box
    if radius > box.radius:
        raise DomainError("cannot restrict to a larger box")
    if radius == box.radius:
        return ConductanceField(box, omega.values.copy())
    new_box = LatticeBox(box.center, radius, box.dim)
    new_bonds = bonds_within(new_box)
    off = new_bonds.lowers - np.asarray(box.center, dtype=np.int64) + box.radius
    flat = off @ np.asarray(box.strides, dtype=np.int64)
    vals = omega.grid_w()[new_bonds.axes, flat]
    return ConductanceField(new_box, vals)


_HEADER = re.compile(
    r"^rcm-env v1 d=(\d+) center=(-?\d+(?:,-?\d+)*) n=(\d+)$"
)


def save(omega: ConductanceField, path) -> None:
    """Write the line-oriented v1 environment format (17 significant digits)."""
    box = omega.box
    lines = [
        "rcm-env v1 d={} center={} n={}".format(
            box.dim, ",".join(str(c) for c in box.center), box.radius
        )
    ]
    for i in range(len(omega.bonds)):
        coords = " ".join(str(int(v)) for v in omega.bonds.lowers[i])
        lines.append(
            "{} {} {}".format(coords, int(omega.bonds.axes[i]) + 1,
                              format(omega.values[i], ".17e"))
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path) -> ConductanceField:
    """Read the v1 format back; validates header, order, and positivity."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError("line 1: empty environment file")
    m = _HEADER.match(lines[0])
    if m is None:
        raise FormatError(f"line 1: malformed header {lines[0]!r}")
    d = int(m.group(1))
    center = tuple(int(v) for v in m.group(2).split(","))
    radius = int(m.group(3))
    if len(center) != d or d < 1:
        raise FormatError("line 1: center does not match dimension")
    box = LatticeBox(center, radius, d)
    bonds = bonds_within(box)
    expected = len(bonds)
    if len(lines) - 1 < expected:
        raise FormatError(f"line {len(lines) + 1}: truncated file, "
                          f"expected {expected} bond lines")
    if len(lines) - 1 > expected:
        raise FormatError(f"line {expected + 2}: trailing data beyond {expected} bonds")
    values = np.empty(expected, dtype=np.float64)
    for i in range(expected):
        ln = i + 2
        parts = lines[i + 1].split()
        if len(parts) != d + 2:
            raise FormatError(f"line {ln}: expected {d + 2} fields")
        try:
            coords = tuple(int(v) for v in parts[:d])
            axis = int(parts[d]) - 1
            val = float(parts[d + 1])
        except ValueError:
            raise FormatError(f"line {ln}: unparsable bond entry") from None
        if coords != tuple(int(v) for v in bonds.lowers[i]) or axis != int(bonds.axes[i]):
            raise FormatError(f"line {ln}: bond out of canonical order")
        if not val > 0.0:
            raise FormatError(f"line {ln}: non-positive conductance {parts[d + 1]}")
        values[i] = val
    return ConductanceField(box, values)
