"""Cutoff optimization, Sobolev ratio probes, energy-inequality checks, and
randomized chain-inequality suites.

The energy checks evaluate the exact time-weighted integral form of the
parabolic Caccioppoli estimate (weight ramping linearly from 0 on the outer
time slab to 1 on the inner one, cutoff term carrying the explicit 4*alpha^2
factor); continuous-time exactness means any observed excess beyond the
configured slack is a genuine violation, not discretization noise, once the
trajectory is smooth on the stored grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import hash_uniforms
from .calculus import SpaceTimeField, VertexField, lp
from .environment import ConductanceField
from .errors import DomainError
from .exponents import g_eval_array, g_prime_array
from .lattice import LatticeBox, bonds_within, interior_boundary


# ---------------------------------------------------------------------------
# radial cutoff optimization


def optimal_radial_cutoff(rho: int, sigma: int, f) -> tuple[np.ndarray, float]:
    """Minimizing radial profile and value of the shell-weighted gradient energy.

    f[k - rho] is the total weight of the bonds crossing from sup-norm shell k
    to k+1, for k = rho..sigma-1.  The profile is returned on k = rho..sigma
    with boundary values 1 and 0.  A zero shell weight cuts the energy to 0.
    """
    if rho >= sigma:
        raise DomainError("need rho < sigma")
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (sigma - rho,):
        raise DomainError("need one shell weight per k in [rho, sigma)")
    if np.any(f < 0):
        raise DomainError("shell weights must be nonnegative")
    prof = np.empty(sigma - rho + 1, dtype=np.float64)
    if np.any(f == 0.0):
        # drop across the first free shell: no energy is paid there
        k0 = int(np.nonzero(f == 0.0)[0][0])
        prof[: k0 + 1] = 1.0
        prof[k0 + 1:] = 0.0
        return prof, 0.0
    inv = 1.0 / f
    total = float(np.sum(inv))
    prof[0] = 1.0
    prof[1:] = 1.0 - np.cumsum(inv) / total
    prof[-1] = 0.0
    return prof, 1.0 / total


def cutoff_bound(rho: int, sigma: int, f, delta: float) -> float:
    """Closed-form upper bound for the optimal cutoff energy at parameter delta."""
    if rho >= sigma:
        raise DomainError("need rho < sigma")
    if delta <= 0:
        raise DomainError("delta must be positive")
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise DomainError("shell weights must be nonnegative")
    width = float(sigma - rho)
    return width ** (-(1.0 + 1.0 / delta)) * float(np.sum(f**delta)) ** (1.0 / delta)


def radial_profile_field(box: LatticeBox, rho: int, sigma: int, profile) -> VertexField:
    """Vertex field eta(x) = profile[sup-distance from the center], clipped."""
    profile = np.asarray(profile, dtype=np.float64)
    offs = box.vertices() - np.asarray(box.center, dtype=np.int64)
    k = np.max(np.abs(offs), axis=1)
    vals = np.zeros(len(box), dtype=np.float64)
    inside = k < rho
    vals[inside] = 1.0
    for j in range(rho, sigma + 1):
        vals[k == j] = profile[j - rho]
    return VertexField(box, vals)


def affine_cutoff(box: LatticeBox, inner: int, outer: int | None = None) -> VertexField:
    """Radial cutoff: 1 on B(inner), 0 off B(outer-1), near-affine decay.

    The lowest two affine levels are cut to zero so that the ratio of eta^2
    across any bond with a nonzero foot stays at most 2 (the drop to zero at
    the support edge does not count).
    """
    outer = box.radius if outer is None else outer
    if not 0 <= inner < outer <= box.radius:
        raise DomainError("need 0 <= inner < outer <= box radius")
    width = outer - inner
    ks = np.arange(inner, outer + 1)
    levels = (outer - ks) / width
    levels[levels < 3.0 / width - 1e-12] = 0.0
    levels[0] = 1.0
    levels[-1] = 0.0
    return radial_profile_field(box, inner, outer, levels)


def oscillation_ratio(eta: VertexField) -> float:
    """Largest ratio of neighbor values of eta over bonds with a nonzero foot."""
    box = eta.domain
    bonds = bonds_within(box) if isinstance(box, LatticeBox) else bonds_within(box.coords)
    from .calculus import _domain_indices

    lo = _domain_indices(box, bonds.lowers)
    hi = _domain_indices(box, bonds.uppers())
    a, b = eta.values[lo], eta.values[hi]
    best = 1.0
    nz = a > 0
    if np.any(nz):
        best = max(best, float(np.max(b[nz] / a[nz])))
    nz = b > 0
    if np.any(nz):
        best = max(best, float(np.max(a[nz] / b[nz])))
    return best


# ---------------------------------------------------------------------------
# Sobolev ratio probes


def sobolev_probe(f: VertexField, n: int, s: float, mode: str) -> float:
    """Ratio of the two sides of the bulk or sphere Sobolev inequality.

    Returns 0 when the left side vanishes and inf when only the right side
    does; no constant is asserted, callers track the empirical ceiling.
    """
    d = f.domain.dim
    from .calculus import _domain_indices, gradient

    if mode == "bulk":
        if not 1 <= s < d:
            raise DomainError("bulk mode needs s in [1, d)")
        box = LatticeBox((0,) * d, n, d)
        idx = _domain_indices(f.domain, box.vertices())
        vals = f.values[idx]
        s_star = d * s / (d - s)
        num = lp(vals - vals.mean(), s_star)
        grad = gradient(f, bonds_within(box))
        den = lp(grad.values, s) if len(grad.values) else 0.0
    elif mode == "sphere":
        if not 1 <= s < d - 1:
            raise DomainError("sphere mode needs s in [1, d-1)")
        shell = interior_boundary(LatticeBox((0,) * d, n, d).vertices(), d)
        idx = _domain_indices(f.domain, shell)
        vals = f.values[idx]
        s_star = (d - 1) * s / (d - 1 - s)
        num = lp(vals, s_star)
        grad = gradient(f, bonds_within(shell, d))
        den = (lp(grad.values, s) if len(grad.values) else 0.0) + lp(vals, s) / n
    else:
        raise DomainError(f"unknown probe mode {mode!r}")
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return float("inf")
    return num / den


# ---------------------------------------------------------------------------
# Caccioppoli-type energy checks


@dataclass
class EnergyCheck:
    """Outcome of one energy-inequality evaluation."""

    lhs: float
    rhs: float
    satisfied: bool
    margin: float          # max over checked instants of lhs - rhs
    scale: float           # magnitude used to scale the slack
    t_worst: float
    terms: dict = field(default_factory=dict)


def _bond_arrays(omega: ConductanceField):
    box = omega.box
    flat_lo = (omega.bonds.lowers - np.asarray(box.center, dtype=np.int64) + box.radius) \
        @ np.asarray(box.strides, dtype=np.int64)
    flat_hi = flat_lo + np.asarray(box.strides, dtype=np.int64)[omega.bonds.axes]
    return flat_lo, flat_hi


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    seg = 0.5 * (y[1:] + y[:-1]) * np.diff(t)
    out[1:] = np.cumsum(seg)
    return out


def caccioppoli_check(omega: ConductanceField, u: SpaceTimeField, eta: VertexField,
                      alpha: float, s1: float, s2: float,
                      slack: float = 1e-6) -> EnergyCheck:
    """Check the time-weighted parabolic energy inequality for u^alpha.

    u must be positive and subcaloric on [-s2, 0] x box; eta in [0,1] must
    vanish on the box boundary ring.  The weighted gradient-energy side is
    compared against 4 alpha^2 times the cutoff term plus the averaged mass
    over the ramp slab, at every stored instant of [-s1, 0].
    """
    if alpha < 1:
        raise DomainError("alpha must be at least 1")
    if not 0 < s1 < s2:
        raise DomainError("need 0 < s1 < s2")
    if np.any(u.values <= 0):
        raise DomainError("u must be strictly positive")
    box = omega.box
    if np.any(eta.values < -1e-15) or np.any(eta.values > 1 + 1e-15):
        raise DomainError("eta must take values in [0,1]")
    if np.any(eta.values[box.boundary_indices()] != 0.0):
        raise DomainError("eta must vanish on the boundary ring")
    times = u.times
    if times[0] > -s2 + 1e-9 or times[-1] < -1e-9:
        raise DomainError("time grid must cover [-s2, 0]")
    win = u.time_window(-s2, 0.0)
    t = times[win]
    vals = u.values[win]

    flat_lo, flat_hi = _bond_arrays(omega)
    w = omega.values
    eta_sq = eta.values**2
    grad_eta = eta.values[flat_hi] - eta.values[flat_lo]
    eta2_mid = 0.5 * (eta_sq[flat_hi] + eta_sq[flat_lo])
    zeta = np.clip((t + s2) / (s2 - s1), 0.0, 1.0)

    n_t = len(t)
    G = np.empty(n_t)
    C = np.empty(n_t)
    M = np.empty(n_t)
    for k in range(n_t):
        va = vals[k] ** alpha
        dva = va[flat_hi] - va[flat_lo]
        mva = 0.5 * (va[flat_hi] + va[flat_lo])
        G[k] = float(np.sum(eta2_mid * w * dva * dva))
        C[k] = float(np.sum(w * mva * mva * grad_eta * grad_eta))
        M[k] = float(np.sum(eta_sq * va * va))

    int_zG = _cumtrapz(zeta * G, t)
    int_zC = _cumtrapz(zeta * C, t)
    ramp = t <= -s1 + 1e-12
    ramp_mass = float(np.trapezoid(M[ramp], t[ramp])) / (s2 - s1)

    check = t >= -s1 - 1e-12
    lhs_all = M[check] + int_zG[check]
    rhs_all = 4.0 * alpha**2 * int_zC[check] + ramp_mass
    diff = lhs_all - rhs_all
    worst = int(np.argmax(diff))
    scale = max(float(np.max(np.abs(lhs_all))), float(np.max(np.abs(rhs_all))), 1e-30)
    margin = float(diff[worst])
    return EnergyCheck(
        lhs=float(lhs_all[worst]),
        rhs=float(rhs_all[worst]),
        satisfied=bool(margin <= slack * scale),
        margin=margin,
        scale=scale,
        t_worst=float(t[check][worst]),
        terms={
            "gradient_energy": float(int_zG[-1]),
            "cutoff_integral": float(int_zC[-1]),
            "cutoff_term": 4.0 * alpha**2 * float(int_zC[-1]),
            "ramp_mass": ramp_mass,
        },
    )


def log_caccioppoli_check(omega: ConductanceField, u: SpaceTimeField, eta: VertexField,
                          slack: float = 1e-6) -> EnergyCheck:
    """Check the logarithmic energy inequality for a positive supercaloric u.

    At every interior stored instant, the derivative of the eta^2-weighted
    mass of g(u) plus one sixth of the clipped-cutoff energy of grad g(u)
    must stay below 6 osr(eta)^2 times the eta-gradient mass.
    """
    if np.any(u.values <= 0):
        raise DomainError("u must be strictly positive")
    box = omega.box
    if np.any(eta.values[box.boundary_indices()] != 0.0):
        raise DomainError("eta must vanish on the boundary ring")
    osr = oscillation_ratio(eta)
    if not np.isfinite(osr):
        raise DomainError("eta has unbounded neighbor ratios")
    flat_lo, flat_hi = _bond_arrays(omega)
    w = omega.values
    eta_sq = eta.values**2
    grad_eta = eta.values[flat_hi] - eta.values[flat_lo]
    phi = np.minimum(eta_sq[flat_hi], eta_sq[flat_lo])
    rhs_const = 6.0 * osr**2 * float(np.sum(w * grad_eta * grad_eta))

    t = u.times
    n_t = len(t)
    Mg = np.empty(n_t)
    E = np.empty(n_t)
    for k in range(n_t):
        gu = g_eval_array(u.values[k])
        dgu = gu[flat_hi] - gu[flat_lo]
        Mg[k] = float(np.sum(eta_sq * gu))
        E[k] = float(np.sum(phi * w * dgu * dgu)) / 6.0
    if n_t < 3:
        raise DomainError("need at least three stored instants")
    dMg = (Mg[2:] - Mg[:-2]) / (t[2:] - t[:-2])
    lhs_all = dMg + E[1:-1]
    diff = lhs_all - rhs_const
    worst = int(np.argmax(diff))
    scale = max(float(np.max(np.abs(lhs_all))), abs(rhs_const), 1e-30)
    nv = len(box)
    return EnergyCheck(
        lhs=float(lhs_all[worst]) / nv,
        rhs=rhs_const / nv,
        satisfied=bool(float(diff[worst]) <= slack * scale),
        margin=float(diff[worst]),
        scale=scale,
        t_worst=float(t[1:-1][worst]),
        terms={"osr": osr, "energy_max": float(np.max(E)) / nv},
    )


# ---------------------------------------------------------------------------
# randomized chain-inequality suites


@dataclass
class ViolationReport:
    sample_count: int
    seed: int
    checked: dict
    violations: list

    @property
    def total_violations(self) -> int:
        return len(self.violations)

    def to_csv(self) -> str:
        lines = ["inequality,x1,x2,x3,x4,lhs,rhs,slack"]
        for v in self.violations:
            inputs = list(v["inputs"]) + [""] * (4 - len(v["inputs"]))
            fields = [v["inequality"]] + [
                format(x, ".17g") if isinstance(x, float) else str(x) for x in inputs
            ] + [format(v["lhs"], ".17g"), format(v["rhs"], ".17g"), format(v["slack"], ".17g")]
            lines.append(",".join(fields))
        return "\n".join(lines) + "\n"


def _signed_power(a: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return np.abs(a) ** alpha * np.sign(a)


def _record(violations, name, mask, inputs, lhs, rhs, slack):
    for i in np.nonzero(mask)[0][:100]:
        violations.append({
            "inequality": name,
            "inputs": [float(col[i]) for col in inputs],
            "lhs": float(lhs[i]),
            "rhs": float(rhs[i]),
            "slack": float(slack[i]),
        })


def appendix_property_tests(sample_count: int, seed: int = 0) -> ViolationReport:
    """Randomized checks of the power-difference chain inequalities and the
    two-point estimate behind the logarithmic energy bound (with gamma = 1/3).

    Draw ranges: magnitudes log-uniform in [0.1, 10] (signed for the first
    chain), exponents in the stated admissible intervals, evaluation points
    log-uniform in [1e-3, 3]; a 5 percent atom at zero exercises the
    degenerate branches.  Violations beyond 1e-12 relative slack are listed.
    """
    if sample_count < 1:
        raise DomainError("sample_count must be positive")
    n = int(sample_count)
    u = [hash_uniforms(seed, n, stream) for stream in range(1, 9)]
    violations: list = []
    checked: dict = {}

    def log_uniform(uu, lo, hi):
        return lo * (hi / lo) ** uu

    def slack_for(lhs, rhs):
        return 1e-12 * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))

    # signed-power difference vs reference exponent
    a = np.where(u[0] < 0.5, -1.0, 1.0) * log_uniform(u[1], 0.1, 10.0)
    b = np.where(u[2] < 0.5, -1.0, 1.0) * log_uniform(u[3], 0.1, 10.0)
    al = np.where(u[4] < 0.5, -1.0, 1.0) * (0.25 + 3.75 * u[5])
    be = np.where(u[6] < 0.5, -1.0, 1.0) * (0.25 + 3.75 * u[7])
    lhs = np.abs(_signed_power(a, al) - _signed_power(b, al))
    rhs = (np.maximum(1.0, np.abs(al / be))
           * np.abs(_signed_power(a, be) - _signed_power(b, be))
           * (np.abs(a) ** (al - be) + np.abs(b) ** (al - be)))
    sl = slack_for(lhs, rhs)
    bad = lhs > rhs + sl
    checked["signed_power_chain"] = n
    _record(violations, "signed_power_chain", bad, (a, b, al, be), lhs, rhs, sl)

    # squared power gap vs product of increments
    a2 = np.where(u[0] < 0.05, 0.0, log_uniform(u[1], 0.1, 10.0))
    b2 = np.where(u[2] < 0.05, 0.0, log_uniform(u[3], 0.1, 10.0))
    al2 = 0.5 + 3.5 * np.maximum(u[4], 1e-12)
    lhs = (a2**al2 - b2**al2) ** 2
    rhs = np.abs(al2**2 / (2 * al2 - 1)) * (a2 - b2) * (a2 ** (2 * al2 - 1) - b2 ** (2 * al2 - 1))
    sl = slack_for(lhs, rhs)
    bad = lhs > rhs + sl
    checked["power_gap_product"] = n
    _record(violations, "power_gap_product", bad, (a2, b2, al2), lhs, rhs, sl)

    # odd-power mass vs power midpoint
    al3 = 1.0 + 3.0 * u[4]
    lhs = (a2 ** (2 * al3 - 1) + b2 ** (2 * al3 - 1)) * np.abs(a2 - b2)
    rhs = np.abs(a2**al3 - b2**al3) * (a2**al3 + b2**al3)
    sl = slack_for(lhs, rhs)
    bad = lhs > rhs + sl
    checked["odd_power_midpoint"] = n
    _record(violations, "odd_power_midpoint", bad, (a2, b2, al3), lhs, rhs, sl)

    # two-point estimate for the regularized log (gamma = 1/3)
    gamma = 1.0 / 3.0
    x = log_uniform(u[0], 1e-3, 3.0)
    y = log_uniform(u[1], 1e-3, 3.0)
    aw = np.where(u[2] < 0.05, 0.0, 2.0 * u[3])
    bw = np.where(u[4] < 0.05, 0.0, 2.0 * u[5])
    gx, gy = g_eval_array(x), g_eval_array(y)
    gpx, gpy = g_prime_array(x), g_prime_array(y)
    lhs = -(bw**2 * gpy - aw**2 * gpx) * (y - x)
    both = np.minimum(aw, bw) > 0
    ratio = np.empty(n)
    ratio[both] = np.maximum((aw[both] / bw[both]) ** 2, (bw[both] / aw[both]) ** 2)
    ratio[~both] = 0.0
    rhs = np.where(
        both,
        -0.5 * gamma * np.minimum(aw, bw) ** 2 * (gy - gx) ** 2
        + (2.0 / gamma) * ratio * (bw - aw) ** 2,
        np.maximum(-x * gpx, -y * gpy) * (bw - aw) ** 2,
    )
    sl = slack_for(lhs, rhs)
    bad = lhs > rhs + sl
    checked["log_two_point"] = n
    _record(violations, "log_two_point", bad, (x, y, aw, bw), lhs, rhs, sl)

    return ViolationReport(sample_count=n, seed=seed, checked=checked, violations=violations)
