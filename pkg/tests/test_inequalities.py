import itertools
import math

import numpy as np
import pytest

from rcmlab.calculus import SpaceTimeField, VertexField
from rcmlab.environment import EnvironmentLaw, generate
from rcmlab.errors import DomainError
from rcmlab.inequalities import (affine_cutoff, appendix_property_tests,
                                 caccioppoli_check, cutoff_bound,
                                 log_caccioppoli_check, optimal_radial_cutoff,
                                 oscillation_ratio, radial_profile_field,
                                 sobolev_probe)
from rcmlab.lattice import LatticeBox, sphere_bonds
from rcmlab.solvers import SolverConfig, solve_caloric_ibvp

from oracles import cutoff_bruteforce


def test_cutoff_closed_form_examples():
    prof, J = optimal_radial_cutoff(0, 2, [1.0, 1.0])
    assert np.allclose(prof, [1.0, 0.5, 0.0])
    assert J == pytest.approx(0.5, abs=1e-15)
    prof, J = optimal_radial_cutoff(0, 2, [1.0, 3.0])
    assert np.allclose(prof, [1.0, 0.25, 0.0])
    assert J == pytest.approx(0.75, abs=1e-15)
    prof, J = optimal_radial_cutoff(1, 4, [2.0, 0.0, 1.0])
    assert J == 0.0
    assert prof[0] == 1.0 and prof[-1] == 0.0
    with pytest.raises(DomainError):
        optimal_radial_cutoff(2, 2, [])
    with pytest.raises(DomainError):
        optimal_radial_cutoff(0, 2, [1.0, -1.0])


def test_cutoff_matches_bruteforce_small():
    values = [0.1, 0.5, 1.0, 3.0]
    rng = np.random.default_rng(0)
    checked = 0
    for L in range(1, 7):
        combos = list(itertools.product(values, repeat=L))
        if len(combos) > 256:
            pick = rng.choice(len(combos), size=256, replace=False)
            combos = [combos[i] for i in sorted(pick)]
        for f in combos:
            _, J = optimal_radial_cutoff(0, L, f)
            J_bf, prof_bf = cutoff_bruteforce(0, L, f)
            assert abs(J - J_bf) <= 1e-10 * max(1.0, J)
            checked += 1
    assert checked >= 700


def test_cutoff_profile_feasible_and_energy_consistent():
    rng = np.random.default_rng(1)
    for _ in range(300):
        L = int(rng.integers(1, 8))
        f = rng.random(L) * 3 + 0.01
        prof, J = optimal_radial_cutoff(2, 2 + L, f)
        assert prof[0] == 1.0 and prof[-1] == 0.0
        assert np.all(prof >= -1e-15) and np.all(prof <= 1 + 1e-15)
        assert np.all(np.diff(prof) <= 1e-15)
        energy = float(np.sum(f * np.diff(prof) ** 2))
        assert energy == pytest.approx(J, rel=1e-12, abs=1e-15)


def test_cutoff_bound_examples_and_dominates():
    assert cutoff_bound(0, 2, [1.0, 1.0], 1.0) == pytest.approx(0.5)
    assert cutoff_bound(0, 2, [1.0, 4.0], 0.5) == pytest.approx(1.125)
    with pytest.raises(DomainError):
        cutoff_bound(0, 2, [1.0, 1.0], 0.0)
    rng = np.random.default_rng(2)
    for _ in range(1000):
        L = int(rng.integers(1, 7))
        f = rng.random(L) * 3
        _, J = optimal_radial_cutoff(0, L, f)
        for delta in (0.5, 1.0, 2.0):
            assert cutoff_bound(0, L, f, delta) >= J - 1e-12
    # exhaustive over the small instance set
    for L in range(1, 7):
        for f in itertools.product([0.1, 1.0, 3.0], repeat=L):
            _, J = optimal_radial_cutoff(0, L, f)
            for delta in (0.5, 1.0, 2.0):
                assert cutoff_bound(0, L, f, delta) >= J - 1e-12


def test_sobolev_probe_hand_case():
    # delta at the origin on B(0,1), d=2, s=1: known numerator and denominator
    box = LatticeBox((0, 0), 1, 2)
    vals = np.zeros(len(box))
    vals[box.index_of((0, 0))] = 1.0
    f = VertexField(box, vals)
    ratio = sobolev_probe(f, 1, 1.0, "bulk")
    assert ratio == pytest.approx(math.sqrt(72.0 / 81.0) / 4.0, rel=1e-12)
    const = VertexField(box, np.ones(len(box)))
    assert sobolev_probe(const, 1, 1.0, "bulk") == 0.0


def test_sobolev_probe_random_ceiling():
    rng = np.random.default_rng(3)
    box = LatticeBox((0, 0), 16, 2)
    ceiling = 0.0
    for _ in range(200):
        f = VertexField(box, rng.standard_normal(len(box)))
        r = sobolev_probe(f, 16, 1.0, "bulk")
        assert math.isfinite(r)
        ceiling = max(ceiling, r)
    assert 0 < ceiling < 10.0


def test_sobolev_probe_sphere_mode():
    box = LatticeBox((0, 0, 0), 4, 3)
    rng = np.random.default_rng(4)
    f = VertexField(box, rng.standard_normal(len(box)))
    r = sobolev_probe(f, 4, 1.0, "sphere")
    assert math.isfinite(r) and r > 0
    with pytest.raises(DomainError):
        sobolev_probe(f, 4, 2.5, "sphere")


def _caloric_instance(seed, m=10, s2=24.0, burn=8.0, positive=True, law_seed=None):
    box = LatticeBox((0, 0), m, 2)
    omega = generate(EnvironmentLaw("pareto_mixture", seed=law_seed or seed), box)
    ring = box.boundary_indices()
    T = s2 + burn
    dt = 0.125
    steps = int(round(T / dt))
    cfg = SolverConfig(series_tol=1e-12, max_mass_leak=0.9, time_resolution=dt)
    rng = np.random.default_rng(seed)
    from scipy.ndimage import gaussian_filter

    kp = np.linspace(0, T, 7)
    knots = rng.standard_normal((7, len(box)))
    sm = np.asarray([gaussian_filter(k.reshape(box.shape), 1.4, mode="nearest").ravel()
                     for k in knots])
    if positive:
        sm = np.exp(0.6 * sm)
    grid = np.linspace(0, T, steps + 1)
    lateral = np.empty((steps + 1, len(ring)))
    for j, rj in enumerate(ring):
        lateral[:, j] = np.interp(grid, kp, sm[:, rj])
    u_full = solve_caloric_ibvp(omega, m, T, lateral, VertexField(box, sm[0]),
                                cfg, t0=-T)
    keep = u_full.time_window(-s2, 0.0)
    u = SpaceTimeField(u_full.times[keep], box, u_full.values[keep])
    return omega, u, box


def test_caccioppoli_constant_field():
    omega, u, box = _caloric_instance(5)
    uc = SpaceTimeField(u.times, box, np.full_like(u.values, 2.0))
    eta = affine_cutoff(box, 5, 10)
    res = caccioppoli_check(omega, uc, eta, 1.0, 6.0, 24.0)
    assert res.satisfied
    assert res.terms["gradient_energy"] == 0.0


def test_caccioppoli_cutoff_term_scaling():
    # with unit data the cutoff term carries exactly the 4 alpha^2 prefactor
    omega, u, box = _caloric_instance(6)
    ones = SpaceTimeField(u.times, box, np.ones_like(u.values))
    eta = affine_cutoff(box, 5, 10)
    r1 = caccioppoli_check(omega, ones, eta, 1.0, 6.0, 24.0)
    r2 = caccioppoli_check(omega, ones, eta, 2.0, 6.0, 24.0)
    assert r2.terms["cutoff_term"] == pytest.approx(4 * r1.terms["cutoff_term"], rel=1e-12)
    assert r1.terms["cutoff_term"] == pytest.approx(
        4.0 * r1.terms["cutoff_integral"], rel=1e-12)


def test_caccioppoli_random_instances():
    for seed in range(4):
        omega, u, box = _caloric_instance(seed + 100)
        prof, _ = optimal_radial_cutoff(
            5, 10, [sum(omega.value_at(tuple(sb.lowers[i]), int(sb.axes[i]))
                        for i in range(len(sb)))
                    for sb in (sphere_bonds(k, 2) for k in range(5, 10))])
        eta = radial_profile_field(box, 5, 10, prof)
        for alpha in (1.0, 2.0):
            res = caccioppoli_check(omega, u, eta, alpha, 6.0, 24.0)
            assert res.satisfied, (seed, alpha, res.margin, res.scale)


def test_caccioppoli_rejects_bad_input():
    omega, u, box = _caloric_instance(7)
    eta = affine_cutoff(box, 5, 10)
    neg = SpaceTimeField(u.times, box, u.values - 10 * np.max(u.values))
    with pytest.raises(DomainError):
        caccioppoli_check(omega, neg, eta, 1.0, 6.0, 24.0)
    ring_eta = VertexField(box, np.ones(len(box)))
    with pytest.raises(DomainError):
        caccioppoli_check(omega, u, ring_eta, 1.0, 6.0, 24.0)


def test_affine_cutoff_ratio_bound():
    box = LatticeBox((0, 0), 16, 2)
    eta = affine_cutoff(box, 8, 16)
    assert oscillation_ratio(eta) ** 2 <= 2.0 + 1e-12
    assert np.all(eta.values[box.boundary_indices()] == 0.0)
    inner = [box.index_of((i, j)) for i in (-8, 0, 8) for j in (-8, 0, 8)]
    assert np.all(eta.values[inner] == 1.0)


def test_log_caccioppoli():
    omega, u, box = _caloric_instance(8)
    eta = affine_cutoff(box, 6, 10)
    res = log_caccioppoli_check(omega, u, eta)
    assert res.satisfied
    const = SpaceTimeField(u.times, box, np.full_like(u.values, 1.5))
    resc = log_caccioppoli_check(omega, const, eta)
    assert resc.satisfied
    assert resc.terms["energy_max"] == 0.0


def test_log_caccioppoli_many_instances():
    for seed in range(3):
        omega, u, box = _caloric_instance(seed + 300)
        eta = affine_cutoff(box, 6, 10)
        res = log_caccioppoli_check(omega, u, eta)
        assert res.satisfied, (seed, res.margin, res.scale)


def test_appendix_hand_examples():
    # equal arguments give equality in the squared-gap inequality
    a, b, alpha = 2.0, 2.0, 1.7
    lhs = (a**alpha - b**alpha) ** 2
    rhs = abs(alpha**2 / (2 * alpha - 1)) * (a - b) * (a ** (2 * alpha - 1) - b ** (2 * alpha - 1))
    assert lhs == rhs == 0.0
    a, b, alpha = 4.0, 1.0, 2.0
    lhs = (a**alpha - b**alpha) ** 2
    rhs = abs(alpha**2 / (2 * alpha - 1)) * (a - b) * (a ** (2 * alpha - 1) - b ** (2 * alpha - 1))
    assert lhs == 225.0
    assert rhs == pytest.approx(252.0)
    assert lhs <= rhs


def test_appendix_property_suite():
    rep = appendix_property_tests(20000, seed=42)
    assert rep.total_violations == 0, rep.violations[:3]
    assert set(rep.checked) == {"signed_power_chain", "power_gap_product",
                                "odd_power_midpoint", "log_two_point"}
    csv = rep.to_csv()
    assert csv.startswith("inequality,")


def test_appendix_determinism():
    r1 = appendix_property_tests(500, seed=9)
    r2 = appendix_property_tests(500, seed=9)
    assert r1.checked == r2.checked and r1.total_violations == r2.total_violations
