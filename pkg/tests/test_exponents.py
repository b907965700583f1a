import math

import numpy as np
import pytest

from rcmlab.environment import EnvironmentLaw, generate
from rcmlab.errors import DomainError
from rcmlab.exponents import (cbar, constant_C, derive_exponents, g_eval,
                              g_eval_array, g_prime, gaussian_kernel,
                              lambda_pq, weak_harnack_constants)
from rcmlab.lattice import LatticeBox

from oracles import gaussian_mass_midpoint


def test_hand_values_d2():
    e = derive_exponents(2, 2, 2)
    assert e.delta1 == pytest.approx(1.0, abs=1e-15)
    assert e.delta2 == pytest.approx(0.5, abs=1e-15)
    assert e.theta == pytest.approx(2.0, abs=1e-15)
    assert e.nu == pytest.approx(0.75, abs=1e-15)
    assert e.gamma == pytest.approx(2.75, abs=1e-15)
    assert e.eps == pytest.approx(0.25, abs=1e-15)
    assert e.Q == pytest.approx(4.0, abs=1e-15)
    # interpolation weight pinned by (1 + eps) * ell = delta2
    assert (1 + e.eps) * e.ell == pytest.approx(e.delta2, abs=1e-12)
    assert e.ell == pytest.approx(0.4, abs=1e-12)


def test_hand_values_d3():
    e = derive_exponents(3, 4, 4)
    assert e.delta1 == pytest.approx(0.5, abs=1e-15)
    assert e.delta2 == pytest.approx(5 / 12, abs=1e-15)
    assert e.theta == pytest.approx(3.0, abs=1e-15)
    assert e.nu == pytest.approx(13 / 18, abs=1e-14)
    assert e.gamma == pytest.approx(2 + 0.25 + 1 / 12, abs=1e-14)


def test_boundary_rejection():
    with pytest.raises(DomainError):
        derive_exponents(3, 2, 2)  # 1/p + 1/q equals 2/(d-1)
    with pytest.raises(DomainError):
        derive_exponents(2, 1.0, 4)
    with pytest.raises(DomainError):
        derive_exponents(2, 4, 1.0)  # q = d/2
    with pytest.raises(DomainError):
        derive_exponents(1, 4, 4)
    with pytest.raises(DomainError):
        derive_exponents(2, math.inf, 4)


def _random_admissible(rng, d):
    while True:
        p = 1.0 + rng.random() * 9.0
        q = d / 2 + rng.random() * 9.0
        if 1 / p + 1 / q < 2 / (d - 1) - 1e-9 and q > d / 2 + 1e-9 and p > 1 + 1e-9:
            return p, q


def test_exponent_invariants_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        d = int(rng.integers(2, 4))
        p, q = _random_admissible(rng, d)
        e = derive_exponents(d, p, q)
        assert e.delta1 > 0 and e.delta2 > 0
        assert 0 < e.nu < 1
        assert e.gamma > 2 and e.Q > 2 and e.theta > 1
        assert abs((1 + e.eps) * e.ell - e.delta2) <= 1e-12
        lhs = e.nu * e.Q - 2 * (1 + e.eps)
        rhs = 2 * e.eps * (1 / (1 - e.delta2) - 1)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))
        # interpolation exponent chain
        a = (e.theta - e.nu) / (e.theta - 1)
        b = p / (p - 1)
        assert 0 < a < b
        if d >= 3:
            c = p * e.nu / (p - e.theta)
            assert b < c
        # reduction used to order the chain
        assert e.theta - e.delta2 * (p - 1) > 0
        # sphere Sobolev exponent lies in [1, 2)
        assert 1.0 - 1e-12 <= e.p_sphere < 2.0


def test_constant_C_values():
    e = derive_exponents(2, 2, 2)  # nu = 0.75
    assert constant_C(1.0, 1.0, 1.0, e) == pytest.approx(2**2.5, rel=1e-12)
    assert constant_C(1.0, 0.001, 1.0, e) == 1.0
    with pytest.raises(DomainError):
        constant_C(1.0, 1.0, 0.0, e)


def test_constant_C_tau_doubling():
    # doubling tau at most multiplies the constant by sqrt(2)
    rng = np.random.default_rng(1)
    for _ in range(200):
        d = int(rng.integers(2, 4))
        p, q = _random_admissible(rng, d)
        e = derive_exponents(d, p, q)
        np_ = math.exp(rng.normal())
        nq = math.exp(rng.normal())
        assert constant_C(np_, nq, 2.0, e) <= math.sqrt(2.0) * constant_C(np_, nq, 1.0, e) + 1e-12


def test_lambda_pq():
    assert lambda_pq(2.0, 3.0) == 6.0
    assert lambda_pq(1.0, 1.0) == 1.0
    rng = np.random.default_rng(2)
    from rcmlab.calculus import lp

    for i in range(100):
        box = LatticeBox((0, 0), 4, 2)
        f = generate(EnvironmentLaw("pareto_mixture", seed=int(rng.integers(1 << 30))), box)
        lam = lambda_pq(lp(f.values, 2, normalized=True),
                        lp(1 / f.values, 2, normalized=True))
        assert lam >= 1.0 - 1e-12


def test_g_function():
    c = cbar()
    assert 0.25 <= c <= 1 / 3
    assert abs(2 * c * math.log(1 / c) - (1 - c)) <= 1e-12
    assert abs(c - 0.28466) <= 1e-4
    assert g_eval(1.0) == 0.0
    assert g_eval(5.0) == 0.0
    assert g_eval(0.1) == pytest.approx(2.3025851, abs=1e-6)
    with pytest.raises(DomainError):
        g_eval(0.0)
    # continuity and C^1 matching at the regularization point
    eps = 1e-9
    assert abs(g_eval(c - eps) - g_eval(c + eps)) <= 1e-8
    assert abs(g_prime(c - eps) - g_prime(c + eps)) <= 1e-7


def test_g_grid_properties():
    zs = np.linspace(1e-4, 2.0, 10**4)
    g = g_eval_array(zs)
    # non-increasing and convex on the grid
    dg = np.diff(g)
    assert np.all(dg <= 1e-15)
    assert np.all(np.diff(dg) >= -1e-9)
    # derivative bounds away from the two kink points
    c = cbar()
    h = zs[1] - zs[0]
    mid = zs[1:-1]
    gp = (g[2:] - g[:-2]) / (2 * h)
    gpp = (g[2:] - 2 * g[1:-1] + g[:-2]) / h**2
    away = (np.abs(mid - c) > 2 * h) & (np.abs(mid - 1.0) > 2 * h)
    assert np.all((gp[away] ** 2) / 3.0 <= gpp[away] + 1e-6)
    assert np.all(-mid[away] * gp[away] <= 4.0 / 3.0 + 1e-6)


def test_weak_harnack_constants():
    e = derive_exponents(2, 2, 2)
    h, _ = weak_harnack_constants(2, 0.5, 0.5, 1.0, e, 1.0, 0.0, 1.0)
    assert h == pytest.approx(math.exp(-17.0), rel=1e-12)
    h2, _ = weak_harnack_constants(2, 0.5, 0.5, 2.0, e, 1.0, 0.0, 1.0)
    assert h2 < h
    _, gamma = weak_harnack_constants(2, 0.5, 0.5, 0.0, e, 0.0, 0.0, 1.0, eps_level=1.0)
    assert gamma == pytest.approx(math.exp(-1.0), rel=1e-12)
    with pytest.raises(DomainError):
        weak_harnack_constants(2, 0.5, 1.0, 1.0, e, 1.0, 0.0, 1.0)


def test_gaussian_kernel_values():
    I2 = np.eye(2)
    assert gaussian_kernel(1.0, (0.0, 0.0), I2) == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    assert gaussian_kernel(1.0, (0.0, 0.0), 2 * I2) == pytest.approx(1 / (4 * math.pi), rel=1e-12)
    assert gaussian_kernel(1.0, (1.0, 0.0), I2) == pytest.approx(
        math.exp(-0.5) / (2 * math.pi), rel=1e-12)
    with pytest.raises(DomainError):
        gaussian_kernel(1.0, (0.0, 0.0), np.zeros((2, 2)))


def test_gaussian_kernel_mass():
    for S in (np.eye(2), np.asarray([[2.0, 0.3], [0.3, 1.0]])):
        for t in (1.0, 4.0):
            mass = gaussian_mass_midpoint(S, t, 8 * math.sqrt(t * np.max(S)), 400)
            assert abs(mass - 1.0) <= 1e-6
