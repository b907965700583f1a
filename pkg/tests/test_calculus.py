import math

import numpy as np
import pytest

from rcmlab.calculus import (BondField, SpaceTimeField, VertexField, apply_generator,
                             divergence, gradient, lp, measure_m, midpoint,
                             norm, oscillation, oscillation_on)
from rcmlab.environment import ConductanceField, EnvironmentLaw, generate
from rcmlab.errors import DomainError
from rcmlab.lattice import BondSet, LatticeBox, bonds_within


def _line(n):
    return LatticeBox((0,), n, 1)


def test_gradient_constant_and_linear():
    box = LatticeBox((0, 0), 2, 2)
    const = VertexField(box, np.full(len(box), 3.0))
    assert np.all(gradient(const).values == 0.0)
    linear = VertexField(box, box.vertices()[:, 0].astype(float))
    g = gradient(linear)
    axis0 = g.bonds.axes == 0
    assert np.all(g.values[axis0] == 1.0)
    assert np.all(g.values[~axis0] == 0.0)


def test_product_rule_hand_case():
    box = _line(2)
    f = VertexField(box, box.vertices()[:, 0].astype(float))
    bonds = bonds_within(box)
    i = bonds.index_of((0,), 0)
    fg = VertexField(box, f.values * f.values)
    lhs = gradient(fg).values[i]
    # upper-endpoint form and midpoint form agree with the hand value 1
    up_form = f.at((1,)) * gradient(f).values[i] + f.at((0,)) * gradient(f).values[i]
    mid = midpoint(f, bonds).values[i]
    mid_form = 2 * mid * gradient(f).values[i]
    assert lhs == pytest.approx(1.0, abs=0)
    assert up_form == pytest.approx(1.0, abs=0)
    assert mid_form == pytest.approx(1.0, abs=0)


def test_product_rule_random():
    rng = np.random.default_rng(7)
    for d in (1, 2, 3):
        box = LatticeBox((0,) * d, 3, d)
        bonds = bonds_within(box)
        f = VertexField(box, rng.standard_normal(len(box)))
        g = VertexField(box, rng.standard_normal(len(box)))
        fg = VertexField(box, f.values * g.values)
        lhs = gradient(fg, bonds).values
        up = f.values[[box.index_of(tuple(v)) for v in bonds.uppers()]]
        lo_g = g.values[[box.index_of(tuple(v)) for v in bonds.lowers]]
        rhs1 = up * gradient(g, bonds).values + lo_g * gradient(f, bonds).values
        rhs2 = (midpoint(f, bonds).values * gradient(g, bonds).values
                + midpoint(g, bonds).values * gradient(f, bonds).values)
        scale = np.max(np.abs(lhs)) + 1.0
        assert np.max(np.abs(lhs - rhs1)) <= 1e-12 * scale
        assert np.max(np.abs(lhs - rhs2)) <= 1e-12 * scale


def test_divergence_hand_cases():
    box = _line(4)
    bonds = bonds_within(box)
    # constant flux has zero divergence
    const = divergence(BondField(bonds, np.full(len(bonds), 2.5)),
                       LatticeBox((0,), 3, 1), missing_zero=False)
    assert np.all(const.values == 0.0)
    # flux equal to the gradient of x^2 has divergence -2 away from the edge
    vals = np.asarray([2 * int(bonds.lowers[i][0]) + 1 for i in range(len(bonds))],
                      dtype=float)
    div = divergence(BondField(bonds, vals), LatticeBox((0,), 3, 1))
    assert np.all(div.values == -2.0)
    # indicator of the bond {0,1}
    ind = np.zeros(len(bonds))
    ind[bonds.index_of((0,), 0)] = 1.0
    div2 = divergence(BondField(bonds, ind), LatticeBox((0,), 3, 1))
    arr = {int(v[0]): div2.values[i]
           for i, v in enumerate(LatticeBox((0,), 3, 1).vertices())}
    assert arr[1] == 1.0 and arr[0] == -1.0
    assert all(arr[k] == 0.0 for k in arr if k not in (0, 1))


def test_divergence_missing_bond_errors():
    box = _line(2)
    bonds = bonds_within(box)
    F = BondField(bonds, np.ones(len(bonds)))
    with pytest.raises(DomainError):
        divergence(F, box)  # edge vertices lack outside bonds
    ok = divergence(F, box, missing_zero=True)
    assert ok.values[0] != 0.0  # edge sees only the one-sided flux


def test_apply_generator_hand_cases():
    box = _line(5)
    one = generate(EnvironmentLaw("constant", c=1.0), box)
    u_sq = VertexField(box, box.vertices()[:, 0].astype(float) ** 2)
    for x in (-3, 0, 2):
        assert apply_generator(one, u_sq, (x,)) == pytest.approx(2.0, abs=1e-14)
    delta = np.zeros(len(box))
    delta[box.index_of((0,))] = 1.0
    u_d = VertexField(box, delta)
    assert apply_generator(one, u_d, (0,)) == -2.0
    assert apply_generator(one, u_d, (1,)) == 1.0
    assert apply_generator(one, u_d, (-1,)) == 1.0
    const = VertexField(box, np.full(len(box), 9.0))
    assert apply_generator(one, const, (2,)) == 0.0
    with pytest.raises(DomainError):
        apply_generator(one, u_sq, (5,))


def test_divergence_form_identity():
    # generator application equals minus the divergence of the weighted gradient
    rng = np.random.default_rng(3)
    for d in (1, 2, 3):
        box = LatticeBox((0,) * d, 3, d)
        omega = generate(EnvironmentLaw("pareto_mixture", seed=int(rng.integers(1 << 30))), box)
        u = VertexField(box, rng.standard_normal(len(box)))
        grad = gradient(u, omega.bonds)
        flux = BondField(omega.bonds, omega.values * grad.values)
        inner = LatticeBox((0,) * d, 2, d)
        div = divergence(flux, inner)
        for i, v in enumerate(inner.vertices()):
            gen = apply_generator(omega, u, tuple(v))
            assert abs(gen + div.values[i]) <= 1e-12 * max(1.0, abs(gen))


def test_summation_by_parts_random():
    rng = np.random.default_rng(11)
    for d in (1, 2, 3):
        box = LatticeBox((0,) * d, 12 if d < 3 else 6, d)
        bonds = bonds_within(box)
        per_d = 34 if d < 3 else 32
        for _ in range(per_d):
            fv = rng.standard_normal(len(box))
            support = box.interior_mask()
            # force compact support: zero outside the interior
            fv[~support] = 0.0
            f = VertexField(box, fv)
            Fv = rng.standard_normal(len(bonds))
            F = BondField(bonds, Fv)
            lhs = float(np.sum(gradient(f, bonds).values * Fv))
            div = divergence(F, box, missing_zero=True)
            rhs = float(np.sum(fv * div.values))
            scale = float(np.sum(np.abs(gradient(f, bonds).values * Fv))) + 1.0
            assert abs(lhs - rhs) <= 1e-12 * scale


def test_norms():
    box = _line(1)
    const = VertexField(box, np.ones(3))
    for p in (0.5, 1, 2, 7.5):
        assert norm(const, p, normalized=True) == pytest.approx(1.0, rel=1e-15)
    delta = VertexField(box, np.asarray([0.0, 1.0, 0.0]))
    assert norm(delta, 2, normalized=True) == pytest.approx((1 / 3) ** 0.5, rel=1e-12)
    assert norm(delta, math.inf, normalized=True) == 1.0
    assert norm(delta, math.inf, normalized=False) == 1.0
    with pytest.raises(DomainError):
        lp(np.asarray([]), 2)


def test_norm_monotone_in_p_when_normalized():
    rng = np.random.default_rng(5)
    vals = rng.random(40) + 0.1
    ps = [0.5, 1.0, 1.5, 2.0, 4.0, 8.0]
    norms = [lp(vals, p, normalized=True) for p in ps]
    for a, b in zip(norms, norms[1:]):
        assert a <= b + 1e-12


def test_oscillation_and_measure():
    box = LatticeBox((0,), 2, 1)
    times = np.linspace(0.0, 1.0, 5)
    vals = np.tile(box.vertices()[:, 0].astype(float), (5, 1))
    u = SpaceTimeField(times, box, vals)
    assert oscillation_on(u) == 4.0
    assert oscillation([3.0]) == 0.0
    const = VertexField(box, np.full(5, 1.25))
    assert oscillation_on(const) == 0.0
    assert measure_m(2.0, 9) == 18.0
    with pytest.raises(DomainError):
        oscillation(np.asarray([]))
