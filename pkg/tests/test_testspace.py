import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genfun.errors import InvalidArgument, UnsupportedOrder
from genfun.testspace import (derivative, linear_combination, make_mollifier,
                              make_partition_of_unity, make_poly_bump, mixed_partial,
                              tensor_product)


def central_fd(f, x, h=1e-3):
    # sixth-order central difference
    c = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
    return sum(ci * f(x + (i - 3) * h) for i, ci in enumerate(c)) / h


def test_poly_bump_values():
    psi = make_poly_bump(0.0, 1.0, p=2)
    assert psi(0.0) == 1.0
    assert derivative(psi, 1)(0.0) == 0.0
    assert psi(1.5) == 0.0
    assert psi.smoothness_order == 1


def test_poly_bump_rejects_bad_radius():
    with pytest.raises(InvalidArgument):
        make_poly_bump(0.0, 0.0)
    with pytest.raises(InvalidArgument):
        make_poly_bump(0.0, -1.0)


def test_mollifier_values():
    psi = make_mollifier(0.0, 1.0)
    assert psi(0.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert derivative(psi, 1)(0.0) == pytest.approx(0.0, abs=1e-15)
    for k in range(4):
        assert derivative(psi, k)(1.0) == 0.0
        assert derivative(psi, k)(-1.0) == 0.0


def test_derivative_matches_finite_difference():
    psi = make_poly_bump(0.0, 1.0, p=3)
    d1 = derivative(psi, 1)
    assert d1(0.0) == 0.0
    assert d1(0.5) == pytest.approx(central_fd(psi, 0.5), abs=1e-8)


def test_order_exceeded():
    psi = make_poly_bump(0.0, 1.0, p=3)
    with pytest.raises(UnsupportedOrder):
        derivative(psi, 3)


@pytest.mark.parametrize("make", [lambda: make_poly_bump(0.3, 0.4, 8),
                                  lambda: make_mollifier(0.3, 0.4)])
def test_derivatives_against_finite_differences(make):
    psi = make()
    xs = np.linspace(0.0, 0.6, 23)[1:-1]
    for k in range(4):
        d, dn = derivative(psi, k), derivative(psi, k + 1)
        fd = central_fd(d, xs, h=1e-3)
        exact = dn(xs)
        # relative to the derivative's scale, with an absolute floor
        assert np.all(np.abs(fd - exact) <= 1e-6 * np.max(np.abs(exact)) + 1e-10)


def test_support_containment():
    psi = make_poly_bump([0.2, 0.5], [0.1, 0.3])
    outside = np.array([[0.05, 0.5], [0.35, 0.5], [0.2, 0.1], [0.2, 0.9], [1.0, 1.0]])
    for a in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1)]:
        assert np.all(psi.deriv(a, outside) == 0.0)


def test_derivative_of_zero_index_is_identity():
    psi = make_mollifier(0.5, 0.2)
    x = np.linspace(0.2, 0.8, 31)
    np.testing.assert_array_equal(derivative(psi, 0)(x), psi(x))


@given(st.integers(0, 3), st.integers(0, 3), st.floats(-0.9, 0.9))
def test_derivative_composes(a, b, x):
    psi = make_poly_bump(0.0, 1.0, p=8)
    lhs = derivative(derivative(psi, a), b)(x)
    rhs = derivative(psi, a + b)(x)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_tensor_product():
    p1, p2 = make_poly_bump(0.2, 0.1), make_poly_bump(0.7, 0.2)
    t = tensor_product([p1, p2])
    assert t([0.2, 0.7]) == 1.0
    assert t([0.5, 0.7]) == 0.0
    a, b = 0.23, 0.61
    mixed = t.deriv((1, 1), [a, b])
    assert mixed == pytest.approx(derivative(p1, 1)(a) * derivative(p2, 1)(b), abs=1e-12)
    assert mixed_partial(t)([a, b]) == pytest.approx(mixed, abs=0)
    with pytest.raises(InvalidArgument):
        tensor_product([])


def test_linear_combination():
    p1, p2 = make_poly_bump(0.3, 0.2), make_poly_bump(0.6, 0.3)
    c = linear_combination([2.0, -0.5], [p1, p2])
    x = np.linspace(0, 1, 41)
    np.testing.assert_allclose(c(x), 2 * p1(x) - 0.5 * p2(x), atol=1e-15)
    assert c.poly_degree is None  # different supports: only piecewise polynomial


def test_partition_of_unity_sums_to_one():
    pu = make_partition_of_unity(-1.0, 2.0, 0.25)
    rng = np.random.default_rng(3)
    ys = rng.uniform(-1.0, 2.0, 1000)
    np.testing.assert_allclose(pu(ys), 1.0, atol=1e-10)
    # outside the declared region the lattice continues
    np.testing.assert_allclose(pu(np.array([-7.3, 11.1])), 1.0, atol=1e-10)


def test_partition_members_nonnegative_and_local():
    pu = make_partition_of_unity(0.0, 1.0, 0.5)
    ys = np.linspace(-2, 3, 201)
    for y in ys:
        cover = pu.covering(y)
        assert len(cover) <= 2
        assert all(pu.member(v)(y) >= 0 for v in cover)
    # a lattice node is covered by exactly one member, which equals 1 there
    assert pu.covering(0.5) == [(1,)]
    assert pu.member((1,))(0.5) == pytest.approx(1.0, abs=1e-15)


def test_partition_blocks_are_shells():
    pu = make_partition_of_unity(0.0, 1.0, 0.5)
    it = pu.blocks()
    b0, b1, b2 = next(it), next(it), next(it)
    assert b0 == [(0,), (1,), (2,)]
    assert sorted(b1) == [(-1,), (3,)]
    assert sorted(b2) == [(-2,), (4,)]
