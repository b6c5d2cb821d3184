import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genfun.errors import IntegrandError, InvalidArgument
from genfun.kernels import epanechnikov
from genfun.models import atom_mixture_model, cantor_model, uniform_model, beta_model
from genfun.quadrature import (QuadratureSpec, cantor_leaves, composite_nodes, integrate_box,
                               integrate_empirical, integrate_empirical_product,
                               integrate_stieltjes)
from genfun.testspace import make_poly_bump


def test_simple_boxes():
    assert integrate_box(lambda p: p[:, 0], [0], [1]).value == pytest.approx(0.5, abs=1e-12)
    K = epanechnikov()
    assert integrate_box(lambda p: K(p[:, 0]), [-1], [1]).value == pytest.approx(1.0, abs=1e-10)
    r = integrate_box(lambda p: p[:, 0] * p[:, 1], [0, 0], [1, 1])
    assert r.value == pytest.approx(0.25, abs=1e-12)
    assert r.error < 1e-12


@given(st.integers(0, 31), st.floats(-2, 2), st.floats(0.1, 3))
def test_polynomial_exactness(deg, lo, width):
    hi = lo + width
    exact = (hi ** (deg + 1) - lo ** (deg + 1)) / (deg + 1)
    got = integrate_box(lambda p: p[:, 0] ** deg, [lo], [hi]).value
    assert got == pytest.approx(exact, rel=1e-13, abs=1e-13)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b):
    g = lambda p: np.sin(3 * p[:, 0])
    h = lambda p: np.exp(p[:, 0])
    lhs = integrate_box(lambda p: a * g(p) + b * h(p), [0], [1]).value
    rhs = a * integrate_box(g, [0], [1]).value + b * integrate_box(h, [0], [1]).value
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_breakpoints_restore_accuracy():
    f = lambda p: np.abs(p[:, 0] - 0.3)
    exact = 0.5 * 0.3**2 + 0.5 * 0.7**2
    got = integrate_box(f, [0], [1], breakpoints=[[0.3]]).value
    assert got == pytest.approx(exact, abs=1e-14)


def test_errors():
    with pytest.raises(IntegrandError) as exc:
        integrate_box(lambda p: np.where(p[:, 0] > 0.5, np.nan, 1.0), [0], [1])
    assert exc.value.point is not None
    with pytest.raises(InvalidArgument):
        integrate_box(lambda p: p[:, 0], [0, 0, 0, 0], [1, 1, 1, 1])
    with pytest.raises(InvalidArgument):
        integrate_empirical(lambda p: p[:, 0], np.empty((0, 1)))


def test_stieltjes_masses_and_means():
    for m in [uniform_model(1), beta_model(), cantor_model(),
              atom_mixture_model([0.5], [1.0], uniform_model(1), 1.0)]:
        assert integrate_stieltjes(lambda p: np.ones(p.shape[0]), m) == pytest.approx(1, abs=1e-10)
    assert integrate_stieltjes(lambda p: p[:, 0], cantor_model()) == pytest.approx(0.5, abs=1e-12)
    atom = atom_mixture_model([0.5], [1.0], uniform_model(1), 1.0)
    assert integrate_stieltjes(lambda p: p[:, 0], atom) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(IntegrandError):
        integrate_stieltjes(lambda p: np.where(p[:, 0] > 0.5, np.inf, 0.0), uniform_model(1))


def test_cantor_rule_against_monte_carlo():
    g = lambda p: np.cos(4 * p[:, 0]) + p[:, 0] ** 2
    exact = integrate_stieltjes(g, cantor_model())
    x = cantor_model().sample(10**6, 11).points
    vals = g(x)
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - exact) < 4 * se
    assert cantor_leaves(3).size == 8


def test_empirical():
    assert integrate_empirical(lambda p: np.ones(p.shape[0]), np.array([[0.2], [0.4]])) == 1.0
    assert integrate_empirical(lambda p: p[:, 0], np.array([[0.0], [1.0]])) == 0.5
    psi = make_poly_bump(0.5, 0.3)
    x = uniform_model(1).sample(1000, 5).points
    vals = psi(x[:, 0])
    se = vals.std(ddof=1) / np.sqrt(1000)
    exact = integrate_box(lambda p: psi(p), [0.2], [0.8]).value
    assert abs(integrate_empirical(lambda p: psi(p), x) - exact) < 4 * se
    pts = np.array([[0.0, 1.0], [1.0, 3.0]])
    # product of marginal empirical measures: mean over all (x1, x2) combinations
    assert integrate_empirical_product(lambda p: p[:, 0] * p[:, 1], pts) == pytest.approx(1.0)


def test_composite_nodes_align_to_breakpoints():
    x, w = composite_nodes(0.0, 1.0, 2, 4, breakpoints=[0.25])
    assert w.sum() == pytest.approx(1.0)
    assert x.size == 2 * 2 * 4
    assert np.sum(x < 0.25) == 8
