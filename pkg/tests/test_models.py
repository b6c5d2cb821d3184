import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

from genfun.errors import AssumptionViolation, InvalidArgument
from genfun.models import (Sample, atom_mixture_model, beta_model, cantor_model,
                           independent_product_model, normal_model, regression_model,
                           sample_from_csv, sample_to_csv, uniform_model)
from genfun.quadrature import integrate_box

KS_CRIT_1PCT = 1.6276  # asymptotic Kolmogorov 1% point of sqrt(n) * D


def ks_distance(x, cdf):
    """Two-sided sup |F_n - F| that also handles atoms (left limits via nextafter)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    right = np.searchsorted(x, x, side="right") / n
    left = np.searchsorted(x, x, side="left") / n
    F = np.asarray(cdf(x), dtype=float)
    F_left = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=float)
    return max(np.max(np.abs(right - F)), np.max(np.abs(left - F_left)))


UNIVARIATE = [uniform_model(1), beta_model(2, 2), normal_model(0.3, 2.0), cantor_model(),
              atom_mixture_model([0.25, 0.5], [0.4, 0.6], uniform_model(1), 0.3)]


@pytest.mark.parametrize("model", UNIVARIATE, ids=lambda m: m.id)
def test_sampler_matches_cdf(model):
    x = model.sample(10**5, 2024).points[:, 0]
    assert math.sqrt(x.size) * ks_distance(x, model.cdf) < KS_CRIT_1PCT


@pytest.mark.parametrize("model", UNIVARIATE, ids=lambda m: m.id)
def test_cdf_monotone_with_limits(model):
    grid = np.linspace(-20, 20, 1000)
    F = model.cdf(grid)
    assert np.all(np.diff(F) >= -1e-15)
    assert F[0] == pytest.approx(0.0, abs=1e-9) and F[-1] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("model", [uniform_model(1), beta_model(2, 2), beta_model(3, 1.5),
                                   normal_model()], ids=lambda m: m.id)
def test_cdf_from_density(model):
    lo = float(model.support_lo[0])
    for t in [0.1, 0.37, 0.8]:
        t = lo + t * (float(model.support_hi[0]) - lo)
        got = integrate_box(lambda p: model.density(p[:, 0]), [lo], [t]).value
        assert got == pytest.approx(float(model.cdf(t)), abs=1e-6)


def test_seed_determinism():
    for m in UNIVARIATE:
        a, b = m.sample(500, 9), m.sample(500, 9)
        np.testing.assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, m.sample(500, 10).points)
        assert not np.array_equal(a.points, m.sample(500, 9, stream=(1,)).points)


def test_uniform_examples():
    m = uniform_model(1)
    assert m.cdf(0.3) == 0.3
    assert m.density(0.5) == 1.0


def test_atom_mixture_examples():
    pure = atom_mixture_model([0.5], [1.0], uniform_model(1), 1.0)
    assert pure.cdf(0.5) - pure.cdf(np.nextafter(0.5, 0)) == 1.0
    none = atom_mixture_model([0.5], [1.0], beta_model(), 0.0)
    t = np.linspace(0, 1, 17)
    np.testing.assert_allclose(none.cdf(t), beta_model().cdf(t), atol=0)
    half = atom_mixture_model([0.5], [1.0], uniform_model(1), 0.5)
    assert half.cdf(0.75) == pytest.approx(0.875, abs=1e-15)
    with pytest.raises(InvalidArgument):
        atom_mixture_model([0.5, 0.6], [0.5, 0.4], uniform_model(1), 0.5)


def test_cantor_examples():
    m = cantor_model()
    assert m.cdf(1.0 / 3.0) == pytest.approx(0.5, abs=1e-15)
    assert m.cdf(0.25) == pytest.approx(1.0 / 3.0, abs=1e-15)  # 1/4 = 0.0202..._3
    x = m.sample(2000, 4).points[:, 0]
    np.testing.assert_allclose(m.cdf(x) + m.cdf(1.0 - x), 1.0, atol=1e-12)
    big = m.sample(10**5, 5).points[:, 0]
    se = big.std(ddof=1) / math.sqrt(big.size)
    assert abs(big.mean() - 0.5) < 3 * se
    assert m.dimension == pytest.approx(math.log(2) / math.log(3))
    # quantiles land in the set and invert the cdf
    p = np.array([0.1, 0.3, 0.5, 0.77])
    np.testing.assert_allclose(m.cdf(m.ppf(p)), p, atol=1e-9)


def test_regression_examples():
    m0 = regression_model(uniform_model(1), lambda x: 0.0 * x, 1.0)
    assert m0.joint_cdf([[1.0]], [0.0])[0] == pytest.approx(0.5, abs=1e-12)
    deg = regression_model(uniform_model(1), lambda x: x, 0.0)
    s = deg.sample(1000, 1).points
    np.testing.assert_array_equal(s[:, 0], s[:, 1])
    lin = regression_model(uniform_model(1), Polynomial([1.0, 2.0]), 1.0)
    y = lin.sample(10**5, 3).points[:, 1]
    assert abs(y.mean() - 2.0) < 3 * y.std(ddof=1) / math.sqrt(y.size)
    with pytest.raises(InvalidArgument):
        regression_model(uniform_model(1), lambda x: x, -1.0)
    with pytest.raises(AssumptionViolation):
        regression_model(atom_mixture_model([0.5], [1.0], uniform_model(1), 0.5), lambda x: x, 1.0)


def test_regression_joint_cdf_matches_monte_carlo():
    m = regression_model(beta_model(2, 2), Polynomial([0.0, 2.0]), 0.5)
    pts = m.sample(2 * 10**5, 8).points
    for x0, y0 in [(0.3, 0.2), (0.6, 1.4), (0.9, 0.0)]:
        emp = np.mean((pts[:, 0] <= x0) & (pts[:, 1] <= y0))
        se = math.sqrt(emp * (1 - emp) / pts.shape[0])
        assert abs(m.joint_cdf([[x0]], [y0])[0] - emp) < 4 * se
    # marginal of x is the x model
    assert math.sqrt(pts.shape[0]) * ks_distance(pts[:, 0], beta_model().cdf) < KS_CRIT_1PCT


def test_product_model():
    m = independent_product_model(beta_model(2, 2), normal_model())
    a = np.array([0.1, 0.5, 0.9])
    b = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(m.joint_cdf(a[:, None], b),
                               beta_model().cdf(a) * normal_model().cdf(b), atol=1e-15)
    # the copula of independent margins is a * b
    u = np.array([0.2, 0.5, 0.7])
    np.testing.assert_allclose(m.copula_cdf(u, normal_model().ppf(u)), u * u, atol=1e-12)
    np.testing.assert_allclose(m.cond_cdf(a, b), normal_model().cdf(b), atol=0)


@given(st.floats(0.01, 0.99), st.floats(-3, 3))
def test_copula_cdf_consistent(a, y):
    m = regression_model(beta_model(2, 2), Polynomial([0.0, 2.0]), 0.5)
    x = float(beta_model().ppf(a))
    assert m.copula_cdf([a], [y])[0] == pytest.approx(m.joint_cdf([[x]], [y])[0], abs=1e-14)


def test_sample_csv_roundtrip(tmp_path):
    s = regression_model(uniform_model(1), lambda x: x, 1.0).sample(50, 3)
    path = tmp_path / "s.csv"
    sample_to_csv(s, path)
    back = sample_from_csv(path)
    np.testing.assert_array_equal(back.points, s.points)
    with pytest.raises(InvalidArgument):
        Sample(np.array([[np.nan]]), 0, "bad")
