import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from rwrs.scenery import (
    BoundedUniformScenery,
    CutScenery,
    GaussianScenery,
    SceneryModel,
    ShiftedScenery,
    WeibullTailScenery,
    cumulant,
    kasahara_dual,
    model_from_config,
    rescaled_field,
    sample_field,
)


def test_kasahara_dual_gaussian_tail():
    Dt, p = kasahara_dual(1.0, 2.0)
    assert Dt == pytest.approx(0.25, rel=1e-12)
    assert p == 2.0


@given(st.floats(0.1, 5.0), st.floats(1.2, 6.0))
def test_kasahara_dual_exponents_conjugate(D, q):
    Dt, p = kasahara_dual(D, q)
    assert 1 / p + 1 / q == pytest.approx(1.0)
    assert Dt > 0


def test_kasahara_dual_rejects_bad_input():
    with pytest.raises(ValueError):
        kasahara_dual(0.0, 2.0)
    with pytest.raises(ValueError):
        kasahara_dual(1.0, 1.0)


def _generic(model, fn, t):
    # the quadrature path of the base class, bypassing closed forms
    return getattr(SceneryModel, fn)(model, t)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 4.0])
def test_numeric_cumulant_matches_gaussian_closed_form(t):
    g = GaussianScenery(1.7)
    for fn in ("H", "dH", "d2H"):
        assert _generic(g, fn, t) == pytest.approx(getattr(g, fn)(t), rel=1e-7, abs=1e-10)


@pytest.mark.parametrize("t", [0.01, 0.5, 3.0, 40.0])
def test_numeric_cumulant_matches_uniform_closed_form(t):
    u = BoundedUniformScenery(-1.0, 2.0)
    for fn in ("H", "dH", "d2H"):
        assert _generic(u, fn, t) == pytest.approx(getattr(u, fn)(t), rel=1e-7, abs=1e-10)


def test_cumulant_vanishes_at_zero():
    for m in (GaussianScenery(), BoundedUniformScenery(-1, 1), WeibullTailScenery(1.0, 3.0)):
        assert cumulant(m, 0.0) == 0.0


def test_weibull_cumulant_growth_matches_dual():
    m = WeibullTailScenery(1.0, 2.0)
    Dt, p = kasahara_dual(1.0, 2.0)
    ratio = m.H(1000.0) / 1000.0**p
    assert ratio == pytest.approx(Dt, rel=1e-3)


def test_weibull_sampler_tail(rng):
    m = WeibullTailScenery(0.5, 3.0)
    y = m.ppf(rng.random(200000))
    r = 1.2
    assert np.mean(y > r) == pytest.approx(0.5 * math.exp(-0.5 * r**3), abs=4e-3)
    assert abs(np.mean(y)) < 0.01


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_uniform_cumulant_convex(s, t):
    m = BoundedUniformScenery(-1.0, 1.0)
    mid = 0.5 * (s + t)
    assert m.H(mid) <= 0.5 * (m.H(s) + m.H(t)) + 1e-12
    assert m.d2H(mid) >= 0


def test_uniform_mean_slope_saturates():
    m = BoundedUniformScenery(-1.0, 1.0)
    assert m.dH(1e6) == pytest.approx(1.0, abs=1e-5)
    assert m.dH(0.0) == pytest.approx(0.0, abs=1e-12)


def test_shifted_model():
    m = ShiftedScenery(GaussianScenery(1.0), 0.5)
    assert m.H(2.0) == pytest.approx(2.0 + 1.0)
    assert m.mean == pytest.approx(0.5)


def test_cut_scenery_cumulant_decreases_with_level():
    base = GaussianScenery(1.0)
    t = 1.5
    vals = [CutScenery(base, M).floor().H(t) for M in (0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(base.H(t), rel=1e-3)


def test_cut_decomposition():
    c = CutScenery(GaussianScenery(), 1.0)
    y = np.array([-3.0, -0.5, 0.7, 2.5])
    np.testing.assert_allclose(c.lower(y), [-1.0, -0.5, 0.7, 1.0])
    np.testing.assert_allclose(c.upper(y), [0.0, 0.0, 0.0, 1.5])


def test_conditioned_sampler_respects_floor(rng):
    m = CutScenery(GaussianScenery(), 0.5).conditioned()
    y = m.ppf(rng.random(10000))
    assert y.min() >= -0.5 - 1e-12


def test_sample_field_is_keyed_by_site():
    m = GaussianScenery()
    a = sample_field(m, [(0, 0), (1, 2), (-3, 4)], seed=5)
    b = sample_field(m, [(-3, 4), (0, 0)], seed=5)
    assert a[(0, 0)] == b[(0, 0)] and a[(-3, 4)] == b[(-3, 4)]
    c = sample_field(m, [(0, 0)], seed=5, replicate=1)
    assert c[(0, 0)] != a[(0, 0)]
    with pytest.raises(ValueError):
        sample_field(m, [(0, 0), (0, 0)], seed=1)


def test_sample_field_marginal_is_gaussian():
    m = GaussianScenery(2.0)
    sites = [(i,) for i in range(20000)]
    v = np.array(list(sample_field(m, sites, seed=11).values()))
    assert stats.kstest(v / 2.0, "norm").pvalue > 1e-3


def test_rescaled_field():
    f = rescaled_field(GaussianScenery(), alpha=4.0, b=2.0, R=1.0, seed=3)
    x = np.array([[0.3]])
    direct = sample_field(GaussianScenery(), [(1,)], seed=3)[(1,)] / 2.0
    assert f(x)[0] == pytest.approx(direct)
    with pytest.raises(ValueError):
        f(np.array([[1.5]]))
    with pytest.raises(ValueError):
        rescaled_field(GaussianScenery(), alpha=0.5, b=2.0, R=1.0, seed=3)


def test_model_from_config():
    m = model_from_config({"family": "shifted", "params": {"base": {"family": "gaussian"}, "shift": 1.0}})
    assert m.mean == pytest.approx(1.0)
    with pytest.raises(ValueError):
        model_from_config({"family": "cauchy"})
