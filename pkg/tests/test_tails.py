import math

import numpy as np
import pytest
from scipy import special

from rwrs.kernels import make_srw
from rwrs.localtimes import ScaledLocalTimes, scaled_density_pairing, simulate_walk
from rwrs.scenery import BoundedUniformScenery, GaussianScenery, WeibullTailScenery, sample_field
from rwrs.tails import (
    ScaleRegime,
    TailEstimate,
    exact_enum,
    rate_table,
    reference_scale,
    rwrs_samples,
    rwrs_value,
    tail_cond_gaussian,
    tail_naive,
    tail_naive_curve,
)

K1 = make_srw(1)
G = GaussianScenery(1.0)


def test_exact_enum_two_steps():
    # Z_2 = Y(0) + Y(+-1) ~ N(0, 2); P(Z_2 > 2) = Phi-bar(sqrt 2)
    assert exact_enum(K1, G, 2, 1.0) == pytest.approx(special.ndtr(-math.sqrt(2)), rel=1e-12)
    assert exact_enum(K1, G, 2, 1.0) == pytest.approx(0.07865, abs=1e-5)


def test_exact_enum_three_steps():
    # half the paths return to 0 (Lambda = 5), half do not (Lambda = 3)
    want = 0.5 * special.ndtr(-3 / math.sqrt(5)) + 0.5 * special.ndtr(-3 / math.sqrt(3))
    assert exact_enum(K1, G, 3, 1.0) == pytest.approx(want, rel=1e-12)


def test_exact_enum_uniform_single_site():
    # n = 1: P(Y > b) for Y ~ U[-1, 1]
    assert exact_enum(K1, BoundedUniformScenery(-1, 1), 1, 0.5) == pytest.approx(0.25)


def test_exact_enum_limits():
    with pytest.raises(ValueError):
        exact_enum(K1, G, 40, 0.1)
    with pytest.raises(TypeError):
        exact_enum(K1, WeibullTailScenery(1, 2), 3, 0.1)


@pytest.mark.parametrize("n", [2, 3, 8])
def test_naive_and_conditional_agree_with_enumeration(n):
    exact = exact_enum(K1, G, n, 0.5)
    nv = tail_naive(K1, G, n, 0.5, 100000, seed=1)
    assert abs(nv.estimate - exact) <= 4 * nv.stderr
    cg = tail_cond_gaussian(K1, G, n, 0.5, 20000, seed=2)
    if cg.stderr == 0:
        assert cg.estimate == pytest.approx(exact, rel=1e-12)
    else:
        assert abs(cg.estimate - exact) <= 4 * cg.stderr


def test_uniform_enumeration_vs_naive():
    m = BoundedUniformScenery(-1, 1)
    exact = exact_enum(K1, m, 4, 0.3)
    nv = tail_naive(K1, m, 4, 0.3, 200000, seed=4)
    assert abs(nv.estimate - exact) <= 4 * nv.stderr


def test_tail_curve_shares_samples():
    curve = tail_naive_curve(K1, G, 8, [0.0, 0.5, 1.0], 5000, seed=3)
    est = [c.estimate for c in curve]
    assert est[0] >= est[1] >= est[2]
    assert curve[1].estimate == tail_naive(K1, G, 8, 0.5, 5000, seed=3).estimate


def test_conditional_estimator_needs_gaussian():
    with pytest.raises(TypeError):
        tail_cond_gaussian(K1, BoundedUniformScenery(-1, 1), 4, 0.1, 10, seed=0)


def test_rwrs_site_sum_equals_time_sum():
    path, f = simulate_walk(make_srw(2), 400, seed=5)
    field = sample_field(G, [tuple(z) for z in f.sites().tolist()], seed=6)
    z_site = rwrs_value(f, field)
    z_time = sum(field[tuple(z)] for z in path.tolist())
    assert z_site == pytest.approx(z_time, rel=1e-12)
    assert rwrs_value(f, field, path) == pytest.approx(z_time, rel=1e-12)


def test_scaled_identity_for_rwrs():
    # Z_n / n = b <L_n, Ybar_n> with Ybar_n(x) = Y(floor(alpha x)) / b
    n, alpha, b = 500, 4.0, 2.5
    path, f = simulate_walk(make_srw(2), n, seed=8)
    field = sample_field(G, [tuple(z) for z in f.sites().tolist()], seed=9)
    L = ScaledLocalTimes(f, alpha)
    ybar = lambda x: np.array([field[tuple(z)] for z in np.floor(x * alpha).astype(int).tolist()]) / b
    assert rwrs_value(f, field) / n == pytest.approx(b * scaled_density_pairing(L, ybar), rel=1e-12)


def test_rwrs_samples_worker_invariant():
    a = rwrs_samples(make_srw(2), G, 64, 5000, seed=2, workers=1)
    b = rwrs_samples(make_srw(2), G, 64, 5000, seed=2, workers=4)
    np.testing.assert_array_equal(a, b)


def test_reference_scales():
    assert reference_scale(16.0, 1) == pytest.approx(0.5)
    assert reference_scale(math.e**2, 2) == pytest.approx((math.e**2 / 2) ** -0.5)
    assert reference_scale(100.0, 3) == pytest.approx(0.1)


def test_regime_v_scale_identity():
    r = ScaleRegime.very_large(2, 3.0, lambda n: n**0.2)
    n = 1e6
    r.check(n)
    assert r.alpha(n) ** 4 * r.b(n) ** 3 == pytest.approx(n, rel=1e-12)
    bad = ScaleRegime.very_large(2, 3.0, lambda n: n)
    with pytest.raises(ValueError):
        bad.check(n)


def test_small_dev_window():
    r = ScaleRegime.small_dev(0.75)
    for n in (2**12, 2**16):
        r.check(n)
    assert r.speed(2**16) == pytest.approx(math.log(2**16) ** 0.5)
    with pytest.raises(ValueError):
        ScaleRegime.small_dev(1.2)
    with pytest.raises(ValueError):
        ScaleRegime("small-dev", 1, lambda n: 1.0)


def test_rate_table_validation_and_columns():
    r = ScaleRegime.large(1, 0.5)
    est = lambda n, b: TailEstimate("naive", n, b, 0.1, 0.01, 100)
    rows = rate_table(r, est, [8, 16, 32], prediction=-1.0)
    assert [row["n"] for row in rows] == [8, 16, 32]
    assert rows[0]["rate_normalized"] == pytest.approx(math.log(0.1) / 8 ** (1 / 3))
    with pytest.raises(ValueError):
        rate_table(r, est, [8, 16])
    with pytest.raises(ValueError):
        rate_table(r, est, [8, 32, 16])


def test_tail_estimate_log_scale():
    e = TailEstimate("cond-gaussian", 10, 1.0, 0.0, 0.0, 5)
    assert e.log_estimate == -math.inf
