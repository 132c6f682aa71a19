import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

from steamgen.simulate import (DgpConfig, Theorem1Params, adversarial_synth, build_outcome_arch_study,
                               build_propensity_subset_study, mu_prog, oracle_cate, outcome_arch_cate,
                               propensity, simulate, subset_propensity, theorem1_ratio)


def test_default_propensity_at_origin():
    assert propensity(DgpConfig(), np.zeros((1, 10)))[0] == 0.5


def test_oracle_cate_values():
    x = np.zeros((1, 10))
    assert oracle_cate(DgpConfig(), x)[0] == 0
    x[0, 2] = x[0, 3] = 1
    assert oracle_cate(DgpConfig(), x)[0] == 2
    x[0, 4] = 1
    assert oracle_cate(DgpConfig().with_predictive_range(5), x)[0] == 3


def test_oracle_cate_ignores_propensity():
    X = np.random.default_rng(0).standard_normal((50, 10))
    a = oracle_cate(DgpConfig(), X)
    b = oracle_cate(DgpConfig(propensity="constant", p=0.2), X)
    np.testing.assert_array_equal(a, b)


def test_treated_fraction_ln2():
    # E[sigmoid(s/2)] with s ~ chi2(2): integral of du/(1+u) over (0,1) = ln 2
    ds = simulate(DgpConfig(), 1, n=10_000)
    assert abs(ds.W.mean() - math.log(2)) < 0.02


def test_quadratic_mean_form():
    cfg = DgpConfig(k_w=3)
    X = np.random.default_rng(1).standard_normal((20, 10))
    expect = 1 / (1 + np.exp(-np.mean(X[:, :3] ** 2, axis=1)))
    np.testing.assert_allclose(propensity(cfg, X), expect)


def test_invalid_configs():
    with pytest.raises(ValueError, match="K_w"):
        DgpConfig(d=3, k_w=5)
    with pytest.raises(ValueError):
        DgpConfig(d=4, predictive=(3, 9))
    with pytest.raises(ValueError):
        DgpConfig(d=4).with_predictive_range(6)


def test_oracle_cate_dimension_checked():
    with pytest.raises(ValueError):
        oracle_cate(DgpConfig(), np.zeros((2, 3)))


@pytest.mark.slow
def test_distributional_sanity():
    cfg = DgpConfig()
    ds = simulate(cfg, 2, n=100_000)
    assert np.all(np.abs(ds.X.mean(0)) < 0.02)
    assert np.all(np.abs(ds.X.var(0) - 1) < 0.05)
    resid = ds.Y[ds.W == 0] - mu_prog(cfg, ds.X[ds.W == 0])
    assert abs(resid.var() - cfg.sigma ** 2) < 0.1 * cfg.sigma ** 2


def test_oracle_consistency_at_fixed_points():
    # Y | X=x is resampled by pinning every row to x
    cfg = DgpConfig()
    g = np.random.default_rng(3)
    for _ in range(5):
        x = g.standard_normal(10)
        ds = simulate(cfg, int(g.integers(1 << 30)), n=10_000)
        Xf = np.tile(x, (ds.n, 1))
        from steamgen.simulate import mu_pred

        y1 = mu_prog(cfg, Xf) + mu_pred(cfg, Xf) + cfg.sigma * g.standard_normal(ds.n)
        y0 = mu_prog(cfg, Xf) + cfg.sigma * g.standard_normal(ds.n)
        se = math.sqrt(y1.var() / ds.n + y0.var() / ds.n)
        assert abs((y1.mean() - y0.mean()) - oracle_cate(cfg, x[None])[0]) < 3 * se


def test_simulate_oracle_consistency_via_generator():
    # the real sampler: regress Y on arms at a near-fixed x neighbourhood
    cfg = DgpConfig(d=2, prognostic=(1,), predictive=(2,))
    ds = simulate(cfg, 4, n=200_000)
    near = np.all(np.abs(ds.X - [0.5, 1.0]) < 0.05, axis=1)
    y1, y0 = ds.Y[near & (ds.W == 1)], ds.Y[near & (ds.W == 0)]
    se = math.sqrt(y1.var() / len(y1) + y0.var() / len(y0))
    assert abs(y1.mean() - y0.mean() - 1.0) < 3 * se + 0.05


def test_theorem1_examples():
    p = Theorem1Params(0.02, 0.3, 0.1)
    assert abs(theorem1_ratio(10, p).ratio - 0.5 / 0.3) < 1e-12
    assert abs(theorem1_ratio(1000, p).ratio - 20.3 / 20.1) < 1e-12
    rs = [theorem1_ratio(d, p).ratio for d in (1, 10, 100, 1000, 10_000)]
    assert all(a > b for a, b in zip(rs, rs[1:])) and rs[-1] > 1
    assert all(theorem1_ratio(d, Theorem1Params(0.1, 0.2, 0.2)).ratio == 1 for d in (1, 7, 500))


def test_theorem1_from_components():
    p = Theorem1Params.from_components(0.2, 0.5, 0.5, 0.5, math.sqrt(0.6), math.sqrt(0.2))
    assert abs(p.eps_x - 0.02) < 1e-15
    assert abs(p.c1 - 0.3) < 1e-12 and abs(p.c2 - 0.1) < 1e-12


@given(st.floats(1e-4, 10), st.floats(1e-4, 10), st.floats(1e-4, 10), st.integers(1, 10**6))
@settings(max_examples=500)
def test_theorem1_bound_holds(ex, c1, c2, d):
    r = theorem1_ratio(d, Theorem1Params(ex, c1, c2))
    assert abs(r.ratio - 1) <= r.bound * (1 + 1e-12) + 1e-15


def test_theorem1_rejects_nonpositive():
    with pytest.raises(ValueError):
        Theorem1Params(0.0, 0.1, 0.1)


def test_adversarial_modes():
    real = simulate(DgpConfig(), 5, n=2000)
    zx = adversarial_synth(real, "zero_x", 1)
    assert np.all(zx.X == 0)
    zw = adversarial_synth(real, "zero_w", 1)
    assert np.all(zw.W == 0)
    zy = adversarial_synth(real, "zero_y", 1)
    assert abs(np.corrcoef(zy.Y, zy.W)[0, 1]) < 3 / math.sqrt(real.n)
    assert abs(zy.Y.mean()) < 0.1 and abs(zy.Y.std() - 1) < 0.1
    with pytest.raises(ValueError):
        adversarial_synth(real, "zero_z", 1)


def test_propensity_subset_study():
    studies = build_propensity_subset_study(0, n=200, repeats=2)
    X = np.random.default_rng(0).standard_normal((100, 5))
    real_pi = 1 / (1 + np.exp(-X.mean(axis=1)))
    np.testing.assert_allclose(subset_propensity(5, X), real_pi)
    assert all(subset_propensity(k, np.zeros((1, 5)))[0] == 0.5 for k in (1, 3, 5))
    assert studies[0].oracle_rank == (1, 2, 3)
    assert len(studies[0].synth) == 3


def test_outcome_arch_study():
    assert outcome_arch_cate(np.array([[2.0] + [0] * 9]))[0] == 4
    x = np.random.default_rng(0).standard_normal(200_000)
    assert abs(np.mean(x ** 2) - 1) < 0.01
    study = build_outcome_arch_study(1, n=1000, repeats=1)[0]
    for s in study.synth:
        assert ks_2samp(s.X[:, 0], study.synth[0].X[:, 0]).pvalue > 0.01
        assert ks_2samp(s.W, study.synth[0].W).pvalue > 0.01
