import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from steamgen.data import Column, TreatmentDataset, default_schema
from steamgen.generators import (FixedPropensity, GenConfig, OutcomeStage, SteamModel,
                                 fit_gmm, fit_joint_baseline, fit_marginal_hist, fit_steam,
                                 fit_steam_ablation_jointxw)
from steamgen.learners import constant_model
from steamgen.serialize import dumps
from steamgen.simulate import DgpConfig, simulate

COL = (Column("a", "continuous", "covariate"),)
BIN = (Column("b", "binary", "covariate"),)


def test_hist_binary_mle():
    m = fit_marginal_hist(np.array([[1.0]] * 7 + [[0.0]] * 3), BIN)
    np.testing.assert_allclose(m.masses[0], [0.3, 0.7])


def test_hist_constant_column():
    m = fit_marginal_hist(np.full((20, 1), 2.5), COL)
    assert np.all(m.sample(100, 0) == 2.5)


def test_hist_sample_mean():
    col = np.random.default_rng(0).standard_normal((2000, 1))
    s = fit_marginal_hist(col, COL).sample(10_000, 1)
    assert abs(s.mean() - col.mean()) < 0.05


def test_gmm_one_component_fixed_point():
    X = np.random.default_rng(1).standard_normal((500, 3)) * [1, 2, 3] + [0, 1, -1]
    m = fit_gmm(X, default_schema(3)[:3], k=1)
    np.testing.assert_allclose(m.means[0], X.mean(0), atol=1e-8)
    np.testing.assert_allclose(m.variances[0], X.var(0), atol=1e-8)


def test_gmm_two_clusters():
    g = np.random.default_rng(2)
    X = np.concatenate([g.normal(-5, 0.3, 500), g.normal(5, 0.3, 500)])[:, None]
    m = fit_gmm(X, COL, k=2, seed=3)
    np.testing.assert_allclose(np.sort(m.means.ravel()), [-5, 5], atol=0.2)


@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3))
@settings(max_examples=50)
def test_em_log_likelihood_monotone(seed, k, d):
    g = np.random.default_rng(seed)
    n = int(g.integers(20, 200))
    X = g.standard_normal((n, d)) * g.uniform(0.2, 3, d) + g.normal(0, 3, (1, d)) * (g.random((n, 1)) < 0.5)
    m = fit_gmm(X, default_schema(d)[:d], k=k, seed=seed)
    ll = np.array(m.log_likelihood)
    assert np.all(np.diff(ll) >= -1e-9 * np.maximum(1, np.abs(ll[1:])))


def test_gmm_binary_support():
    g = np.random.default_rng(4)
    X = np.column_stack([g.standard_normal(300), g.random(300) < 0.3])
    cols = (COL[0], BIN[0])
    s = fit_gmm(X, cols, k=3, seed=0).sample(1000, 1)
    assert set(np.unique(s[:, 1])) <= {0.0, 1.0}


def test_known_propensity_skips_classifier():
    ds = simulate(DgpConfig(propensity="constant", p=0.5), 0, n=500)
    m = fit_steam(ds, GenConfig(regressor="ridge"), known_propensity=0.5)
    assert m.qw == FixedPropensity(0.5)


def test_noiseless_linear_effect():
    g = np.random.default_rng(5)
    X = g.standard_normal((400, 3))
    W = (g.random(400) < 0.5).astype(float)
    Y = X @ [1.0, -2.0, 0.5] + W
    ds = TreatmentDataset(default_schema(3), X, W, Y)
    m = fit_steam(ds, GenConfig(regressor="ridge", outcome_param="t",
                                train=GenConfig().train.__class__(ridge_lambda=0.0)))
    diff = m.qy.mu(X, 1) - m.qy.mu(X, 0)
    np.testing.assert_allclose(diff, 1.0, atol=1e-6)


def test_fit_is_deterministic():
    ds = simulate(DgpConfig(), 1, n=300)
    cfg = GenConfig(generator="gmm", seed=9)
    assert dumps(fit_steam(ds, cfg)) == dumps(fit_steam(ds, cfg))
    a = fit_steam(ds, cfg).generate(200, 4)
    b = fit_steam(ds, cfg).generate(200, 4)
    np.testing.assert_array_equal(a.table(), b.table())


def _fixed_model(p, d=2, c0=1.0, c1=4.0, sigma=(0.0, 0.0), noise=True):
    qx = fit_marginal_hist(np.random.default_rng(0).standard_normal((500, d)), default_schema(d)[:d])
    qy = OutcomeStage("t", (constant_model(c0, d), constant_model(c1, d)), sigma, False, noise)
    return SteamModel(default_schema(d), qx, FixedPropensity(p), qy)


def test_fixed_propensity_fraction():
    ds = _fixed_model(0.5).generate(10_000, 1)
    assert abs(ds.W.mean() - 0.5) < 0.015


def test_degenerate_noise_selects_arm():
    ds = _fixed_model(0.4).generate(1000, 2)
    np.testing.assert_array_equal(ds.Y, np.where(ds.W == 1, 4.0, 1.0))


def test_fixed_propensity_independence():
    m = _fixed_model(0.3)
    for s in range(10):
        ds = m.generate(5000, s)
        hi = ds.X[:, 0] > np.median(ds.X[:, 0])
        table = [[np.sum(hi & (ds.W == a)), np.sum(~hi & (ds.W == a))] for a in (0, 1)]
        assert chi2_contingency(table)[1] > 0.01


def test_outcome_consistency_sigma_zero():
    ds = simulate(DgpConfig(), 2, n=500)
    m = fit_steam(ds, GenConfig(regressor="ridge", noise=False))
    out = m.generate(300, 3)
    np.testing.assert_array_equal(out.Y, m.qy.mu(out.X, out.W))


def test_steam_preserves_treated_fraction():
    ds = simulate(DgpConfig(), 3, n=2000)
    out = fit_steam(ds, GenConfig(regressor="ridge")).generate(5000, 1)
    assert abs(out.W.mean() - ds.W.mean()) < 0.03


def test_joint_marginal_breaks_dependence():
    ds = simulate(DgpConfig(), 4, n=5000)
    out = fit_joint_baseline(ds, GenConfig()).generate(5000, 2)
    assert abs(np.corrcoef(out.W, out.X[:, 0] ** 2)[0, 1]) < 0.05
    assert abs(out.W.mean() - ds.W.mean()) < 0.02
    assert out.schema == ds.schema


def test_jointxw_marginal_independence():
    ds = simulate(DgpConfig(), 5, n=2000)
    m = fit_steam_ablation_jointxw(ds, GenConfig(regressor="ridge"))
    out = m.generate(5000, 1)
    assert abs(np.corrcoef(out.W, out.X[:, 0])[0, 1]) < 0.05
    assert out.schema == fit_steam(ds, GenConfig(regressor="ridge")).generate(10, 0).schema
    np.testing.assert_array_equal(out.table(), m.generate(5000, 1).table())


def test_binary_outcome_support():
    g = np.random.default_rng(6)
    X = g.standard_normal((400, 2))
    W = (g.random(400) < 0.5).astype(float)
    Y = (g.random(400) < 0.3 + 0.4 * W).astype(float)
    ds = TreatmentDataset(default_schema(2, binary_outcome=True), X, W, Y)
    for gen in ("marginal_hist", "gmm"):
        out = fit_steam(ds, GenConfig(generator=gen, regressor="ridge")).generate(1000, 1)
        assert set(np.unique(out.Y)) <= {0.0, 1.0}


def test_empty_arm_error():
    ds = TreatmentDataset(default_schema(1), np.arange(20.0), np.zeros(20), np.zeros(20))
    with pytest.raises(ValueError, match="W=1"):
        fit_steam(ds)


def test_bad_config():
    with pytest.raises(ValueError):
        GenConfig(generator="gan")
    with pytest.raises(ValueError):
        FixedPropensity(1.0)
