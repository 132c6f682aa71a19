"""Treatment-aware metrics for a (real, synthetic) dataset pair.

Covariates:   alpha-precision / beta-recall on nested Euclidean balls
Treatment:    JSD_pi, one minus the mean Bernoulli Jensen-Shannon distance
              between real- and synthetic-trained propensity models
Outcome:      U_PEHE, U_policy, U_int over a CATE learner family

Expectations over P_X are empirical means over ``eval_X`` (real covariates by
default). Baseline joint metrics (KS, Wasserstein, inverse KL, JSD) are
included for ranking comparisons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import jensenshannon
from scipy.special import rel_entr, xlogy
from scipy.stats import ks_2samp, wasserstein_distance

from .cate import CateConfig, CateFamilyConfig, CateModel, fit_cate
from .data import BINARY, Scaler, TreatmentDataset, as_seed
from .learners import LOGISTIC, PropensityModel, TrainConfig, fit_logistic

ALPHA_GRID = np.linspace(0.0, 1.0, 101)
JSD_CLIP = 1e-3
SUPPORT_VARIANT = "identity-embedding nested balls (mean centre, quantile radii)"


class MetricError(ValueError):
    """A metric could not be computed; the message names the cause."""


# ---------------------------------------------------------------------------
# Covariate support metrics


@dataclass(frozen=True, eq=False)
class SupportEstimate:
    center: np.ndarray
    alphas: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.radii) < 0):
            raise ValueError("support radii must be non-decreasing in alpha")

    def coverage(self, Z: np.ndarray) -> np.ndarray:
        dist = np.linalg.norm(Z - self.center, axis=1)
        return np.array([np.mean(dist <= r) for r in self.radii])


def support_estimate(Z: np.ndarray, grid=ALPHA_GRID) -> SupportEstimate:
    Z = np.asarray(Z, dtype=float)
    center = Z.mean(axis=0)
    dist = np.linalg.norm(Z - center, axis=1)
    grid = np.asarray(grid, dtype=float)
    return SupportEstimate(center, grid, np.quantile(dist, grid))


def _standardized_pair(real_X, synth_X, kinds=None):
    real_X = np.atleast_2d(np.asarray(real_X, dtype=float))
    synth_X = np.atleast_2d(np.asarray(synth_X, dtype=float))
    if real_X.shape[1] != synth_X.shape[1]:
        raise ValueError(f"dimension mismatch: {real_X.shape[1]} vs {synth_X.shape[1]}")
    if real_X.shape[0] < 1 or synth_X.shape[0] < 1:
        raise ValueError("both covariate sets must be non-empty")
    sc = Scaler.fit(real_X, kinds)
    return sc.transform(real_X), sc.transform(synth_X)


def coverage_score(coverage, grid=ALPHA_GRID) -> float:
    """``1 - 2 * integral |coverage(a) - a| da`` by the trapezoid rule."""
    grid = np.asarray(grid, dtype=float)
    return float(np.clip(1.0 - 2.0 * np.trapezoid(np.abs(coverage - grid), grid), 0.0, 1.0))


def coverage_curve(reference, probe, grid=ALPHA_GRID) -> np.ndarray:
    cov = support_estimate(reference, grid).coverage(probe)
    # nested balls: coverage cannot decrease with alpha
    assert np.all(np.diff(cov) >= 0), "coverage curve is not monotone"
    return cov


def alpha_precision_x(real_X, synth_X, grid=ALPHA_GRID, kinds=None) -> float:
    """Share of synthetic points inside the real alpha-supports, scored over alpha.

    Both sets are standardised with a scaler fit on the real covariates.
    """
    R, S = _standardized_pair(real_X, synth_X, kinds)
    return coverage_score(coverage_curve(R, S, grid), grid)


def beta_recall_x(real_X, synth_X, grid=ALPHA_GRID, kinds=None) -> float:
    """Mirror of :func:`alpha_precision_x`: real points inside synthetic supports."""
    R, S = _standardized_pair(real_X, synth_X, kinds)
    return coverage_score(coverage_curve(S, R, grid), grid)


# ---------------------------------------------------------------------------
# Propensity divergence


def bernoulli_js_distance(p, q) -> np.ndarray:
    """Jensen-Shannon distance (base 2) between Bernoulli(p) and Bernoulli(q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)

    def kl(a, b):
        return (xlogy(a, a) - xlogy(a, b) + xlogy(1 - a, 1 - a) - xlogy(1 - a, 1 - b)) / np.log(2)

    js = 0.5 * kl(p, m) + 0.5 * kl(q, m)
    return np.sqrt(np.clip(js, 0.0, 1.0))


@dataclass(frozen=True)
class JsdConfig:
    kind: str = LOGISTIC
    train: TrainConfig = field(default_factory=TrainConfig)
    clip_lo: float = JSD_CLIP


def fit_propensity(ds: TreatmentDataset, cfg: JsdConfig | None = None) -> PropensityModel:
    cfg = cfg or JsdConfig()
    return fit_logistic(ds.X, ds.W, cfg.train, kind=cfg.kind, clip_lo=cfg.clip_lo)


def jsd_pi_models(prop_r, prop_s, eval_X) -> float:
    d = bernoulli_js_distance(prop_r.predict_proba(eval_X), prop_s.predict_proba(eval_X))
    return float(np.clip(1.0 - d.mean(), 0.0, 1.0))


def jsd_pi(real: TreatmentDataset, synth: TreatmentDataset, clf_cfg: JsdConfig | None = None,
           eval_X=None, real_model: PropensityModel | None = None) -> float:
    """``1 - mean_x JSdist(Bern(pi_r(x)), Bern(pi_s(x)))`` over ``eval_X``."""
    clf_cfg = clf_cfg or JsdConfig()
    eval_X = real.X if eval_X is None else eval_X
    prop_r = real_model or fit_propensity(real, clf_cfg)
    prop_s = fit_propensity(synth, clf_cfg)
    return jsd_pi_models(prop_r, prop_s, eval_X)


# ---------------------------------------------------------------------------
# CATE utility metrics


def _fit_family(ds, family: CateFamilyConfig, side: str) -> dict[str, CateModel]:
    out = {}
    for k in family.kinds:
        try:
            out[k] = fit_cate(ds, k, family.learner_config(k))
        except ValueError as e:
            raise MetricError(f"{k}-learner on {side} data: {e}") from e
    return out


def fit_cate_family(ds: TreatmentDataset, family: CateFamilyConfig | None = None,
                    side: str = "input") -> dict[str, CateModel]:
    return _fit_family(ds, family or CateFamilyConfig(), side)


def _cate_pairs(real, synth, family, eval_X, real_models, synth_models):
    family = family or CateFamilyConfig()
    eval_X = real.X if eval_X is None else np.asarray(eval_X, dtype=float)
    if real_models is None:
        real_models = _fit_family(real, family, "real")
    if synth_models is None:
        synth_models = _fit_family(synth, family, "synthetic")
    return family, eval_X, real_models, synth_models


def pehe_distance(tau_a, tau_b) -> float:
    diff = np.asarray(tau_a) - np.asarray(tau_b)
    return float(np.sqrt(np.mean(diff * diff)))


def u_pehe(real, synth, family: CateFamilyConfig | None = None, eval_X=None,
           real_models=None, synth_models=None) -> float:
    """Mean over the family of ``RMS(tau_s - tau_r)`` on ``eval_X``."""
    family, eval_X, rm, sm = _cate_pairs(real, synth, family, eval_X, real_models, synth_models)
    return float(np.mean([pehe_distance(sm[k].predict(eval_X), rm[k].predict(eval_X))
                          for k in family.kinds]))


def policy_agreement(tau_r, tau_s) -> float:
    return float(np.mean(np.asarray(tau_r) * np.asarray(tau_s) > 0))


def u_policy(real, synth, family: CateFamilyConfig | None = None, eval_X=None,
             real_models=None, synth_models=None) -> float:
    """Mean over the family of the share of points where both CATEs share a strict sign."""
    family, eval_X, rm, sm = _cate_pairs(real, synth, family, eval_X, real_models, synth_models)
    return float(np.mean([policy_agreement(rm[k].predict(eval_X), sm[k].predict(eval_X))
                          for k in family.kinds]))


def permutation_importance(model, X, seed) -> np.ndarray:
    """``A_i = mean |tau(X) - tau(X with column i permuted)|``.

    Column ``i`` is permuted with ``seed.derive("feature", i)``, so two
    models given the same seed see identical permutations.
    """
    X = np.asarray(X, dtype=float)
    seed = as_seed(seed)
    base = model.predict(X)
    out = np.empty(X.shape[1])
    for i in range(X.shape[1]):
        perm = seed.derive("feature", i).generator().permutation(X.shape[0])
        Xp = X.copy()
        Xp[:, i] = X[perm, i]
        out[i] = np.mean(np.abs(base - model.predict(Xp)))
    return out


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise MetricError("importance vector has zero norm: the CATE estimate ignores every feature")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def u_int(real, synth, family: CateFamilyConfig | None = None, eval_X=None,
          real_models=None, synth_models=None) -> float:
    """Mean over the family of the cosine similarity of permutation importances."""
    family, eval_X, rm, sm = _cate_pairs(real, synth, family, eval_X, real_models, synth_models)
    vals = []
    for k in family.kinds:
        seed = family.seed.derive("u_int", k)
        try:
            vals.append(cosine_similarity(permutation_importance(rm[k], eval_X, seed),
                                          permutation_importance(sm[k], eval_X, seed)))
        except MetricError as e:
            raise MetricError(f"{k}-learner: {e}") from e
    return float(np.mean(vals))


def oracle_pehe(synth: TreatmentDataset, truth, learner_kind: str = "T", eval_X=None,
                seed=0, cfg: CateConfig | None = None, model: CateModel | None = None) -> float:
    """PEHE of a synthetic-trained learner against the true CATE.

    ``truth`` is a DGP config (its predictive function is the CATE) or any
    callable mapping X to the true CATE.
    """
    from .simulate import DgpConfig, oracle_cate

    eval_X = synth.X if eval_X is None else np.asarray(eval_X, dtype=float)
    if isinstance(truth, DgpConfig):
        tau = oracle_cate(truth, eval_X)
    else:
        tau = np.asarray(truth(eval_X), dtype=float)
    if model is None:
        cfg = cfg or CateConfig(seed=as_seed(seed))
        model = fit_cate(synth, learner_kind, cfg)
    return pehe_distance(model.predict(eval_X), tau)


# ---------------------------------------------------------------------------
# Baseline joint metrics

BASELINE_BINS = 10
BASELINE_SMOOTH = 1e-10


def _hist_pair(a, b, bins=BASELINE_BINS):
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    pa = np.histogram(a, edges)[0].astype(float)
    pb = np.histogram(b, edges)[0].astype(float)
    pa, pb = pa / pa.sum(), pb / pb.sum()
    pa, pb = np.maximum(pa, BASELINE_SMOOTH), np.maximum(pb, BASELINE_SMOOTH)
    return pa / pa.sum(), pb / pb.sum()


def _blocks(ds: TreatmentDataset, blocks):
    cols, kinds = [], []
    for b in blocks:
        if b == "X":
            cols.append(ds.X)
            kinds.extend(ds.covariate_kinds)
        elif b == "W":
            cols.append(ds.W[:, None])
            kinds.append(BINARY)
        elif b == "Y":
            cols.append(ds.Y[:, None])
            kinds.append(ds.outcome_column.kind)
        else:
            raise ValueError(f"unknown block {b!r}")
    return np.column_stack(cols), kinds


def baseline_joint_values(real: TreatmentDataset, synth: TreatmentDataset,
                          blocks=("X", "W", "Y")) -> dict[str, float]:
    if [c.name for c in real.schema] != [c.name for c in synth.schema]:
        raise ValueError("real and synthetic schemas differ")
    R, kinds = _blocks(real, blocks)
    S, _ = _blocks(synth, blocks)
    sc = Scaler.fit(R, kinds)
    Rz, Sz = sc.transform(R), sc.transform(S)
    ks, wd, ikl, jsd = [], [], [], []
    for j in range(R.shape[1]):
        ks.append(ks_2samp(R[:, j], S[:, j]).statistic)
        wd.append(wasserstein_distance(Rz[:, j], Sz[:, j]))
        pr, ps = _hist_pair(R[:, j], S[:, j])
        ikl.append(1.0 / (1.0 + float(np.sum(rel_entr(pr, ps)))))
        jsd.append(float(jensenshannon(pr, ps, base=2)))
    return {"ks_score": 1.0 - float(np.mean(ks)), "wasserstein": float(np.mean(wd)),
            "inverse_kl": float(np.mean(ikl)), "jsd_baseline": float(np.mean(jsd))}


BASELINE_VARIANTS = {
    "ks_score": "1 - mean per-column two-sample KS statistic",
    "wasserstein": "mean per-column 1-D Wasserstein on real-standardised columns",
    "inverse_kl": "mean per-column 1/(1+KL(real||synth)), 10 shared bins, 1e-10 smoothing",
    "jsd_baseline": "mean per-column Jensen-Shannon distance (base 2), 10 shared bins",
}


def baseline_joint_metrics(real: TreatmentDataset, synth: TreatmentDataset,
                           blocks=("X", "W", "Y")) -> "MetricReport":
    rep = MetricReport(metadata={"n_real": real.n, "n_synth": synth.n})
    for k, v in baseline_joint_values(real, synth, blocks).items():
        rep.add(k, v, BASELINE_VARIANTS[k])
    return rep


# ---------------------------------------------------------------------------
# Reports


@dataclass
class MetricReport:
    """Per-repeat metric values with normal-approximation 95% intervals.

    ``half_width = 1.96 * sd / sqrt(r)`` with the sample (ddof=1) standard
    deviation; a single repeat has half-width 0.
    """

    values: dict[str, list[float]] = field(default_factory=dict)
    variants: dict[str, str] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, name: str, value: float, variant: str = ""):
        self.values.setdefault(name, []).append(float(value))
        if variant:
            self.variants[name] = variant

    def fail(self, name: str, reason: str, variant: str = ""):
        self.failures[name] = reason
        if variant:
            self.variants[name] = variant

    def mean(self, name: str) -> float:
        return float(np.mean(self.values[name]))

    def sd(self, name: str) -> float:
        v = self.values[name]
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def half_width(self, name: str) -> float:
        return 1.96 * self.sd(name) / math.sqrt(len(self.values[name]))

    def ci(self, name: str) -> tuple[float, float]:
        m, h = self.mean(name), self.half_width(name)
        return m - h, m + h

    def names(self) -> list[str]:
        return list(self.values) + [k for k in self.failures if k not in self.values]

    def to_text(self) -> str:
        lines = []
        for k, v in self.metadata.items():
            lines.append(f"# {k}: {v}")
        for name in self.names():
            variant = self.variants.get(name, "")
            if name in self.failures:
                lines.append(f"{name:<14} FAILED  {self.failures[name]}")
            else:
                lines.append(f"{name:<14} {self.mean(name):.6f} +/- {self.half_width(name):.6f}"
                             f"  (r={len(self.values[name])})")
            if variant:
                lines.append(f"{'':<14} variant: {variant}")
        return "\n".join(lines) + "\n"

    def to_flat(self) -> dict[str, str]:
        out = {}
        for name in self.names():
            if name in self.failures:
                out[f"{name}.status"] = "failed"
                out[f"{name}.reason"] = self.failures[name]
            else:
                out[f"{name}.status"] = "ok"
                out[f"{name}.mean"] = repr(self.mean(name))
                out[f"{name}.half_width"] = repr(self.half_width(name))
                out[f"{name}.repeats"] = str(len(self.values[name]))
                out[f"{name}.values"] = ",".join(repr(v) for v in self.values[name])
            if name in self.variants:
                out[f"{name}.variant"] = self.variants[name]
        return out


# ---------------------------------------------------------------------------
# Evaluation driver

COVARIATE_METRICS = ("precision", "recall")
CATE_METRICS = ("u_pehe", "u_policy", "u_int")
ALL_METRICS = COVARIATE_METRICS + ("jsd_pi",) + CATE_METRICS
BASELINE = "baseline"

VARIANTS = {
    "precision": SUPPORT_VARIANT,
    "recall": SUPPORT_VARIANT,
    "jsd_pi": "closed-form Bernoulli JS distance (base 2), {kind} propensity, clip {clip}",
    "u_pehe": "RMS(tau_s - tau_r) averaged over {kinds}, {reg} stage regressor",
    "u_policy": "sign agreement averaged over {kinds}, {reg} stage regressor",
    "u_int": "cosine of permutation importances averaged over {kinds}, {reg} stage regressor",
}


def evaluate(real: TreatmentDataset, synth: TreatmentDataset, metrics=ALL_METRICS,
             repeats: int = 1, seed=0, family: CateFamilyConfig | None = None,
             jsd_cfg: JsdConfig | None = None, eval_X=None) -> MetricReport:
    """Compute the selected metrics ``repeats`` times with derived seeds.

    A metric whose prerequisites fail is recorded as failed with its reason;
    the remaining metrics are still computed.
    """
    seed = as_seed(seed)
    family = family or CateFamilyConfig()
    jsd_cfg = jsd_cfg or JsdConfig()
    metrics = tuple(metrics)
    fmt = dict(kind=jsd_cfg.kind, clip=jsd_cfg.clip_lo, kinds="/".join(family.kinds),
               reg=family.learner.regressor)
    rep = MetricReport(metadata={"n_real": real.n, "n_synth": synth.n, "repeats": repeats,
                                 "seed": str(seed)})
    kinds = real.covariate_kinds
    for r in range(repeats):
        rs = seed.derive("repeat", r)
        fam = CateFamilyConfig(family.kinds, family.learner, rs.derive("family"))
        jcfg = replace(jsd_cfg, train=replace(jsd_cfg.train, seed=rs.derive("jsd")))
        cache: dict = {}
        for name in metrics:
            if name in rep.failures:
                continue
            variant = VARIANTS.get(name, "").format(**fmt)
            try:
                if name == "precision":
                    v = alpha_precision_x(real.X, synth.X, kinds=kinds)
                elif name == "recall":
                    v = beta_recall_x(real.X, synth.X, kinds=kinds)
                elif name == "jsd_pi":
                    v = jsd_pi(real, synth, jcfg, eval_X)
                elif name in CATE_METRICS:
                    if "real" not in cache:
                        cache["real"] = _fit_family(real, fam, "real")
                    if "synth" not in cache:
                        cache["synth"] = _fit_family(synth, fam, "synthetic")
                    fn = {"u_pehe": u_pehe, "u_policy": u_policy, "u_int": u_int}[name]
                    v = fn(real, synth, fam, eval_X, cache["real"], cache["synth"])
                elif name == BASELINE:
                    for k, bv in baseline_joint_values(real, synth).items():
                        rep.add(k, bv, BASELINE_VARIANTS[k])
                    continue
                else:
                    raise ValueError(f"unknown metric {name!r}")
            except MetricError as e:
                rep.fail(name, str(e), variant)
                continue
            rep.add(name, v, variant)
    return rep
