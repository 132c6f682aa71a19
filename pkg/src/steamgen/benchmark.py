"""Sweep runners producing long-format result rows.

Each row is ``(sweep, knob, value, seed, model, metric, result)``. Cells are
pure functions of (sweep config, knob value, seed index), so they may run in
any order; rows are always returned sorted in grid order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import spearmanr

from .cate import CateFamilyConfig, CateConfig, KINDS
from .data import RngSeed, TreatmentDataset, as_seed
from .generators import (GMM, MARGINAL_HIST, GenConfig, fit_joint_baseline, fit_steam,
                         fit_steam_ablation_jointxw)
from .learners import LOGISTIC, LOGISTIC_POLY2, TrainConfig
from .metrics import (JsdConfig, MetricError, alpha_precision_x, baseline_joint_values,
                      beta_recall_x, fit_cate_family, fit_propensity, jsd_pi, oracle_pehe,
                      pehe_distance, u_pehe)
from .simulate import (CAPACITY_LADDER, DgpConfig, PROPENSITY_SUBSETS, Theorem1Params,
                       adversarial_synth, build_outcome_arch_study, build_propensity_subset_study,
                       outcome_arch_cate, simulate, theorem1_ratio)

SWEEPS = ("dimensionality", "treatment_complexity", "outcome_heterogeneity", "theorem1",
          "ranking_d1", "ranking_d2", "adversarial", "dp_sweep", "ablation")

GRIDS = {
    "dimensionality": ("d", (5, 10, 20, 50)),
    "treatment_complexity": ("K_w", (1, 2, 3, 4, 5)),
    "outcome_heterogeneity": ("K_y", (3, 4, 5, 6, 7)),
    "theorem1": ("d", (1, 10, 100, 1000, 10000)),
    "dp_sweep": ("epsilon", (0.5, 1.0, 2.0, 5.0, 10.0)),
}


@dataclass(frozen=True)
class Row:
    sweep: str
    knob: str
    value: float
    seed: int
    model: str
    metric: str
    result: float


@dataclass(frozen=True)
class BenchConfig:
    """Settings shared by the simulated sweeps.

    ``classifier`` drives both the generator's propensity stage and the
    JSD_pi metric classifier; ``joint_generator`` is the generic model fit to
    the full table.
    """

    n: int = 2000
    repeats: int = 10
    generator: str = MARGINAL_HIST
    joint_generator: str = GMM
    gmm_components: int = 5
    classifier: str = LOGISTIC_POLY2
    classifier_lambda: float = 0.1
    regressor: str = "gbt"
    kinds: tuple[str, ...] = KINDS
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: tuple[str, ...] | None = None

    def gen_config(self, generator: str, seed: RngSeed) -> GenConfig:
        return GenConfig(generator=generator, gmm_components=self.gmm_components,
                         classifier=self.classifier, regressor=self.regressor,
                         train=replace(self.train, l2_lambda=self.classifier_lambda), seed=seed)

    def jsd_config(self) -> JsdConfig:
        return JsdConfig(self.classifier, replace(self.train, l2_lambda=self.classifier_lambda))

    def family(self, seed: RngSeed) -> CateFamilyConfig:
        return CateFamilyConfig(self.kinds, CateConfig(regressor=self.regressor, train=self.train), seed)


DEFAULT_METRICS = {
    "dimensionality": ("jsd_pi", "u_pehe"),
    "treatment_complexity": ("jsd_pi",),
    "outcome_heterogeneity": ("u_pehe",),
    "ablation": ("u_pehe",),
    "adversarial": ("precision", "recall", "jsd_pi", "u_pehe"),
    "dp_sweep": ("jsd_pi", "u_pehe"),
}


class _RealSide:
    """Lazily fitted real-data metric models, shared by every model in a cell."""

    def __init__(self, real: TreatmentDataset, bench: BenchConfig, seed: RngSeed):
        self.real, self.bench, self.seed = real, bench, seed
        self._prop = self._fam = None

    @property
    def prop(self):
        if self._prop is None:
            self._prop = fit_propensity(self.real, self.bench.jsd_config())
        return self._prop

    @property
    def family_cfg(self):
        return self.bench.family(self.seed.derive("family"))

    @property
    def family(self):
        if self._fam is None:
            self._fam = fit_cate_family(self.real, self.family_cfg, "real")
        return self._fam


def score(real_side: _RealSide, synth: TreatmentDataset, metrics) -> dict[str, float]:
    real = real_side.real
    out = {}
    for m in metrics:
        try:
            if m == "precision":
                out[m] = alpha_precision_x(real.X, synth.X, kinds=real.covariate_kinds)
            elif m == "recall":
                out[m] = beta_recall_x(real.X, synth.X, kinds=real.covariate_kinds)
            elif m == "jsd_pi":
                out[m] = jsd_pi(real, synth, real_side.bench.jsd_config(), real_model=real_side.prop)
            elif m == "u_pehe":
                out[m] = u_pehe(real, synth, real_side.family_cfg, real_models=real_side.family)
            elif m == "baseline":
                out.update(baseline_joint_values(real, synth))
            else:
                raise ValueError(f"unknown metric {m!r}")
        except MetricError:
            out[m] = math.nan
    return out


def _models(bench: BenchConfig, seed: RngSeed, names=("steam", "joint")):
    fits = {
        "steam": lambda ds: fit_steam(ds, bench.gen_config(bench.generator, seed.derive("steam"))),
        "joint": lambda ds: fit_joint_baseline(ds, bench.gen_config(bench.joint_generator, seed.derive("joint"))),
        "steam_jointxw": lambda ds: fit_steam_ablation_jointxw(
            ds, bench.gen_config(bench.joint_generator, seed.derive("jointxw"))),
    }
    return {k: fits[k] for k in names}


def _generative_cell(sweep, knob, value, r, dgp: DgpConfig, bench: BenchConfig, seed: RngSeed,
                     metrics, names=("steam", "joint")) -> list[Row]:
    cs = seed.derive(sweep, knob, repr(value), r)
    real = simulate(dgp, cs.derive("real"), n=bench.n)
    rs = _RealSide(real, bench, cs.derive("metrics"))
    rows = []
    for name, fit in _models(bench, cs, names).items():
        synth = fit(real).generate(bench.n, cs.derive("sample", name))
        for m, v in score(rs, synth, metrics).items():
            rows.append(Row(sweep, knob, float(value), r, name, m, v))
    return rows


def sweep_dgp(sweep: str, value) -> DgpConfig:
    if sweep == "dimensionality":
        return DgpConfig(d=int(value))
    if sweep == "treatment_complexity":
        return DgpConfig(k_w=int(value))
    if sweep == "outcome_heterogeneity":
        return DgpConfig().with_predictive_range(int(value))
    return DgpConfig()


def _cell_star(args):
    return _generative_cell(*args)


def run_sweep(sweep: str, seed=0, bench: BenchConfig | None = None, values=None,
              progress: Callable[[str], None] | None = None, workers: int = 1) -> list[Row]:
    """Run one named sweep; deterministic for a fixed seed.

    ``workers > 1`` spreads the generative grid cells over processes; the
    rows are identical to a serial run.
    """
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; choose from {', '.join(SWEEPS)}")
    bench = bench or BenchConfig()
    seed = as_seed(seed)
    metrics = bench.metrics or DEFAULT_METRICS.get(sweep, ())
    if sweep == "theorem1":
        return theorem1_rows(values)
    if sweep == "ranking_d1":
        return ranking_d1_rows(seed, bench)
    if sweep == "ranking_d2":
        return ranking_d2_rows(seed, bench)
    if sweep == "adversarial":
        return adversarial_rows(seed, bench, metrics)
    if sweep == "dp_sweep":
        return dp_rows(seed, bench, values, metrics)
    if sweep == "ablation":
        rows = []
        for r in range(bench.repeats):
            rows += _generative_cell(sweep, "default", 0, r, DgpConfig(), bench, seed, metrics,
                                     ("steam", "steam_jointxw", "joint"))
        return rows
    knob, grid = GRIDS[sweep]
    grid = tuple(values or grid)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        cells = [(sweep, knob, v, r, sweep_dgp(sweep, v), bench, seed, metrics)
                 for v in grid for r in range(bench.repeats)]
        with ProcessPoolExecutor(workers) as ex:
            return [row for part in ex.map(_cell_star, cells) for row in part]
    rows = []
    for v in grid:
        for r in range(bench.repeats):
            rows += _generative_cell(sweep, knob, v, r, sweep_dgp(sweep, v), bench, seed, metrics)
        if progress:
            progress(f"{sweep} {knob}={v} done")
    return rows


# ---------------------------------------------------------------------------
# Individual studies

THEOREM1_PARAMS = Theorem1Params(0.02, 0.3, 0.1)


def theorem1_rows(values=None, params: Theorem1Params = THEOREM1_PARAMS) -> list[Row]:
    rows = []
    for d in (values or GRIDS["theorem1"][1]):
        res = theorem1_ratio(int(d), params)
        rows.append(Row("theorem1", "d", float(d), 0, "analytic", "ratio", res.ratio))
        rows.append(Row("theorem1", "d", float(d), 0, "analytic", "bound", res.bound))
    return rows


def ranking_d2_rows(seed, bench: BenchConfig) -> list[Row]:
    """JSD_pi plus baseline joint metrics for the propensity-subset variants.

    The metric classifier is plain logistic regression here, since every
    propensity in this study is linear in X.
    """
    jcfg = JsdConfig(LOGISTIC, bench.train)
    rows = []
    for r, st in enumerate(build_propensity_subset_study(as_seed(seed).derive("ranking_d2"), 1000, bench.repeats)):
        prop_r = fit_propensity(st.real, jcfg)
        for k, synth in zip(PROPENSITY_SUBSETS, st.synth):
            name = f"pi_{k}"
            rows.append(Row("ranking_d2", "variant", float(k), r, name, "jsd_pi",
                            jsd_pi(st.real, synth, jcfg, real_model=prop_r)))
            for m, v in baseline_joint_values(st.real, synth).items():
                rows.append(Row("ranking_d2", "variant", float(k), r, name, m, v))
    return rows


def ranking_d1_rows(seed, bench: BenchConfig) -> list[Row]:
    """U_PEHE, oracle PEHE and baseline metrics for the outcome-capacity ladder.

    The oracle for a variant is the family-mean PEHE of its synthetic-trained
    learners against the true CATE ``x1^2``.
    """
    seed = as_seed(seed).derive("ranking_d1")
    rows = []
    studies = build_outcome_arch_study(seed, 1000, bench.repeats, bench.train)
    for r, st in enumerate(studies):
        fam = bench.family(seed.derive("family", r))
        real_models = fit_cate_family(st.real, fam, "real")
        X = st.real.X
        tau_true = outcome_arch_cate(X)
        for i, (name, synth) in enumerate(zip(st.names, st.synth)):
            synth_models = fit_cate_family(synth, fam, "synthetic")
            up = u_pehe(st.real, synth, fam, X, real_models, synth_models)
            orc = float(np.mean([pehe_distance(synth_models[k].predict(X), tau_true) for k in fam.kinds]))
            rows.append(Row("ranking_d1", "variant", float(i), r, name, "u_pehe", up))
            rows.append(Row("ranking_d1", "variant", float(i), r, name, "oracle_pehe", orc))
            for m, v in baseline_joint_values(st.real, synth).items():
                rows.append(Row("ranking_d1", "variant", float(i), r, name, m, v))
    return rows


def adversarial_rows(seed, bench: BenchConfig, metrics) -> list[Row]:
    seed = as_seed(seed).derive("adversarial")
    jbench = replace(bench, classifier=LOGISTIC, classifier_lambda=bench.train.l2_lambda)
    rows = []
    for r in range(bench.repeats):
        real = simulate(DgpConfig(), seed.derive("real", r), n=bench.n)
        rs = _RealSide(real, jbench, seed.derive("metrics", r))
        for mode in ("copy", "zero_x", "zero_w", "zero_y"):
            synth = real if mode == "copy" else adversarial_synth(real, mode, seed.derive(mode, r))
            for m, v in score(rs, synth, metrics).items():
                rows.append(Row("adversarial", "mode", 0.0, r, mode, m, v))
    return rows


def dp_rows(seed, bench: BenchConfig, values, metrics) -> list[Row]:
    """DP-STEAM over an epsilon grid (delta 1e-6, uniform split).

    Data, sampling and noise seeds are shared across epsilon values, so the
    grid differs only through the noise scale.
    """
    from .privacy import BudgetSplit, PrivacyBudget, dp_steam

    seed = as_seed(seed).derive("dp_sweep")
    jbench = replace(bench, classifier=LOGISTIC, classifier_lambda=bench.train.l2_lambda)
    rows = []
    grid = values or GRIDS["dp_sweep"][1]
    for r in range(bench.repeats):
        real = simulate(DgpConfig(), seed.derive("real", r), n=bench.n)
        rs = _RealSide(real, jbench, seed.derive("metrics", r))
        cells = [(float(e), PrivacyBudget(float(e), 1e-6)) for e in grid]
        for eps, budget in cells:
            model, _ = dp_steam(real, budget, BudgetSplit(), seed=seed.derive("mech", r))
            synth = model.generate(bench.n, seed.derive("sample", r))
            for m, v in score(rs, synth, metrics).items():
                rows.append(Row("dp_sweep", "epsilon", eps, r, "dp_steam", m, v))
        model, _ = dp_steam(real, PrivacyBudget(1.0, 1e-6), BudgetSplit(), seed=seed.derive("mech", r), noise=False)
        synth = model.generate(bench.n, seed.derive("sample", r))
        for m, v in score(rs, synth, metrics).items():
            rows.append(Row("dp_sweep", "epsilon", math.inf, r, "steam_reference", m, v))
    return rows


# ---------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True)
class Summary:
    knob: str
    value: float
    model: str
    metric: str
    mean: float
    half_width: float
    repeats: int


def summarize(rows: list[Row]) -> list[Summary]:
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        groups.setdefault((row.knob, row.value, row.model, row.metric), []).append(row.result)
    out = []
    for (knob, value, model, metric), vals in groups.items():
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        r = len(v)
        mean = float(v.mean()) if r else math.nan
        hw = float(1.96 * v.std(ddof=1) / math.sqrt(r)) if r > 1 else 0.0
        out.append(Summary(knob, value, model, metric, mean, hw, r))
    return out


def lookup(summ: list[Summary], model: str, metric: str) -> dict[float, Summary]:
    return {s.value: s for s in summ if s.model == model and s.metric == metric}


def spearman(a, b) -> float:
    return float(spearmanr(a, b).statistic)


def rows_to_csv(rows: list[Row]) -> str:
    lines = ["sweep,knob,value,seed,model,metric,result"]
    for r in rows:
        lines.append(f"{r.sweep},{r.knob},{r.value!r},{r.seed},{r.model},{r.metric},{r.result!r}")
    return "\n".join(lines) + "\n"


def summary_to_csv(summ: list[Summary]) -> str:
    lines = ["knob,value,model,metric,mean,half_width,repeats"]
    for s in summ:
        lines.append(f"{s.knob},{s.value!r},{s.model},{s.metric},{s.mean!r},{s.half_width!r},{s.repeats}")
    return "\n".join(lines) + "\n"
