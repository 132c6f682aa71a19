"""CATE meta-learners: S, T, RA and DR.

    S:  f(x, w) on [X, W];            tau(x) = f(x, 1) - f(x, 0)
    T:  mu_0 on controls, mu_1 on treated;  tau = mu_1 - mu_0
    RA: regress D = W (Y - mu_0(X)) + (1 - W)(mu_1(X) - Y) on X
    DR: regress D = (W - pi)/(pi (1 - pi)) (Y - mu_W(X)) + mu_1(X) - mu_0(X) on X

Nuisances and pseudo-outcomes share the training rows unless ``crossfit`` is
set, in which case two folds swap roles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RngSeed, TreatmentDataset, as_seed
from .learners import (GBT, LOGISTIC, OutcomeModel, PropensityModel, TrainConfig,
                       fit_logistic, fit_regressor)

S, T, RA, DR = "S", "T", "RA", "DR"
KINDS = (S, T, RA, DR)
DR_CLIP = 0.01


@dataclass(frozen=True)
class CateConfig:
    regressor: str = GBT
    regressor_poly2: bool = False
    classifier: str = LOGISTIC
    train: TrainConfig = field(default_factory=TrainConfig)
    crossfit: bool = False
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        object.__setattr__(self, "seed", as_seed(self.seed))


@dataclass(frozen=True)
class CateFamilyConfig:
    kinds: tuple[str, ...] = KINDS
    learner: CateConfig = field(default_factory=CateConfig)
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        kinds = tuple(self.kinds)
        if not kinds:
            raise ValueError("CATE family must not be empty")
        for k in kinds:
            if k not in KINDS:
                raise ValueError(f"unknown CATE learner {k!r}")
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "seed", as_seed(self.seed))

    def learner_config(self, kind: str) -> CateConfig:
        """Per-kind config carrying a seed derived from the family seed."""
        lc = self.learner
        return CateConfig(lc.regressor, lc.regressor_poly2, lc.classifier, lc.train,
                          lc.crossfit, self.seed.derive("cate", kind))


@dataclass(frozen=True, eq=False)
class CateModel:
    kind: str
    n_features: int
    stage1: tuple[OutcomeModel, ...]
    stage2: OutcomeModel | None = None
    propensity: PropensityModel | None = None
    warnings: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected a matrix with {self.n_features} columns")
        if self.kind == S:
            f = self.stage1[0]
            n = X.shape[0]
            return f.predict(np.column_stack([X, np.ones(n)])) - f.predict(np.column_stack([X, np.zeros(n)]))
        if self.kind == T:
            return self.stage1[1].predict(X) - self.stage1[0].predict(X)
        return self.stage2.predict(X)


def predict_cate(m: CateModel, X) -> np.ndarray:
    return m.predict(X)


def ra_pseudo_outcome(W, Y, mu0, mu1) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return W * (Y - mu0) + (1 - W) * (mu1 - Y)


def dr_weight(W, pi) -> np.ndarray:
    return (np.asarray(W, dtype=float) - pi) / (pi * (1 - pi))


def dr_pseudo_outcome(W, Y, mu0, mu1, pi) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    mu_w = np.where(W == 1, mu1, mu0)
    return dr_weight(W, pi) * (Y - mu_w) + mu1 - mu0


def _reg(X, y, cfg: CateConfig) -> OutcomeModel:
    return fit_regressor(X, y, cfg.regressor, cfg.train, cfg.regressor_poly2)


def _arms(X, W, Y, cfg):
    return tuple(_reg(X[W == a], Y[W == a], cfg) for a in (0, 1))


def _pseudo(kind, Xf, Wf, Yf, Xe, We, Ye, cfg, notes):
    """Fit nuisances on the ``f`` rows and return pseudo-outcomes on the ``e`` rows."""
    for a in (0, 1):
        if not np.any(Wf == a):
            raise ValueError(f"{kind}-learner: treatment arm W={a} is empty")
    mu0, mu1 = _arms(Xf, Wf, Yf, cfg)
    m0, m1 = mu0.predict(Xe), mu1.predict(Xe)
    if kind == RA:
        return ra_pseudo_outcome(We, Ye, m0, m1), (mu0, mu1), None
    prop = fit_logistic(Xf, Wf, cfg.train, kind=cfg.classifier, clip_lo=DR_CLIP)
    pi = prop.predict_proba(Xe)
    if np.all((pi <= DR_CLIP) | (pi >= 1 - DR_CLIP)):
        notes.append("degenerate propensity: every estimate sits at a clip bound")
    return dr_pseudo_outcome(We, Ye, m0, m1, pi), (mu0, mu1), prop


def fit_cate(ds: TreatmentDataset, kind: str, cfg: CateConfig | None = None) -> CateModel:
    cfg = cfg or CateConfig()
    if kind not in KINDS:
        raise ValueError(f"unknown CATE learner {kind!r}")
    if ds.n < 10:
        raise ValueError(f"{kind}-learner needs at least 10 rows, got {ds.n}")
    X, W, Y = np.asarray(ds.X), np.asarray(ds.W), np.asarray(ds.Y)
    d = X.shape[1]
    if kind == S:
        return CateModel(S, d, (_reg(np.column_stack([X, W]), Y, cfg),))
    for a in (0, 1):
        if not np.any(W == a):
            raise ValueError(f"{kind}-learner: treatment arm W={a} is empty")
    if kind == T:
        return CateModel(T, d, _arms(X, W, Y, cfg))
    notes: list[str] = []
    if not cfg.crossfit:
        D, stage1, prop = _pseudo(kind, X, W, Y, X, W, Y, cfg, notes)
    else:
        perm = cfg.seed.derive("folds").generator().permutation(ds.n)
        folds = (np.sort(perm[: ds.n // 2]), np.sort(perm[ds.n // 2:]))
        D = np.empty(ds.n)
        for a, b in (folds, folds[::-1]):
            D[b], stage1, prop = _pseudo(kind, X[a], W[a], Y[a], X[b], W[b], Y[b], cfg, notes)
    return CateModel(kind, d, stage1, _reg(X, D, cfg), prop, tuple(dict.fromkeys(notes)))


def fit_family(ds: TreatmentDataset, family: CateFamilyConfig | None = None) -> dict[str, CateModel]:
    family = family or CateFamilyConfig()
    return {k: fit_cate(ds, k, family.learner_config(k)) for k in family.kinds}
