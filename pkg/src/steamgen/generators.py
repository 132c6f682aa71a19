"""Tabular generators and the three-step treatment-aware generator.

Generic generators (:class:`MarginalHistogram`, :class:`GaussianMixture`) model
a table column block. :class:`SteamModel` chains a covariate generator, a
propensity model and an outcome stage::

    X ~ Q_X,   W ~ Bernoulli(pi_hat(X)),   Y ~ mu_hat_W(X) + noise

:class:`JointModel` fits one generator to the whole ``(X, W, Y)`` table and
:class:`JointXWModel` fits one generator to ``(X, W)`` followed by the same
outcome stage as :class:`SteamModel`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import (BINARY, COVARIATE, Column, RngSeed, TreatmentDataset, as_seed)
from .learners import (GBT, LOGISTIC, OutcomeModel, PropensityModel, TrainConfig,
                       fit_logistic, fit_regressor)

MARGINAL_HIST = "marginal_hist"
GMM = "gmm"
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class GenConfig:
    generator: str = MARGINAL_HIST
    bins: int = 32
    gmm_components: int = 5
    em_max_iters: int = 200
    em_tolerance: float = 1e-6
    classifier: str = LOGISTIC
    regressor: str = GBT
    regressor_poly2: bool = False
    outcome_param: str = "s"
    noise: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        if self.generator not in (MARGINAL_HIST, GMM):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.outcome_param not in ("s", "t"):
            raise ValueError("outcome_param must be 's' or 't'")
        if self.bins < 1 or self.gmm_components < 1:
            raise ValueError("bins and gmm_components must be positive")
        object.__setattr__(self, "seed", as_seed(self.seed))


def _binary_mask(columns) -> np.ndarray:
    return np.array([c.kind == BINARY for c in columns], dtype=bool)


# ---------------------------------------------------------------------------
# Generic generators


@dataclass(frozen=True, eq=False)
class MarginalHistogram:
    """Independent per-column model.

    Continuous columns: equal-width histogram on the training ``[min, max]``,
    sampled uniformly inside the chosen bin. Binary columns: Bernoulli.
    ``masses[j]`` for a binary column is ``[1 - p, p]``.
    """

    columns: tuple[Column, ...]
    edges: tuple[np.ndarray, ...]
    masses: tuple[np.ndarray, ...]
    kind: str = MARGINAL_HIST

    def sample(self, n: int, seed) -> np.ndarray:
        rng = as_seed(seed).generator()
        out = np.empty((n, len(self.columns)))
        for j, c in enumerate(self.columns):
            p = self.masses[j]
            if c.kind == BINARY:
                out[:, j] = (rng.random(n) < p[1]).astype(float)
                continue
            e = self.edges[j]
            b = rng.choice(len(p), size=n, p=p)
            lo, hi = e[b], e[b + 1]
            out[:, j] = lo + (hi - lo) * rng.random(n)
        return out


def _histogram_masses(col: np.ndarray, bins: int):
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        return np.array([lo, hi]), np.array([1.0])
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(col, bins=edges)
    return edges, counts / counts.sum()


def fit_marginal_hist(table: np.ndarray, columns, bins: int = 32) -> MarginalHistogram:
    table = np.asarray(table, dtype=float)
    if table.ndim == 1:
        table = table.reshape(-1, 1)
    columns = tuple(columns)
    if table.shape[0] < 1 or table.shape[1] != len(columns):
        raise ValueError("table must be non-empty and match the column list")
    edges, masses = [], []
    for j, c in enumerate(columns):
        col = table[:, j]
        if c.kind == BINARY:
            p = float(col.mean())
            edges.append(np.array([0.0, 1.0]))
            masses.append(np.array([1.0 - p, p]))
        else:
            e, m = _histogram_masses(col, bins)
            edges.append(e)
            masses.append(m)
    return MarginalHistogram(columns, tuple(edges), tuple(masses))


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Diagonal-covariance Gaussian mixture over a column block.

    Binary columns are modelled after uniform(-0.5, 0.5) dequantisation and
    thresholded at 0.5 when sampling.
    """

    columns: tuple[Column, ...]
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: tuple[float, ...] = ()
    converged: bool = False
    kind: str = GMM

    def log_prob(self, X: np.ndarray) -> np.ndarray:
        return logsumexp(_component_logpdf(X, self.weights, self.means, self.variances), axis=1)

    def sample(self, n: int, seed) -> np.ndarray:
        rng = as_seed(seed).generator()
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.means.shape[1]))
        out = self.means[comp] + np.sqrt(self.variances[comp]) * z
        binary = _binary_mask(self.columns)
        out[:, binary] = (out[:, binary] >= 0.5).astype(float)
        return out


def _component_logpdf(X, weights, means, variances):
    # (n, k) matrix of log w_k + log N(x | mean_k, diag var_k)
    diff = X[:, None, :] - means[None, :, :]
    quad = np.sum(diff * diff / variances[None], axis=2)
    logdet = np.sum(np.log(2 * np.pi * variances), axis=1)
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return logw[None, :] - 0.5 * (quad + logdet[None, :])


def _kmeanspp(X, k, rng) -> np.ndarray:
    Z = (X - X.mean(0)) / np.maximum(X.std(0), 1e-12)
    idx = [int(rng.integers(len(Z)))]
    d2 = np.sum((Z - Z[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:  # fewer distinct rows than components
            rest = np.setdiff1d(np.arange(len(Z)), idx)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(len(Z), p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((Z - Z[nxt]) ** 2, axis=1))
    return np.array(idx)


def fit_gmm(table: np.ndarray, columns, k: int = 5, cfg: GenConfig | None = None,
            seed=None) -> GaussianMixture:
    """EM for a diagonal Gaussian mixture.

    Initial means are ``k`` training rows picked by k-means++ seeding
    (distance-weighted, on standardised columns), initial variances the
    column variances, weights uniform. Iterates until
    the mean log-likelihood improves by less than ``cfg.em_tolerance``.
    """
    cfg = cfg or GenConfig()
    seed = as_seed(seed if seed is not None else cfg.seed)
    columns = tuple(columns)
    X = np.asarray(table, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    if p != len(columns):
        raise ValueError("table width does not match the column list")
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    binary = _binary_mask(columns)
    if binary.any():
        X = X.copy()
        jitter = seed.derive("dequantize").generator().uniform(-0.5, 0.5, size=(n, int(binary.sum())))
        X[:, binary] += jitter
    means = X[_kmeanspp(X, k, seed.derive("init").generator())].copy()
    variances = np.tile(np.maximum(X.var(axis=0), VARIANCE_FLOOR), (k, 1))
    weights = np.full(k, 1.0 / k)
    trace = []
    converged = False
    for _ in range(cfg.em_max_iters):
        lp = _component_logpdf(X, weights, means, variances)
        norm = logsumexp(lp, axis=1)
        trace.append(float(norm.mean()))
        if len(trace) > 1 and trace[-1] - trace[-2] < cfg.em_tolerance:
            converged = True
            break
        resp = np.exp(lp - norm[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 1e-12
        weights = nk / n
        safe = np.where(alive, nk, 1.0)
        new_means = (resp.T @ X) / safe[:, None]
        new_var = (resp.T @ (X * X)) / safe[:, None] - new_means ** 2
        means = np.where(alive[:, None], new_means, means)
        variances = np.where(alive[:, None], np.maximum(new_var, VARIANCE_FLOOR), variances)
    return GaussianMixture(columns, weights, means, variances, tuple(trace), converged)


def fit_generator(table: np.ndarray, columns, cfg: GenConfig, seed=None):
    if cfg.generator == MARGINAL_HIST:
        return fit_marginal_hist(table, columns, cfg.bins)
    return fit_gmm(table, columns, cfg.gmm_components, cfg, seed)


# ---------------------------------------------------------------------------
# Treatment and outcome stages


@dataclass(frozen=True)
class FixedPropensity:
    """Known assignment probability, e.g. a randomised trial."""

    p: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("fixed propensity must lie in (0, 1)")

    def predict_proba(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], float(self.p))


@dataclass(frozen=True, eq=False)
class OutcomeStage:
    """Potential-outcome regressors plus the noise model.

    ``param == "s"``: one regressor on ``[X, W]`` queried at W=0 and W=1.
    ``param == "t"``: ``models = (mu0, mu1)``.
    Continuous outcomes get Gaussian noise with the per-arm residual sd;
    binary outcomes are Bernoulli draws of the clipped prediction.
    """

    param: str
    models: tuple[OutcomeModel, ...]
    sigma: tuple[float, float] = (0.0, 0.0)
    binary: bool = False
    noise: bool = True

    def mu(self, X, arm) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.param == "s":
            w = np.broadcast_to(np.asarray(arm, dtype=float), (X.shape[0],))
            return self.models[0].predict(np.column_stack([X, w]))
        if np.ndim(arm) == 0:
            return self.models[int(arm)].predict(X)
        arm = np.asarray(arm)
        return np.where(arm == 1, self.models[1].predict(X), self.models[0].predict(X))

    def sample(self, X, W, seed) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        mean = self.mu(X, W)
        rng = as_seed(seed).generator()
        if self.binary:
            prob = np.clip(mean, 0.0, 1.0)
            if not self.noise:
                return (prob >= 0.5).astype(float)
            return (rng.random(len(prob)) < prob).astype(float)
        if not self.noise:
            return mean
        sd = np.where(W == 1, self.sigma[1], self.sigma[0])
        return mean + sd * rng.standard_normal(len(mean))


def fit_outcome_stage(X, W, Y, cfg: GenConfig, binary: bool = False,
                      allow_empty_arm: bool = False) -> OutcomeStage:
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    for arm in (0, 1):
        if not np.any(W == arm) and (cfg.outcome_param == "t" or not allow_empty_arm):
            raise ValueError(f"cannot fit outcome arm W={arm}: no samples")
    kw = dict(kind=cfg.regressor, cfg=cfg.train, poly2=cfg.regressor_poly2)
    if cfg.outcome_param == "s":
        models = (fit_regressor(np.column_stack([X, W]), Y, **kw),)
    else:
        models = tuple(fit_regressor(X[W == a], Y[W == a], **kw) for a in (0, 1))
    stage = OutcomeStage(cfg.outcome_param, models, binary=binary, noise=cfg.noise)
    sigma = []
    for a in (0, 1):
        m = W == a
        if not m.any():
            sigma.append(0.0)
            continue
        res = Y[m] - stage.mu(X[m], a)
        sigma.append(float(np.sqrt(np.mean(res * res))))
    return OutcomeStage(cfg.outcome_param, models, (sigma[0], sigma[1]), binary, cfg.noise)


# ---------------------------------------------------------------------------
# Composite generators


@dataclass(frozen=True, eq=False)
class SteamModel:
    schema: tuple[Column, ...]
    qx: MarginalHistogram | GaussianMixture
    qw: PropensityModel | FixedPropensity
    qy: OutcomeStage

    def generate(self, n: int, seed) -> TreatmentDataset:
        seed = as_seed(seed)
        X = self.qx.sample(n, seed.derive("qx"))
        prob = self.qw.predict_proba(X)
        W = (seed.derive("qw").generator().random(n) < prob).astype(float)
        Y = self.qy.sample(X, W, seed.derive("qy"))
        return TreatmentDataset(self.schema, X, W, Y)


def _check_arms(ds: TreatmentDataset):
    for arm in (0, 1):
        if not np.any(ds.W == arm):
            raise ValueError(f"cannot fit outcome arm W={arm}: no samples")


def fit_steam(ds: TreatmentDataset, cfg: GenConfig | None = None,
              known_propensity: float | None = None) -> SteamModel:
    """Fit the covariate generator, propensity model and outcome stage on ``ds``.

    With ``known_propensity`` the assignment stage is fixed to that
    probability and no classifier is trained.
    """
    cfg = cfg or GenConfig()
    if known_propensity is None:
        _check_arms(ds)
    qx = fit_generator(ds.X, ds.covariates, cfg, cfg.seed.derive("qx", "fit"))
    if known_propensity is not None:
        qw = FixedPropensity(float(known_propensity))
    else:
        qw = fit_logistic(ds.X, ds.W, cfg.train, kind=cfg.classifier, clip_lo=1e-6)
    qy = fit_outcome_stage(ds.X, ds.W, ds.Y, cfg, ds.binary_outcome,
                           allow_empty_arm=known_propensity is not None)
    return SteamModel(ds.schema, qx, qw, qy)


def generate_steam(m: SteamModel, n: int, seed) -> TreatmentDataset:
    return m.generate(n, seed)


@dataclass(frozen=True, eq=False)
class JointModel:
    """One generator over every column of the table."""

    schema: tuple[Column, ...]
    generator: MarginalHistogram | GaussianMixture

    def generate(self, n: int, seed) -> TreatmentDataset:
        return TreatmentDataset.from_table(self.generator.sample(n, as_seed(seed).derive("joint")),
                                           self.schema)


def fit_joint_baseline(ds: TreatmentDataset, cfg: GenConfig | None = None) -> JointModel:
    cfg = cfg or GenConfig()
    gen = fit_generator(ds.table(), ds.schema, cfg, cfg.seed.derive("joint", "fit"))
    return JointModel(ds.schema, gen)


@dataclass(frozen=True, eq=False)
class JointXWModel:
    """Ablation: one generator over ``(X, W)``, then the outcome stage."""

    schema: tuple[Column, ...]
    qxw: MarginalHistogram | GaussianMixture
    qy: OutcomeStage

    def generate(self, n: int, seed) -> TreatmentDataset:
        seed = as_seed(seed)
        XW = self.qxw.sample(n, seed.derive("qxw"))
        X, W = XW[:, :-1], XW[:, -1]
        Y = self.qy.sample(X, W, seed.derive("qy"))
        return TreatmentDataset(self.schema, X, W, Y)


def fit_steam_ablation_jointxw(ds: TreatmentDataset, cfg: GenConfig | None = None) -> JointXWModel:
    cfg = cfg or GenConfig()
    _check_arms(ds)
    cols = ds.covariates + (ds.treatment_column,)
    qxw = fit_generator(np.column_stack([ds.X, ds.W]), cols, cfg, cfg.seed.derive("qxw", "fit"))
    qy = fit_outcome_stage(ds.X, ds.W, ds.Y, cfg, ds.binary_outcome)
    return JointXWModel(ds.schema, qxw, qy)
