"""Differential-privacy accounting and simple DP mechanisms for the three stages.

Budgets compose additively across the covariate, treatment and outcome
stages; sampling from a fitted model is post-processing and costs nothing.

Mechanisms (all pure epsilon; any delta is carried through unconsumed):

* covariates: per-column Laplace histograms on public bin edges
* treatment:  output-perturbed L2-regularised logistic regression
* outcome:    per-arm ridge from Laplace-perturbed sufficient statistics

Every mechanism assumes covariates on a public unit scale. Data-dependent
ranges (min/max, standard deviations) are never used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .data import BINARY, TreatmentDataset, as_seed
from .generators import FixedPropensity, MarginalHistogram, OutcomeStage, SteamModel
from .learners import LOGISTIC, PropensityModel, TrainConfig, _gradient_descent

COMPONENTS = ("Q_X", "Q_W", "Q_Y")


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("epsilon must be finite and non-negative")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")


def _require_positive(b: PrivacyBudget, what: str):
    if not b.epsilon > 0:
        raise ValueError(f"{what} needs epsilon > 0, got {b.epsilon}")


@dataclass(frozen=True)
class BudgetSplit:
    w_x: float = 1 / 3
    w_w: float = 1 / 3
    w_y: float = 1 / 3

    def __post_init__(self):
        w = self.weights
        if any(not math.isfinite(v) or v < 0 for v in w):
            raise ValueError("split weights must be finite and >= 0")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"split weights must sum to 1, got {math.fsum(w)!r}")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_x, self.w_w, self.w_y)

    @classmethod
    def parse(cls, text: str) -> "BudgetSplit":
        parts = [float(v) for v in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights need three comma-separated values wx,ww,wy")
        return cls(*parts)


def _exact_sum(values) -> float:
    return float(sum((Fraction(v) for v in values), Fraction(0)))


def split_budget(total: PrivacyBudget, s: BudgetSplit) -> tuple[PrivacyBudget, PrivacyBudget, PrivacyBudget]:
    """``eps_i = eps * w_i`` and ``delta_i = delta * w_i`` (to within an ulp of the total).

    The last non-zero component absorbs the rounding residue so that
    :func:`compose` returns ``total`` exactly.
    """
    def parts(x):
        # Shares other than the last are snapped to multiples of ulp(x), a
        # power of two; the residue x - others is then exactly representable
        # and the composed sum is x bit for bit.
        q = math.ulp(x)
        last = max(i for i, w in enumerate(s.weights) if w > 0)
        vals = [round(x * w / q) * q if i != last else 0.0 for i, w in enumerate(s.weights)]
        vals[last] = x - math.fsum(vals)
        return vals

    eps, dlt = parts(total.epsilon), parts(total.delta)
    return tuple(PrivacyBudget(e, d) for e, d in zip(eps, dlt))


def compose(entries) -> PrivacyBudget:
    """Sequential composition: exact sums of epsilons and deltas, rounded once."""
    budgets = [e[1] if isinstance(e, tuple) else e for e in entries]
    return PrivacyBudget(_exact_sum(b.epsilon for b in budgets), _exact_sum(b.delta for b in budgets))


class DpLedger:
    """Append-only record of budget consumption."""

    def __init__(self):
        self._entries: list[tuple[str, PrivacyBudget, str]] = []

    def record(self, component: str, budget: PrivacyBudget, note: str = ""):
        self._entries.append((component, budget, note))

    @property
    def entries(self) -> tuple[tuple[str, PrivacyBudget], ...]:
        return tuple((c, b) for c, b, _ in self._entries)

    @property
    def notes(self) -> tuple[str, ...]:
        return tuple(n for _, _, n in self._entries)

    @property
    def total(self) -> PrivacyBudget:
        return compose(self.entries)

    def __len__(self):
        return len(self._entries)

    def to_text(self) -> str:
        lines = ["component,epsilon,delta,note"]
        for c, b, n in self._entries:
            lines.append(f"{c},{b.epsilon!r},{b.delta!r},{n}")
        t = self.total
        lines.append(f"total,{t.epsilon!r},{t.delta!r},sequential composition")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Mechanisms

PUBLIC_BOUNDS = (-4.0, 4.0)


def laplace(rng, scale: float, size) -> np.ndarray:
    return rng.laplace(0.0, scale, size=size)


def dp_marginal_hist(table, columns, budget: PrivacyBudget, bins: int = 32, seed=0,
                     bounds=PUBLIC_BOUNDS) -> MarginalHistogram:
    """Per-column Laplace histograms.

    Each column receives ``eps / n_columns``; bin counts get Laplace noise of
    scale ``1 / eps_col`` and are clamped at zero, then renormalised.
    Continuous columns use ``bins`` equal-width bins on the public ``bounds``
    (values outside are counted in the end bins).
    """
    _require_positive(budget, "dp_marginal_hist")
    table = np.asarray(table, dtype=float)
    if table.ndim == 1:
        table = table.reshape(-1, 1)
    columns = tuple(columns)
    scale = dp_hist_scale(budget, len(columns))
    rng = as_seed(seed).generator()
    lo, hi = bounds
    edges_all, masses = [], []
    for j, c in enumerate(columns):
        col = table[:, j]
        if c.kind == BINARY:
            edges = np.array([0.0, 1.0])
            counts = np.array([np.sum(col == 0), np.sum(col == 1)], dtype=float)
        else:
            edges = np.linspace(lo, hi, bins + 1)
            counts = np.histogram(np.clip(col, lo, hi), bins=edges)[0].astype(float)
        noisy = np.maximum(counts + laplace(rng, scale, counts.shape), 0.0)
        tot = noisy.sum()
        edges_all.append(edges)
        masses.append(noisy / tot if tot > 0 else np.full(len(noisy), 1.0 / len(noisy)))
    return MarginalHistogram(columns, tuple(edges_all), tuple(masses))


def dp_hist_scale(budget: PrivacyBudget, n_columns: int) -> float:
    return 1.0 / (budget.epsilon / n_columns)


def public_histogram(columns, bins: int = 32, bounds=PUBLIC_BOUNDS) -> MarginalHistogram:
    """Data-independent fallback: uniform masses on the public bins."""
    edges, masses = [], []
    for c in columns:
        if c.kind == BINARY:
            edges.append(np.array([0.0, 1.0]))
            masses.append(np.array([0.5, 0.5]))
        else:
            edges.append(np.linspace(*bounds, bins + 1))
            masses.append(np.full(bins, 1.0 / bins))
    return MarginalHistogram(tuple(columns), tuple(edges), tuple(masses))


def dp_logistic_scale(n: int, lam: float, budget: PrivacyBudget) -> float:
    """Laplace scale ``2 / (n lam eps)`` per coefficient."""
    return 2.0 / (n * lam * budget.epsilon)


def dp_logistic(X, y, budget: PrivacyBudget, lam: float = 0.01, seed=0,
                feature_scale: float | None = None, cfg: TrainConfig | None = None,
                clip_lo: float = 1e-6, noise: bool = True) -> PropensityModel:
    """Output-perturbed logistic regression.

    Rows are mapped to ``x / feature_scale`` (default ``sqrt(d)``), clipped to
    unit L2 norm, and joined by a constant feature; the augmented row is
    divided by ``sqrt(2)`` so its norm stays <= 1. Every coefficient,
    intercept included, is penalised, and receives Laplace noise of scale
    ``2 / (n lam eps)``. ``noise=False`` returns the non-private fit of the
    same objective.
    """
    _require_positive(budget, "dp_logistic")
    if not lam > 0:
        raise ValueError("dp_logistic needs lam > 0")
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    fs = math.sqrt(d) if feature_scale is None else float(feature_scale)
    c = 1.0 / math.sqrt(2.0)
    proto = PropensityModel(LOGISTIC, np.zeros(d), 0.0, d, np.zeros(d), np.full(d, fs / c),
                            clip_lo=clip_lo, max_norm=c)
    Z = np.column_stack([np.full(n, c), proto.features(X)])
    theta, it, conv = _gradient_descent(Z, y, lam, cfg.max_iters, cfg.tolerance, fit_intercept=False)
    w = theta[1:]
    if noise:
        w = w + laplace(as_seed(seed).generator(), dp_logistic_scale(n, lam, budget), w.shape)
    return PropensityModel(LOGISTIC, w[1:].copy(), float(w[0] * c), d, np.zeros(d),
                           np.full(d, fs / c), clip_lo=clip_lo, max_norm=c, n_iter=it, converged=conv)


@dataclass(frozen=True, eq=False)
class DpRidgeModel:
    """``mu(x) = y_bound * clip([1, phi(x)] @ beta, -1, 1)`` with ``phi`` the clipped feature map.

    Targets were clipped to ``+-y_bound`` before fitting, so clipping the mean
    to the same range is post-processing and costs no budget.
    """

    beta: np.ndarray
    n_features: int
    feature_scale: float
    y_bound: float
    kind: str = "dp_ridge"

    def features(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features")
        Z = X / self.feature_scale
        norms = np.abs(Z).sum(axis=1)
        Z = Z * np.minimum(1.0, 1.0 / np.maximum(norms, 1e-300))[:, None]
        return np.column_stack([np.ones(len(Z)), Z])

    def predict(self, X) -> np.ndarray:
        return self.y_bound * np.clip(self.features(X) @ self.beta, -1.0, 1.0)


# L1 sensitivity of (upper triangle of z z^T, z y, y^2) with ||z||_1 <= 2, |y| <= 1
DP_RIDGE_SENSITIVITY = 4.0 + 2.0 + 1.0


def dp_ridge(X, y, budget: PrivacyBudget, lam: float = 1.0, seed=0, feature_scale: float | None = None,
             y_bound: float = 10.0, noise: bool = True) -> tuple[DpRidgeModel, float]:
    """Ridge regression from Laplace-perturbed sufficient statistics.

    Rows are ``[1, x / feature_scale]`` (default scale ``d``) with the feature
    part clipped to unit L1 norm; targets are ``clip(y, +-y_bound) / y_bound``.
    The statistics ``Z'Z`` (upper triangle), ``Z'y`` and ``y'y`` receive
    Laplace noise of scale ``7 / eps``. Returns the model and the residual
    standard deviation implied by the same noisy statistics.
    """
    _require_positive(budget, "dp_ridge")
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    proto = DpRidgeModel(np.zeros(d + 1), d, float(d if feature_scale is None else feature_scale), y_bound)
    Z = proto.features(X)
    t = np.clip(np.asarray(y, dtype=float), -y_bound, y_bound) / y_bound
    p = d + 1
    iu = np.triu_indices(p)
    A = Z.T @ Z
    stats = np.concatenate([A[iu], Z.T @ t, [t @ t]])
    if noise:
        stats = stats + laplace(as_seed(seed).generator(), DP_RIDGE_SENSITIVITY / budget.epsilon, stats.shape)
    A = np.zeros((p, p))
    A[iu] = stats[: len(iu[0])]
    A = A + np.triu(A, 1).T
    b = stats[len(iu[0]): len(iu[0]) + p]
    tt = stats[-1]
    # project onto PSD before regularising so the solve is well posed
    vals, vecs = np.linalg.eigh(A)
    A = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    beta = np.linalg.solve(A + lam * np.eye(p), b)
    count = max(A[0, 0], 1.0)
    rss = tt - 2 * beta @ b + beta @ A @ beta
    sigma = y_bound * math.sqrt(max(rss, 0.0) / count)
    return DpRidgeModel(beta, d, proto.feature_scale, y_bound), sigma


@dataclass(frozen=True)
class DpConfig:
    bins: int = 32
    bounds: tuple[float, float] = PUBLIC_BOUNDS
    logistic_lambda: float = 0.01
    ridge_lambda: float = 1.0
    y_bound: float = 10.0
    train: TrainConfig = field(default_factory=TrainConfig)


def dp_steam(ds: TreatmentDataset, total: PrivacyBudget, s: BudgetSplit | None = None,
             cfg: DpConfig | None = None, seed=0, noise: bool = True) -> tuple[SteamModel, DpLedger]:
    """Fit all three stages under ``total`` split by ``s``.

    A stage whose share is zero is replaced by a data-independent default
    (uniform public histogram, propensity 0.5, zero outcome with unit noise).
    ``noise=False`` fits the identical pipeline without perturbation, as a
    non-private reference.
    """
    _require_positive(total, "dp_steam")
    s = s or BudgetSplit()
    cfg = cfg or DpConfig()
    seed = as_seed(seed)
    bx, bw, by = split_budget(total, s)
    ledger = DpLedger()

    if bx.epsilon > 0:
        if noise:
            qx = dp_marginal_hist(ds.X, ds.covariates, bx, cfg.bins, seed.derive("Q_X"), cfg.bounds)
        else:
            qx = _noiseless_hist(ds, cfg)
        ledger.record("Q_X", bx, f"Laplace histograms, eps/{ds.d} per column")
    else:
        qx = public_histogram(ds.covariates, cfg.bins, cfg.bounds)
        ledger.record("Q_X", bx, "data-independent uniform histogram")

    if bw.epsilon > 0:
        qw = dp_logistic(ds.X, ds.W, bw, cfg.logistic_lambda, seed.derive("Q_W"), cfg=cfg.train, noise=noise)
        ledger.record("Q_W", bw, "output-perturbed logistic regression")
    else:
        qw = FixedPropensity(0.5)
        ledger.record("Q_W", bw, "data-independent propensity 0.5")

    if by.epsilon > 0:
        arm_budget = PrivacyBudget(by.epsilon / 2, by.delta / 2)
        models, sigmas = [], []
        for a in (0, 1):
            m = ds.W == a
            model, sd = dp_ridge(ds.X[m] if m.any() else np.zeros((0, ds.d)), ds.Y[m], arm_budget,
                                 cfg.ridge_lambda, seed.derive("Q_Y", a), y_bound=cfg.y_bound, noise=noise)
            models.append(model)
            sigmas.append(sd)
        qy = OutcomeStage("t", tuple(models), (sigmas[0], sigmas[1]), ds.binary_outcome)
        ledger.record("Q_Y", by, "per-arm sufficient-statistics ridge, eps/2 per arm")
    else:
        zero = DpRidgeModel(np.zeros(ds.d + 1), ds.d, float(ds.d), cfg.y_bound)
        qy = OutcomeStage("t", (zero, zero), (1.0, 1.0), ds.binary_outcome)
        ledger.record("Q_Y", by, "data-independent zero outcome")
    return SteamModel(ds.schema, qx, qw, qy), ledger


def _noiseless_hist(ds, cfg):
    lo, hi = cfg.bounds
    edges, masses = [], []
    for j, c in enumerate(ds.covariates):
        col = ds.X[:, j]
        if c.kind == BINARY:
            e, cnt = np.array([0.0, 1.0]), np.array([np.sum(col == 0), np.sum(col == 1)], float)
        else:
            e = np.linspace(lo, hi, cfg.bins + 1)
            cnt = np.histogram(np.clip(col, lo, hi), bins=e)[0].astype(float)
        edges.append(e)
        masses.append(cnt / cnt.sum())
    return MarginalHistogram(ds.covariates, tuple(edges), tuple(masses))
