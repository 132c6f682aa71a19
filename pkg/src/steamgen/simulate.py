"""Simulated treatment data with tunable knobs, oracles and study builders.

The default process draws::

    X ~ N(0, I_d)
    W ~ Bernoulli(sigmoid(0.5 * (X1^2 + X2^2)))
    Y ~ N(X1^2 + X2^2 + W * (X3^2 + X4^2), 1)

Column indices in configs are 1-based, matching the ``x1..xd`` column names.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .data import TreatmentDataset, as_seed, default_schema

QUADRATIC_MEAN = "quadratic_mean"
LINEAR_MEAN = "linear_mean"
CONSTANT = "constant"
PROPENSITIES = (QUADRATIC_MEAN, LINEAR_MEAN, CONSTANT)


@dataclass(frozen=True)
class DgpConfig:
    d: int = 10
    n: int = 2000
    propensity: str = QUADRATIC_MEAN
    k_w: int = 2
    p: float = 0.5
    prognostic: tuple[int, ...] = (1, 2)
    predictive: tuple[int, ...] = (3, 4)
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "prognostic", tuple(int(i) for i in self.prognostic))
        object.__setattr__(self, "predictive", tuple(int(i) for i in self.predictive))
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be positive")
        if self.propensity not in PROPENSITIES:
            raise ValueError(f"unknown propensity {self.propensity!r}")
        if self.propensity != CONSTANT and not 1 <= self.k_w <= self.d:
            raise ValueError(f"K_w must satisfy 1 <= K_w <= d (K_w={self.k_w}, d={self.d})")
        if self.propensity == CONSTANT and not 0 < self.p < 1:
            raise ValueError("constant propensity p must lie in (0, 1)")
        for name in ("prognostic", "predictive"):
            for i in getattr(self, name):
                if not 1 <= i <= self.d:
                    raise ValueError(f"{name} index {i} outside 1..d (d={self.d})")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def with_predictive_range(self, k_y: int) -> "DgpConfig":
        """Predictive function ``sum_{k=3}^{K_y} X_k^2``."""
        if not 3 <= k_y <= self.d:
            raise ValueError(f"K_y must satisfy 3 <= K_y <= d (K_y={k_y}, d={self.d})")
        return replace(self, predictive=tuple(range(3, k_y + 1)))


def _sum_sq(X, idx) -> np.ndarray:
    if not idx:
        return np.zeros(X.shape[0])
    cols = np.asarray(idx) - 1
    return np.sum(X[:, cols] ** 2, axis=1)


def _check_X(cfg: DgpConfig, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != cfg.d:
        raise ValueError(f"expected {cfg.d} covariates, got {X.shape[1]}")
    return X


def propensity(cfg: DgpConfig, X) -> np.ndarray:
    X = _check_X(cfg, X)
    if cfg.propensity == CONSTANT:
        return np.full(X.shape[0], cfg.p)
    k = cfg.k_w
    if cfg.propensity == QUADRATIC_MEAN:
        return expit(np.sum(X[:, :k] ** 2, axis=1) / k)
    return expit(np.sum(X[:, :k], axis=1) / k)


def mu_prog(cfg: DgpConfig, X) -> np.ndarray:
    return _sum_sq(_check_X(cfg, X), cfg.prognostic)


def mu_pred(cfg: DgpConfig, X) -> np.ndarray:
    return _sum_sq(_check_X(cfg, X), cfg.predictive)


def oracle_cate(cfg: DgpConfig, X) -> np.ndarray:
    """True CATE; equal to the predictive function for this process."""
    return mu_pred(cfg, X)


def simulate(cfg: DgpConfig | None = None, seed=0, n: int | None = None) -> TreatmentDataset:
    cfg = cfg or DgpConfig()
    n = cfg.n if n is None else n
    seed = as_seed(seed)
    X = seed.derive("X").generator().standard_normal((n, cfg.d))
    W = (seed.derive("W").generator().random(n) < propensity(cfg, X)).astype(float)
    eps = seed.derive("Y").generator().standard_normal(n)
    Y = mu_prog(cfg, X) + W * mu_pred(cfg, X) + cfg.sigma * eps
    return TreatmentDataset(default_schema(cfg.d), X, W, Y)


def describe(cfg: DgpConfig) -> str:
    """Human-readable oracle description for sidecar files."""
    def ss(idx):
        return " + ".join(f"x{i}^2" for i in idx) or "0"
    if cfg.propensity == CONSTANT:
        pi = f"{cfg.p}"
    else:
        terms = [f"x{i}^2" if cfg.propensity == QUADRATIC_MEAN else f"x{i}" for i in range(1, cfg.k_w + 1)]
        pi = f"sigmoid(({' + '.join(terms)}) / {cfg.k_w})"
    return (f"X ~ N(0, I_{cfg.d}); W ~ Bernoulli({pi}); "
            f"Y ~ N({ss(cfg.prognostic)} + W * ({ss(cfg.predictive)}), {cfg.sigma}^2); "
            f"tau(x) = {ss(cfg.predictive)}")


# ---------------------------------------------------------------------------
# KL decomposition demonstrator


def gaussian_kl(mu1: float, mu2: float, s1: float = 1.0, s2: float = 1.0) -> float:
    """KL(N(mu1, s1^2) || N(mu2, s2^2))."""
    return float(np.log(s2 / s1) + (s1 ** 2 + (mu1 - mu2) ** 2) / (2 * s2 ** 2) - 0.5)


def bernoulli_kl(p: float, q: float) -> float:
    """KL(Bern(p) || Bern(q)) in nats."""
    out = 0.0
    if p > 0:
        out += p * np.log(p / q)
    if p < 1:
        out += (1 - p) * np.log((1 - p) / (1 - q))
    return float(out)


@dataclass(frozen=True)
class Theorem1Params:
    """Per-dimension covariate KL plus the two conditional KL totals.

    ``c1 = eps_w1 + eps_y1`` and ``c2 = eps_w2 + eps_y2`` for the two
    proposals being compared.
    """

    eps_x: float
    c1: float
    c2: float

    def __post_init__(self):
        if not (self.eps_x > 0 and self.c1 > 0 and self.c2 > 0):
            raise ValueError("all KL terms must be strictly positive")

    @classmethod
    def from_components(cls, mu_x: float, w_true: float, w1: float, w2: float,
                        y_shift1: float, y_shift2: float) -> "Theorem1Params":
        """Closed-form construction.

        Covariates: unit Gaussians shifted by ``mu_x`` per dimension.
        Treatment: Bernoulli(w_true) approximated by Bernoulli(w_k).
        Outcome: unit Gaussians shifted by ``y_shift_k``.
        """
        return cls(gaussian_kl(mu_x, 0.0),
                   bernoulli_kl(w_true, w1) + gaussian_kl(y_shift1, 0.0),
                   bernoulli_kl(w_true, w2) + gaussian_kl(y_shift2, 0.0))


class Theorem1Result(NamedTuple):
    d: int
    ratio: float
    bound: float


def theorem1_ratio(d: int, p: Theorem1Params) -> Theorem1Result:
    """``R(d) = (d eps_x + c1) / (d eps_x + c2)`` and ``|c1 - c2| / (d eps_x)``.

    Evaluated in rational arithmetic on the float inputs, then rounded once.
    """
    if d < 1:
        raise ValueError("d must be a positive integer")
    ex, c1, c2 = Fraction(p.eps_x), Fraction(p.c1), Fraction(p.c2)
    a = d * ex
    ratio = (a + c1) / (a + c2)
    bound = abs(c1 - c2) / a
    return Theorem1Result(d, float(ratio), float(bound))


# ---------------------------------------------------------------------------
# Adversarial and ranking studies

ZERO_X = "zero_x"
ZERO_W = "zero_w"
ZERO_Y = "zero_y"


def adversarial_synth(real: TreatmentDataset, mode: str, seed) -> TreatmentDataset:
    """Copy of ``real`` (rows permuted) with one component destroyed.

    zero_x: every covariate set to 0. zero_w: every unit untreated.
    zero_y: Y redrawn from N(0, 1) independently of X and W.
    """
    seed = as_seed(seed)
    perm = seed.derive("rows").generator().permutation(real.n)
    base = real.subset(perm)
    if mode == ZERO_X:
        return base.replace(X=np.zeros_like(base.X))
    if mode == ZERO_W:
        return base.replace(W=np.zeros(base.n))
    if mode == ZERO_Y:
        return base.replace(Y=seed.derive("Y").generator().standard_normal(base.n))
    raise ValueError(f"unknown adversarial mode {mode!r}")


def _subset_pi(X, k):
    return expit(X[:, :k].mean(axis=1))


PROPENSITY_SUBSETS = (1, 3, 5)


@dataclass(frozen=True)
class PropensitySubsetStudy:
    """One repeat: real data plus three synthetic sets differing only in Q_W.

    ``synth[i]`` uses ``sigmoid(mean(X_1..X_k))`` with ``k = PROPENSITY_SUBSETS[i]``.
    ``oracle_rank`` lists variant quality, higher is better.
    """

    real: TreatmentDataset
    synth: tuple[TreatmentDataset, ...]
    oracle_rank: tuple[int, ...] = (1, 2, 3)


def subset_propensity(k: int, X) -> np.ndarray:
    return _subset_pi(np.asarray(X, dtype=float), k)


def build_propensity_subset_study(seed, n: int = 1000, repeats: int = 10) -> list[PropensitySubsetStudy]:
    seed = as_seed(seed)
    schema = default_schema(5)
    out = []
    for r in range(repeats):
        s = seed.derive("repeat", r)

        def draw(label, k):
            g = s.derive(label)
            X = g.derive("X").generator().standard_normal((n, 5))
            W = (g.derive("W").generator().random(n) < _subset_pi(X, k)).astype(float)
            Y = g.derive("Y").generator().standard_normal(n)
            return TreatmentDataset(schema, X, W, Y)

        real = draw("real", 5)
        synth = tuple(draw(f"synth{i + 1}", k) for i, k in enumerate(PROPENSITY_SUBSETS))
        out.append(PropensitySubsetStudy(real, synth))
    return out


# D.1-style outcome-capacity ladder: (name, regressor kind, poly2, n_trees, max_depth)
CAPACITY_LADDER = (
    ("ridge_linear", "ridge", False, 0, 1),
    ("ridge_poly2", "ridge", True, 0, 1),
    ("gbt_depth1", "gbt", False, 50, 1),
    ("gbt_depth3", "gbt", False, 200, 3),
)


def outcome_arch_cate(X) -> np.ndarray:
    """True CATE of the outcome-capacity study: ``x1^2``."""
    return np.asarray(X, dtype=float)[:, 0] ** 2


@dataclass(frozen=True)
class OutcomeArchStudy:
    """One repeat: real data and one synthetic set per capacity-ladder rung."""

    real: TreatmentDataset
    synth: tuple[TreatmentDataset, ...]
    names: tuple[str, ...] = tuple(r[0] for r in CAPACITY_LADDER)
    cate: object = field(default=outcome_arch_cate, repr=False)


def _draw_arch(seed, n, d=10):
    X = seed.derive("X").generator().standard_normal((n, d))
    W = (seed.derive("W").generator().random(n) < 0.5).astype(float)
    return X, W


def build_outcome_arch_study(seed, n: int = 1000, repeats: int = 10, train=None) -> list[OutcomeArchStudy]:
    """Real data ``Y ~ N(W x1^2, 1)`` and synthetic sets from fitted PO models.

    Every variant draws fresh X and W from the true process and
    ``Y ~ N(mu_hat_W(X), 1)``, where ``mu_hat`` are per-arm regressors of
    the ladder rung trained on the real data.
    """
    from .learners import TrainConfig, fit_regressor

    train = train or TrainConfig()
    seed = as_seed(seed)
    schema = default_schema(10)
    out = []
    for r in range(repeats):
        s = seed.derive("repeat", r)
        X, W = _draw_arch(s.derive("real"), n)
        Y = W * X[:, 0] ** 2 + s.derive("real", "Y").generator().standard_normal(n)
        real = TreatmentDataset(schema, X, W, Y)
        synth = []
        for name, kind, poly2, n_trees, depth in CAPACITY_LADDER:
            cfg = replace(train, n_trees=n_trees or train.n_trees, max_depth=depth)
            mus = [fit_regressor(X[W == a], Y[W == a], kind, cfg, poly2) for a in (0, 1)]
            g = s.derive(name)
            Xs, Ws = _draw_arch(g, n)
            mean = np.where(Ws == 1, mus[1].predict(Xs), mus[0].predict(Xs))
            Ys = mean + g.derive("Y").generator().standard_normal(n)
            synth.append(TreatmentDataset(schema, Xs, Ws, Ys))
        out.append(OutcomeArchStudy(real, tuple(synth)))
    return out
