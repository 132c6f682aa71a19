"""Supervised learners: logistic regression, ridge and boosted trees.

* :func:`fit_logistic` - L2-regularised logistic regression trained by
  full-batch gradient descent with backtracking line search.
* :func:`fit_ridge` - closed-form ridge regression, intercept unpenalised.
* :func:`fit_gbt` - gradient boosted regression trees on squared loss.

All fits are deterministic: no learner draws random numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.special import expit, log_expit

from .data import RngSeed, as_seed

LOGISTIC = "logistic"
LOGISTIC_POLY2 = "logistic_poly2"
RIDGE = "ridge"
GBT = "gbt"


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1e-4
    max_iters: int = 500
    tolerance: float = 1e-8
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 5
    n_thresholds: int = 32
    ridge_lambda: float = 1e-3
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        if self.l2_lambda < 0 or self.ridge_lambda < 0:
            raise ValueError("regularisation strengths must be >= 0")
        if self.max_iters < 1 or self.tolerance <= 0:
            raise ValueError("max_iters must be positive and tolerance > 0")
        if self.n_trees < 0 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("invalid tree settings")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        object.__setattr__(self, "seed", as_seed(self.seed))


def poly2_features(X: np.ndarray) -> np.ndarray:
    """Append squares and pairwise products: ``[x, x_j^2, x_i x_j (i<j)]``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    iu, ju = np.triu_indices(d, k=1)
    return np.hstack([X, X * X, X[:, iu] * X[:, ju]])


def _check_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


# ---------------------------------------------------------------------------
# Logistic regression


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Logistic model ``P(W=1|x) = clip(sigmoid(b + phi(x) @ coef))``.

    ``phi`` optionally expands to poly2 features, then applies the affine map
    ``(v - feature_mean) / feature_scale`` and, when ``max_norm`` is set,
    rescales rows whose Euclidean norm exceeds it.
    """

    kind: str
    coef: np.ndarray
    intercept: float
    n_features: int
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    clip_lo: float = 1e-6
    max_norm: float | None = None
    n_iter: int = 0
    converged: bool = False

    def features(self, X) -> np.ndarray:
        X = _check_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        Z = poly2_features(X) if self.kind == LOGISTIC_POLY2 else X
        Z = (Z - self.feature_mean) / self.feature_scale
        if self.max_norm is not None:
            norms = np.linalg.norm(Z, axis=1)
            Z = Z * np.minimum(1.0, self.max_norm / np.maximum(norms, 1e-300))[:, None]
        return Z

    def decision_function(self, X) -> np.ndarray:
        return self.intercept + self.features(X) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(expit(self.decision_function(X)), self.clip_lo, 1.0 - self.clip_lo)

    def with_clip(self, clip_lo: float) -> "PropensityModel":
        return replace(self, clip_lo=clip_lo)


def predict_proba(m: PropensityModel, X) -> np.ndarray:
    return m.predict_proba(X)


def logistic_loss_grad(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, lam: float,
                       penalize_intercept: bool = False):
    """Mean logistic loss plus ``lam/2 ||w||^2`` and its gradient.

    ``theta = [intercept, w...]``.
    """
    b, w = theta[0], theta[1:]
    eta = b + Z @ w
    # softplus(eta) - y*eta, written stably
    loss = np.mean(-log_expit(eta) + (1.0 - y) * eta) + 0.5 * lam * (w @ w)
    resid = expit(eta) - y
    g = np.empty_like(theta)
    g[0] = resid.mean()
    g[1:] = Z.T @ resid / len(y) + lam * w
    if penalize_intercept:
        loss += 0.5 * lam * b * b
        g[0] += lam * b
    return loss, g


def _gradient_descent(Z, y, lam, max_iters, tol, penalize_intercept=False, fit_intercept=True):
    theta = np.zeros(Z.shape[1] + 1)
    loss, g = logistic_loss_grad(theta, Z, y, lam, penalize_intercept)
    if not fit_intercept:
        g[0] = 0.0
    step = 1.0
    it = 0
    converged = bool(np.max(np.abs(g)) <= tol)
    while not converged and it < max_iters:
        it += 1
        gg = g @ g
        while True:
            cand = theta - step * g
            c_loss, c_g = logistic_loss_grad(cand, Z, y, lam, penalize_intercept)
            if c_loss <= loss - 0.5 * step * gg or step < 1e-12:
                break
            step *= 0.5
        theta, loss, g = cand, c_loss, c_g
        if not fit_intercept:
            g[0] = 0.0
        step = min(step * 2.0, 1e6)
        converged = bool(np.max(np.abs(g)) <= tol)
    return theta, it, converged


def fit_logistic(X, y, cfg: TrainConfig | None = None, kind: str = LOGISTIC,
                 clip_lo: float = 1e-6, standardize: bool = True) -> PropensityModel:
    """Fit ``P(y=1|x)`` by minimising mean log-loss + ``l2_lambda/2 ||w||^2``.

    Features (after the optional poly2 expansion) are standardised internally
    and the scaler is stored with the model. Labels of a single class are
    allowed; the intercept then drifts towards the clipped extreme.
    """
    cfg = cfg or TrainConfig()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValueError("logistic regression needs at least 2 rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if kind not in (LOGISTIC, LOGISTIC_POLY2):
        raise ValueError(f"unknown classifier kind {kind!r}")
    Z = poly2_features(X) if kind == LOGISTIC_POLY2 else X
    if standardize:
        mean = Z.mean(axis=0)
        sd = Z.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
    else:
        mean, scale = np.zeros(Z.shape[1]), np.ones(Z.shape[1])
    Zs = (Z - mean) / scale
    theta, it, conv = _gradient_descent(Zs, y, cfg.l2_lambda, cfg.max_iters, cfg.tolerance)
    return PropensityModel(kind, theta[1:], float(theta[0]), X.shape[1], mean, scale,
                           clip_lo=clip_lo, n_iter=it, converged=conv)


# ---------------------------------------------------------------------------
# Regression


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat binary tree; ``feature[i] < 0`` marks a leaf. ``x <= threshold`` goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return self.value[node]
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    """Ridge or boosted-tree regressor.

    ridge: ``intercept + phi(x) @ coef`` (``phi`` = identity or poly2).
    gbt:   ``init + learning_rate * sum(tree(x))``.
    """

    kind: str
    n_features: int
    intercept: float = 0.0
    coef: np.ndarray | None = None
    poly2: bool = False
    trees: tuple[Tree, ...] = ()
    learning_rate: float = 0.1

    def predict(self, X) -> np.ndarray:
        X = _check_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.kind == RIDGE:
            Z = poly2_features(X) if self.poly2 else X
            return self.intercept + Z @ self.coef
        out = np.full(X.shape[0], self.intercept)
        if self.trees:
            acc = np.zeros(X.shape[0])
            for t in self.trees:
                acc += t.predict(X)
            out = out + self.learning_rate * acc
        return out

    def staged_predict(self, X):
        """Yield predictions after 0, 1, ..., n_trees trees."""
        X = _check_matrix(X)
        acc = np.zeros(X.shape[0])
        yield np.full(X.shape[0], self.intercept)
        for t in self.trees:
            acc += t.predict(X)
            yield self.intercept + self.learning_rate * acc


def constant_model(value: float, n_features: int) -> OutcomeModel:
    return OutcomeModel(RIDGE, n_features, float(value), np.zeros(n_features))


def fit_ridge(X, y, lam: float = 1e-3, poly2: bool = False) -> OutcomeModel:
    """Ridge regression via the normal equations on centred data.

    With ``lam == 0`` a singular system is resolved by the pseudo-inverse
    (minimum-norm solution).
    """
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("X and y must have the same, non-zero length")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    Z = poly2_features(X) if poly2 else X
    zm, ym = Z.mean(axis=0), y.mean()
    Zc, yc = Z - zm, y - ym
    A = Zc.T @ Zc + lam * np.eye(Z.shape[1])
    b = Zc.T @ yc
    if lam > 0:
        try:
            coef = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            coef = np.linalg.pinv(A) @ b
    else:
        coef = np.linalg.pinv(A) @ b
    return OutcomeModel(RIDGE, X.shape[1], float(ym - zm @ coef), coef, poly2=poly2)


@njit(cache=True)
def _grow_tree_nb(X, order, r, max_depth, min_leaf, n_thresholds):
    """Grow one least-squares tree on residuals ``r``.

    Split candidates are ``n_thresholds`` node-local quantiles per feature,
    read off the presorted ``order``. Ties go to the lowest feature index,
    then the lowest threshold.
    """
    n, d = X.shape
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    fitted = np.empty(n)
    node_of = np.zeros(n, np.int64)
    depth_of = np.zeros(cap, np.int64)
    vals = np.empty(n)
    csum = np.empty(n)
    n_nodes = 1
    stack = np.empty(cap, np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        m = 0
        total = 0.0
        sse = 0.0
        for i in range(n):
            if node_of[i] == node:
                m += 1
                total += r[i]
                sse += r[i] * r[i]
        best_gain = -np.inf
        best_f = -1
        best_t = 0.0
        if depth_of[node] < max_depth and m >= 2 * min_leaf:
            base = total * total / m
            for f in range(d):
                k = 0
                acc = 0.0
                for jj in range(n):
                    i = order[f, jj]
                    if node_of[i] == node:
                        vals[k] = X[i, f]
                        acc += r[i]
                        csum[k] = acc
                        k += 1
                last_pos = -1
                for j in range(1, n_thresholds + 1):
                    pos = int(np.floor(j / (n_thresholds + 1) * (m - 1)))
                    if pos == last_pos:
                        continue
                    last_pos = pos
                    t = vals[pos]
                    e = pos
                    while e + 1 < m and vals[e + 1] == t:
                        e += 1
                    nl = e + 1
                    if nl < min_leaf or nl > m - min_leaf:
                        continue
                    sl = csum[e]
                    sr = total - sl
                    gain = sl * sl / nl + sr * sr / (m - nl) - base
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_t = t
        if best_f >= 0 and best_gain > 1e-12 * max(sse, 1e-300):
            li = n_nodes
            ri = n_nodes + 1
            n_nodes += 2
            feature[node] = best_f
            threshold[node] = best_t
            left[node] = li
            right[node] = ri
            depth_of[li] = depth_of[node] + 1
            depth_of[ri] = depth_of[node] + 1
            for i in range(n):
                if node_of[i] == node:
                    if X[i, best_f] <= best_t:
                        node_of[i] = li
                    else:
                        node_of[i] = ri
            stack[top] = ri
            top += 1
            stack[top] = li
            top += 1
        else:
            v = total / m if m > 0 else 0.0
            value[node] = v
            for i in range(n):
                if node_of[i] == node:
                    fitted[i] = v
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], fitted)


def _grow_tree(X, order, r, cfg: TrainConfig):
    f, t, lft, rgt, v, fitted = _grow_tree_nb(X, order, r, cfg.max_depth, cfg.min_leaf,
                                              cfg.n_thresholds)
    return Tree(f.copy(), t.copy(), lft.copy(), rgt.copy(), v.copy()), fitted


def fit_gbt(X, y, cfg: TrainConfig | None = None) -> OutcomeModel:
    """Gradient boosting on squared loss.

    Each tree is fit to the current residuals; leaves hold residual means and
    the ensemble adds ``learning_rate * leaf``. Training MSE can only go down
    tree by tree.
    """
    cfg = cfg or TrainConfig()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if y.shape[0] != n:
        raise ValueError("X and y lengths differ")
    if n < cfg.min_leaf:
        raise ValueError(f"need at least min_leaf={cfg.min_leaf} rows, got {n}")
    init = float(y[0]) if np.all(y == y[0]) else float(y.mean())
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    X = np.ascontiguousarray(X)
    F = np.full(n, init)
    trees = []
    for _ in range(cfg.n_trees):
        r = y - F
        if not np.any(r):
            break
        tree, fitted = _grow_tree(X, order, r, cfg)
        if tree.feature[0] < 0 and fitted[0] == 0.0:
            break
        trees.append(tree)
        F = F + cfg.learning_rate * fitted
    return OutcomeModel(GBT, X.shape[1], init, trees=tuple(trees), learning_rate=cfg.learning_rate)


def fit_regressor(X, y, kind: str = GBT, cfg: TrainConfig | None = None, poly2: bool = False) -> OutcomeModel:
    cfg = cfg or TrainConfig()
    if kind == RIDGE:
        return fit_ridge(X, y, cfg.ridge_lambda, poly2=poly2)
    if kind == GBT:
        return fit_gbt(X, y, cfg)
    raise ValueError(f"unknown regressor kind {kind!r}")
