"""State-level vote-share regression on media consumption features.

Trees are grown by exhaustive search over midpoints between sorted unique
feature values, minimizing the summed squared error of the two children.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .interactions import InteractionMatrix

__all__ = [
    "r_squared",
    "RidgeModel",
    "fit_ridge",
    "RegressionTree",
    "fit_tree",
    "GradientBoosting",
    "fit_gbdt",
    "RandomForest",
    "fit_random_forest",
    "CVResult",
    "kfold_cv",
    "RegressionDataset",
    "select_media",
    "build_dataset",
    "MODELS",
]


class Regressor(Protocol):
    def predict(self, X) -> np.ndarray: ...


def r_squared(actual, predicted) -> float:
    y = np.asarray(actual, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    denom = float(((y - y.mean()) ** 2).sum())
    if denom == 0:
        raise ValueError("R^2 undefined: actual values are constant")
    return 1.0 - float(((y - yhat) ** 2).sum()) / denom


@dataclass
class RidgeModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def fit_ridge(X, y, lam: float = 0.0) -> RidgeModel:
    """Minimize ``||y - Xw - b||^2 + lam ||w||^2`` (intercept not penalized)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    gram = Xc.T @ Xc + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(gram) < X.shape[1]:
        raise np.linalg.LinAlgError("singular design at lambda=0; use lambda > 0")
    w = np.linalg.solve(gram, Xc.T @ (y - ym))
    return RidgeModel(w, float(ym - xm @ w))


@dataclass
class RegressionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int, features: np.ndarray):
    n = len(y)
    best = (0.0, -1, 0.0)  # (gain, feature, threshold)
    total = y.sum()
    base = total * total / n
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        csum = np.cumsum(ys)[:-1]
        nl = np.arange(1, n)
        nr = n - nl
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        # SSE reduction = sum_l^2/n_l + sum_r^2/n_r - total^2/n
        gain = csum**2 / nl + (total - csum) ** 2 / nr - base
        gain = np.where(valid, gain, -np.inf)
        i = int(gain.argmax())
        if gain[i] > best[0] + 1e-12 * max(1.0, abs(base)):
            best = (float(gain[i]), int(f), float((xs[i] + xs[i + 1]) / 2))
    return best


def fit_tree(
    X,
    y,
    max_depth: int | None = 3,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Grow a depth-bounded squared-error regression tree."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if min_samples_leaf < 1 or len(y) < 2 * min_samples_leaf:
        raise ValueError(
            f"{len(y)} samples cannot satisfy min_samples_leaf={min_samples_leaf} on both sides of a split"
        )
    n_feat = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        if (max_depth is not None and depth >= max_depth) or len(idx) < 2 * min_samples_leaf:
            return node
        feats = np.arange(n_feat)
        if max_features is not None and max_features < n_feat:
            feats = np.sort(rng.choice(n_feat, max_features, replace=False))
        gain, f, t = _best_split(X[idx], y[idx], min_samples_leaf, feats)
        if f < 0:
            return node
        mask = X[idx, f] <= t
        feature[node], threshold[node] = f, t
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return RegressionTree(
        np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value)
    )


@dataclass
class GradientBoosting:
    init: float
    learning_rate: float
    trees: list[RegressionTree] = field(default_factory=list)
    train_sse: list[float] = field(default_factory=list)  # after stage 0, 1, ...

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.init)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out


def fit_gbdt(X, y, stages: int = 100, depth: int = 3, learning_rate: float = 0.1, min_samples_leaf: int = 1) -> GradientBoosting:
    """Squared-loss gradient boosting starting from the mean predictor."""
    if stages < 1 or depth < 1 or not 0 < learning_rate <= 1:
        raise ValueError("need stages >= 1, depth >= 1 and 0 < learning_rate <= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    model = GradientBoosting(float(y.mean()), learning_rate)
    pred = np.full(len(y), model.init)
    model.train_sse.append(float(((y - pred) ** 2).sum()))
    for _ in range(stages):
        tree = fit_tree(X, y - pred, depth, min_samples_leaf)
        pred = pred + learning_rate * tree.predict(X)
        model.trees.append(tree)
        model.train_sse.append(float(((y - pred) ** 2).sum()))
    return model


@dataclass
class RandomForest:
    trees: list[RegressionTree]

    def predict(self, X) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def fit_random_forest(
    X,
    y,
    trees: int = 100,
    depth: int | None = None,
    subsample: float = 1.0,
    seed: int | None = 0,
    bootstrap: bool = True,
    max_features: int | None = None,
    min_samples_leaf: int = 1,
) -> RandomForest:
    """Average of trees grown on (bootstrap) row subsamples."""
    if trees < 1 or not 0 < subsample <= 1:
        raise ValueError("need trees >= 1 and 0 < subsample <= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    n = len(y)
    m = max(2 * min_samples_leaf, int(round(subsample * n)))
    out = []
    for _ in range(trees):
        if bootstrap:
            idx = rng.integers(0, n, m)
        elif m < n:
            idx = np.sort(rng.choice(n, m, replace=False))
        else:
            idx = np.arange(n)
        out.append(fit_tree(X[idx], y[idx], depth, min_samples_leaf, max_features, rng))
    return RandomForest(out)


MODELS: dict[str, Callable] = {
    "ridge": partial(fit_ridge, lam=1.0),
    "gbdt": partial(fit_gbdt, stages=100, depth=3, learning_rate=0.1),
    "forest": partial(fit_random_forest, trees=100, depth=None, seed=0),
}


@dataclass
class CVResult:
    fold_r2: list[float | None]
    predictions: np.ndarray  # out-of-fold
    folds: list[np.ndarray]

    @property
    def mean_r2(self) -> float:
        valid = [r for r in self.fold_r2 if r is not None]
        return float(np.mean(valid)) if valid else math.nan


def kfold_cv(X, y, fit: Callable[..., Regressor], k: int = 5, seed: int | None = 0) -> CVResult:
    """Seeded shuffle, contiguous folds (``np.array_split`` sizes), mean test R^2."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= rows ({n})")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    preds = np.empty(n)
    scores: list[float | None] = []
    for test in folds:
        train = np.setdiff1d(perm, test)
        model = fit(X[train], y[train])
        p = model.predict(X[test])
        preds[test] = p
        if len(test) < 2 or np.ptp(y[test]) == 0:
            warnings.warn("fold with constant actuals skipped in mean R^2", RuntimeWarning, stacklevel=2)
            scores.append(None)
        else:
            scores.append(r_squared(y[test], p))
    return CVResult(scores, preds, folds)


@dataclass
class RegressionDataset:
    states: list[str]
    features: list[str]
    X: np.ndarray
    y: np.ndarray

    def features_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", *self.features])
        for s, row in zip(self.states, self.X):
            w.writerow([s, *(repr(float(v)) for v in row)])
        return buf.getvalue()

    def targets_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "dem_share"])
        for s, v in zip(self.states, self.y):
            w.writerow([s, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, features_path: str | Path, targets_path: str | Path) -> "RegressionDataset":
        with open(targets_path, newline="", encoding="utf-8") as fh:
            target = {r["state"]: float(r["dem_share"]) for r in csv.DictReader(fh)}
        with open(features_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = {r[0]: [float(v) if v else 0.0 for v in r[1:]] for r in reader}
        states = sorted(set(rows) & set(target))
        return cls(
            states,
            header[1:],
            np.array([rows[s] for s in states], dtype=float).reshape(len(states), len(header) - 1),
            np.array([target[s] for s in states]),
        )


def select_media(m: InteractionMatrix, ideology_of: Mapping[str, str], top_n: int) -> list[str]:
    """Top ``top_n`` outlets per ideology by received interactions (ties by id)."""
    received = dict(zip(m.col_keys, m.col_sums()))
    by_ideology: dict[str, list[str]] = {}
    for o in m.col_keys:
        by_ideology.setdefault(ideology_of[o], []).append(o)
    chosen = []
    for ideo in sorted(by_ideology):
        ranked = sorted(by_ideology[ideo], key=lambda o: (-received[o], o))
        chosen.extend(ranked[:top_n])
    return sorted(chosen)


def build_dataset(
    state_outlet: InteractionMatrix,
    dem_share: Mapping[str, float],
    ideology_of: Mapping[str, str],
    top_n: int,
    log_scale: bool = False,
) -> RegressionDataset:
    """Rows = states with a known vote share; absent interactions are 0."""
    media = select_media(state_outlet, ideology_of, top_n)
    states = sorted(s for s in state_outlet.row_keys if s in dem_share)
    X = np.zeros((len(states), len(media)))
    col = {o: j for j, o in enumerate(media)}
    for i, s in enumerate(states):
        for o, v in state_outlet.row(s).items():
            if o in col:
                X[i, col[o]] = v
    if log_scale:
        X = np.log10(1.0 + X)
    return RegressionDataset(states, media, X, np.array([dem_share[s] for s in states], dtype=float))
