"""Bagged regression trees used as per-criterion process surrogates."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeding import TREE, derive_seed

FORMAT = "procopt.forest/1"

# Table of options searched by default (3960 combinations).
DEFAULT_GRID = {
    "bootstrap": [True, False],
    "n_estimators": [200, 400, 600, 800, 1000, 1200, 1400, 1600, 1800, 2000],
    "min_samples_leaf": [1, 2, 4],
    "min_samples_split": [2, 5, 10],
    "max_depth": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, None],
    "max_features": ["auto", "sqrt"],
}


@dataclass(frozen=True)
class ForestHyperParams:
    bootstrap: bool = True
    n_estimators: int = 100
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    max_depth: int | None = None
    max_features: str = "auto"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.max_features not in ("auto", "sqrt"):
            raise ValueError("max_features must be 'auto' or 'sqrt'")

    def n_candidates(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        return n_features


def expand_grid(grid: dict | None = None) -> list[ForestHyperParams]:
    """Cartesian product of option lists, in the key order of ``grid``."""
    grid = DEFAULT_GRID if grid is None else grid
    keys = list(grid)
    return [ForestHyperParams(**dict(zip(keys, combo)))
            for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass(frozen=True)
class Tree:
    """A fitted tree stored as parallel node arrays; ``feature == -1`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        rows = np.arange(len(X))
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "n_samples")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            np.asarray(d["n_samples"], dtype=np.int64),
        )


def _best_split(X, y, features, min_leaf):
    """Lowest summed child squared error over candidate features and midpoints.

    Returns ``(feature, threshold)`` or ``None`` when no admissible split exists.
    Ties keep the first candidate in (feature, threshold) order.
    """
    n = len(y)
    yc = y - y.mean()
    best_sse, best = math.inf, None
    i = np.arange(1, n)  # size of the left child
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], yc[order]
        ok = (xs[1:] > xs[:-1]) & (i >= min_leaf) & (n - i >= min_leaf)
        if not ok.any():
            continue
        s, q = np.cumsum(ys), np.cumsum(ys * ys)
        sl, ql = s[:-1], q[:-1]
        sse = (ql - sl * sl / i) + ((q[-1] - ql) - (s[-1] - sl) ** 2 / (n - i))
        sse = np.where(ok, sse, np.inf)
        k = int(np.argmin(sse))
        if sse[k] < best_sse:
            best_sse = sse[k]
            best = (int(f), 0.5 * (xs[k] + xs[k + 1]))
    return best


def fit_tree(X, y, hp: ForestHyperParams, seed: int = 0) -> Tree:
    """Grow one regression tree greedily by variance reduction."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (N, n) with N matching len(y)")
    if len(y) == 0:
        raise ValueError("cannot fit a tree on an empty training set")
    rng = np.random.default_rng(seed)
    n_features = X.shape[1]
    k = hp.n_candidates(n_features)
    max_depth = math.inf if hp.max_depth is None else hp.max_depth

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        count.append(len(rows))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = y[rows]
        if len(rows) < hp.min_samples_split or depth >= max_depth or np.ptp(ys) == 0:
            continue
        cand = np.sort(rng.choice(n_features, size=k, replace=False))
        found = _best_split(X[rows], ys, cand, hp.min_samples_leaf)
        if found is None:
            continue
        f, t = found
        mask = X[rows, f] <= t
        feature[node], threshold[node] = f, t
        lo = new_node(rows[mask])
        hi = new_node(rows[~mask])
        left[node], right[node] = lo, hi
        # right pushed first so the left subtree is numbered first
        stack.append((hi, rows[~mask], depth + 1))
        stack.append((lo, rows[mask], depth + 1))

    return Tree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(value, dtype=float), np.array(count, dtype=np.int64),
    )


@dataclass(frozen=True)
class RandomForestModel:
    hyperparams: ForestHyperParams
    trees: tuple[Tree, ...]
    n_features: int
    criterion_name: str = ""
    schema_hash: str = ""

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} inputs, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("predict takes a single input vector")
        return float(self.predict_many(x[None, :])[0])


def fit_forest(X, y, hp: ForestHyperParams, seed: int = 0, criterion_name: str = "",
               schema_hash: str = "") -> RandomForestModel:
    """Fit ``hp.n_estimators`` trees; tree ``k`` draws from ``derive_seed(seed, TREE, k)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit a forest on an empty training set")
    trees = []
    for k in range(hp.n_estimators):
        tree_seed = derive_seed(seed, TREE, k)
        if hp.bootstrap:
            rows = np.random.default_rng(tree_seed).integers(0, len(y), size=len(y))
            Xk, yk = X[rows], y[rows]
        else:
            Xk, yk = X, y
        trees.append(fit_tree(Xk, yk, hp, seed=tree_seed + 1))
    return RandomForestModel(hp, tuple(trees), X.shape[1], criterion_name, schema_hash)


@dataclass(frozen=True)
class Metrics:
    r2: float
    mae: float
    mape: float


def regression_metrics(y_true, y_pred) -> Metrics:
    """R², MAE and MAPE (percent, rows with a zero target skipped).

    R² is NaN when the targets are all equal.
    """
    y = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if len(y) == 0:
        raise ValueError("metrics need at least one row")
    err = y - p
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err ** 2)) / ss_tot if ss_tot > 0 else math.nan
    nz = y != 0
    mape = 100.0 * float(np.mean(np.abs(err[nz]) / np.abs(y[nz]))) if nz.any() else math.nan
    return Metrics(r2, float(np.mean(np.abs(err))), mape)


def evaluate(model: RandomForestModel, X, y) -> Metrics:
    return regression_metrics(y, model.predict_many(X))


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _cv_mse(X, y, hp, parts, seed):
    errs = []
    for i, held in enumerate(parts):
        train = np.concatenate([p for j, p in enumerate(parts) if j != i])
        model = fit_forest(X[train], y[train], hp, seed)
        errs.append(float(np.mean((model.predict_many(X[held]) - y[held]) ** 2)))
    return float(np.mean(errs))


def grid_search_cv(X, y, grid: Sequence[ForestHyperParams], folds: int = 3, seed: int = 0,
                   n_jobs: int = 1):
    """Mean held-out MSE per candidate; returns ``(best, [(hp, mse), ...])``.

    Every candidate sees the same folds and forest seed. Ties go to the
    earliest grid entry.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(y) < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV, got {len(y)}")
    if not grid:
        raise ValueError("empty hyperparameter grid")
    parts = fold_indices(len(y), folds, seed)
    if n_jobs == 1:
        scores = [_cv_mse(X, y, hp, parts, seed) for hp in grid]
    else:
        from joblib import Parallel, delayed

        scores = Parallel(n_jobs=n_jobs)(delayed(_cv_mse)(X, y, hp, parts, seed) for hp in grid)
    table = list(zip(grid, scores))
    best = min(range(len(table)), key=lambda i: (table[i][1], i))
    return table[best][0], table


# -- serialization ----------------------------------------------------------

def model_to_dict(model: RandomForestModel) -> dict:
    return {
        "format": FORMAT,
        "schema_hash": model.schema_hash,
        "criterion": model.criterion_name,
        "n_features": model.n_features,
        "hyperparams": asdict(model.hyperparams),
        "trees": [t.to_dict() for t in model.trees],
    }


def model_from_dict(d: dict) -> RandomForestModel:
    if d.get("format") != FORMAT:
        raise ValueError(f"not a forest model file (format={d.get('format')!r})")
    return RandomForestModel(
        ForestHyperParams(**d["hyperparams"]),
        tuple(Tree.from_dict(t) for t in d["trees"]),
        int(d["n_features"]),
        d.get("criterion", ""),
        d.get("schema_hash", ""),
    )


def save_model(model: RandomForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_model(path: str | Path) -> RandomForestModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def hp_rows(table: Iterable[tuple[ForestHyperParams, float]]) -> list[dict]:
    rows = []
    for hp, mse in table:
        row = asdict(hp)
        row["max_depth"] = "None" if hp.max_depth is None else hp.max_depth
        row["mean_cv_mse"] = repr(mse)
        rows.append(row)
    return rows
