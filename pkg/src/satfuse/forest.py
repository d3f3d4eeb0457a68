"""Quadrat feature extraction and random-forest regression.

Features are per-band mean reflectance over the pixels whose centers fall
inside each field quadrat (a small axis-aligned square).  The forest is
standard bagged CART regression: bootstrap resample per tree, splits minimize
the summed child squared error over ceil(p/3) candidate features drawn per
node from the tree's own seeded stream, leaves hold target means.  All
randomness derives from (seed, tree_index), so fits are reproducible and
trees may be grown in parallel without changing the result.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, PartitionError, SchemaError, ValidationError
from .raster import Raster

__all__ = [
    "Quadrat",
    "ForestConfig",
    "ForestModel",
    "extract_quadrat_features",
    "fit_forest",
    "predict",
    "oob_r2",
    "cross_validate",
    "save_samples_csv",
    "load_samples_csv",
]

_EPS = 1e-9


@dataclass(frozen=True)
class Quadrat:
    """Axis-aligned sampling square: center coordinates and side length (m)."""

    id: str
    x: float
    y: float
    side: float = 0.5

    def __post_init__(self):
        if not self.side > 0:
            raise ValidationError(f"quadrat {self.id!r}: side must be positive")


def extract_quadrat_features(r: Raster, quadrats: list[Quadrat]) -> np.ndarray:
    """Per-band mean over valid pixels whose centers lie inside each quadrat.

    Returns an array of shape (len(quadrats), n_bands).  Quadrats containing
    no valid pixel are collected and reported together in a CoverageError.
    """
    g = r.grid
    vals = r.values.astype(np.float64)
    feats = np.empty((len(quadrats), r.n_bands))
    empty = []
    for qi, q in enumerate(quadrats):
        half = q.side / 2.0
        # pixel centers: x = origin_x + (j + 0.5) pw, y = origin_y - (i + 0.5) ph
        j0 = math.ceil((q.x - half - g.origin_x) / g.pixel_w - 0.5 - _EPS)
        j1 = math.ceil((q.x + half - g.origin_x) / g.pixel_w - 0.5 - _EPS) - 1
        i0 = math.ceil((g.origin_y - q.y - half) / g.pixel_h - 0.5 - _EPS)
        i1 = math.ceil((g.origin_y - q.y + half) / g.pixel_h - 0.5 - _EPS) - 1
        j0, j1 = max(j0, 0), min(j1, g.width - 1)
        i0, i1 = max(i0, 0), min(i1, g.height - 1)
        if j1 < j0 or i1 < i0:
            empty.append(q.id)
            continue
        m = r.mask[i0 : i1 + 1, j0 : j1 + 1]
        if not m.any():
            empty.append(q.id)
            continue
        block = vals[:, i0 : i1 + 1, j0 : j1 + 1]
        feats[qi] = block[:, m].mean(axis=1)
    if empty:
        raise CoverageError(f"quadrats with no valid pixel: {', '.join(empty)}")
    return feats


# ---------------------------------------------------------------------------
# CART regression trees


@dataclass
class ForestConfig:
    n_trees: int = 500
    max_features: int | None = None   # default ceil(p / 3)
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True


@dataclass
class _Tree:
    feature: np.ndarray     # split feature per node, -1 for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray       # leaf mean (also stored for internal nodes)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return self.value[node]
            rows = np.flatnonzero(active)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])


def _best_split(X, y, idx, candidates, min_leaf):
    """Lowest summed-child-SSE split over the candidate features.

    Ties break toward the lowest feature index, then the lowest threshold.
    Returns (sse, feature, threshold) or None when no legal split exists.
    """
    t = y[idx]
    n = idx.size
    total_sum = t.sum()
    total_sq = (t * t).sum()
    best = None
    for f in candidates:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ts = t[order]
        csum = np.cumsum(ts)
        csq = np.cumsum(ts * ts)
        i = np.arange(min_leaf, n - min_leaf + 1)
        if i.size == 0:
            continue
        legal = vs[i - 1] < vs[i]
        if not legal.any():
            continue
        i = i[legal]
        left_sum = csum[i - 1]
        left_sq = csq[i - 1]
        sse_l = np.maximum(left_sq - left_sum * left_sum / i, 0.0)
        nr = n - i
        right_sum = total_sum - left_sum
        sse_r = np.maximum((total_sq - left_sq) - right_sum * right_sum / nr, 0.0)
        tot = sse_l + sse_r
        k = int(np.argmin(tot))
        thr = 0.5 * (vs[i[k] - 1] + vs[i[k]])
        key = (float(tot[k]), int(f), float(thr))
        if best is None or key < best:
            best = key
    return best


def _grow_tree(X, y, sample_idx, rng, cfg: ForestConfig) -> _Tree:
    p = X.shape[1]
    mtry = cfg.max_features if cfg.max_features is not None else math.ceil(p / 3)
    mtry = max(1, min(mtry, p))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), sample_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        t = y[idx]
        value[node] = float(t.mean())
        if (
            idx.size < 2 * cfg.min_samples_leaf
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
            or t.min() == t.max()
        ):
            continue
        candidates = np.sort(rng.choice(p, size=mtry, replace=False))
        split = _best_split(X, y, idx, candidates, cfg.min_samples_leaf)
        if split is None:
            continue
        _, f, thr = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        l_id, r_id = new_node(), new_node()
        left[node] = l_id
        right[node] = r_id
        # right pushed first so the left child is processed (and numbered) next
        stack.append((r_id, idx[~go_left], depth + 1))
        stack.append((l_id, idx[go_left], depth + 1))
    return _Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
    )


@dataclass
class ForestModel:
    trees: list[_Tree]
    config: ForestConfig
    seed: int
    n_features: int
    target_range: tuple[float, float]
    bootstrap_indices: list[np.ndarray] = field(default_factory=list)

    def to_json(self, path) -> None:
        doc = {
            "seed": self.seed,
            "n_features": self.n_features,
            "target_range": list(self.target_range),
            "config": {
                "n_trees": self.config.n_trees,
                "max_features": self.config.max_features,
                "min_samples_leaf": self.config.min_samples_leaf,
                "max_depth": self.config.max_depth,
                "bootstrap": self.config.bootstrap,
            },
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path) -> "ForestModel":
        with open(path) as fh:
            doc = json.load(fh)
        trees = [
            _Tree(
                np.array(t["feature"], dtype=np.int64),
                np.array(t["threshold"]),
                np.array(t["left"], dtype=np.int64),
                np.array(t["right"], dtype=np.int64),
                np.array(t["value"]),
            )
            for t in doc["trees"]
        ]
        return cls(
            trees,
            ForestConfig(**doc["config"]),
            int(doc["seed"]),
            int(doc["n_features"]),
            tuple(doc["target_range"]),
        )


def fit_forest(X: np.ndarray, y: np.ndarray, cfg: ForestConfig | None = None, seed: int = 0) -> ForestModel:
    """Fit a bagged CART regression forest; deterministic under `seed`."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValidationError("X must be 2-D with at least one feature")
    n = X.shape[0]
    if n < 2 or y.shape[0] != n:
        raise ValidationError("need at least 2 samples with matching targets")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ValidationError("features and targets must be finite")
    cfg = cfg or ForestConfig()

    trees = []
    boots = []
    all_idx = np.arange(n)
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([seed, t])
        idx = np.sort(rng.integers(0, n, size=n)) if cfg.bootstrap else all_idx
        trees.append(_grow_tree(X, y, idx, rng, cfg))
        boots.append(idx)
    return ForestModel(trees, cfg, seed, X.shape[1], (float(y.min()), float(y.max())), boots)


def predict(model: ForestModel, features: np.ndarray) -> float | np.ndarray:
    """Mean over tree predictions; a 1-D input returns a scalar."""
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise SchemaError(
            f"feature length {X.shape[1]} does not match model ({model.n_features})"
        )
    acc = np.zeros(X.shape[0])
    for tree in model.trees:
        acc += tree.predict(X)
    acc /= len(model.trees)
    return float(acc[0]) if single else acc


def oob_r2(model: ForestModel, X: np.ndarray, y: np.ndarray) -> float:
    """Out-of-bag R^2 on the training data the model was fitted with."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if not model.bootstrap_indices:
        raise ValidationError("model carries no bootstrap bookkeeping")
    acc = np.zeros(X.shape[0])
    cnt = np.zeros(X.shape[0])
    for tree, idx in zip(model.trees, model.bootstrap_indices):
        oob = np.ones(X.shape[0], dtype=bool)
        oob[idx] = False
        if not oob.any():
            continue
        acc[oob] += tree.predict(X[oob])
        cnt[oob] += 1
    covered = cnt > 0
    pred = acc[covered] / cnt[covered]
    resid = y[covered] - pred
    tot = y[covered] - y[covered].mean()
    return float(1.0 - (resid @ resid) / (tot @ tot))


def _r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    resid = y_true - y_pred
    tot = y_true - y_true.mean()
    ss_tot = float(tot @ tot)
    if ss_tot == 0.0:
        return 0.0
    return float(1.0 - (resid @ resid) / ss_tot)


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    k: int = 5,
    cfg: ForestConfig | None = None,
    seed: int = 0,
) -> dict:
    """Seeded shuffle, contiguous k-way split, one forest per fold.

    Per-fold R^2 uses the held-out mean; pooled metrics concatenate the
    held-out predictions of all folds.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if k < 2 or k > n:
        raise PartitionError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng([seed, 0])
    order = rng.permutation(n)
    parts = np.array_split(order, k)

    folds = []
    pooled_true = []
    pooled_pred = []
    for fi, held in enumerate(parts):
        train_idx = np.concatenate([parts[j] for j in range(k) if j != fi])
        fold_seed = int(np.random.SeedSequence([seed, fi + 1]).generate_state(1)[0])
        model = fit_forest(X[train_idx], y[train_idx], cfg, seed=fold_seed)
        pred = predict(model, X[held])
        rmse = float(np.sqrt(np.mean((pred - y[held]) ** 2)))
        folds.append({"fold": fi, "n": int(held.size), "r2": _r2(y[held], pred), "rmse": rmse})
        pooled_true.append(y[held])
        pooled_pred.append(pred)
    yt = np.concatenate(pooled_true)
    yp = np.concatenate(pooled_pred)
    pooled = {
        "r2": _r2(yt, yp),
        "rmse": float(np.sqrt(np.mean((yp - yt) ** 2))),
        "n": int(yt.size),
    }
    return {"k": k, "seed": seed, "folds": folds, "pooled": pooled}


# ---------------------------------------------------------------------------
# samples CSV: id,x_m,y_m,side_m,target,<band columns>


def save_samples_csv(path, quadrats, targets, features, band_names) -> None:
    features = np.asarray(features)
    if features.shape != (len(quadrats), len(band_names)):
        raise ValidationError("features shape must be (n_quadrats, n_bands)")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x_m", "y_m", "side_m", "target"] + list(band_names))
        for q, t, row in zip(quadrats, targets, features):
            writer.writerow(
                [q.id, repr(float(q.x)), repr(float(q.y)), repr(float(q.side)), repr(float(t))]
                + [repr(float(v)) for v in row]
            )


def load_samples_csv(path):
    """Returns (quadrats, targets, features, band_names)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        fixed = ["id", "x_m", "y_m", "side_m", "target"]
        if header is None or header[: len(fixed)] != fixed or len(header) <= len(fixed):
            raise ValidationError(
                "samples CSV must start with columns id,x_m,y_m,side_m,target "
                "followed by at least one band column"
            )
        band_names = header[len(fixed):]
        quadrats, targets, rows = [], [], []
        for row in reader:
            quadrats.append(Quadrat(row[0], float(row[1]), float(row[2]), float(row[3])))
            targets.append(float(row[4]))
            rows.append([float(v) for v in row[5:]])
    return quadrats, np.array(targets), np.array(rows), band_names
