"""Cross-fitted first-stage regressors: bagged regression trees built from scratch.

Trees use axis-aligned splits chosen by exhaustive search over every feature
and every midpoint between consecutive distinct values, minimizing the summed
squared error of the two children.  Duplicate feature rows are aggregated into
weighted unique rows before splitting, which leaves the fitted function
unchanged but makes training on heavily categorical data cheap.

Cross-fitting trains one forest per fold on the complement and predicts only
the held-out fold, so every first-stage prediction is out-of-fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "ForestConfig",
    "RegressionForest",
    "CrossFitPlan",
    "NuisancePredictions",
    "fit_forest",
    "cross_fit",
    "aggregate_group",
    "fit_group_model",
    "save_predictions_csv",
    "load_predictions_csv",
]

_PREDICTION_FLOOR = 1e-3  # keeps log(y_hat) finite


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 10
    max_depth: int = 12
    min_leaf_size: int = 5
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.min_leaf_size < 1 or self.max_depth < 0:
            raise ConfigError("invalid forest configuration")


@dataclass
class _Tree:
    """Flat-array binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.where(active)[0]
            nd = node[idx]
            goes_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(goes_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]


class _TreeBuilder:
    def __init__(self, x: np.ndarray, w: np.ndarray, wy: np.ndarray, wyy: np.ndarray,
                 max_depth: int, min_leaf: int):
        self.x = x
        self.w = w
        self.wy = wy
        self.wyy = wyy
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node()
        w_tot = self.w[rows].sum()
        wy_tot = self.wy[rows].sum()
        mean = wy_tot / w_tot
        self.value[node] = float(mean)
        if depth >= self.max_depth or w_tot < 2 * self.min_leaf:
            return node
        node_sse = self.wyy[rows].sum() - wy_tot * mean
        if node_sse <= 1e-12 * max(1.0, w_tot):
            return node
        best = self._best_split(rows, node_sse)
        if best is None:
            return node
        f, thr = best
        go_left = self.x[rows, f] <= thr
        if not (go_left.any() and (~go_left).any()):
            return node
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(rows[go_left], depth + 1)
        self.right[node] = self.build(rows[~go_left], depth + 1)
        return node

    def _best_split(self, rows: np.ndarray, node_sse: float):
        best_sse = node_sse - 1e-12 * max(1.0, node_sse)
        best = None
        for f in range(self.x.shape[1]):
            xv = self.x[rows, f]
            order = np.argsort(xv, kind="stable")
            xs = xv[order]
            distinct = xs[1:] > xs[:-1]
            if not np.any(distinct):
                continue
            cw = np.cumsum(self.w[rows][order])[:-1]
            cwy = np.cumsum(self.wy[rows][order])[:-1]
            cwyy = np.cumsum(self.wyy[rows][order])[:-1]
            w_tot, wy_tot, wyy_tot = cw[-1] + self.w[rows][order][-1], \
                cwy[-1] + self.wy[rows][order][-1], cwyy[-1] + self.wyy[rows][order][-1]
            ok = distinct & (cw >= self.min_leaf) & (w_tot - cw >= self.min_leaf)
            if not np.any(ok):
                continue
            sse = (cwyy - cwy * cwy / cw) + \
                  ((wyy_tot - cwyy) - (wy_tot - cwy) ** 2 / (w_tot - cw))
            sse = np.where(ok, sse, np.inf)
            i = int(np.argmin(sse))
            if sse[i] < best_sse:
                thr = 0.5 * (xs[i] + xs[i + 1])
                if thr >= xs[i + 1]:  # midpoint rounded up to the right value
                    thr = xs[i]
                best_sse = float(sse[i])
                best = (f, float(thr))
        return best

    def finish(self) -> _Tree:
        return _Tree(feature=np.asarray(self.feature, dtype=np.int64),
                     threshold=np.asarray(self.threshold),
                     left=np.asarray(self.left, dtype=np.int64),
                     right=np.asarray(self.right, dtype=np.int64),
                     value=np.asarray(self.value))


@dataclass
class RegressionForest:
    """Average of bagged regression trees."""

    trees: list[_Tree]
    n_trees: int
    max_depth: int
    min_leaf_size: int
    bootstrap_seed: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[0])
        for tree in self.trees:
            out += tree.predict(x)
        return out / len(self.trees)


def fit_forest(x: np.ndarray, y: np.ndarray, cfg: ForestConfig = ForestConfig()) -> RegressionForest:
    """Fit a bagged forest; requires at least 2 * min_leaf_size rows."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n < 2 * cfg.min_leaf_size:
        raise DataError(f"need at least {2 * cfg.min_leaf_size} rows to fit, got {n}")
    # aggregate duplicate feature rows; weighted SSE gives identical splits
    uniq, inverse = np.unique(x, axis=0, return_inverse=True)
    counts_base = np.bincount(inverse, minlength=uniq.shape[0]).astype(float)
    wy_base = np.bincount(inverse, weights=y, minlength=uniq.shape[0])
    wyy_base = np.bincount(inverse, weights=y * y, minlength=uniq.shape[0])
    rng = np.random.default_rng(cfg.seed)
    trees: list[_Tree] = []
    for _ in range(cfg.n_trees):
        if cfg.bootstrap:
            picks = rng.integers(0, n, size=n)
            w = np.bincount(inverse[picks], minlength=uniq.shape[0]).astype(float)
            wy = np.bincount(inverse[picks], weights=y[picks], minlength=uniq.shape[0])
            wyy = np.bincount(inverse[picks], weights=y[picks] * y[picks],
                              minlength=uniq.shape[0])
        else:
            w, wy, wyy = counts_base, wy_base, wyy_base
        rows = np.where(w > 0)[0]
        builder = _TreeBuilder(uniq, w, wy, wyy, cfg.max_depth, cfg.min_leaf_size)
        builder.build(rows, 0)
        trees.append(builder.finish())
    return RegressionForest(trees=trees, n_trees=cfg.n_trees, max_depth=cfg.max_depth,
                            min_leaf_size=cfg.min_leaf_size, bootstrap_seed=cfg.seed)


@dataclass(frozen=True)
class CrossFitPlan:
    """Fold assignment: random shuffle, sizes differing by at most one."""

    n_folds: int
    assignment: np.ndarray
    shuffle_seed: int

    @classmethod
    def build(cls, n_records: int, n_folds: int = 5, shuffle_seed: int = 0) -> "CrossFitPlan":
        if n_folds < 2:
            raise ConfigError("cross-fitting needs at least 2 folds")
        if n_records < n_folds:
            raise DataError(f"cannot split {n_records} records into {n_folds} folds")
        rng = np.random.default_rng(shuffle_seed)
        perm = rng.permutation(n_records)
        assignment = np.empty(n_records, dtype=np.int64)
        assignment[perm] = np.arange(n_records) % n_folds
        return cls(n_folds=n_folds, assignment=assignment, shuffle_seed=shuffle_seed)


@dataclass
class NuisancePredictions:
    """Out-of-fold first-stage predictions aligned with a dataset's record order."""

    p_hat: np.ndarray
    y_hat: np.ndarray
    u_hat: np.ndarray | None = None
    obs_index: np.ndarray | None = None

    def __post_init__(self) -> None:
        if np.any(self.y_hat <= 0):
            raise DataError("y_hat must be positive (predictions are floored)")
        if self.u_hat is not None and np.any(self.u_hat <= 0):
            raise DataError("u_hat must be positive (predictions are floored)")


def _cross_fit_target(x: np.ndarray, target: np.ndarray, plan: CrossFitPlan,
                      cfg: ForestConfig) -> np.ndarray:
    out = np.empty(x.shape[0])
    for fold in range(plan.n_folds):
        held = plan.assignment == fold
        model = fit_forest(x[~held], target[~held],
                           ForestConfig(n_trees=cfg.n_trees, max_depth=cfg.max_depth,
                                        min_leaf_size=cfg.min_leaf_size,
                                        bootstrap=cfg.bootstrap,
                                        seed=cfg.seed * 1000 + fold))
        out[held] = model.predict(x[held])
    return out


def cross_fit(dataset, plan: CrossFitPlan, cfg: ForestConfig = ForestConfig(),
              group_series=None, grouping: Mapping[str, str] | None = None) -> NuisancePredictions:
    """Out-of-fold predictions of price and bookings (and the group factor).

    group_series, when given, is the output of aggregate_group over the
    datasets sharing this market's groups; the group model is cross-fitted on
    the aggregated series and mapped back to records by wall-clock day.
    """
    n = len(dataset)
    if plan.assignment.shape[0] != n:
        raise DataError("cross-fit plan does not cover the dataset")
    p_hat = _cross_fit_target(dataset.x, dataset.prices, plan, cfg)
    y_hat = np.maximum(_cross_fit_target(dataset.x, dataset.bookings, plan, cfg),
                       _PREDICTION_FLOOR)
    u_hat = None
    if group_series is not None:
        if grouping is None or dataset.market_id not in grouping:
            raise DataError(f"market {dataset.market_id!r} has no group mapping")
        u_by_time = fit_group_model(group_series, cfg)
        group = grouping[dataset.market_id]
        u_hat = np.empty(n)
        for i, wall in enumerate(dataset.wall_days):
            key = (group, int(wall))
            if key not in u_by_time:
                raise DataError(f"no group prediction for {key!r}")
            u_hat[i] = u_by_time[key]
        u_hat = np.maximum(u_hat, _PREDICTION_FLOOR)
    return NuisancePredictions(p_hat=p_hat, y_hat=y_hat, u_hat=u_hat,
                               obs_index=dataset.obs_index)


@dataclass
class GroupSeries:
    """Aggregated bookings per (group, wall-clock day) with calendar features."""

    keys: list[tuple[str, int]]
    features: np.ndarray
    totals: np.ndarray


def _calendar_features(wall: int) -> list[float]:
    woy = (wall % 364) // 7
    dow = wall % 7
    out = [1.0]
    out += [1.0 if dow == d else 0.0 for d in range(7)]
    for k in (1, 2):
        ang = 2.0 * np.pi * k * woy / 52.0
        out += [np.sin(ang), np.cos(ang)]
    return out


def aggregate_group(datasets: Sequence, grouping: Mapping[str, str]) -> GroupSeries:
    """Sum concurrent bookings of all markets in a group per wall-clock day.

    Days inside a group's observed span with no bookings are kept as zeros.
    """
    totals: dict[tuple[str, int], float] = {}
    span: dict[str, tuple[int, int]] = {}
    for ds in datasets:
        if ds.market_id not in grouping:
            raise DataError(f"market {ds.market_id!r} is not mapped to a group")
        g = grouping[ds.market_id]
        for rec, wall in zip(ds.records, ds.wall_days):
            key = (g, int(wall))
            totals[key] = totals.get(key, 0.0) + rec.bookings
        lo, hi = int(ds.wall_days.min()), int(ds.wall_days.max())
        if g in span:
            span[g] = (min(span[g][0], lo), max(span[g][1], hi))
        else:
            span[g] = (lo, hi)
    keys: list[tuple[str, int]] = []
    for g in sorted(span):
        lo, hi = span[g]
        for wall in range(lo, hi + 1):
            keys.append((g, wall))
    features = np.array([_calendar_features(wall) for _, wall in keys])
    vals = np.array([totals.get(k, 0.0) for k in keys])
    return GroupSeries(keys=keys, features=features, totals=vals)


def fit_group_model(series: GroupSeries, cfg: ForestConfig = ForestConfig(),
                    n_folds: int = 5, shuffle_seed: int = 0) -> dict[tuple[str, int], float]:
    """Cross-fit the group demand regressor on the aggregated series."""
    plan = CrossFitPlan.build(len(series.keys), n_folds=n_folds, shuffle_seed=shuffle_seed)
    preds = _cross_fit_target(series.features, series.totals, plan, cfg)
    preds = np.maximum(preds, _PREDICTION_FLOOR)
    return dict(zip(series.keys, preds))


def save_predictions_csv(preds: NuisancePredictions, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        cols = "obs_index,p_hat,y_hat" + (",u_hat" if preds.u_hat is not None else "")
        fh.write(cols + "\n")
        obs = preds.obs_index if preds.obs_index is not None else np.arange(len(preds.p_hat))
        for i in range(len(preds.p_hat)):
            row = f"{obs[i]},{float(preds.p_hat[i])!r},{float(preds.y_hat[i])!r}"
            if preds.u_hat is not None:
                row += f",{float(preds.u_hat[i])!r}"
            fh.write(row + "\n")


def load_predictions_csv(path: str | Path) -> NuisancePredictions:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if header[:3] != ["obs_index", "p_hat", "y_hat"]:
            raise DataError(f"{path}: unexpected predictions header {header!r}")
        has_u = len(header) == 4 and header[3] == "u_hat"
        obs, ps, ys, us = [], [], [], []
        for line_no, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != len(header):
                raise DataError(f"{path}: line {line_no}: wrong field count")
            obs.append(int(parts[0])); ps.append(float(parts[1])); ys.append(float(parts[2]))
            if has_u:
                us.append(float(parts[3]))
    return NuisancePredictions(p_hat=np.asarray(ps), y_hat=np.asarray(ys),
                               u_hat=np.asarray(us) if has_u else None,
                               obs_index=np.asarray(obs, dtype=int))
