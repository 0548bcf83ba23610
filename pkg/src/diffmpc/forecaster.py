"""Extremely-randomized-trees load forecaster and the three-way
original / replicated / augmented training protocol.

Trees follow the classic extra-trees construction: at every node draw K
candidate features, one uniform-random threshold per feature strictly
inside that feature's node range, keep the split with the best variance
reduction, stop below n_min samples.  Leaves predict the mean target, so
forest predictions always stay inside the training-target range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tscore import Dataset, SplitSpec, TimeSeries, mae, rmse, split


class FeatureError(ValueError):
    pass


class FitError(ValueError):
    pass


class PredictError(ValueError):
    pass


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    lag: int = 24
    include_hour: bool = True

    def __post_init__(self):
        if self.lag < 1:
            raise FeatureError("lag must be >= 1")

    @property
    def dim(self) -> int:
        return self.lag + (1 if self.include_hour else 0)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    k_features: int | None = None   # None: ceil(sqrt(d))
    n_min: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise FitError("n_trees must be >= 1")
        if self.n_min < 2:
            raise FitError("n_min must be >= 2")
        if self.k_features is not None and self.k_features < 1:
            raise FitError("k_features must be >= 1 when given")


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class Forest:
    trees: list
    dim: int
    y_min: float
    y_max: float
    config: ForestConfig


@dataclass(frozen=True)
class AugmentedWindows:
    """Generated day windows plus the hour span their generator saw."""

    windows: np.ndarray
    source_span: tuple  # [lo, hi) hours of the series the model trained on


def featurize(load: TimeSeries, spec: FeatureSpec):
    """Row i = [load(i-L) .. load(i-1), hour_of_day(i)], target load(i)."""
    v = load.values
    L = spec.lag
    if v.size <= L:
        raise FeatureError(f"series length {v.size} must exceed lag {L}")
    rows = []
    ys = []
    for i in range(L, v.size):
        row = list(v[i - L: i])
        if spec.include_hour:
            row.append(float(load.hour_of_day(i)))
        rows.append(row)
        ys.append(v[i])
    return np.asarray(rows), np.asarray(ys)


def _build_tree(X, y, k, n_min, rng):
    idx_all = np.arange(X.shape[0])

    def grow(idx):
        node = _Node(value=float(y[idx].mean()))
        if idx.size < n_min or np.ptp(y[idx]) == 0.0:
            return node
        spreads = np.ptp(X[idx], axis=0)
        usable = np.nonzero(spreads > 0.0)[0]
        if usable.size == 0:
            return node
        kk = min(k, usable.size)
        feats = rng.choice(usable, size=kk, replace=False)
        best = (-np.inf, -1, 0.0)
        var_total = y[idx].var()
        for f in feats:
            col = X[idx, f]
            lo, hi = col.min(), col.max()
            cut = rng.uniform(lo, hi)
            left = col <= cut
            n_l = int(left.sum())
            if n_l == 0 or n_l == idx.size:
                continue
            var_l = y[idx[left]].var()
            var_r = y[idx[~left]].var()
            red = var_total - (n_l * var_l + (idx.size - n_l) * var_r) / idx.size
            if red > best[0]:
                best = (red, int(f), float(cut))
        if best[1] < 0:
            return node
        _, f, cut = best
        left_mask = X[idx, f] <= cut
        node.feature = f
        node.threshold = cut
        node.left = grow(idx[left_mask])
        node.right = grow(idx[~left_mask])
        return node

    return grow(idx_all)


def fit(X, y, cfg: ForestConfig) -> Forest:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FitError("training data must be a non-empty 2-D array")
    if X.shape[0] != y.size:
        raise FitError("X and y row counts differ")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FitError("training data must be finite")
    if X.shape[0] < cfg.n_min:
        raise FitError(f"need at least n_min={cfg.n_min} samples")
    d = X.shape[1]
    k = cfg.k_features if cfg.k_features is not None else int(np.ceil(np.sqrt(d)))
    k = min(k, d)
    trees = []
    for m in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, m, 0x7EE])
        trees.append(_build_tree(X, y, k, cfg.n_min, rng))
    return Forest(trees=trees, dim=d, y_min=float(y.min()), y_max=float(y.max()),
                  config=cfg)


def _eval_tree(node: _Node, x) -> float:
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def predict(f: Forest, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != f.dim:
        raise PredictError(f"feature dimension {x.size} != {f.dim}")
    return float(np.mean([_eval_tree(t, x) for t in f.trees]))


def predict_many(f: Forest, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.asarray([predict(f, row) for row in X])


def run_protocol(ds: Dataset, split_spec: SplitSpec, aug_windows,
                 cfg: ForestConfig, spec: FeatureSpec) -> dict:
    """Train identically on three training sets and evaluate on the
    untouched test split.

    original    train-split feature rows
    replicated  the same rows tiled to the augmented variant's exact size
    augmented   train rows + rows featurized from the generated day windows

    Returns {variant: {"mae": .., "rmse": .., "train_size": ..}}.
    """
    train, test = split(ds, split_spec)
    if isinstance(aug_windows, AugmentedWindows):
        lo, hi = aug_windows.source_span
        if hi > split_spec.train_len or lo < 0:
            raise ProtocolError(
                f"augmentation source span [{lo}, {hi}) leaks past the "
                f"training split of {split_spec.train_len} hours")
        aug_windows = aug_windows.windows
    aug = np.asarray(aug_windows, dtype=float).reshape(-1, 24) if len(aug_windows) \
        else np.zeros((0, 24))
    if np.any(aug < 0):
        raise ProtocolError("augmentation windows must be non-negative kW")

    X_tr, y_tr = featurize(train.load, spec)

    # test rows: featurize the full series, keep rows whose target falls in
    # the test split (their lags reach back into realized train history)
    X_all, y_all = featurize(ds.load, spec)
    first_test = split_spec.train_len - spec.lag
    X_te, y_te = X_all[first_test:], y_all[first_test:]
    if y_te.size != split_spec.test_len:
        raise ProtocolError("test featurization size mismatch")

    # augmented rows come from the generated days only (never the test split)
    if aug.shape[0]:
        synth = TimeSeries(np.concatenate(aug), start_hour=0)
        X_aug, y_aug = featurize(synth, spec)
        X_a = np.vstack([X_tr, X_aug])
        y_a = np.concatenate([y_tr, y_aug])
    else:
        X_a, y_a = X_tr, y_tr

    n_aug = X_a.shape[0]
    reps = int(np.ceil(n_aug / X_tr.shape[0]))
    X_r = np.tile(X_tr, (reps, 1))[:n_aug]
    y_r = np.tile(y_tr, reps)[:n_aug]

    out = {}
    for name, Xv, yv in (("original", X_tr, y_tr),
                         ("replicated", X_r, y_r),
                         ("augmented", X_a, y_a)):
        forest = fit(Xv, yv, cfg)
        pred = predict_many(forest, X_te)
        out[name] = {"mae": mae(pred, y_te), "rmse": rmse(pred, y_te),
                     "train_size": int(Xv.shape[0])}
    return out


PROTOCOL_HEADER = "variant,mae,rmse,train_size"


def write_protocol_csv(path, table: dict) -> None:
    with open(path, "w") as f:
        f.write(PROTOCOL_HEADER + "\n")
        for name in ("original", "replicated", "augmented"):
            row = table[name]
            f.write("%s,%.10g,%.10g,%d\n"
                    % (name, row["mae"], row["rmse"], row["train_size"]))


FOREST_MAGIC = "diffmpc-forest v1"


def save_forest(path, f: Forest) -> None:
    lines = [FOREST_MAGIC,
             "dim %d" % f.dim,
             "y_min %.17g" % f.y_min,
             "y_max %.17g" % f.y_max,
             "n_trees %d" % len(f.trees)]

    def emit(node):
        if node.is_leaf:
            lines.append("L %.17g" % node.value)
        else:
            lines.append("S %d %.17g" % (node.feature, node.threshold))
            emit(node.left)
            emit(node.right)

    for t in f.trees:
        lines.append("tree")
        emit(t)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_forest(path) -> Forest:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FOREST_MAGIC:
        raise FitError("bad forest file header")
    meta = {}
    i = 1
    while i < len(lines) and lines[i] != "tree":
        key, val = lines[i].split()
        meta[key] = float(val)
        i += 1

    def parse(j):
        parts = lines[j].split()
        if parts[0] == "L":
            return _Node(value=float(parts[1])), j + 1
        node = _Node(feature=int(parts[1]), threshold=float(parts[2]))
        node.left, j = parse(j + 1)
        node.right, j = parse(j)
        node.value = 0.0
        return node, j

    trees = []
    while i < len(lines):
        if lines[i] != "tree":
            raise FitError(f"forest file corrupt at line {i + 1}")
        root, i = parse(i + 1)
        trees.append(root)
    if len(trees) != int(meta.get("n_trees", -1)):
        raise FitError("forest file tree count mismatch")
    return Forest(trees=trees, dim=int(meta["dim"]), y_min=meta["y_min"],
                  y_max=meta["y_max"], config=ForestConfig())
