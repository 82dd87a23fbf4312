"""CART regression/classification trees and random forests.

Trees can optionally treat missingness as part of the split search (MIA):
every (feature, threshold) candidate is scored twice -- missing routed left
and missing routed right -- plus the pure missing/non-missing split.  This
is realized by scanning each feature with masked cells placed at -inf and at
+inf, which costs one extra sort and covers all three cases; the pure split
appears as the -inf boundary.  Split ties break to the lowest feature index,
then the lowest threshold, then missing-goes-left.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TreeSpec",
    "TreeNode",
    "ForestSpec",
    "Forest",
    "fit_tree",
    "predict_tree",
    "predict_tree_matrix",
    "fit_forest",
    "predict_forest",
]

_EPS_GAIN = 1e-12


@dataclass(frozen=True)
class TreeSpec:
    max_depth: int = 6
    min_samples_leaf: int = 5
    criterion: str = "variance"   # variance | gini
    mia: bool = False

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.criterion not in ("variance", "gini"):
            raise ValueError(f"unknown criterion {self.criterion!r}")


@dataclass
class TreeNode:
    value: float                  # mean of y (or class-1 probability)
    n: int
    feature: int = -1             # -1 marks a leaf
    threshold: float = 0.0
    missing_left: bool = True
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "n": self.n}
        return {
            "value": self.value, "n": self.n, "feature": self.feature,
            "threshold": self.threshold, "missing_left": self.missing_left,
            "left": self.left.to_dict(), "right": self.right.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "TreeNode":
        if "feature" not in d:
            return TreeNode(value=d["value"], n=d["n"])
        return TreeNode(
            value=d["value"], n=d["n"], feature=d["feature"],
            threshold=d["threshold"], missing_left=d["missing_left"],
            left=TreeNode.from_dict(d["left"]),
            right=TreeNode.from_dict(d["right"]),
        )


def _best_split_feature(vals, miss, y, min_leaf):
    """Best candidate for one feature in one node.

    Returns (decrease_sse, threshold, missing_left) or None.  ``decrease``
    is in sum-of-squares units; for 0/1 targets the gini impurity sum is
    exactly twice the sum of squares, so the same scan serves both
    criteria.  Ties inside a scan resolve to the lowest threshold because
    candidates are visited in ascending order.
    """
    n = len(y)
    any_missing = bool(miss.any())
    sse_parent = float(y @ y) - (float(y.sum()) ** 2) / n

    best = None
    arrangements = ((-np.inf, True), (np.inf, False)) if any_missing \
        else ((0.0, True),)
    for sentinel, missing_left in arrangements:
        z = np.where(miss, sentinel, vals) if any_missing else vals
        order = np.argsort(z, kind="stable")
        zs = z[order]
        ys = y[order]
        cands = np.nonzero(zs[:-1] < zs[1:])[0]
        if cands.size == 0:
            continue
        cnt_left = cands + 1
        ok = (cnt_left >= min_leaf) & (n - cnt_left >= min_leaf)
        if any_missing and not missing_left:
            # Drop the observed/+inf boundary: it duplicates the pure
            # missing-vs-rest split already scanned with missing at -inf.
            ok &= np.isfinite(zs[cands + 1])
        cands = cands[ok]
        if cands.size == 0:
            continue
        cy = np.concatenate([[0.0], np.cumsum(ys)])
        cyy = np.concatenate([[0.0], np.cumsum(ys * ys)])
        nl = (cands + 1).astype(float)
        nr = n - nl
        sl = cy[cands + 1]
        sr = cy[-1] - sl
        sse = (cyy[cands + 1] - sl * sl / nl) + (cyy[-1] - cyy[cands + 1] - sr * sr / nr)
        k = int(np.argmin(sse))
        dec = sse_parent - float(sse[k])
        i = cands[k]
        thr = (zs[i] + zs[i + 1]) / 2.0
        cand = (dec, thr, missing_left)
        if best is None or cand[0] > best[0] + _EPS_GAIN or (
            abs(cand[0] - best[0]) <= _EPS_GAIN
            and (thr, not missing_left) < (best[1], not best[2])
        ):
            best = cand
    return best


def _grow(X, mask, y, idx, depth, spec, mtry, rng):
    ysub = y[idx]
    n = len(idx)
    node = TreeNode(value=float(ysub.mean()), n=n)
    if depth >= spec.max_depth or n < 2 * spec.min_samples_leaf:
        return node
    if np.all(ysub == ysub[0]):
        return node

    d = X.shape[1]
    if mtry < d:
        feats = np.sort(rng.choice(d, size=mtry, replace=False))
    else:
        feats = np.arange(d)

    best = None
    for j in feats:
        cand = _best_split_feature(X[idx, j], mask[idx, j], ysub,
                                   spec.min_samples_leaf)
        if cand is None or cand[0] <= _EPS_GAIN:
            continue
        # Feature order is ascending, so a strict comparison implements the
        # lowest-feature tie-break; within-feature ties were already settled.
        if best is None or cand[0] > best[1][0] + _EPS_GAIN:
            best = (j, cand)
    if best is None:
        return node

    j, (dec, thr, missing_left) = best
    vals = X[idx, j]
    miss = mask[idx, j]
    z = np.where(miss, -np.inf if missing_left else np.inf, vals)
    go_left = z <= thr
    node.feature = int(j)
    node.threshold = float(thr)
    node.missing_left = bool(missing_left)
    node.left = _grow(X, mask, y, idx[go_left], depth + 1, spec, mtry, rng)
    node.right = _grow(X, mask, y, idx[~go_left], depth + 1, spec, mtry, rng)
    return node


def fit_tree(X, y, spec: TreeSpec, mask=None, rng=None, mtry=None) -> TreeNode:
    """Greedy best-split recursion.  Plain trees (mia=False) require a
    complete input; MIA trees accept a mask and learn where to route
    missing values."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X and y shapes disagree")
    if X.shape[0] == 0:
        raise ValueError("empty node")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite targets")
    if mask is None:
        mask = np.zeros_like(X, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != X.shape:
            raise ValueError("mask shape mismatch")
    if not spec.mia and mask.any():
        raise ValueError("plain trees require complete input; impute first "
                         "or set mia=True")
    if not np.all(np.isfinite(np.where(mask, 0.0, X))):
        raise ValueError("non-finite observed values")
    if rng is None:
        rng = np.random.default_rng(0)
    mtry = X.shape[1] if mtry is None else max(1, int(mtry))
    idx = np.arange(X.shape[0])
    return _grow(X, mask, y, idx, 0, spec, mtry, rng)


def predict_tree(tree: TreeNode, x, m=None) -> float:
    """Route one observation; masked split features follow the stored
    missing direction.  A plain-tree caller passes m=None and must supply
    complete rows."""
    x = np.asarray(x, dtype=float)
    node = tree
    while not node.is_leaf:
        if m is not None and m[node.feature]:
            node = node.left if node.missing_left else node.right
        else:
            v = x[node.feature]
            if np.isnan(v):
                raise ValueError("plain tree fed a masked cell")
            node = node.left if v <= node.threshold else node.right
    return node.value


def predict_tree_matrix(tree: TreeNode, X, mask=None) -> np.ndarray:
    """Vectorized routing of many rows."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if mask is None:
        mask = np.zeros_like(X, dtype=bool)
    out = np.empty(n)
    stack = [(tree, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.value
            continue
        miss = mask[idx, node.feature]
        vals = np.where(miss, -np.inf if node.missing_left else np.inf,
                        X[idx, node.feature])
        go_left = vals <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


@dataclass(frozen=True)
class ForestSpec:
    n_trees: int = 100
    tree: TreeSpec = field(default_factory=TreeSpec)
    feature_fraction: float = 1.0 / 3.0
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.feature_fraction <= 1:
            raise ValueError("feature_fraction must lie in (0, 1]")


@dataclass
class Forest:
    trees: list
    spec: ForestSpec

    def predict(self, X, mask=None) -> np.ndarray:
        return predict_forest(self, X, mask)

    def to_dict(self) -> dict:
        return {
            "spec": {
                "n_trees": self.spec.n_trees,
                "feature_fraction": self.spec.feature_fraction,
                "bootstrap": self.spec.bootstrap,
                "seed": self.spec.seed,
                "tree": vars(self.spec.tree) | {},
            },
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "Forest":
        sd = dict(d["spec"])
        tree = TreeSpec(**sd.pop("tree"))
        return Forest(trees=[TreeNode.from_dict(t) for t in d["trees"]],
                      spec=ForestSpec(tree=tree, **sd))


def fit_forest(X, y, spec: ForestSpec, mask=None) -> Forest:
    """Bootstrap rows per tree, subsample features per split, average
    predictions (class-1 probabilities for classification leaves)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    mtry = max(1, round(spec.feature_fraction * d))
    rng = np.random.default_rng(spec.seed)
    trees = []
    for _ in range(spec.n_trees):
        if spec.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        sub_mask = None if mask is None else np.asarray(mask, bool)[rows]
        trees.append(fit_tree(X[rows], y[rows], spec.tree,
                              mask=sub_mask, rng=rng, mtry=mtry))
    return Forest(trees=trees, spec=spec)


def predict_forest(forest: Forest, X, mask=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    acc = np.zeros(X.shape[0])
    for t in forest.trees:
        acc += predict_tree_matrix(t, X, mask)
    return acc / len(forest.trees)
