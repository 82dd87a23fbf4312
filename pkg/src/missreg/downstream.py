"""Downstream predictors over complete matrices: regularized linear models,
CART trees, random forests, and cross-validated selection among them.

Families are compared on one shared fold split with a common validation
loss (MSE for regression, Brier score for binary tasks) so the choice is
apples-to-apples; the linear family's own (lam, mixing) grid is resolved by
its internal path CV first.  A fitted predictor can be refit on new data
with its selected hyperparameters frozen, which is what the joint
impute-then-regress loop needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .glm import GlmFit, GlmSpec, cv_path, fit_glm
from .trees import Forest, ForestSpec, TreeNode, TreeSpec, fit_forest, \
    fit_tree, predict_tree_matrix

__all__ = ["DownstreamSpec", "FittedDownstream", "fit_downstream", "fit_fixed"]

FAMILIES = ("linear", "tree", "forest")


@dataclass(frozen=True)
class DownstreamSpec:
    kind: str = "linear"                  # linear | tree | forest | best
    folds: int = 5
    tree_depths: tuple = (2, 3, 4, 5, 6, 7, 8, 9, 10)
    forest_trees: tuple = (50, 100)
    forest_depths: tuple = (4, 5, 6, 7, 8, 9, 10)
    min_samples_leaf: int = 5
    lambdas: tuple | None = None
    alphas: tuple | None = None

    def __post_init__(self):
        if self.kind not in FAMILIES + ("best",):
            raise ValueError(f"unknown downstream kind {self.kind!r}")


@dataclass
class FittedDownstream:
    family: str
    task: str
    params: dict
    model: object
    seed: int
    cv_loss: float = float("nan")

    def predict_response(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.family == "linear":
            return self.model.predict_response(X)
        if self.family == "tree":
            return predict_tree_matrix(self.model, X)
        return self.model.predict(X)

    def refit(self, X, y) -> "FittedDownstream":
        """Refit on new data with the selected hyperparameters frozen."""
        model = _fit_family(self.family, X, y, self.task, self.params, self.seed)
        return FittedDownstream(family=self.family, task=self.task,
                                params=self.params, model=model,
                                seed=self.seed, cv_loss=self.cv_loss)

    def to_dict(self) -> dict:
        doc = {"family": self.family, "task": self.task,
               "params": _jsonable_params(self.params), "seed": self.seed}
        if self.family == "linear":
            doc["beta"] = list(map(float, self.model.beta))
            doc["intercept"] = float(self.model.intercept)
        elif self.family == "tree":
            doc["tree"] = self.model.to_dict()
        else:
            doc["forest"] = self.model.to_dict()
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "FittedDownstream":
        family = doc["family"]
        if family == "linear":
            spec = GlmSpec(loss="logistic" if doc["task"] == "binary" else "squared")
            model = GlmFit(beta=np.asarray(doc["beta"], dtype=float),
                           intercept=float(doc["intercept"]),
                           objective_trace=np.asarray([]), converged=True,
                           spec=spec)
        elif family == "tree":
            model = TreeNode.from_dict(doc["tree"])
        else:
            model = Forest.from_dict(doc["forest"])
        return FittedDownstream(family=family, task=doc["task"],
                                params=doc.get("params", {}), model=model,
                                seed=int(doc.get("seed", 0)))


def _jsonable_params(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        out[k] = float(v) if isinstance(v, (np.floating, float)) else v
    return out


def _loss_name(task: str) -> str:
    return "logistic" if task == "binary" else "squared"


def _common_loss(y, pred, task: str) -> float:
    # MSE for regression; Brier score for binary, so trees and logistic
    # models compare on the same scale.
    d = y - pred
    return float(d @ d) / len(y)


def _fit_family(family: str, X, y, task: str, params: dict, seed: int):
    if family == "linear":
        spec = GlmSpec(loss=_loss_name(task), lam=params["lam"],
                       mixing=params["mixing"])
        return fit_glm(X, y, spec)
    if family == "tree":
        spec = TreeSpec(max_depth=params["max_depth"],
                        min_samples_leaf=params["min_samples_leaf"],
                        criterion="gini" if task == "binary" else "variance")
        return fit_tree(X, y, spec)
    if family == "forest":
        tree = TreeSpec(max_depth=params["max_depth"],
                        min_samples_leaf=params["min_samples_leaf"],
                        criterion="gini" if task == "binary" else "variance")
        return fit_forest(X, y, ForestSpec(n_trees=params["n_trees"], tree=tree,
                                           seed=seed))
    raise ValueError(f"unknown family {family!r}")


def _predict_family(family: str, model, X):
    if family == "linear":
        return model.predict_response(X)
    if family == "tree":
        return predict_tree_matrix(model, X)
    return model.predict(X)


def fit_fixed(X, y, task: str, family: str, params: dict,
              seed: int = 0) -> FittedDownstream:
    """Fit one family with frozen hyperparameters (no selection)."""
    model = _fit_family(family, np.asarray(X, float), np.asarray(y, float),
                        task, params, seed)
    return FittedDownstream(family=family, task=task, params=params,
                            model=model, seed=seed)


def fit_downstream(X, y, task: str, spec: DownstreamSpec, seed: int = 0) -> FittedDownstream:
    """Select hyperparameters (and the family, for kind='best') by k-fold CV
    and refit on the full data."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    families = FAMILIES if spec.kind == "best" else (spec.kind,)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_of = np.zeros(n, dtype=int)
    for f, chunk in enumerate(np.array_split(perm, spec.folds)):
        fold_of[chunk] = f

    best = None  # (loss, family, params)
    for family in families:
        if family == "linear":
            res = cv_path(X, y, GlmSpec(loss=_loss_name(task)), folds=spec.folds,
                          seed=seed, lambdas=spec.lambdas, alphas=spec.alphas)
            grid = [{"lam": res.lam, "mixing": res.mixing}]
        elif family == "tree":
            grid = [{"max_depth": d, "min_samples_leaf": spec.min_samples_leaf}
                    for d in spec.tree_depths]
        else:
            grid = [{"n_trees": t, "max_depth": d,
                     "min_samples_leaf": spec.min_samples_leaf}
                    for t in spec.forest_trees for d in spec.forest_depths]
        for params in grid:
            loss = 0.0
            for f in range(spec.folds):
                tr = fold_of != f
                model = _fit_family(family, X[tr], y[tr], task, params, seed)
                pred = _predict_family(family, model, X[~tr])
                loss += _common_loss(y[~tr], pred, task)
            loss /= spec.folds
            if best is None or loss < best[0]:
                best = (loss, family, params)

    loss, family, params = best
    model = _fit_family(family, X, y, task, params, seed)
    return FittedDownstream(family=family, task=task, params=params,
                            model=model, seed=seed, cv_loss=loss)
