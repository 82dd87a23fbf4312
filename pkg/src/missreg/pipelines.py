"""End-to-end prediction pipelines over partially observed data.

Method kinds:

* complete_features   -- drop every column that has missing training cells,
                         fit a downstream predictor on the rest
* impute_then_regress -- impute (mean/chained/zero for continuous columns,
                         missing-category/mode for categoricals), one-hot,
                         fit a downstream predictor; test-time imputation
                         follows a V1/V2/V3 policy
* adaptive            -- adaptive linear regression (static, affine
                         intercept, affine, polynomial, finite, or
                         cross-validated best)
* joint               -- joint impute-then-regress (alternating mu search)
* mia_tree            -- CART with missingness incorporated in the splits
* oracle              -- downstream predictor on the fully observed matrix
                         plus the mask (synthetic runs only)

Categorical columns are one-hot encoded before any numeric model; for
mask-aware methods the indicator columns inherit the source cell's mask bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adaptive as _adaptive
from .data import MaskedMatrix, TargetVector
from .downstream import DownstreamSpec, FittedDownstream, fit_downstream
from .impute import (V1, V2, V3, impute_train_test, make_imputer, one_hot,
                     one_hot_masked)
from .joint import (JointConfig, JointModel, fit_joint, fit_joint_best,
                    predict_joint)
from .trees import TreeSpec, fit_tree, predict_tree_matrix, TreeNode

__all__ = ["method_name", "fit_pipeline", "FittedPipeline",
           "pipeline_to_dict", "pipeline_from_dict"]

_POLICIES = {"V1": V1, "V2": V2, "V3": V3}


def _downstream_spec(method: dict, default_kind: str = "best") -> DownstreamSpec:
    grids = method.get("grids", {})
    return DownstreamSpec(
        kind=method.get("predictor", method.get("downstream", default_kind)),
        folds=method.get("folds", 5),
        tree_depths=tuple(grids.get("tree_depths", DownstreamSpec.tree_depths)),
        forest_trees=tuple(grids.get("forest_trees", DownstreamSpec.forest_trees)),
        forest_depths=tuple(grids.get("forest_depths", DownstreamSpec.forest_depths)),
        min_samples_leaf=grids.get("min_samples_leaf", 5),
        lambdas=grids.get("lambdas"),
        alphas=tuple(grids["alphas"]) if "alphas" in grids else None,
    )


def method_name(method: dict) -> str:
    kind = method["kind"]
    if "name" in method:
        return method["name"]
    if kind == "impute_then_regress":
        return "itr-{}-{}-{}".format(method.get("imputer", "mean"),
                                     method.get("predictor", "best"),
                                     method.get("policy", "V2"))
    if kind == "adaptive":
        return "adaptive-" + method.get("class", "best")
    if kind == "joint":
        return "joint-" + method.get("downstream", "best")
    if kind in ("complete_features", "oracle"):
        return "{}-{}".format(kind.replace("_", "-"),
                              method.get("predictor", "best"))
    return kind


@dataclass
class FittedPipeline:
    method: dict
    task: str
    payload: dict

    def predict(self, test: MaskedMatrix, x_full_test=None) -> np.ndarray:
        kind = self.method["kind"]
        p = self.payload
        if kind == "complete_features":
            if p["model"] is None:
                return np.full(test.n_rows, p["fallback"])
            X = _complete_feature_matrix(test, p["kept"], p["fill"])
            return p["model"].predict_response(X)
        if kind == "impute_then_regress":
            policy = _POLICIES[self.method.get("policy", "V2")]
            if policy.variant == "V1":
                return _fit_predict_itr_v1(self.method, p["train"], p["y"],
                                           test, p["seed"])
            done = p["imputer"].transform(test, policy)
            X, _ = one_hot(done)
            return p["model"].predict_response(X)
        if kind == "adaptive":
            enc = one_hot_masked(test)
            return _adaptive.predict_adaptive_matrix(p["model"], enc.values, enc.mask)
        if kind == "joint":
            return predict_joint(p["model"], one_hot_masked(test))
        if kind == "mia_tree":
            enc = one_hot_masked(test)
            return predict_tree_matrix(p["model"], enc.zero_filled(), enc.mask)
        if kind == "oracle":
            if x_full_test is None:
                raise ValueError("oracle pipeline needs the fully observed test matrix")
            X = np.hstack([np.asarray(x_full_test, float),
                           test.mask.astype(float)])
            return p["model"].predict_response(X)
        raise ValueError(f"unknown pipeline kind {kind!r}")


def _complete_feature_matrix(mm: MaskedMatrix, kept, fill) -> np.ndarray:
    # Residual missing cells in kept columns (possible on the test side even
    # though the columns were complete in training) fall back to the train
    # observed means.
    full = mm.filled(fill)
    enc = MaskedMatrix(full[:, kept], np.zeros((mm.n_rows, len(kept)), bool),
                       [mm.column_kinds[j] for j in kept],
                       [mm.column_names[j] for j in kept])
    X, _ = one_hot(enc)
    return X


def _train_fill_stats(train: MaskedMatrix) -> np.ndarray:
    obs = ~train.mask
    vals = np.where(obs, np.nan_to_num(train.values, nan=0.0), 0.0)
    cnt = np.maximum(obs.sum(axis=0), 1)
    means = vals.sum(axis=0) / cnt
    fill = means.copy()
    for j, kind in enumerate(train.column_kinds):
        if kind.is_categorical:
            codes = train.values[obs[:, j], j].astype(int)
            fill[j] = np.bincount(codes, minlength=kind.n_levels).argmax() \
                if codes.size else 0
    return fill


def _make_itr_imputer(method: dict):
    return make_imputer(continuous_kind=method.get("imputer", "mean"),
                        categorical_kind=method.get("categorical", "category"),
                        n_sweeps=method.get("n_sweeps", 5))


def _fit_predict_itr_v1(method, train, y, test, seed):
    """V1 imputes train and test jointly, so the downstream fit happens at
    prediction time."""
    imputer = _make_itr_imputer(method)
    tr_done, te_done, _ = impute_train_test(imputer, train, test, V1)
    Xtr, _ = one_hot(tr_done)
    Xte, _ = one_hot(te_done)
    ds = fit_downstream(Xtr, y.y, y.task, _downstream_spec(method), seed)
    return ds.predict_response(Xte)


def fit_pipeline(method: dict, train: MaskedMatrix, target: TargetVector,
                 seed: int = 0, x_full_train=None) -> FittedPipeline:
    kind = method["kind"]
    task = target.task
    y = target.y

    if kind == "complete_features":
        kept = [j for j in range(train.n_cols) if not train.mask[:, j].any()]
        fill = _train_fill_stats(train)
        if kept:
            X = _complete_feature_matrix(train, kept, fill)
            model = fit_downstream(X, y, task, _downstream_spec(method), seed)
        else:
            model = None
        payload = {"kept": kept, "fill": fill, "model": model,
                   "fallback": float(y.mean())}
        return FittedPipeline(method, task, payload)

    if kind == "impute_then_regress":
        policy = method.get("policy", "V2")
        if policy == "V1":
            # Joint train+test imputation: everything happens at predict time.
            return FittedPipeline(method, task,
                                  {"train": train, "y": target, "seed": seed})
        imputer = _make_itr_imputer(method).fit(train)
        X, _ = one_hot(imputer.transform_train())
        model = fit_downstream(X, y, task, _downstream_spec(method), seed)
        return FittedPipeline(method, task, {"imputer": imputer, "model": model})

    if kind == "adaptive":
        enc = one_hot_masked(train)
        cls = method.get("class", "best")
        folds = method.get("folds", 5)
        gammas = tuple(method.get("gammas", (1.0, 4.0)))
        lambdas = method.get("lambdas")
        alphas = tuple(method["alphas"]) if "alphas" in method else None
        finite_params = {k: method[k] for k in ("max_depth", "min_leaf", "min_gain")
                         if k in method}
        if cls == "best":
            model = _adaptive.fit_best(enc.values, enc.mask, y, task=task,
                                       folds=folds, seed=seed, gammas=gammas,
                                       lambdas=lambdas, alphas=alphas,
                                       finite_params=finite_params)
        elif cls == "finite":
            fc = _adaptive.FunctionClass("finite", **finite_params)
            model = _adaptive.fit_finite(enc.values, enc.mask, y, fc, task=task,
                                         folds=folds, seed=seed,
                                         lambdas=lambdas, alphas=alphas)
        else:
            fc = _adaptive.FunctionClass(cls, degree=method.get("degree", 1))
            model = _adaptive.fit_adaptive(enc.values, enc.mask, y, fc, task=task,
                                           folds=folds, seed=seed, gammas=gammas,
                                           lambdas=lambdas, alphas=alphas)
        return FittedPipeline(method, task, {"model": model})

    if kind == "joint":
        enc = one_hot_masked(train)
        config = JointConfig(
            downstream=_downstream_spec(method),
            max_outer=method.get("max_outer", 20),
            max_inner_passes=method.get("max_inner_passes", 10),
            min_rel_improve=method.get("min_rel_improve", 1e-4),
        )
        if config.downstream.kind == "best":
            model = fit_joint_best(enc, target, config, seed)
        else:
            model = fit_joint(enc, target, config, seed)
        return FittedPipeline(method, task, {"model": model})

    if kind == "mia_tree":
        enc = one_hot_masked(train)
        spec = TreeSpec(max_depth=method.get("max_depth", 6),
                        min_samples_leaf=method.get("min_samples_leaf", 5),
                        criterion="gini" if task == "binary" else "variance",
                        mia=True)
        model = fit_tree(enc.zero_filled(), y, spec, mask=enc.mask)
        return FittedPipeline(method, task, {"model": model})

    if kind == "oracle":
        if x_full_train is None:
            raise ValueError("oracle pipeline needs the fully observed training matrix")
        X = np.hstack([np.asarray(x_full_train, float), train.mask.astype(float)])
        model = fit_downstream(X, y, task, _downstream_spec(method), seed)
        return FittedPipeline(method, task, {"model": model})

    raise ValueError(f"unknown pipeline kind {kind!r}")


# ---------------------------------------------------------------------------
# Model documents (CLI train/predict round trip)
# ---------------------------------------------------------------------------

_DOC_FORMAT = "missreg-model-v1"


def pipeline_to_dict(fp: FittedPipeline) -> dict:
    """JSON document for a fitted pipeline.

    Supported: adaptive, joint, mia_tree, and impute_then_regress with
    mean/zero imputers under V2/V3 (their test-time behaviour depends only
    on stored statistics).  Chained-imputer and V1 pipelines need the raw
    training data at prediction time and are not serialized.
    """
    kind = fp.method["kind"]
    doc = {"format": _DOC_FORMAT, "method": fp.method, "task": fp.task}
    if kind == "adaptive":
        doc["model"] = _adaptive.model_to_dict(fp.payload["model"])
        return doc
    if kind == "joint":
        doc["model"] = fp.payload["model"].to_dict()
        return doc
    if kind == "mia_tree":
        doc["model"] = fp.payload["model"].to_dict()
        return doc
    if kind == "impute_then_regress":
        method = fp.method
        if method.get("policy", "V2") == "V1" or method.get("imputer", "mean") == "chained":
            raise ValueError("V1 and chained impute-then-regress pipelines "
                             "re-impute against the raw training data and "
                             "cannot be serialized standalone")
        imputer = fp.payload["imputer"]
        doc["model"] = {
            "fill": _imputer_fill_doc(imputer),
            "downstream": fp.payload["model"].to_dict(),
        }
        return doc
    raise ValueError(f"pipeline kind {kind!r} does not support serialization")


def _imputer_fill_doc(imputer) -> dict:
    # Composite imputers over single-statistic parts reduce to the completed
    # training kinds plus a per-column fill vector (NaN where a column was
    # complete in training and therefore has no legitimate fill).
    done = imputer.transform_train()
    fill_row = imputer.fill_vector()
    return {"fill": list(map(float, fill_row)),
            "kinds": [{"kind": k.kind, "levels": list(k.levels)}
                      for k in done.column_kinds],
            "names": list(done.column_names)}


def pipeline_from_dict(doc: dict) -> FittedPipeline:
    if doc.get("format") != _DOC_FORMAT:
        raise ValueError("not a missreg model document")
    method = doc["method"]
    task = doc["task"]
    kind = method["kind"]
    if kind == "adaptive":
        return FittedPipeline(method, task,
                              {"model": _adaptive.model_from_dict(doc["model"])})
    if kind == "joint":
        return FittedPipeline(method, task,
                              {"model": JointModel.from_dict(doc["model"])})
    if kind == "mia_tree":
        return FittedPipeline(method, task,
                              {"model": TreeNode.from_dict(doc["model"])})
    if kind == "impute_then_regress":
        from .data import ColumnKind
        m = doc["model"]
        kinds = [ColumnKind(e["kind"], tuple(e["levels"])) for e in m["fill"]["kinds"]]
        imputer = _DocImputer(np.asarray(m["fill"]["fill"], float), kinds,
                              m["fill"]["names"])
        model = FittedDownstream.from_dict(m["downstream"])
        return FittedPipeline(method, task, {"imputer": imputer, "model": model})
    raise ValueError(f"cannot revive pipeline kind {kind!r}")


class _DocImputer:
    """Replays a serialized single-statistic imputer at prediction time."""

    def __init__(self, fill, kinds, names):
        self.fill = fill
        self.kinds = tuple(kinds)
        self.names = tuple(names)

    def transform(self, test: MaskedMatrix, policy=V2, train=None) -> MaskedMatrix:
        return MaskedMatrix(test.filled(self.fill), np.zeros_like(test.mask),
                            self.kinds, self.names)
