"""Jointly optimized constant-vector imputation with an arbitrary downstream
predictor, by alternating refits and a cyclic coordinate search on the
imputation vector.

Outer loop: refit the predictor on the currently imputed matrix (a refit is
only adopted if it does not worsen the training error, so the recorded error
trace is non-increasing end to end).  Inner loop: cycle over the columns
that contain missing training cells and nudge each imputed value by one step
up, down, or not at all, keeping whichever minimizes the training error with
the predictor held fixed; ties keep the current value.  The step for column
j is the standard error of its observed mean.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .data import MaskedMatrix, TargetVector
from .downstream import (DownstreamSpec, FittedDownstream, fit_downstream,
                         fit_fixed)
from .metrics import auc_norm

__all__ = ["JointConfig", "JointModel", "fit_joint", "fit_joint_best",
           "predict_joint"]


@dataclass(frozen=True)
class JointConfig:
    downstream: DownstreamSpec = field(default_factory=DownstreamSpec)
    max_outer: int = 20
    max_inner_passes: int = 10
    min_rel_improve: float = 1e-4

    def __post_init__(self):
        if min(self.max_outer, self.max_inner_passes) < 1:
            raise ValueError("iteration limits must be positive")
        if self.min_rel_improve <= 0:
            raise ValueError("min_rel_improve must be positive")


@dataclass
class JointModel:
    mu: np.ndarray
    predictor: FittedDownstream
    error_trace: np.ndarray
    config: JointConfig
    outer_iterations: int = 0

    def to_dict(self) -> dict:
        return {"mu": list(map(float, self.mu)),
                "predictor": self.predictor.to_dict()}

    @staticmethod
    def from_dict(doc: dict) -> "JointModel":
        return JointModel(mu=np.asarray(doc["mu"], dtype=float),
                          predictor=FittedDownstream.from_dict(doc["predictor"]),
                          error_trace=np.asarray([]), config=JointConfig())


def _training_error(y, pred, task: str) -> float:
    if task == "binary":
        return 1.0 - (auc_norm(y, pred) + 1.0) / 2.0
    d = y - pred
    return float(d @ d) / len(y)


def fit_joint(train: MaskedMatrix, target: TargetVector, config: JointConfig,
              seed: int = 0, frozen=None) -> JointModel:
    """Alternating optimization of (mu, predictor) on the training data.

    The imputation vector starts at the observed column means, so the first
    predictor fit is exactly mean-impute-then-regress; every later accepted
    step can only lower the training error (MSE for regression, 1 - AUC for
    classification).

    ``frozen=(family, params)`` skips the downstream hyperparameter search
    and fits that family directly (used by the 'best' selection loop).
    """
    if any(k.is_categorical for k in train.column_kinds):
        raise ValueError("joint imputation searches continuous columns; "
                         "one-hot encode categoricals first")
    mask = train.mask
    y = target.y
    task = target.task
    n, d = train.shape
    obs_counts = (~mask).sum(axis=0)
    if np.any(obs_counts[mask.any(axis=0)] == 0):
        raise ValueError("fully-missing column")

    obs_sum = np.where(mask, 0.0, np.nan_to_num(train.values, nan=0.0)).sum(axis=0)
    mu = obs_sum / np.maximum(obs_counts, 1)
    sq = np.where(mask, 0.0, np.nan_to_num(train.values, nan=0.0) ** 2).sum(axis=0)
    var_obs = sq / np.maximum(obs_counts, 1) - mu ** 2
    sigma = np.sqrt(np.maximum(var_obs, 0.0)) / np.sqrt(np.maximum(obs_counts, 1))

    searchable = [j for j in range(d)
                  if mask[:, j].any() and sigma[j] > 0 and obs_counts[j] > 0]

    X = train.filled(mu)
    if frozen is not None:
        predictor = fit_fixed(X, y, task, frozen[0], frozen[1], seed)
    else:
        predictor = fit_downstream(X, y, task, config.downstream, seed)
    pred = predictor.predict_response(X)
    err = _training_error(y, pred, task)
    trace = [err]

    masked_rows = {j: np.nonzero(mask[:, j])[0] for j in searchable}
    outer_done = 0
    for outer in range(config.max_outer):
        err_start = err
        if outer > 0:
            cand = predictor.refit(X, y)
            cand_pred = cand.predict_response(X)
            cand_err = _training_error(y, cand_pred, task)
            if cand_err <= err:
                predictor, pred, err = cand, cand_pred, cand_err
                trace.append(err)

        for _ in range(config.max_inner_passes):
            moved = False
            for j in searchable:
                rows = masked_rows[j]
                best_eps, best_err, best_rows_pred = 0, err, None
                for eps in (-1, 1):
                    X[rows, j] = mu[j] + eps * sigma[j]
                    rows_pred = predictor.predict_response(X[rows])
                    cand_pred = pred.copy()
                    cand_pred[rows] = rows_pred
                    cand_err = _training_error(y, cand_pred, task)
                    if cand_err < best_err:
                        best_eps, best_err, best_rows_pred = eps, cand_err, rows_pred
                if best_eps != 0:
                    mu[j] = mu[j] + best_eps * sigma[j]
                    X[rows, j] = mu[j]
                    pred[rows] = best_rows_pred
                    assert best_err <= err + 1e-12
                    err = best_err
                    trace.append(err)
                    moved = True
                else:
                    X[rows, j] = mu[j]
            if not moved:
                break

        outer_done = outer + 1
        rel = (err_start - err) / max(err_start, 1e-300)
        if rel < config.min_rel_improve:
            break

    predictor_final = predictor.refit(X, y)
    final_pred = predictor_final.predict_response(X)
    final_err = _training_error(y, final_pred, task)
    if final_err <= err:
        predictor, err = predictor_final, final_err
        trace.append(err)

    return JointModel(mu=mu, predictor=predictor,
                      error_trace=np.asarray(trace), config=config,
                      outer_iterations=outer_done)


def fit_joint_best(train: MaskedMatrix, target: TargetVector,
                   config: JointConfig, seed: int = 0) -> JointModel:
    """Joint impute-then-regress with the downstream family chosen by k-fold
    cross-validation of the whole joint pipeline.

    Per family, hyperparameters are first selected on the mean-imputed
    matrix (cheaply) and then frozen; each family's full alternating
    optimization is scored on held-out folds.  Selecting on the joint fit
    rather than the initialization matters: families whose output is
    piecewise constant (trees, forests) barely move mu, so their joint and
    mean-impute pipelines score alike, while the linear family often
    overtakes them once mu converges.
    """
    y = target.y
    task = target.task
    n = train.n_rows
    folds = config.downstream.folds
    X0 = _mean_filled(train)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_of = np.zeros(n, dtype=int)
    for f, chunk in enumerate(np.array_split(perm, folds)):
        fold_of[chunk] = f

    best = None  # (cv_loss, family, params)
    for family in ("linear", "tree", "forest"):
        spec = dataclasses.replace(config.downstream, kind=family)
        params = fit_downstream(X0, y, task, spec, seed).params
        loss = 0.0
        for f in range(folds):
            tr = fold_of != f
            sub = fit_joint(train.take_rows(np.nonzero(tr)[0]), target.take(np.nonzero(tr)[0]),
                            config, seed=seed, frozen=(family, params))
            pred = predict_joint(sub, train.take_rows(np.nonzero(~tr)[0]))
            d = y[~tr] - pred
            loss += float(d @ d) / len(d)
        loss /= folds
        if best is None or loss < best[0]:
            best = (loss, family, params)

    _, family, params = best
    model = fit_joint(train, target, config, seed=seed, frozen=(family, params))
    model.predictor.cv_loss = best[0]
    return model


def _mean_filled(train: MaskedMatrix) -> np.ndarray:
    obs = ~train.mask
    vals = np.where(obs, np.nan_to_num(train.values, nan=0.0), 0.0)
    means = vals.sum(axis=0) / np.maximum(obs.sum(axis=0), 1)
    return train.filled(means)


def predict_joint(model: JointModel, test: MaskedMatrix) -> np.ndarray:
    """Fill masked coordinates with mu, then apply the predictor."""
    if test.n_cols != len(model.mu):
        raise ValueError(f"model expects {len(model.mu)} columns, "
                         f"got {test.n_cols}")
    return model.predictor.predict_response(test.filled(model.mu))
