"""Adaptive linear regression: linear models whose coefficients react to the
missingness pattern.

The model family is f(x, m) = <w(m), x>_m where the masked inner product
skips missing coordinates (zero-imputation by construction: expansion
columns multiply by the observed indicator, storage is never written).  The
hierarchy over w(m):

* static            -- w constant; d columns (1-m_j) x_j
* affine_intercept  -- static slopes plus a mask-affine intercept;
                       2d+1 columns (adds the d mask bits and an intercept)
* affine            -- w affine in m; d + d^2 columns, adding m_k (1-m_j) x_j
* polynomial(t)     -- w an order-t polynomial in m; columns
                       x_j (1-m_j) prod_{k in J} m_k with |J| <= t (terms
                       with j in J vanish identically and are dropped), plus
                       the intercept monomials prod_{k in J} m_k
* finite            -- recursive partition of pattern space, one static
                       model per cell, grown greedily and refit per leaf

Sparse mask-derived columns get penalty factors sqrt(n / n_active) so their
regularization reflects the rows they can actually see.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass

import numpy as np

from .glm import (CvResult, GlmFit, GlmSpec, cv_path, fit_glm,
                  scaled_penalty_factors)

__all__ = [
    "FunctionClass",
    "ExpandedDesign",
    "AdaptiveLinearModel",
    "DerivedImputation",
    "FiniteNode",
    "expand",
    "expansion_size",
    "fit_adaptive",
    "fit_finite",
    "fit_best",
    "predict_adaptive",
    "predict_adaptive_matrix",
    "to_imputation",
    "model_to_dict",
    "model_from_dict",
]

NONFINITE_KINDS = ("static", "affine_intercept", "affine", "polynomial")
BEST_CLASSES = ("affine_intercept", "affine", "finite")


@dataclass(frozen=True)
class FunctionClass:
    kind: str
    degree: int = 1          # polynomial order t
    max_depth: int = 4       # finite partition controls
    min_leaf: int = 20
    min_gain: float = 1e-3

    def __post_init__(self):
        if self.kind not in NONFINITE_KINDS + ("finite",):
            raise ValueError(f"unknown function class {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial order must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


def _columns_for(kind: str, d: int, degree: int = 1):
    """Column spec list: (base feature index or None for intercept,
    mask-monomial index tuple)."""
    if kind == "static":
        return [(j, ()) for j in range(d)]
    if kind == "affine_intercept":
        return ([(j, ()) for j in range(d)]
                + [(None, (k,)) for k in range(d)]
                + [(None, ())])
    if kind == "affine":
        return ([(j, ()) for j in range(d)]
                + [(j, (k,)) for j in range(d) for k in range(d)])
    if kind == "polynomial":
        t = degree
        cols = [(j, ()) for j in range(d)]
        for j in range(d):
            others = [k for k in range(d) if k != j]
            for s in range(1, min(t, d - 1) + 1):
                cols.extend((j, J) for J in itertools.combinations(others, s))
        cols.append((None, ()))
        for s in range(1, min(t, d) + 1):
            cols.extend((None, J) for J in itertools.combinations(range(d), s))
        return cols
    raise ValueError(f"no expansion for class {kind!r}")


def expansion_size(kind: str, d: int, degree: int = 1) -> int:
    return len(_columns_for(kind, d, degree))


@dataclass(frozen=True)
class ExpandedDesign:
    columns: tuple
    matrix: np.ndarray
    d: int

    @property
    def P(self) -> int:
        return len(self.columns)

    def activity_counts(self, mask) -> np.ndarray:
        """Rows where each column is structurally non-zero: the base feature
        observed and every monomial bit missing."""
        mask = np.asarray(mask, dtype=bool)
        n = mask.shape[0]
        counts = np.empty(self.P)
        for k, (base, mono) in enumerate(self.columns):
            act = np.ones(n, dtype=bool)
            if base is not None:
                act &= ~mask[:, base]
            for b in mono:
                act &= mask[:, b]
            counts[k] = act.sum()
        return counts

    def mask_derived(self) -> np.ndarray:
        """Columns involving the mask (monomial non-empty)."""
        return np.asarray([len(mono) > 0 for _, mono in self.columns])


def _build_matrix(values, mask, columns) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    Z = np.where(mask, 0.0, values)
    Mf = mask.astype(float)
    n = values.shape[0]
    out = np.empty((n, len(columns)))
    for k, (base, mono) in enumerate(columns):
        col = np.ones(n) if base is None else Z[:, base]
        for b in mono:
            col = col * Mf[:, b]
        out[:, k] = col
    return out


def expand(values, mask, fclass: FunctionClass) -> ExpandedDesign:
    """Expanded design for the non-finite classes.  Masked cells are never
    read: every column multiplies by the observed indicator."""
    if fclass.kind not in NONFINITE_KINDS:
        raise ValueError(f"expand does not apply to class {fclass.kind!r}")
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError("values and mask shapes differ")
    d = values.shape[1]
    cols = tuple(_columns_for(fclass.kind, d, fclass.degree))
    return ExpandedDesign(columns=cols, matrix=_build_matrix(values, mask, cols), d=d)


@dataclass
class FiniteNode:
    feature: int = -1                 # mask bit split on; -1 marks a leaf
    left: "FiniteNode | None" = None  # m_feature = 0 side
    right: "FiniteNode | None" = None # m_feature = 1 side
    beta: np.ndarray | None = None    # leaf static model, original units
    intercept: float = 0.0
    n: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class AdaptiveLinearModel:
    fclass: FunctionClass
    d: int
    task: str = "regression"
    columns: tuple | None = None      # non-finite kinds
    glm: GlmFit | None = None
    tree: FiniteNode | None = None    # finite kind
    cv_loss: float = float("nan")
    gamma: float = 1.0


@dataclass(frozen=True)
class DerivedImputation:
    mu: np.ndarray
    undefined: np.ndarray  # coordinates where the slope vanishes


def _loss_for_task(task: str) -> str:
    return "logistic" if task == "binary" else "squared"


def fit_adaptive(values, mask, y, fclass: FunctionClass, task: str = "regression",
                 folds: int = 5, seed: int = 0, cv: bool = True,
                 spec: GlmSpec | None = None, gammas=(1.0, 4.0),
                 lambdas=None, alphas=None) -> AdaptiveLinearModel:
    """Fit a non-finite adaptive class: expand, scale penalties by structural
    activity, and solve the penalized ERM (cross-validated by default).

    ``gammas`` is an extra multiplicative lasso factor applied to the
    mask-derived columns only, selected by the same cross-validation.
    """
    if fclass.kind == "finite":
        return fit_finite(values, mask, y, fclass, task=task, folds=folds,
                          seed=seed)
    design = expand(values, mask, fclass)
    y = np.asarray(y, dtype=float)
    base_spec = spec if spec is not None else GlmSpec(loss=_loss_for_task(task))
    phi0 = scaled_penalty_factors(mask, design)
    derived = design.mask_derived()

    if not cv:
        use = base_spec if base_spec.penalty_factors is not None else \
            dataclasses.replace(base_spec, penalty_factors=tuple(phi0))
        glm = fit_glm(design.matrix, y, use)
        return AdaptiveLinearModel(fclass=fclass, d=design.d, task=task,
                                   columns=design.columns, glm=glm)

    best: CvResult | None = None
    best_gamma = 1.0
    for g in gammas:
        phi = np.where(derived, phi0 * g, phi0)
        res = cv_path(design.matrix, y, base_spec, folds=folds, seed=seed,
                      lambdas=lambdas, alphas=alphas, phi=phi)
        loss = min(row[2] for row in res.table)
        if best is None or loss < min(row[2] for row in best.table):
            best, best_gamma = res, g
    return AdaptiveLinearModel(fclass=fclass, d=design.d, task=task,
                               columns=design.columns, glm=best.fit,
                               cv_loss=min(row[2] for row in best.table),
                               gamma=best_gamma)


# ---------------------------------------------------------------------------
# Finitely adaptive: recursive partitioning of pattern space
# ---------------------------------------------------------------------------

def _ridge_ols(values, mask, y, lam: float = 1e-8):
    """Static fit used during the split search: zero-imputed features plus
    intercept, tiny ridge for conditioning.  Returns (beta, b0, sse)."""
    Z = np.where(mask, 0.0, values)
    n, d = Z.shape
    A = np.column_stack([Z, np.ones(n)])
    G = A.T @ A
    scale = max(np.trace(G) / (d + 1), 1.0)
    G[np.diag_indices_from(G)] += lam * scale
    coef = np.linalg.solve(G, A.T @ y)
    r = y - A @ coef
    return coef[:d], float(coef[d]), float(r @ r)


def fit_finite(values, mask, y, fclass: FunctionClass, task: str = "regression",
               folds: int = 5, seed: int = 0, leaf_refit: str = "cv",
               lambdas=None, alphas=None, score_cv: bool = True) -> AdaptiveLinearModel:
    """Greedy recursive partition of the missingness-pattern space.

    Each candidate split separates a cell into {m_j = 0} and {m_j = 1},
    scored by the summed squared loss of one fast ridge-stabilized OLS fit
    per side; the best feature splits the cell if the relative risk
    reduction clears ``min_gain``, both sides keep ``min_leaf`` rows, and
    the depth budget allows.  Final leaf models are refit with the
    cross-validated solver (``leaf_refit="ols"`` keeps the fast fits, used
    inside model-selection loops).
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    y = np.asarray(y, dtype=float)
    d = values.shape[1]

    def grow(idx, depth):
        node = FiniteNode(n=len(idx))
        sub_v, sub_m, sub_y = values[idx], mask[idx], y[idx]
        _, _, parent_sse = _ridge_ols(sub_v, sub_m, sub_y)
        best = None
        if depth < fclass.max_depth and parent_sse > 0:
            for j in range(d):
                side1 = sub_m[:, j]
                n1 = int(side1.sum())
                n0 = len(idx) - n1
                if min(n0, n1) < fclass.min_leaf:
                    continue
                _, _, sse0 = _ridge_ols(sub_v[~side1], sub_m[~side1], sub_y[~side1])
                _, _, sse1 = _ridge_ols(sub_v[side1], sub_m[side1], sub_y[side1])
                tot = sse0 + sse1
                if best is None or tot < best[1]:
                    best = (j, tot)
        if best is not None and (parent_sse - best[1]) / parent_sse >= fclass.min_gain:
            j = best[0]
            node.feature = j
            side1 = mask[idx, j]
            node.left = grow(idx[~side1], depth + 1)
            node.right = grow(idx[side1], depth + 1)
            return node
        _fit_leaf(node, sub_v, sub_m, sub_y)
        return node

    def _fit_leaf(node, sub_v, sub_m, sub_y):
        if leaf_refit == "cv" and len(sub_y) >= max(folds, 2 * d):
            design = expand(sub_v, sub_m, FunctionClass("static"))
            phi = scaled_penalty_factors(sub_m, design)
            res = cv_path(design.matrix, sub_y, GlmSpec(loss=_loss_for_task(task)),
                          folds=folds, seed=seed, lambdas=lambdas,
                          alphas=alphas, phi=phi)
            node.beta = res.fit.beta
            node.intercept = res.fit.intercept
        else:
            beta, b0, _ = _ridge_ols(sub_v, sub_m, sub_y)
            node.beta = beta
            node.intercept = b0

    tree = grow(np.arange(len(y)), 0)
    model = AdaptiveLinearModel(fclass=fclass, d=d, task=task, tree=tree)
    if score_cv:
        model.cv_loss = _finite_cv_loss(values, mask, y, fclass, task, folds, seed)
    return model


def _finite_cv_loss(values, mask, y, fclass, task, folds, seed) -> float:
    """Fold-mean validation loss of the finite class (fast OLS leaves), on
    the same fold split the solver CV uses, for class selection."""
    n = len(y)
    if n < folds:
        return float("nan")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    loss = 0.0
    for chunk in np.array_split(perm, folds):
        va = np.zeros(n, dtype=bool)
        va[chunk] = True
        m = fit_finite(values[~va], mask[~va], y[~va], fclass, task=task,
                       folds=folds, seed=seed, leaf_refit="ols", score_cv=False)
        pred = predict_adaptive_matrix(m, values[va], mask[va])
        if task == "binary":
            p = np.clip(pred, 1e-8, 1 - 1e-8)
            loss += float(np.mean(-(y[va] * np.log(p) + (1 - y[va]) * np.log(1 - p))))
        else:
            loss += float(np.mean((y[va] - pred) ** 2))
    return loss / folds


def fit_best(values, mask, y, task: str = "regression", folds: int = 5,
             seed: int = 0, classes=BEST_CLASSES, gammas=(1.0, 4.0),
             lambdas=None, alphas=None,
             finite_params: dict | None = None) -> AdaptiveLinearModel:
    """Cross-validated selection among adaptive classes (shared fold split),
    the 'best' variant used in the benchmarks."""
    candidates = []
    for kind in classes:
        if kind == "finite":
            fc = FunctionClass("finite", **(finite_params or {}))
            m = fit_finite(values, mask, y, fc, task=task, folds=folds, seed=seed,
                           lambdas=lambdas, alphas=alphas)
        else:
            m = fit_adaptive(values, mask, y, FunctionClass(kind), task=task,
                             folds=folds, seed=seed, gammas=gammas,
                             lambdas=lambdas, alphas=alphas)
        candidates.append(m)
    losses = [m.cv_loss for m in candidates]
    k = int(np.nanargmin(losses))
    return candidates[k]


# ---------------------------------------------------------------------------
# Prediction and derived imputation
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30, 30)))


def predict_adaptive_matrix(model: AdaptiveLinearModel, values, mask) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if values.shape[1] != model.d:
        raise ValueError(f"model expects d={model.d} features, got {values.shape[1]}")
    if model.fclass.kind == "finite":
        out = np.empty(len(values))
        Z = np.where(mask, 0.0, values)
        stack = [(model.tree, np.arange(len(values)))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if node.is_leaf:
                out[idx] = Z[idx] @ node.beta + node.intercept
                continue
            side1 = mask[idx, node.feature]
            stack.append((node.left, idx[~side1]))
            stack.append((node.right, idx[side1]))
    else:
        mat = _build_matrix(values, mask, model.columns)
        out = model.glm.predict(mat)
    if model.task == "binary":
        return _sigmoid(out)
    return out


def predict_adaptive(model: AdaptiveLinearModel, x, m) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    m = np.asarray(m, dtype=bool).reshape(1, -1)
    return float(predict_adaptive_matrix(model, x, m)[0])


def to_imputation(model: AdaptiveLinearModel, tol: float = 1e-12) -> DerivedImputation:
    """Read the affine-intercept model as an imputation rule: mu_j is the
    mask-bit coefficient over the slope, defined where the slope is
    non-negligible.  Feature j with a vanishing slope but informative mask
    bit has no imputation-value reading and is flagged instead."""
    if model.fclass.kind != "affine_intercept":
        raise ValueError("derived imputation requires the affine-intercept class")
    d = model.d
    w = model.glm.beta[:d]
    b = model.glm.beta[d:2 * d]
    undefined = np.abs(w) < tol
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(undefined, np.nan, b / np.where(undefined, 1.0, w))
    return DerivedImputation(mu=mu, undefined=undefined)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _finite_to_dict(node: FiniteNode) -> dict:
    if node.is_leaf:
        return {"beta": list(map(float, node.beta)),
                "intercept": node.intercept, "n": node.n}
    return {"feature": node.feature, "n": node.n,
            "left": _finite_to_dict(node.left),
            "right": _finite_to_dict(node.right)}


def _finite_from_dict(d: dict) -> FiniteNode:
    if "feature" not in d:
        return FiniteNode(beta=np.asarray(d["beta"], dtype=float),
                          intercept=float(d["intercept"]), n=int(d["n"]))
    return FiniteNode(feature=int(d["feature"]), n=int(d["n"]),
                      left=_finite_from_dict(d["left"]),
                      right=_finite_from_dict(d["right"]))


def model_to_dict(model: AdaptiveLinearModel) -> dict:
    doc = {
        "class": model.fclass.kind,
        "degree": model.fclass.degree,
        "d": model.d,
        "task": model.task,
        "gamma": model.gamma,
    }
    if model.fclass.kind == "finite":
        doc["partition"] = _finite_to_dict(model.tree)
        doc["finite_params"] = {
            "max_depth": model.fclass.max_depth,
            "min_leaf": model.fclass.min_leaf,
            "min_gain": model.fclass.min_gain,
        }
    else:
        doc["columns"] = [[base, list(mono)] for base, mono in model.columns]
        doc["beta"] = list(map(float, model.glm.beta))
        doc["intercept"] = float(model.glm.intercept)
    return doc


def model_from_dict(doc: dict) -> AdaptiveLinearModel:
    kind = doc["class"]
    if kind == "finite":
        fc = FunctionClass("finite", **doc.get("finite_params", {}))
        return AdaptiveLinearModel(fclass=fc, d=int(doc["d"]), task=doc["task"],
                                   tree=_finite_from_dict(doc["partition"]))
    fc = FunctionClass(kind, degree=int(doc.get("degree", 1)))
    columns = tuple((None if b is None else int(b), tuple(mono))
                    for b, mono in doc["columns"])
    glm = GlmFit(beta=np.asarray(doc["beta"], dtype=float),
                 intercept=float(doc["intercept"]),
                 objective_trace=np.asarray([]), converged=True,
                 spec=GlmSpec(loss=_loss_for_task(doc["task"])))
    return AdaptiveLinearModel(fclass=fc, d=int(doc["d"]), task=doc["task"],
                               columns=columns, glm=glm)
