"""Single-value and chained-equations imputation, plus categorical
missing-as-category encoding and one-hot expansion helpers.

All imputers fit on training data only and never touch observed cells.
Test-time behaviour is controlled by a policy:

* V1 -- refit the imputer on the row-concatenated train+test data and impute
  both jointly (not deployable in production, kept for comparison);
* V2 -- impute the test set using models/statistics derived from the
  *imputed* training matrix (the default, mimics a production pipeline);
* V3 -- impute the test set against the *raw* masked training matrix, by
  re-running the chained procedure on the concatenation from scratch.

Mean, mode, and constant imputers are single statistics of the training
set, so V2 and V3 coincide for them by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MaskedMatrix, categorical, continuous

__all__ = [
    "TestImputePolicy",
    "V1",
    "V2",
    "V3",
    "Imputer",
    "MeanImputer",
    "ModeImputer",
    "ConstantImputer",
    "ZeroImputer",
    "MissingCategoryImputer",
    "ChainedImputer",
    "CompositeImputer",
    "fit_mean",
    "fit_mode",
    "fit_constant",
    "fit_chained",
    "transform",
    "impute_train_test",
    "encode_missing_category",
    "decode_missing_category",
    "one_hot",
    "one_hot_masked",
    "make_imputer",
]

MISSING_LEVEL = "<missing>"


@dataclass(frozen=True)
class TestImputePolicy:
    variant: str

    def __post_init__(self):
        if self.variant not in ("V1", "V2", "V3"):
            raise ValueError(f"unknown policy {self.variant!r}")


V1 = TestImputePolicy("V1")
V2 = TestImputePolicy("V2")
V3 = TestImputePolicy("V3")


def _check_no_fully_missing(mm: MaskedMatrix) -> None:
    dead = np.nonzero(mm.mask.all(axis=0))[0]
    if dead.size:
        names = [mm.column_names[j] for j in dead]
        raise ValueError(f"fully-missing column(s): {names}")


class Imputer:
    """Base imputer: fit on a training MaskedMatrix, then produce complete
    matrices (all-false mask) whose observed cells are untouched."""

    kind = "abstract"

    def __init__(self):
        self.fitted = False

    def fit(self, train: MaskedMatrix) -> "Imputer":
        raise NotImplementedError

    def _check_fitted(self):
        if not self.fitted:
            raise ValueError(f"{self.kind} imputer used before fit")

    def transform_train(self) -> MaskedMatrix:
        """The completed training matrix recorded at fit time."""
        self._check_fitted()
        return self._train_completed

    def transform(self, test: MaskedMatrix, policy: TestImputePolicy = V2,
                  train: MaskedMatrix | None = None) -> MaskedMatrix:
        self._check_fitted()
        self._check_schema(test)
        if policy.variant == "V1":
            if train is None:
                train = self._train_raw
            both = _vstack(train, test)
            refit = self._fresh().fit(both)
            return refit.transform_train().take_rows(
                np.arange(train.n_rows, both.n_rows)
            )
        return self._transform_test(test, policy)

    # --- hooks -----------------------------------------------------------

    def _fresh(self) -> "Imputer":
        raise NotImplementedError

    def _transform_test(self, test, policy) -> MaskedMatrix:
        raise NotImplementedError

    def _check_schema(self, mm: MaskedMatrix):
        if mm.n_cols != len(self._kinds):
            raise ValueError(
                f"schema mismatch: imputer fitted on {len(self._kinds)} "
                f"columns, got {mm.n_cols}"
            )

    def _record_fit(self, train: MaskedMatrix, completed_values: np.ndarray,
                    kinds=None):
        self._train_raw = train
        self._kinds = train.column_kinds
        self.input_kinds = train.column_kinds
        self._train_completed = MaskedMatrix(
            completed_values,
            np.zeros_like(train.mask),
            train.column_kinds if kinds is None else kinds,
            train.column_names,
        )
        self.fitted = True


class _FillImputer(Imputer):
    """Shared machinery for per-column single-statistic imputers."""

    def _transform_test(self, test, policy):
        # V2 and V3 coincide: the fill vector is a train-only statistic.
        return test.with_values(test.filled(self.fill_),
                                np.zeros_like(test.mask))

    def fill_vector(self) -> np.ndarray:
        self._check_fitted()
        return np.asarray(self.fill_, dtype=float)


class MeanImputer(_FillImputer):
    """Per-column mean of the observed entries; continuous columns only."""

    kind = "mean"

    def fit(self, train: MaskedMatrix) -> "MeanImputer":
        if any(k.is_categorical for k in train.column_kinds):
            raise ValueError("mean imputation requires continuous columns; "
                             "compose with mode/missing-category for categoricals")
        _check_no_fully_missing(train)
        obs = ~train.mask
        sums = np.where(obs, np.nan_to_num(train.values, nan=0.0), 0.0).sum(axis=0)
        self.fill_ = sums / obs.sum(axis=0)
        self._record_fit(train, train.filled(self.fill_))
        return self

    def _fresh(self):
        return MeanImputer()


class ModeImputer(_FillImputer):
    """Most frequent observed level per column; ties break to the lowest
    level code.  Categorical columns only."""

    kind = "mode"

    def fit(self, train: MaskedMatrix) -> "ModeImputer":
        if any(not k.is_categorical for k in train.column_kinds):
            raise ValueError("mode imputation requires categorical columns")
        _check_no_fully_missing(train)
        fill = np.zeros(train.n_cols)
        for j, kind in enumerate(train.column_kinds):
            codes = train.values[~train.mask[:, j], j].astype(int)
            fill[j] = np.bincount(codes, minlength=kind.n_levels).argmax()
        self.fill_ = fill
        self._record_fit(train, train.filled(self.fill_))
        return self

    def _fresh(self):
        return ModeImputer()


class ConstantImputer(_FillImputer):
    """Fill each column with a caller-supplied constant."""

    kind = "constant"

    def __init__(self, mu):
        super().__init__()
        self.fill_ = np.asarray(mu, dtype=float)

    def fit(self, train: MaskedMatrix) -> "ConstantImputer":
        if self.fill_.shape != (train.n_cols,):
            raise ValueError("constant vector length must match column count")
        self._record_fit(train, train.filled(self.fill_))
        return self

    def _fresh(self):
        return ConstantImputer(self.fill_)


class ZeroImputer(ConstantImputer):
    kind = "zero"

    def __init__(self):
        Imputer.__init__(self)
        self.fill_ = None

    def fit(self, train: MaskedMatrix) -> "ZeroImputer":
        self.fill_ = np.zeros(train.n_cols)
        self._record_fit(train, train.filled(self.fill_))
        return self

    def _fresh(self):
        return ZeroImputer()


class MissingCategoryImputer(Imputer):
    """Recode categorical missing cells as an explicit extra level.

    Only columns that had missing training cells gain the level, so complete
    columns keep their level count.  Continuous columns are rejected.
    """

    kind = "missing-category"

    def fit(self, train: MaskedMatrix) -> "MissingCategoryImputer":
        if any(not k.is_categorical for k in train.column_kinds):
            raise ValueError("missing-as-category applies to categorical columns")
        self.extended_ = tuple(bool(train.mask[:, j].any())
                               for j in range(train.n_cols))
        kinds = []
        for j, kind in enumerate(train.column_kinds):
            if self.extended_[j]:
                kinds.append(categorical(kind.levels + (MISSING_LEVEL,)))
            else:
                kinds.append(kind)
        self.kinds_out_ = tuple(kinds)
        self._record_fit(train, self._recode(train), kinds=self.kinds_out_)
        return self

    def _recode(self, mm: MaskedMatrix) -> np.ndarray:
        fill = np.zeros(mm.n_cols)
        for j, kind in enumerate(mm.column_kinds):
            if self.extended_[j]:
                fill[j] = kind.n_levels  # the appended level's code
            elif mm.mask[:, j].any():
                raise ValueError(
                    f"column {mm.column_names[j]!r} has missing cells but "
                    f"gained no missing level at fit time"
                )
        return mm.filled(fill)

    def _transform_test(self, test, policy):
        return MaskedMatrix(self._recode(test), np.zeros_like(test.mask),
                            self.kinds_out_, test.column_names)

    def fill_vector(self) -> np.ndarray:
        self._check_fitted()
        # Sentinel level code where the column gained one; columns that were
        # complete in training have no legitimate fill (NaN).
        return np.asarray([k.n_levels if ext else np.nan
                           for ext, k in zip(self.extended_, self._kinds)])

    def _fresh(self):
        return MissingCategoryImputer()


def encode_missing_category(mm: MaskedMatrix, columns=None) -> MaskedMatrix:
    """One-shot missing-as-category recoding of a matrix.

    Each categorical column containing missing cells gains a final
    ``<missing>`` level and its mask is cleared.  Raises if a requested
    column is continuous.
    """
    if columns is None:
        columns = [j for j, k in enumerate(mm.column_kinds) if k.is_categorical]
    columns = set(columns)
    for j in columns:
        if not mm.column_kinds[j].is_categorical:
            raise ValueError(
                f"column {mm.column_names[j]!r} is continuous; "
                f"missing-as-category applies to categorical columns"
            )
    values = mm.values.copy()
    mask = mm.mask.copy()
    kinds = list(mm.column_kinds)
    for j in columns:
        if not mm.mask[:, j].any():
            continue
        kind = kinds[j]
        values[:, j] = np.where(mask[:, j], kind.n_levels, values[:, j])
        kinds[j] = categorical(kind.levels + (MISSING_LEVEL,))
        mask[:, j] = False
    return MaskedMatrix(values, mask, kinds, mm.column_names)


def decode_missing_category(mm: MaskedMatrix) -> MaskedMatrix:
    """Inverse of :func:`encode_missing_category`: cells at a trailing
    ``<missing>`` level become masked again and the level is dropped."""
    values = mm.values.copy()
    mask = mm.mask.copy()
    kinds = list(mm.column_kinds)
    for j, kind in enumerate(kinds):
        if kind.is_categorical and kind.levels and kind.levels[-1] == MISSING_LEVEL:
            sentinel = kind.n_levels - 1
            hit = (~mask[:, j]) & (values[:, j] == sentinel)
            mask[:, j] |= hit
            kinds[j] = categorical(kind.levels[:-1])
    return MaskedMatrix(values, mask, kinds, mm.column_names)


# ---------------------------------------------------------------------------
# Chained-equations imputer
# ---------------------------------------------------------------------------

def _ridge_solve(A: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Ridge with an unpenalized trailing intercept column."""
    G = A.T @ A
    pen = np.full(A.shape[1], lam)
    pen[-1] = 0.0
    G[np.diag_indices_from(G)] += pen
    return np.linalg.solve(G, A.T @ b)


def _logistic_ridge(A: np.ndarray, b: np.ndarray, lam: float,
                    max_iter: int = 25) -> np.ndarray:
    """Small IRLS ridge logistic fit used for categorical chained updates."""
    beta = np.zeros(A.shape[1])
    for _ in range(max_iter):
        eta = A @ beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30)))
        w = np.maximum(p * (1 - p), 1e-5)
        z = eta + (b - p) / w
        Aw = A * w[:, None]
        G = A.T @ Aw
        pen = np.full(A.shape[1], lam)
        pen[-1] = 0.0
        G[np.diag_indices_from(G)] += pen
        new = np.linalg.solve(G, Aw.T @ z)
        if np.max(np.abs(new - beta)) < 1e-8:
            beta = new
            break
        beta = new
    return beta


class ChainedImputer(Imputer):
    """Deterministic chained-equations imputation.

    Missing cells start at observed means/modes; then ``n_sweeps`` passes
    cycle the columns in order, regressing each column's observed entries on
    all other (currently imputed) columns -- ridge for continuous columns,
    one-vs-all logistic argmax for categoricals -- and refreshing that
    column's missing cells with fitted values.  No posterior draws: every
    pipeline consumes a single completed matrix and results are exactly
    reproducible.
    """

    kind = "chained"

    def __init__(self, n_sweeps: int = 5, ridge_lambda: float = 1e-6):
        super().__init__()
        self.n_sweeps = int(n_sweeps)
        self.ridge_lambda = float(ridge_lambda)

    def _fresh(self):
        return ChainedImputer(self.n_sweeps, self.ridge_lambda)

    # Design for column j: every other column, categoricals one-hot over
    # their training levels, plus a trailing intercept column.
    def _design(self, vals: np.ndarray, j: int) -> np.ndarray:
        cols = []
        for k, kind in enumerate(self._kinds):
            if k == j:
                continue
            if kind.is_categorical:
                codes = vals[:, k].astype(int)
                n_lv = self._n_levels[k]
                eye = np.zeros((len(codes), n_lv))
                eye[np.arange(len(codes)), np.clip(codes, 0, n_lv - 1)] = 1.0
                cols.append(eye)
            else:
                cols.append(vals[:, k:k + 1])
        cols.append(np.ones((vals.shape[0], 1)))
        return np.hstack(cols)

    def _init_fill(self, mm: MaskedMatrix) -> np.ndarray:
        return mm.filled(self.init_stats_)

    def _run(self, values: np.ndarray, mask: np.ndarray, n_sweeps: int):
        """Shared sweep loop; returns (completed values, per-column models
        refitted on the final sweep)."""
        vals = values.copy()
        models: list = [None] * vals.shape[1]
        for _ in range(n_sweeps):
            for j, kind in enumerate(self._kinds):
                miss = mask[:, j]
                A = self._design(vals, j)
                obs = ~miss
                if kind.is_categorical:
                    betas = []
                    codes = vals[obs, j].astype(int)
                    for lv in range(self._n_levels[j]):
                        betas.append(_logistic_ridge(
                            A[obs], (codes == lv).astype(float), self.ridge_lambda))
                    models[j] = np.column_stack(betas)
                    if miss.any():
                        scores = A[miss] @ models[j]
                        vals[miss, j] = scores.argmax(axis=1)
                else:
                    models[j] = _ridge_solve(A[obs], vals[obs, j], self.ridge_lambda)
                    if miss.any():
                        vals[miss, j] = A[miss] @ models[j]
        return vals, models

    def fit(self, train: MaskedMatrix) -> "ChainedImputer":
        if train.n_cols < 2:
            raise ValueError("chained imputation needs at least 2 columns")
        if train.n_rows < 2:
            raise ValueError("chained imputation needs at least 2 rows")
        _check_no_fully_missing(train)
        self._kinds = train.column_kinds
        self._n_levels = [k.n_levels for k in train.column_kinds]
        stats = np.zeros(train.n_cols)
        for j, kind in enumerate(train.column_kinds):
            col = train.values[~train.mask[:, j], j]
            if kind.is_categorical:
                stats[j] = np.bincount(col.astype(int), minlength=kind.n_levels).argmax()
            else:
                stats[j] = col.mean()
        self.init_stats_ = stats
        vals, models = self._run(train.filled(stats), train.mask, self.n_sweeps)
        self.models_ = models
        self._record_fit(train, vals)
        return self

    def _transform_test(self, test, policy):
        if policy.variant == "V2":
            # Stored models (fit against the imputed training matrix) applied
            # to the test rows, which are progressively imputed in the same
            # column order, starting from the training fill statistics.
            vals = test.filled(self.init_stats_)
            for _ in range(self.n_sweeps):
                for j, kind in enumerate(self._kinds):
                    miss = test.mask[:, j]
                    if not miss.any():
                        continue
                    A = self._design(vals, j)
                    if kind.is_categorical:
                        vals[miss, j] = (A[miss] @ self.models_[j]).argmax(axis=1)
                    else:
                        vals[miss, j] = A[miss] @ self.models_[j]
            return test.with_values(vals, np.zeros_like(test.mask))
        # V3: re-run the chained procedure from scratch on the raw masked
        # training rows stacked with the test rows, and keep the test block.
        both = _vstack(self._train_raw, test)
        vals, _ = self._run(both.filled(self.init_stats_), both.mask, self.n_sweeps)
        out = vals[self._train_raw.n_rows:]
        return test.with_values(out, np.zeros_like(test.mask))


# ---------------------------------------------------------------------------
# Composition and helpers
# ---------------------------------------------------------------------------

class CompositeImputer(Imputer):
    """Route continuous and categorical columns to separate imputers and
    reassemble.  Used by pipelines on mixed-type data."""

    kind = "composite"

    def __init__(self, continuous_imputer: Imputer, categorical_imputer: Imputer):
        super().__init__()
        self._cont = continuous_imputer
        self._cat = categorical_imputer

    def _fresh(self):
        return CompositeImputer(self._cont._fresh(), self._cat._fresh())

    def _split(self, mm: MaskedMatrix):
        cont = [j for j, k in enumerate(mm.column_kinds) if not k.is_categorical]
        cat = [j for j, k in enumerate(mm.column_kinds) if k.is_categorical]
        return cont, cat

    def _take_cols(self, mm: MaskedMatrix, idx):
        return MaskedMatrix(
            mm.values[:, idx], mm.mask[:, idx],
            [mm.column_kinds[j] for j in idx],
            [mm.column_names[j] for j in idx],
        )

    def fit(self, train: MaskedMatrix) -> "CompositeImputer":
        self._cont_idx, self._cat_idx = self._split(train)
        cont_done = cat_done = None
        if self._cont_idx:
            cont_done = self._cont.fit(self._take_cols(train, self._cont_idx)
                                       ).transform_train()
        if self._cat_idx:
            cat_done = self._cat.fit(self._take_cols(train, self._cat_idx)
                                     ).transform_train()
        merged = self._merge(train, cont_done, cat_done)
        self._record_fit(train, merged.values, kinds=merged.column_kinds)
        return self

    def _merge(self, template, cont_mm, cat_mm):
        values = template.zero_filled()
        kinds = list(template.column_kinds)
        if cont_mm is not None:
            values[:, self._cont_idx] = cont_mm.values
        if cat_mm is not None:
            values[:, self._cat_idx] = cat_mm.values
            for pos, j in enumerate(self._cat_idx):
                kinds[j] = cat_mm.column_kinds[pos]
        return MaskedMatrix(values, np.zeros_like(template.mask), kinds,
                            template.column_names)

    def transform(self, test, policy=V2, train=None):
        self._check_fitted()
        cont_mm = cat_mm = None
        if self._cont_idx:
            cont_mm = self._cont.transform(
                self._take_cols(test, self._cont_idx), policy,
                None if train is None else self._take_cols(train, self._cont_idx))
        if self._cat_idx:
            cat_mm = self._cat.transform(
                self._take_cols(test, self._cat_idx), policy,
                None if train is None else self._take_cols(train, self._cat_idx))
        return self._merge(test, cont_mm, cat_mm)

    def transform_train(self):
        self._check_fitted()
        return self._train_completed

    def fill_vector(self) -> np.ndarray:
        self._check_fitted()
        fill = np.full(len(self.input_kinds), np.nan)
        if self._cont_idx:
            fill[self._cont_idx] = self._cont.fill_vector()
        if self._cat_idx:
            fill[self._cat_idx] = self._cat.fill_vector()
        return fill


def _vstack(a: MaskedMatrix, b: MaskedMatrix) -> MaskedMatrix:
    if a.column_kinds != b.column_kinds:
        raise ValueError("cannot stack matrices with different column kinds")
    return MaskedMatrix(
        np.vstack([a.zero_filled(), b.zero_filled()]),
        np.vstack([a.mask, b.mask]),
        a.column_kinds,
        a.column_names,
    )


def fit_mean(train: MaskedMatrix) -> MeanImputer:
    return MeanImputer().fit(train)


def fit_mode(train: MaskedMatrix) -> ModeImputer:
    return ModeImputer().fit(train)


def fit_constant(train: MaskedMatrix, mu) -> ConstantImputer:
    return ConstantImputer(mu).fit(train)


def fit_chained(train: MaskedMatrix, n_sweeps: int = 5) -> ChainedImputer:
    return ChainedImputer(n_sweeps=n_sweeps).fit(train)


def transform(imputer: Imputer, test: MaskedMatrix,
              policy: TestImputePolicy = V2,
              train: MaskedMatrix | None = None) -> MaskedMatrix:
    return imputer.transform(test, policy, train)


def make_imputer(continuous_kind: str = "mean", categorical_kind: str = "category",
                 n_sweeps: int = 5) -> Imputer:
    """Imputer factory used by the benchmark harness.

    continuous_kind: mean | chained | zero
    categorical_kind: category | mode
    """
    cont: Imputer
    if continuous_kind == "mean":
        cont = MeanImputer()
    elif continuous_kind == "chained":
        cont = ChainedImputer(n_sweeps=n_sweeps)
    elif continuous_kind == "zero":
        cont = ZeroImputer()
    else:
        raise ValueError(f"unknown continuous imputer {continuous_kind!r}")
    if categorical_kind == "category":
        cat: Imputer = MissingCategoryImputer()
    elif categorical_kind == "mode":
        cat = ModeImputer()
    else:
        raise ValueError(f"unknown categorical imputer {categorical_kind!r}")
    return CompositeImputer(cont, cat)


def impute_train_test(imputer: Imputer, train: MaskedMatrix, test: MaskedMatrix,
                      policy: TestImputePolicy = V2):
    """Fit on train and complete both splits under the given policy.

    Under V1 the imputer is refit on the stacked data, so the completed
    training matrix itself depends on the test rows; under V2/V3 the
    training matrix is completed from the train-only fit.
    """
    if policy.variant == "V1":
        both = _vstack(train, test)
        refit = imputer._fresh().fit(both)
        done = refit.transform_train()
        tr = done.take_rows(np.arange(train.n_rows))
        te = done.take_rows(np.arange(train.n_rows, both.n_rows))
        return tr, te, refit
    fitted = imputer.fit(train)
    return fitted.transform_train(), fitted.transform(test, policy), fitted


# ---------------------------------------------------------------------------
# One-hot expansion
# ---------------------------------------------------------------------------

def one_hot(mm: MaskedMatrix):
    """Expand a *complete* matrix to a numeric design: continuous columns
    pass through, categorical columns become one indicator per level.

    Returns (matrix, feature names).
    """
    if mm.mask.any():
        raise ValueError("one_hot requires a complete matrix")
    cols, names = [], []
    for j, kind in enumerate(mm.column_kinds):
        if kind.is_categorical:
            codes = mm.values[:, j].astype(int)
            eye = np.zeros((mm.n_rows, kind.n_levels))
            eye[np.arange(mm.n_rows), codes] = 1.0
            cols.append(eye)
            names.extend(f"{mm.column_names[j]}={lv}" for lv in kind.levels)
        else:
            cols.append(mm.values[:, j:j + 1])
            names.append(mm.column_names[j])
    return np.hstack(cols), names


def one_hot_masked(mm: MaskedMatrix) -> MaskedMatrix:
    """One-hot expansion that preserves missingness: each indicator column
    inherits the mask bit of its source cell.  Continuous columns pass
    through unchanged."""
    values, masks, kinds, names = [], [], [], []
    for j, kind in enumerate(mm.column_kinds):
        src_mask = mm.mask[:, j]
        if kind.is_categorical:
            codes = np.where(src_mask, 0, mm.values[:, j]).astype(int)
            eye = np.zeros((mm.n_rows, kind.n_levels))
            eye[np.arange(mm.n_rows), codes] = 1.0
            eye[src_mask] = 0.0
            values.append(eye)
            masks.append(np.repeat(src_mask[:, None], kind.n_levels, axis=1))
            kinds.extend([continuous()] * kind.n_levels)
            names.extend(f"{mm.column_names[j]}={lv}" for lv in kind.levels)
        else:
            values.append(mm.values[:, j:j + 1])
            masks.append(src_mask[:, None])
            kinds.append(kind)
            names.append(mm.column_names[j])
    return MaskedMatrix(np.hstack(values), np.hstack(masks), kinds, names)
