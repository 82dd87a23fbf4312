"""ElasticNet-penalized linear and logistic regression by cyclic coordinate
descent, with per-feature penalty factors.

Squared loss minimizes

    (1/2n) ||y - b0 - X beta||^2  +  lam * sum_j phi_j * (a |beta_j| + (1-a)/2 beta_j^2)

and logistic loss replaces the quadratic term with the mean negative
log-likelihood (solved by iteratively reweighted coordinate descent with
working responses).  Columns are standardized internally by default and
coefficients reported in original units.  A penalty factor of +inf pins a
coefficient to zero (used for expanded features that are never active).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "GlmSpec",
    "GlmFit",
    "fit_glm",
    "cv_path",
    "CvResult",
    "lambda_max",
    "default_lambda_grid",
    "scaled_penalty_factors",
    "kkt_violation",
]

_COV_MODE_LIMIT = 1500  # use P x P Gram updates below this width
_IRLS_MAX = 80
_WEIGHT_FLOOR = 1e-5


@dataclass(frozen=True)
class GlmSpec:
    loss: str = "squared"           # squared | logistic
    lam: float = 0.0
    mixing: float = 1.0             # a in [0, 1]; 1 = pure l1
    penalty_factors: tuple | None = None
    standardize: bool = True
    max_iter: int = 100_000         # coordinate sweeps
    tol: float = 1e-7
    intercept: bool = True

    def __post_init__(self):
        if self.loss not in ("squared", "logistic"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError("mixing must lie in [0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class GlmFit:
    beta: np.ndarray                # original units
    intercept: float
    objective_trace: np.ndarray
    converged: bool
    spec: GlmSpec

    def predict(self, X) -> np.ndarray:
        """Linear predictor b0 + X beta."""
        return np.asarray(X, dtype=float) @ self.beta + self.intercept

    def predict_response(self, X) -> np.ndarray:
        eta = self.predict(X)
        if self.spec.loss == "logistic":
            return 1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30)))
        return eta


def _soft(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


class _Prepared:
    """Standardized view of one (X, y) problem, reusable across a grid."""

    __slots__ = ("X", "y", "n", "P", "mu", "sd", "Xs", "yc", "ybar",
                 "v", "G", "c", "yy", "active0", "loss", "intercept",
                 "standardize")

    def __init__(self, X, y, spec: GlmSpec):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y row counts differ")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite values in X or y")
        self.loss = spec.loss
        self.intercept = spec.intercept
        self.standardize = spec.standardize
        self.X, self.y = X, y
        self.n, self.P = X.shape
        self.mu = X.mean(axis=0) if spec.intercept else np.zeros(self.P)
        Xc = X - self.mu
        sd = np.sqrt(np.mean(Xc * Xc, axis=0))
        self.sd = np.where((sd > 0) & spec.standardize, sd, 1.0)
        self.Xs = Xc / self.sd
        self.v = np.mean(self.Xs * self.Xs, axis=0)
        self.active0 = self.v > 0
        if spec.loss == "squared":
            self.ybar = y.mean() if spec.intercept else 0.0
            self.yc = y - self.ybar
            self.yy = float(np.mean(self.yc * self.yc))
            if self.P <= _COV_MODE_LIMIT:
                self.G = self.Xs.T @ self.Xs / self.n
                self.c = self.Xs.T @ self.yc / self.n
            else:
                self.G = None
                self.c = self.Xs.T @ self.yc / self.n
        else:
            self.ybar = 0.0
            self.yc = y
            self.yy = 0.0
            self.G = None
            self.c = None

    def unstandardize(self, beta_std: np.ndarray, b0_std: float):
        beta = beta_std / self.sd
        if self.intercept:
            if self.loss == "squared":
                b0 = self.ybar - float(beta @ self.mu)
            else:
                b0 = b0_std - float(beta @ self.mu)
        else:
            b0 = b0_std
        return beta, b0


def _penalty(beta, lam, a, phi):
    act = np.isfinite(phi)
    b = beta[act]
    f = phi[act]
    return lam * float(f @ (a * np.abs(b) + 0.5 * (1 - a) * b * b))


def _fit_squared(prep: _Prepared, lam, a, phi, spec, beta0=None, tol=None):
    n, P = prep.n, prep.P
    tol = spec.tol if tol is None else tol
    beta = np.zeros(P) if beta0 is None else beta0.copy()
    active = prep.active0 & np.isfinite(phi)
    beta[~active] = 0.0
    idx = np.nonzero(active)[0]
    phi_eff = np.where(np.isfinite(phi), phi, 0.0)  # pinned coords never read these
    thr = lam * a * phi_eff
    den = prep.v + lam * (1 - a) * phi_eff

    cov = prep.G is not None

    if a == 0.0 and lam > 0.0 and cov:
        # Pure ridge: the penalized normal equations are exact; no sweeps.
        beta = np.zeros(P)
        if idx.size:
            A = prep.G[np.ix_(idx, idx)].copy()
            A[np.diag_indices_from(A)] += lam * phi_eff[idx]
            beta[idx] = np.linalg.solve(A, prep.c[idx])
        u = prep.G @ beta
        sse = prep.yy - 2.0 * float(beta @ prep.c) + float(beta @ u)
        obj = 0.5 * max(sse, 0.0) + _penalty(beta, lam, a, phi)
        return beta, 0.0, np.asarray([obj]), True

    if cov:
        u = prep.G @ beta if beta.any() else np.zeros(P)
    else:
        r = prep.yc - prep.Xs @ beta if beta.any() else prep.yc.copy()

    def sweep(coords) -> float:
        nonlocal u, r
        max_change = 0.0
        for j in coords:
            bj = beta[j]
            if cov:
                rho = prep.c[j] - u[j] + prep.G[j, j] * bj
            else:
                rho = (prep.Xs[:, j] @ r) / n + prep.v[j] * bj
            new = _soft(rho, thr[j]) / den[j]
            if new != bj:
                d = new - bj
                beta[j] = new
                if cov:
                    u += prep.G[:, j] * d
                else:
                    r -= prep.Xs[:, j] * d
                if abs(d) > max_change:
                    max_change = abs(d)
        return max_change

    def objective() -> float:
        if cov:
            sse = prep.yy - 2.0 * float(beta @ prep.c) + float(beta @ u)
            obj = 0.5 * max(sse, 0.0)
        else:
            obj = 0.5 * float(r @ r) / n
        return obj + _penalty(beta, lam, a, phi)

    max_sweeps = max(10, spec.max_iter // max(P, 1))
    trace = []
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        max_change = sweep(idx)
        sweeps += 1
        trace.append(objective())
        if max_change < tol * max(1.0, np.max(np.abs(beta))):
            converged = True
            break
        # Iterate the current active set until stable, then re-scan all.
        act = idx[beta[idx] != 0.0]
        while act.size and sweeps < max_sweeps:
            mc = sweep(act)
            sweeps += 1
            trace.append(objective())
            if mc < tol * max(1.0, np.max(np.abs(beta))):
                break
    return beta, 0.0, np.asarray(trace), converged


def _logistic_objective(prep, beta, b0, lam, a, phi):
    eta = b0 + prep.Xs @ beta
    # log(1 + exp(eta)) - y * eta, computed stably
    nll = float(np.mean(np.logaddexp(0.0, eta) - prep.y * eta))
    return nll + _penalty(beta, lam, a, phi)


def _fit_logistic(prep: _Prepared, lam, a, phi, spec, beta0=None, b00=None,
                  tol=None):
    n, P = prep.n, prep.P
    tol = spec.tol if tol is None else tol
    beta = np.zeros(P) if beta0 is None else beta0.copy()
    active = prep.active0 & np.isfinite(phi)
    beta[~active] = 0.0
    idx = np.nonzero(active)[0]
    phi_eff = np.where(np.isfinite(phi), phi, 0.0)
    thr = lam * a * phi_eff
    y = prep.y
    if b00 is not None:
        b0 = b00
    elif spec.intercept:
        pbar = min(max(y.mean(), 1e-8), 1 - 1e-8)
        b0 = math.log(pbar / (1 - pbar))
    else:
        b0 = 0.0

    trace = [_logistic_objective(prep, beta, b0, lam, a, phi)]
    converged = False
    for _ in range(_IRLS_MAX):
        beta_prev, b0_prev = beta.copy(), b0
        eta = b0 + prep.Xs @ beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30)))
        w = np.maximum(p * (1 - p), _WEIGHT_FLOOR)
        z = eta + (y - p) / w
        r = z - eta
        wsum = float(w.sum())
        wx = prep.Xs * w[:, None]
        vw = np.einsum("ij,ij->j", wx, prep.Xs) / n
        den = vw + lam * (1 - a) * phi_eff
        for _sweep in range(30):
            max_change = 0.0
            for j in idx:
                bj = beta[j]
                rho = (wx[:, j] @ r) / n + vw[j] * bj
                new = _soft(rho, thr[j]) / den[j]
                if new != bj:
                    d = new - bj
                    beta[j] = new
                    r -= prep.Xs[:, j] * d
                    if abs(d) > max_change:
                        max_change = abs(d)
            if spec.intercept:
                d0 = float(w @ r) / wsum
                if d0 != 0.0:
                    b0 += d0
                    r -= d0
                    max_change = max(max_change, abs(d0))
            if max_change < tol * max(1.0, np.max(np.abs(beta))):
                break
        obj = _logistic_objective(prep, beta, b0, lam, a, phi)
        # Step-halve toward the previous iterate if the penalized NLL rose
        # (keeps the recorded trace monotone).
        halvings = 0
        while obj > trace[-1] + 1e-12 and halvings < 10:
            beta = 0.5 * (beta + beta_prev)
            b0 = 0.5 * (b0 + b0_prev)
            obj = _logistic_objective(prep, beta, b0, lam, a, phi)
            halvings += 1
        trace.append(obj)
        outer_change = max(np.max(np.abs(beta - beta_prev), initial=0.0),
                           abs(b0 - b0_prev))
        if outer_change < tol * max(1.0, np.max(np.abs(beta))):
            converged = True
            break
    return beta, b0, np.asarray(trace), converged


def _fit_std(prep, lam, a, phi, spec, warm=None, tol=None):
    beta0 = b00 = None
    if warm is not None:
        beta0, b00 = warm
    if spec.loss == "squared":
        return _fit_squared(prep, lam, a, phi, spec, beta0, tol=tol)
    return _fit_logistic(prep, lam, a, phi, spec, beta0, b00, tol=tol)


def _phi_for(spec: GlmSpec, P: int) -> np.ndarray:
    if spec.penalty_factors is None:
        return np.ones(P)
    phi = np.asarray(spec.penalty_factors, dtype=float)
    if phi.shape != (P,):
        raise ValueError(f"penalty_factors length {phi.shape} != {P} columns")
    if np.any(phi < 0):
        raise ValueError("penalty_factors must be nonnegative")
    return phi


def fit_glm(X, y, spec: GlmSpec) -> GlmFit:
    """Fit one ElasticNet GLM on a complete design matrix.

    Hitting max_iter returns the fit with ``converged=False`` rather than
    raising.
    """
    prep = _Prepared(X, y, spec)
    phi = _phi_for(spec, prep.P)
    beta_std, b0_std, trace, converged = _fit_std(prep, spec.lam, spec.mixing,
                                                  phi, spec)
    beta, b0 = prep.unstandardize(beta_std, b0_std)
    return GlmFit(beta=beta, intercept=b0, objective_trace=trace,
                  converged=converged, spec=spec)


def lambda_max(X, y, spec: GlmSpec, phi=None) -> float:
    """Smallest lam at which every penalized coefficient is zero (computed
    with the l1 share floored at 1e-3 so ridge grids stay finite)."""
    prep = _Prepared(X, y, spec)
    return _lambda_max_prepared(prep, spec, _phi_for(spec, prep.P)
                                if phi is None else np.asarray(phi, float))


def _lambda_max_prepared(prep: _Prepared, spec: GlmSpec, phi, a_eff=None) -> float:
    if a_eff is None:
        a_eff = max(spec.mixing, 1e-3)
    if spec.loss == "squared":
        grad = prep.c if prep.c is not None else prep.Xs.T @ prep.yc / prep.n
    else:
        ybar = prep.y.mean()
        grad = prep.Xs.T @ (prep.y - ybar) / prep.n
    ok = np.isfinite(phi) & (phi > 0) & prep.active0
    if not ok.any():
        return 1.0
    return float(np.max(np.abs(grad[ok]) / (a_eff * phi[ok])))


def default_lambda_grid(lmax: float, n_lambda: int = 30,
                        min_ratio: float = 1e-4) -> np.ndarray:
    """Log-spaced descending grid from lmax down to min_ratio * lmax."""
    if lmax <= 0:
        lmax = 1e-3
    return np.geomspace(lmax, lmax * min_ratio, n_lambda)


@dataclass
class CvResult:
    fit: GlmFit
    spec: GlmSpec
    lam: float
    mixing: float
    table: list = field(default_factory=list)  # (mixing, lam, mean val loss)


def _val_loss(fit_beta, fit_b0, Xv, yv, loss):
    eta = Xv @ fit_beta + fit_b0
    if loss == "squared":
        d = yv - eta
        return float(d @ d) / len(yv)
    return float(np.mean(np.logaddexp(0.0, eta) - yv * eta))


def cv_path(X, y, spec: GlmSpec, folds: int = 5, seed: int = 0,
            lambdas=None, alphas=None, phi=None) -> CvResult:
    """Grid search (lam, mixing) by k-fold cross-validation.

    Fold assignment is a seeded permutation split into contiguous chunks.
    The winner (ties resolved toward larger lam) is refit on the full data.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < folds:
        raise ValueError(f"n={n} smaller than folds={folds}")
    phi = _phi_for(replace(spec, penalty_factors=None), X.shape[1]) \
        if phi is None else np.asarray(phi, dtype=float)
    if alphas is None:
        alphas = (0.0, 0.5, 1.0)
    alphas = tuple(alphas)

    full_prep = _Prepared(X, y, spec)
    if lambdas is None:
        a_eff = max(max(alphas), 1e-3)
        lmax = _lambda_max_prepared(full_prep, spec, phi, a_eff=a_eff)
        lambdas = default_lambda_grid(lmax)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_ids = np.zeros(n, dtype=int)
    for f, chunk in enumerate(np.array_split(perm, folds)):
        fold_ids[chunk] = f

    losses = np.zeros((len(alphas), len(lambdas)))
    for f in range(folds):
        tr = fold_ids != f
        va = ~tr
        prep = _Prepared(X[tr], y[tr], spec)
        Xv, yv = X[va], y[va]
        for ai, a in enumerate(alphas):
            warm = None
            for li, lam in enumerate(lambdas):
                # Selection only needs the validation-loss ranking, so fold
                # fits run at a loose tolerance; the winner is refit tight.
                beta_std, b0_std, _, _ = _fit_std(prep, lam, a, phi, spec, warm,
                                                  tol=max(spec.tol, 1e-4))
                warm = (beta_std, b0_std)
                beta, b0 = prep.unstandardize(beta_std, b0_std)
                losses[ai, li] += _val_loss(beta, b0, Xv, yv, spec.loss)
    losses /= folds

    best_ai, best_li = 0, 0
    best = math.inf
    for ai in range(len(alphas)):
        for li in range(len(lambdas)):
            loss = losses[ai, li]
            better = loss < best
            tie_up = (loss == best and lambdas[li] > lambdas[best_li])
            if better or tie_up:
                best, best_ai, best_li = loss, ai, li

    table = [(alphas[ai], float(lambdas[li]), float(losses[ai, li]))
             for ai in range(len(alphas)) for li in range(len(lambdas))]

    # Refit on the full data, warm-starting down the path to the winner;
    # only the chosen point runs at the spec tolerance.
    warm = None
    a = alphas[best_ai]
    for li in range(best_li + 1):
        step_tol = None if li == best_li else max(spec.tol, 1e-4)
        beta_std, b0_std, trace, converged = _fit_std(
            full_prep, lambdas[li], a, phi, spec, warm, tol=step_tol)
        warm = (beta_std, b0_std)
    beta, b0 = full_prep.unstandardize(beta_std, b0_std)
    chosen = replace(spec, lam=float(lambdas[best_li]), mixing=float(a),
                     penalty_factors=tuple(phi))
    fit = GlmFit(beta=beta, intercept=b0, objective_trace=trace,
                 converged=converged, spec=chosen)
    return CvResult(fit=fit, spec=chosen, lam=float(lambdas[best_li]),
                    mixing=float(a), table=table)


def scaled_penalty_factors(mask, design) -> np.ndarray:
    """Penalty factors sqrt(n / n_k) from structural activity counts.

    ``design`` must expose ``activity_counts(mask) -> n_k`` per expanded
    column (rows where the column can be non-zero given the mask).  Features
    active on every row get factor 1; never-active features get +inf, which
    pins their coefficient to zero.
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[0]
    counts = np.asarray(design.activity_counts(mask), dtype=float)
    with np.errstate(divide="ignore"):
        phi = np.sqrt(np.where(counts > 0, n / np.maximum(counts, 1e-300), np.inf))
    phi[counts >= n] = 1.0
    return phi


def kkt_violation(fit: GlmFit, X, y) -> float:
    """Max stationarity violation of a fit, measured on the standardized
    problem the solver optimized."""
    spec = fit.spec
    prep = _Prepared(X, y, spec)
    phi = _phi_for(spec, prep.P)
    beta_std = fit.beta * prep.sd
    if spec.loss == "squared":
        r = prep.yc - prep.Xs @ beta_std
        grad = -prep.Xs.T @ r / prep.n
    else:
        eta = fit.intercept + np.asarray(X, float) @ fit.beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30)))
        grad = prep.Xs.T @ (p - prep.y) / prep.n
    lam, a = spec.lam, spec.mixing
    worst = 0.0
    for j in range(prep.P):
        if not (np.isfinite(phi[j]) and prep.active0[j]):
            continue
        g = grad[j] + lam * (1 - a) * phi[j] * beta_std[j]
        if beta_std[j] == 0.0:
            worst = max(worst, abs(g) - lam * a * phi[j])
        else:
            worst = max(worst, abs(g + lam * a * phi[j] * np.sign(beta_std[j])))
    return max(worst, 0.0)
