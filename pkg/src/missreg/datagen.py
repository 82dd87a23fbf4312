"""Synthetic and semi-synthetic data generation.

Synthetic: rows drawn from a zero-mean Gaussian with low-rank-plus-jitter
covariance, a linear or small-ReLU-network signal on a sparse support with
noise calibrated to a target signal-to-noise ratio, and MCAR or per-column
censoring missingness.

Semi-synthetic: a real (completed) design matrix and its observed mask keep
their joint structure, while the signal is synthetic; the mask can feed the
signal directly (NMAR) or be adversarially reassigned across rows (AM).

Signal kinds are linear and nn (the two with defined generators); there is
no tree-signal generator.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .assignment import max_score_assignment
from .data import MaskedMatrix, TargetVector

__all__ = [
    "SyntheticConfig",
    "SemiSynConfig",
    "SignalModel",
    "SyntheticDataset",
    "ReassignResult",
    "gen_gaussian",
    "make_signal",
    "signal_values",
    "calibrate_noise",
    "gen_signal",
    "apply_mcar",
    "apply_censoring",
    "semisyn_signal",
    "adversarial_reassign",
    "generate",
]

EXACT_ASSIGNMENT_LIMIT = 2000


@dataclass(frozen=True)
class SyntheticConfig:
    d: int = 10
    r: int = 5
    eps: float = 0.1
    k: int = 5
    snr: float = 2.0
    n_train: int = 1000
    n_test: int = 5000
    p_missing: float = 0.3
    signal_kind: str = "linear"
    mechanism: str = "mcar"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p_missing < 1.0:
            raise ValueError("p_missing must lie in (0, 1)")
        if self.r > self.d or self.r < 0:
            raise ValueError("covariance rank r must lie in [0, d]")
        if not 1 <= self.k <= self.d:
            raise ValueError("signal support size k must lie in [1, d]")
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.signal_kind not in ("linear", "nn"):
            raise ValueError(f"unknown signal kind {self.signal_kind!r}")
        if self.mechanism not in ("mcar", "censoring"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")


@dataclass(frozen=True)
class SemiSynConfig:
    k_missing: int = 0
    mechanism: str = "mar"
    signal_kind: str = "linear"
    snr: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.k_missing < 0:
            raise ValueError("k_missing must be nonnegative")
        if self.mechanism not in ("mar", "nmar", "am"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.signal_kind not in ("linear", "nn"):
            raise ValueError(f"unknown signal kind {self.signal_kind!r}")


N_HIDDEN = 10


@dataclass(frozen=True)
class SignalModel:
    """A fixed signal f plus calibrated noise level.

    ``support`` indexes the covariate columns feeding f; ``mask_support``
    (semi-synthetic NMAR only) lists mask bits appended as extra inputs.
    ``noise_sd`` is None until calibrated against a sample.
    """

    kind: str
    support: tuple[int, ...]
    mask_support: tuple[int, ...] = ()
    intercept: float = 0.0
    weights: tuple[float, ...] = ()           # linear: one per input
    hidden_w: tuple[tuple[float, ...], ...] = ()   # nn: N_HIDDEN x n_inputs
    hidden_b: tuple[float, ...] = ()
    output_w: tuple[float, ...] = ()
    noise_sd: float | None = None

    @property
    def n_inputs(self) -> int:
        return len(self.support) + len(self.mask_support)


def make_signal(kind: str, support, rng, mask_support=()) -> SignalModel:
    """Draw random signal parameters: linear weights uniform on [-1, 1] with a
    standard-normal intercept, or a 2-layer ReLU net with N_HIDDEN units
    (Gaussian weights, uniform hidden intercepts)."""
    support = tuple(int(j) for j in support)
    mask_support = tuple(int(j) for j in mask_support)
    n_in = len(support) + len(mask_support)
    if kind == "linear":
        return SignalModel(
            kind="linear",
            support=support,
            mask_support=mask_support,
            intercept=float(rng.normal()),
            weights=tuple(rng.uniform(-1.0, 1.0, size=n_in)),
        )
    if kind == "nn":
        hidden_w = tuple(tuple(row) for row in rng.normal(size=(N_HIDDEN, n_in)))
        hidden_b = tuple(rng.uniform(-1.0, 1.0, size=N_HIDDEN))
        output_w = tuple(rng.normal(size=N_HIDDEN))
        return SignalModel(
            kind="nn",
            support=support,
            mask_support=mask_support,
            hidden_w=hidden_w,
            hidden_b=hidden_b,
            output_w=output_w,
        )
    raise ValueError(f"unknown signal kind {kind!r}")


def signal_values(model: SignalModel, X, M=None) -> np.ndarray:
    """Evaluate f row-wise.  Depends only on the support coordinates of X
    (and, for NMAR models, on the listed mask bits)."""
    X = np.asarray(X, dtype=float)
    if max(model.support, default=-1) >= X.shape[1]:
        raise ValueError("signal support index out of range")
    inputs = X[:, model.support]
    if model.mask_support:
        if M is None:
            raise ValueError("model consumes mask bits but no mask was given")
        M = np.asarray(M, dtype=float)
        inputs = np.hstack([inputs, M[:, model.mask_support]])
    if model.kind == "linear":
        w = np.asarray(model.weights)
        return model.intercept + inputs @ w
    hidden = inputs @ np.asarray(model.hidden_w).T + np.asarray(model.hidden_b)
    return np.maximum(hidden, 0.0) @ np.asarray(model.output_w)


def calibrate_noise(model: SignalModel, X, snr: float, M=None) -> SignalModel:
    """Set noise_sd so that Var[f]/Var[noise] equals ``snr`` on this sample."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    f = signal_values(model, X, M)
    sd = 0.0 if math.isinf(snr) else math.sqrt(float(np.var(f)) / snr)
    return replace(model, noise_sd=sd)


def gen_signal(X, model: SignalModel, rng, M=None) -> TargetVector:
    """y = f(x_support) + eps with eps ~ N(0, noise_sd^2)."""
    if model.noise_sd is None:
        raise ValueError("signal model not calibrated: noise_sd is unset")
    f = signal_values(model, X, M)
    if model.noise_sd > 0:
        f = f + rng.normal(scale=model.noise_sd, size=f.shape)
    return TargetVector(f, "regression")


def _as_values(X) -> np.ndarray:
    if isinstance(X, MaskedMatrix):
        if X.mask.any():
            raise ValueError("expected a fully observed matrix")
        return X.values
    return np.asarray(X, dtype=float)


def gen_gaussian(config: SyntheticConfig, rng=None, n=None) -> MaskedMatrix:
    """Draw n i.i.d. rows from N(0, B B^T + eps I) with B a d x r standard
    Gaussian matrix.  Covariance is positive definite by construction."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.n_train if n is None else int(n)
    B = rng.normal(size=(config.d, config.r))
    X = rng.normal(size=(n, config.r)) @ B.T
    X = X + math.sqrt(config.eps) * rng.normal(size=(n, config.d))
    return MaskedMatrix(X, np.zeros_like(X, dtype=bool))


def apply_mcar(X, p: float, seed) -> MaskedMatrix:
    """Mask each cell independently with probability p."""
    values = _as_values(X)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = rng.random(values.shape) < p
    kinds = X.column_kinds if isinstance(X, MaskedMatrix) else None
    names = X.column_names if isinstance(X, MaskedMatrix) else None
    return MaskedMatrix(values, mask, kinds, names)


def censoring_thresholds(values: np.ndarray, p: float) -> np.ndarray:
    """Per-column empirical (1-p)-quantile: the order statistic at 1-based
    index ceil((1-p) * n).  Cells strictly above it get masked."""
    n = values.shape[0]
    k = max(1, math.ceil((1.0 - p) * n))
    return np.sort(values, axis=0)[k - 1, :]


def apply_censoring(X, p: float) -> MaskedMatrix:
    """Mask, per column, exactly the cells above that column's empirical
    (1-p)-quantile.  Deterministic in X; no seed involved."""
    values = _as_values(X)
    thr = censoring_thresholds(values, p)
    mask = values > thr
    kinds = X.column_kinds if isinstance(X, MaskedMatrix) else None
    names = X.column_names if isinstance(X, MaskedMatrix) else None
    return MaskedMatrix(values, mask, kinds, names)


def semisyn_signal(X_full, M, config: SemiSynConfig, rng=None):
    """Synthetic signal over a real (completed) design matrix.

    Picks k = min(10, d) signal features: ``k_missing`` of them from columns
    affected by missingness, the rest from never-missing columns.  Under
    ``nmar`` the chosen maskable columns' mask bits are appended as direct
    inputs to f; under ``mar``/``am`` the signal sees X only.

    Returns (TargetVector, SignalModel).  The AM row reassignment is a
    separate step (:func:`adversarial_reassign`).
    """
    X_full = _as_values(X_full)
    M = np.asarray(M, dtype=bool)
    if X_full.shape != M.shape:
        raise ValueError("X_full and M shapes differ")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d = X_full.shape[1]
    k = min(10, d)
    if config.k_missing > k:
        raise ValueError(f"k_missing={config.k_missing} exceeds k={k}")
    maskable = np.nonzero(M.any(axis=0))[0]
    never = np.nonzero(~M.any(axis=0))[0]
    if config.k_missing > maskable.size:
        raise ValueError(
            f"k_missing={config.k_missing} exceeds the {maskable.size} "
            f"columns affected by missingness"
        )
    k_obs = k - config.k_missing
    if k_obs > never.size:
        raise ValueError(
            f"need {k_obs} never-missing signal columns but only "
            f"{never.size} are available"
        )
    chosen_miss = np.sort(rng.choice(maskable, size=config.k_missing, replace=False))
    chosen_obs = np.sort(rng.choice(never, size=k_obs, replace=False))
    support = tuple(np.sort(np.concatenate([chosen_miss, chosen_obs])).astype(int))
    mask_support = tuple(int(j) for j in chosen_miss) if config.mechanism == "nmar" else ()

    model = make_signal(config.signal_kind, support, rng, mask_support=mask_support)
    model = calibrate_noise(model, X_full, config.snr, M=M)
    y = gen_signal(X_full, model, rng, M=M)
    return y, model


@dataclass(frozen=True)
class ReassignResult:
    mask: np.ndarray
    y: TargetVector
    perm: np.ndarray
    objective: float
    mode: str  # "exact" | "greedy"


def _reassign_objective(X_full, M, perm) -> float:
    return float(np.einsum("ij,ij->", X_full, M[perm].astype(float)))


def adversarial_reassign(X_full, M, y, exact_limit: int = EXACT_ASSIGNMENT_LIMIT) -> ReassignResult:
    """Permute (mask, y) rows to maximize the total sum of masked values,
    sum_i x_full_i . m_{perm(i)}.

    Exact optimal assignment up to ``exact_limit`` rows, greedy beyond
    (mode recorded in the result).  When the permutation cannot improve on
    the identity (e.g. all masks equal), the identity is returned.
    """
    X_full = _as_values(X_full)
    M = np.asarray(M, dtype=bool)
    yv = y if isinstance(y, TargetVector) else TargetVector(np.asarray(y, dtype=float))
    n = X_full.shape[0]
    score = X_full @ M.astype(float).T  # score[i, j] = x_i . m_j

    if n <= exact_limit:
        perm = max_score_assignment(score)
        mode = "exact"
    else:
        perm = np.full(n, -1, dtype=int)
        taken = np.zeros(n, dtype=bool)
        order = np.argsort(-score.max(axis=1), kind="stable")
        for i in order:
            row = np.where(taken, -np.inf, score[i])
            j = int(np.argmax(row))
            perm[i] = j
            taken[j] = True
        mode = "greedy"

    best = _reassign_objective(X_full, M, perm)
    identity = np.arange(n)
    if _reassign_objective(X_full, M, identity) >= best:
        perm = identity
    return ReassignResult(
        mask=M[perm].copy(),
        y=yv.take(perm),
        perm=perm,
        objective=_reassign_objective(X_full, M, perm),
        mode=mode,
    )


@dataclass(frozen=True)
class SyntheticDataset:
    train: tuple[MaskedMatrix, TargetVector]
    test: tuple[MaskedMatrix, TargetVector]
    x_full_train: np.ndarray
    x_full_test: np.ndarray
    model: SignalModel
    config: SyntheticConfig

    def manifest(self) -> dict:
        return {
            "config": asdict(self.config),
            "sigma2": None if self.model.noise_sd is None else self.model.noise_sd ** 2,
            "support": list(self.model.support),
            "mask_support": list(self.model.mask_support),
        }


def generate(config: SyntheticConfig) -> SyntheticDataset:
    """Generate a train/test pair from one synthetic process.

    The covariance factor and signal parameters are shared; train and test
    rows, noise, and MCAR masks come from independent seed streams.  Noise
    is calibrated once, on the training sample.
    """
    ss = np.random.SeedSequence(config.seed)
    s_param, s_trx, s_trn, s_trm, s_tex, s_ten, s_tem = ss.spawn(7)

    prng = np.random.default_rng(s_param)
    B = prng.normal(size=(config.d, config.r))
    support = np.sort(prng.choice(config.d, size=config.k, replace=False))
    model = make_signal(config.signal_kind, support, prng)

    def draw_x(stream, n):
        rng = np.random.default_rng(stream)
        X = rng.normal(size=(n, config.r)) @ B.T
        return X + math.sqrt(config.eps) * rng.normal(size=(n, config.d))

    x_train = draw_x(s_trx, config.n_train)
    x_test = draw_x(s_tex, config.n_test)
    model = calibrate_noise(model, x_train, config.snr)
    y_train = gen_signal(x_train, model, np.random.default_rng(s_trn))
    y_test = gen_signal(x_test, model, np.random.default_rng(s_ten))

    if config.mechanism == "mcar":
        mm_train = apply_mcar(x_train, config.p_missing, np.random.default_rng(s_trm))
        mm_test = apply_mcar(x_test, config.p_missing, np.random.default_rng(s_tem))
    else:
        mm_train = apply_censoring(x_train, config.p_missing)
        mm_test = apply_censoring(x_test, config.p_missing)

    return SyntheticDataset(
        train=(mm_train, y_train),
        test=(mm_test, y_test),
        x_full_train=x_train,
        x_full_test=x_test,
        model=model,
        config=config,
    )
