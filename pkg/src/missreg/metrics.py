"""Evaluation metrics and paired statistical tests.

Predictive power is reported as R^2 for regression and 2*AUC - 1 for binary
tasks, both normalized so results can be aggregated across datasets.  Method
comparisons use a one-sided paired t-test and a Wilcoxon signed-rank test
(normal approximation, zeros dropped, tie-corrected variance), testing
whether the first method scores higher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sstats

__all__ = ["r2", "auc_norm", "paired_tests", "PairedTestResult"]


def r2(y_true, y_pred) -> float:
    """1 - SS_res / SS_tot, with SS_tot centered at the test-set mean."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("constant y_true: R^2 undefined")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def _average_ranks(x: np.ndarray) -> np.ndarray:
    _, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg = ends - (counts - 1) / 2.0
    return avg[inv]


def auc_norm(y_true, scores) -> float:
    """Mann-Whitney AUC (ties count one half) rescaled to [-1, 1]."""
    y_true = np.asarray(y_true, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if y_true.shape != scores.shape:
        raise ValueError("length mismatch")
    pos = y_true == 1.0
    n1 = int(pos.sum())
    n0 = len(y_true) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("single-class y_true: AUC undefined")
    ranks = _average_ranks(scores)
    auc = (float(ranks[pos].sum()) - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    return 2.0 * auc - 1.0


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class PairedTestResult:
    t_stat: float
    t_p_one_sided: float
    wilcoxon_stat: float
    wilcoxon_p_one_sided: float
    wilcoxon_defined: bool
    n: int


def paired_tests(a, b) -> PairedTestResult:
    """One-sided paired tests of H1: mean/median of (a - b) > 0.

    The t statistic guards the zero-variance case (constant differences give
    p -> 0 or 1 by sign, p = 1/2 when identically zero).  The Wilcoxon
    signed-rank statistic is the positive-rank sum W+ with zeros dropped and
    the tie-corrected normal approximation; all-zero differences leave it
    undefined (flagged).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    n = len(a)
    if n < 5:
        raise ValueError("paired tests need at least 5 pairs")
    d = a - b

    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            t_stat, t_p = 0.0, 0.5
        else:
            t_stat = math.inf if mean > 0 else -math.inf
            t_p = 0.0 if mean > 0 else 1.0
    else:
        t_stat = mean / (sd / math.sqrt(n))
        t_p = float(_sstats.t.sf(t_stat, df=n - 1))

    nz = d[d != 0.0]
    if nz.size == 0:
        return PairedTestResult(t_stat, t_p, math.nan, math.nan, False, n)
    m = nz.size
    ranks = _average_ranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    mean_w = m * (m + 1) / 4.0
    _, counts = np.unique(np.abs(nz), return_counts=True)
    tie_corr = float(np.sum(counts ** 3 - counts)) / 48.0
    var_w = m * (m + 1) * (2 * m + 1) / 24.0 - tie_corr
    if var_w <= 0:
        return PairedTestResult(t_stat, t_p, w_plus, math.nan, False, n)
    z = (w_plus - mean_w) / math.sqrt(var_w)
    return PairedTestResult(t_stat, t_p, w_plus, _normal_sf(z), True, n)
