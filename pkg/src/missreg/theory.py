"""Numerical oracles for the asymptotic theory of impute-then-regress.

Everything here works on finite joint distributions over (X, M, Y) by exact
enumeration: the Bayes risk of predicting from the observed coordinates and
the mask, the asymptotic prediction rule induced by deterministic
mu-imputation (a two-population mixture weighted by the posterior
probability alpha that the coordinate was missing), and the sign condition
deciding whether a non-MAR mechanism beats its MAR twin of equal missingness
rate.  The censored-linear Bayes risks for a continuous feature use adaptive
quadrature instead of sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtri

__all__ = [
    "Atom",
    "DiscreteJoint",
    "AlphaReport",
    "NmarReport",
    "alpha",
    "bayes_rule",
    "bayes_risk",
    "risk_of_rule",
    "asymptotic_impute_rule",
    "impute_then_predict_rule",
    "nmar_condition",
    "mar_twin",
    "censored_linear_risks",
    "example1_nmar",
    "example1_mar",
    "example2_nmar",
    "example2_mar",
    "random_joint",
    "random_signal_joint",
    "imputed_cell_alphas",
]

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class Atom:
    x: tuple
    m: tuple
    y: float
    p: float


class DiscreteJoint:
    """Finite joint distribution over (X, M, Y), stored as weighted atoms."""

    def __init__(self, atoms):
        atoms = [Atom(tuple(float(v) for v in a.x),
                      tuple(bool(b) for b in a.m),
                      float(a.y), float(a.p))
                 if not isinstance(a, Atom) else a
                 for a in atoms]
        if not atoms:
            raise ValueError("empty joint")
        d = len(atoms[0].x)
        for a in atoms:
            if len(a.x) != d or len(a.m) != d:
                raise ValueError("inconsistent dimensions across atoms")
            if a.p < 0:
                raise ValueError("negative probability")
        total = sum(a.p for a in atoms)
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, not 1")
        self.atoms = tuple(atoms)
        self.d = d

    def first_coordinate_only(self) -> bool:
        return all(not any(a.m[1:]) for a in self.atoms)

    def p_m1(self) -> float:
        return sum(a.p for a in self.atoms if a.m[0])


def _cond_means(pairs):
    """pairs: iterable of (key, p, y) -> dict key -> E[Y | key]."""
    num: dict = {}
    den: dict = {}
    for key, p, y in pairs:
        num[key] = num.get(key, 0.0) + p * y
        den[key] = den.get(key, 0.0) + p
    return {k: num[k] / den[k] for k in num if den[k] > 0}


def _obs_key(a: Atom):
    return (a.m, tuple(v for v, miss in zip(a.x, a.m) if not miss))


def bayes_rule(joint: DiscreteJoint) -> dict:
    """E[Y | observed coordinates, M] per positive-probability observation."""
    return _cond_means((_obs_key(a), a.p, a.y) for a in joint.atoms)


def bayes_risk(joint: DiscreteJoint) -> float:
    """Mean squared error of the optimal predictor, by exact enumeration.

    Zero-probability atoms have no conditional-mean cell; they also
    contribute nothing, so they default to 0.
    """
    rule = bayes_rule(joint)
    return sum(a.p * (a.y - rule.get(_obs_key(a), 0.0)) ** 2
               for a in joint.atoms)


def risk_of_rule(joint: DiscreteJoint, rule: dict, default: float = 0.0) -> float:
    """Risk of an arbitrary predictor table over observation cells."""
    return sum(a.p * (a.y - rule.get(_obs_key(a), default)) ** 2
               for a in joint.atoms)


def alpha(eta: float, p_mu: float) -> float:
    """Posterior probability the coordinate was missing, given it equals the
    imputed value after imputation."""
    if eta < 0 or p_mu < 0:
        raise ValueError("probabilities must be nonnegative")
    if eta + p_mu == 0:
        raise ValueError("alpha undefined: both eta and p_mu are zero")
    return eta / (eta + p_mu)


@dataclass(frozen=True)
class AlphaReport:
    eta: float
    p_mu: float

    @property
    def alpha(self) -> float:
        return alpha(self.eta, self.p_mu)


def _check_thm1_setting(joint: DiscreteJoint):
    if not joint.first_coordinate_only():
        raise ValueError("imputation analysis assumes only the first "
                         "coordinate can be missing")


def asymptotic_impute_rule(joint: DiscreteJoint, mu_fn) -> dict:
    """The infinite-data prediction rule learned after mu-imputing the first
    coordinate.

    ``mu_fn`` maps the remaining covariates x_{2:d} (tuple) to the imputed
    value.  Returns a dict with per-cell predictions on the imputed data
    space, keyed by (x_rest, x1_imputed); the cell at the imputed value is
    the alpha-weighted mixture of the missing and colliding populations.
    Cells whose conditioning event has probability zero are omitted.
    """
    _check_thm1_setting(joint)
    by_rest: dict = {}
    for a in joint.atoms:
        by_rest.setdefault(a.x[1:], []).append(a)

    cells: dict = {}
    for rest, atoms in by_rest.items():
        mu = float(mu_fn(rest))
        p_rest = sum(a.p for a in atoms)
        eta_w = sum(a.p for a in atoms if a.m[0])
        pmu_w = sum(a.p for a in atoms if not a.m[0] and a.x[0] == mu)
        # Observed values distinct from the imputed one keep their own cell.
        obs = _cond_means(((a.x[0],), a.p, a.y) for a in atoms
                          if not a.m[0] and a.x[0] != mu)
        for (x1,), val in obs.items():
            cells[(rest, x1)] = val
        if eta_w + pmu_w > 0:
            aa = alpha(eta_w / p_rest, pmu_w / p_rest)
            e_miss = (sum(a.p * a.y for a in atoms if a.m[0]) / eta_w
                      if eta_w > 0 else 0.0)
            e_coll = (sum(a.p * a.y for a in atoms if not a.m[0] and a.x[0] == mu)
                      / pmu_w if pmu_w > 0 else 0.0)
            cells[(rest, mu)] = aa * e_miss + (1 - aa) * e_coll
    return cells


def impute_then_predict_rule(joint: DiscreteJoint, mu_fn) -> dict:
    """The impute-then-predict rule mapped back to observation space: a new
    observation is imputed if needed, then scored by the asymptotic rule."""
    _check_thm1_setting(joint)
    cells = asymptotic_impute_rule(joint, mu_fn)
    rule: dict = {}
    for a in joint.atoms:
        key = _obs_key(a)
        if key in rule:
            continue
        rest = a.x[1:]
        x1 = float(mu_fn(rest)) if a.m[0] else a.x[0]
        rule[key] = cells[(rest, x1)]
    return rule


def imputed_cell_alphas(joint: DiscreteJoint, mu_fn) -> dict:
    """alpha per x_rest cell where imputation actually occurs (eta > 0)."""
    _check_thm1_setting(joint)
    by_rest: dict = {}
    for a in joint.atoms:
        by_rest.setdefault(a.x[1:], []).append(a)
    out = {}
    for rest, atoms in by_rest.items():
        mu = float(mu_fn(rest))
        eta_w = sum(a.p for a in atoms if a.m[0])
        if eta_w == 0:
            continue
        pmu_w = sum(a.p for a in atoms if not a.m[0] and a.x[0] == mu)
        p_rest = sum(a.p for a in atoms)
        out[rest] = alpha(eta_w / p_rest, pmu_w / p_rest)
    return out


# ---------------------------------------------------------------------------
# NMAR-vs-MAR comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NmarReport:
    psi0_xx: float
    psi1_rr: float
    psi0_rx: float
    psi1_xr: float
    lhs: float
    nmar_no_worse: bool
    risk_nmar: float
    risk_mar: float


def nmar_condition(joint: DiscreteJoint, joint_mar: DiscreteJoint) -> NmarReport:
    """Evaluate the exact condition deciding whether the (possibly NMAR)
    mechanism of ``joint`` yields a Bayes risk no larger than the MAR
    mechanism of ``joint_mar`` at equal missingness rate.

    The psi terms are computed under ``joint``; the combination
    (1-p)^2 psi0(X,X) + p^2 psi1(Xr,Xr) + p(1-p) psi0(Xr,X)
    - p(1-p) psi1(X,Xr) equals R' - R exactly, so its sign is the decision.
    """
    _check_thm1_setting(joint)
    _check_thm1_setting(joint_mar)
    p = joint.p_m1()
    p2 = joint_mar.p_m1()
    if abs(p - p2) > 1e-9:
        raise ValueError(f"mismatched missingness rates: {p} vs {p2}")

    e_x = _cond_means((a.x, a.p, a.y) for a in joint.atoms)
    e_r = _cond_means((a.x[1:], a.p, a.y) for a in joint.atoms)
    e_xm = _cond_means(((a.x, a.m[0]), a.p, a.y) for a in joint.atoms)
    e_rm = _cond_means(((a.x[1:], a.m[0]), a.p, a.y) for a in joint.atoms)

    def psi(cond_m: bool, outer, inner) -> float:
        tot = sum(a.p for a in joint.atoms if a.m[0] == cond_m)
        if tot == 0:
            return 0.0
        s = 0.0
        for a in joint.atoms:
            if a.m[0] != cond_m:
                continue
            s += a.p * (outer(a) - inner(a)) ** 2
        return s / tot

    psi0_xx = psi(False, lambda a: e_x[a.x], lambda a: e_xm[(a.x, False)])
    psi1_rr = psi(True, lambda a: e_r[a.x[1:]], lambda a: e_rm[(a.x[1:], True)])
    psi0_rx = psi(False, lambda a: e_r[a.x[1:]], lambda a: e_xm[(a.x, False)])
    psi1_xr = psi(True, lambda a: e_x[a.x], lambda a: e_rm[(a.x[1:], True)])

    lhs = ((1 - p) ** 2 * psi0_xx + p ** 2 * psi1_rr
           + p * (1 - p) * psi0_rx - p * (1 - p) * psi1_xr)
    return NmarReport(
        psi0_xx=psi0_xx, psi1_rr=psi1_rr, psi0_rx=psi0_rx, psi1_xr=psi1_xr,
        lhs=lhs, nmar_no_worse=lhs >= 0,
        risk_nmar=bayes_risk(joint), risk_mar=bayes_risk(joint_mar),
    )


def mar_twin(joint: DiscreteJoint) -> DiscreteJoint:
    """Same (X, Y) marginal, mask replaced by an independent Bernoulli with
    the same missingness rate."""
    p = joint.p_m1()
    marg: dict = {}
    for a in joint.atoms:
        key = (a.x, a.y)
        marg[key] = marg.get(key, 0.0) + a.p
    atoms = []
    rest_mask = (False,) * (joint.d - 1)
    for (x, y), q in marg.items():
        if q == 0:
            continue
        if p > 0:
            atoms.append(Atom(x, (True,) + rest_mask, y, q * p))
        if p < 1:
            atoms.append(Atom(x, (False,) + rest_mask, y, q * (1 - p)))
    return DiscreteJoint(atoms)


# ---------------------------------------------------------------------------
# Censored-linear closed-form risks (by quadrature)
# ---------------------------------------------------------------------------

def _normal_pdf(x, mean, sd):
    z = (x - mean) / sd
    return math.exp(-0.5 * z * z) / (sd * math.sqrt(2 * math.pi))

def censored_linear_risks(w_star: float, sigma2: float, p: float, law=("normal", 0.0, 1.0)):
    """Bayes mean squared errors of the one-feature linear model Y = w* X1 + eps
    under censoring of the top p-fraction vs MCAR at the same rate:

        censored risk = sigma^2 + p w*^2 Var[X1 | X1 >= q_{1-p}]
        mcar risk     = sigma^2 + p w*^2 Var[X1]

    Truncated moments come from adaptive quadrature (normal law) or exact
    sums (finite-discrete law).
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if law[0] == "normal":
        _, mean, sd = law
        q = mean + sd * float(ndtri(1.0 - p))
        hi = mean + 12.0 * sd
        tail, _ = integrate.quad(lambda t: _normal_pdf(t, mean, sd), q, hi,
                                 epsabs=1e-9, limit=200)
        m1, _ = integrate.quad(lambda t: t * _normal_pdf(t, mean, sd), q, hi,
                               epsabs=1e-9, limit=200)
        m2, _ = integrate.quad(lambda t: t * t * _normal_pdf(t, mean, sd), q, hi,
                               epsabs=1e-9, limit=200)
        mu_t = m1 / tail
        var_trunc = m2 / tail - mu_t ** 2
        var_full = sd ** 2
    elif law[0] == "discrete":
        _, values, probs = law
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        order = np.argsort(values)
        values, probs = values[order], probs[order]
        cdf = np.cumsum(probs)
        q = values[np.searchsorted(cdf, 1.0 - p - 1e-12)]
        tail = values >= q
        w = probs[tail] / probs[tail].sum()
        mu_t = float(w @ values[tail])
        var_trunc = float(w @ (values[tail] - mu_t) ** 2)
        mu_full = float(probs @ values)
        var_full = float(probs @ (values - mu_full) ** 2)
    else:
        raise ValueError(f"unsupported law {law[0]!r}")

    risk_censored = sigma2 + p * w_star ** 2 * var_trunc
    risk_mcar = sigma2 + p * w_star ** 2 * var_full
    return risk_censored, risk_mcar


# ---------------------------------------------------------------------------
# Worked examples and the random-joint generator
# ---------------------------------------------------------------------------

def example1_nmar() -> DiscreteJoint:
    """One Bernoulli(1/2) feature, Y = X1, mask equal to the value itself."""
    return DiscreteJoint([
        Atom((0.0,), (False,), 0.0, 0.5),
        Atom((1.0,), (True,), 1.0, 0.5),
    ])


def example1_mar() -> DiscreteJoint:
    """Same marginal, mask an independent Bernoulli(1/2)."""
    return DiscreteJoint([
        Atom((x,), (m,), x, 0.25)
        for x in (0.0, 1.0) for m in (False, True)
    ])


def example2_nmar() -> DiscreteJoint:
    """Two features: X1 copies X2 when U=0 and an independent coin V when
    U=1; Y = X1 and the mask is U."""
    atoms = []
    for x2 in (0.0, 1.0):
        for u in (0, 1):
            for v in (0.0, 1.0):
                x1 = x2 if u == 0 else v
                atoms.append(Atom((x1, x2), (bool(u), False), x1, 0.125))
    return DiscreteJoint(atoms)


def example2_mar() -> DiscreteJoint:
    """Same (X, Y) law, mask an independent Bernoulli(1/2)."""
    return mar_twin(example2_nmar())


def random_joint(rng, d: int = 2, concentration: float = 1.0) -> DiscreteJoint:
    """Random small joint for property tests: binary X in {0,1}^d, binary
    mask on the first coordinate, binary Y, atom probabilities from a
    symmetric Dirichlet."""
    combos = []
    for bits in range(2 ** d):
        x = tuple(float((bits >> j) & 1) for j in range(d))
        for m1 in (False, True):
            for y in (0.0, 1.0):
                combos.append((x, (m1,) + (False,) * (d - 1), y))
    probs = rng.dirichlet(np.full(len(combos), concentration))
    return DiscreteJoint([Atom(x, m, y, p)
                          for (x, m, y), p in zip(combos, probs)])


def random_signal_joint(rng, d: int = 2, concentration: float = 1.0) -> DiscreteJoint:
    """Random 16-atom joint whose outcome law depends on the mask only
    through the covariates: P(Y | X, M) = P(Y | X).

    This is the regime of the NMAR-vs-MAR risk comparison (outcome noise
    independent of the mechanism, as in a signal-plus-noise model); there
    the psi combination equals R_mar - R_nmar exactly.  Joints with
    mask-dependent outcome noise can break that identity, so the sign
    property is stated over this generator.
    """
    xs = [tuple(float((bits >> j) & 1) for j in range(d))
          for bits in range(2 ** d)]
    pxm = rng.dirichlet(np.full(len(xs) * 2, concentration)).reshape(len(xs), 2)
    py1 = rng.random(len(xs))
    atoms = []
    for i, x in enumerate(xs):
        for mi, m1 in enumerate((False, True)):
            m = (m1,) + (False,) * (d - 1)
            for y in (0.0, 1.0):
                p = pxm[i, mi] * (py1[i] if y == 1.0 else 1.0 - py1[i])
                atoms.append(Atom(x, m, y, p))
    return DiscreteJoint(atoms)
