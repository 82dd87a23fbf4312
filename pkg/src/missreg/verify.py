"""Self-contained pass/fail checks behind the `verify-theory` CLI command:
the worked examples' exact Bayes risks, the NMAR-vs-MAR sign condition on
random joints, the de-imputability criterion for mu-imputation, and the
censored-linear risk ordering."""

from __future__ import annotations

import numpy as np

from .theory import (bayes_risk, bayes_rule, censored_linear_risks,
                     example1_mar, example1_nmar, example2_mar, example2_nmar,
                     impute_then_predict_rule, imputed_cell_alphas, mar_twin,
                     nmar_condition, random_joint, random_signal_joint)

__all__ = ["run_checks", "corollary_case"]


def corollary_case(joint, mu_fn, tol: float = 1e-10):
    """Returns (rule matches Bayes cellwise, every imputed cell has alpha=1)."""
    rule = impute_then_predict_rule(joint, mu_fn)
    bayes = bayes_rule(joint)
    matches = all(abs(rule[k] - bayes[k]) <= tol for k in bayes)
    alphas = imputed_cell_alphas(joint, mu_fn)
    all_one = all(abs(a - 1.0) <= 1e-12 for a in alphas.values())
    return matches, all_one


def run_checks(n_random: int = 200, n_corollary: int = 100, seed: int = 20240901):
    """Returns a list of (name, passed, detail)."""
    checks = []

    r = bayes_risk(example1_nmar())
    rp = bayes_risk(example1_mar())
    checks.append(("example1-risks", abs(r) <= 1e-12 and abs(rp - 0.125) <= 1e-12,
                   f"R={r:.3g} R'={rp:.6g} (expect 0 and 1/8)"))

    r2_ = bayes_risk(example2_nmar())
    rp2 = bayes_risk(example2_mar())
    checks.append(("example2-risks",
                   abs(r2_ - 0.125) <= 1e-12 and abs(rp2 - 0.09375) <= 1e-12,
                   f"R={r2_:.6g} R'={rp2:.6g} (expect 1/8 and 3/32)"))

    rep1 = nmar_condition(example1_nmar(), example1_mar())
    rep2 = nmar_condition(example2_nmar(), example2_mar())
    ok_ex = (rep1.lhs >= 0 and rep1.risk_nmar <= rep1.risk_mar
             and rep2.lhs < 0 and rep2.risk_nmar > rep2.risk_mar)
    checks.append(("nmar-condition-examples", ok_ex,
                   f"lhs1={rep1.lhs:.4g} lhs2={rep2.lhs:.4g}"))

    rng = np.random.default_rng(seed)
    fails = 0
    worst = 0.0
    for _ in range(n_random):
        j = random_signal_joint(rng)
        rep = nmar_condition(j, mar_twin(j))
        gap = rep.risk_mar - rep.risk_nmar
        worst = max(worst, abs(rep.lhs - gap))
        if (rep.lhs >= 0) != (gap >= -1e-12):
            fails += 1
    checks.append((f"nmar-sign-{n_random}-random-joints", fails == 0,
                   f"{fails} sign mismatches, max |lhs-(R'-R)|={worst:.2e}"))

    rng = np.random.default_rng(seed + 1)
    bad = 0
    for i in range(n_corollary):
        j = random_joint(rng)
        mu = 2.0 if i % 2 == 0 else 0.0  # outside vs inside the support
        matches, all_one = corollary_case(j, lambda rest: mu)
        if matches != all_one:
            bad += 1
    checks.append((f"corollary-deimputability-{n_corollary}-joints", bad == 0,
                   f"{bad} mismatches between cellwise equality and alpha=1"))

    rc, rm = censored_linear_risks(1.0, 0.25, 0.2)
    rc0, rm0 = censored_linear_risks(0.0, 0.3, 0.5)
    ok_cens = rc < rm and abs(rc0 - 0.3) <= 1e-9 and abs(rm0 - 0.3) <= 1e-9
    checks.append(("censored-risk-ordering", ok_cens,
                   f"censored={rc:.4f} < mcar={rm:.4f}; w=0 gives sigma^2"))

    return checks
