import numpy as np
import pytest

from missreg.theory import (Atom, DiscreteJoint, alpha, asymptotic_impute_rule,
                            bayes_risk, bayes_rule, censored_linear_risks,
                            example1_mar, example1_nmar, example2_mar,
                            example2_nmar, impute_then_predict_rule,
                            imputed_cell_alphas, mar_twin, nmar_condition,
                            random_joint, random_signal_joint, risk_of_rule)
from missreg.verify import corollary_case, run_checks


class TestAlpha:
    def test_continuous_case(self):
        assert alpha(0.5, 0.0) == 1.0

    def test_no_missingness(self):
        assert alpha(0.0, 0.3) == 0.0

    def test_symmetric(self):
        assert alpha(0.2, 0.2) == 0.5

    def test_both_zero_rejected(self):
        with pytest.raises(ValueError):
            alpha(0.0, 0.0)


class TestBayesRisk:
    def test_example1_values(self):
        assert bayes_risk(example1_nmar()) == pytest.approx(0.0, abs=1e-12)
        assert bayes_risk(example1_mar()) == pytest.approx(0.125, abs=1e-12)

    def test_example2_values(self):
        assert bayes_risk(example2_nmar()) == pytest.approx(0.125, abs=1e-12)
        assert bayes_risk(example2_mar()) == pytest.approx(0.09375, abs=1e-12)

    def test_bayes_dominates_random_rules(self):
        rng = np.random.default_rng(0)
        joint = random_joint(rng)
        best = bayes_risk(joint)
        rule = bayes_rule(joint)
        for _ in range(100):
            noisy = {k: v + rng.normal() * 0.3 for k, v in rule.items()}
            assert risk_of_rule(joint, noisy) >= best - 1e-12

    def test_probabilities_validated(self):
        with pytest.raises(ValueError):
            DiscreteJoint([Atom((0.0,), (False,), 0.0, 0.7)])


class TestImputeRule:
    def test_example1_mode_imputation_not_bayes(self):
        """Mode-imputing the observed X1 (always 0 under M1=X1) collides
        with the observed population, so the learned rule mixes and fails
        Bayes optimality."""
        joint = example1_nmar()
        mode_mu = lambda rest: 0.0
        matches, all_one = corollary_case(joint, mode_mu)
        assert not matches and not all_one
        cells = asymptotic_impute_rule(joint, mode_mu)
        aa = imputed_cell_alphas(joint, mode_mu)[()]
        assert aa == pytest.approx(0.5)
        assert cells[((), 0.0)] == pytest.approx(aa * 1.0 + (1 - aa) * 0.0)

    def test_out_of_support_imputation_is_bayes(self):
        joint = example1_nmar()
        matches, all_one = corollary_case(joint, lambda rest: 2.0)
        assert matches and all_one

    def test_no_missingness_returns_conditional_mean(self):
        atoms = [Atom((x, z), (False, False), x + z, 0.25)
                 for x in (0.0, 1.0) for z in (0.0, 1.0)]
        joint = DiscreteJoint(atoms)
        cells = asymptotic_impute_rule(joint, lambda rest: 0.5)
        for (rest, x1), val in cells.items():
            assert val == pytest.approx(x1 + rest[0])

    def test_rule_mapped_to_observation_space(self):
        joint = example1_mar()
        rule = impute_then_predict_rule(joint, lambda rest: 2.0)
        bayes = bayes_rule(joint)
        assert set(rule) == set(bayes)
        for k in bayes:
            assert rule[k] == pytest.approx(bayes[k], abs=1e-12)


class TestNmarCondition:
    def test_example1_direction(self):
        rep = nmar_condition(example1_nmar(), example1_mar())
        assert rep.lhs >= 0
        assert rep.risk_nmar <= rep.risk_mar
        assert rep.lhs == pytest.approx(rep.risk_mar - rep.risk_nmar, abs=1e-12)

    def test_example2_direction(self):
        rep = nmar_condition(example2_nmar(), example2_mar())
        assert rep.lhs < 0
        assert rep.risk_nmar > rep.risk_mar
        assert rep.lhs == pytest.approx(rep.risk_mar - rep.risk_nmar, abs=1e-12)

    def test_independent_mechanism_is_neutral(self):
        joint = example1_mar()  # mask already independent of (X, Y)
        rep = nmar_condition(joint, mar_twin(joint))
        assert rep.lhs == pytest.approx(0.0, abs=1e-12)
        assert rep.risk_nmar == pytest.approx(rep.risk_mar, abs=1e-12)

    def test_mismatched_rates_rejected(self):
        a = example1_nmar()
        b = DiscreteJoint([Atom((0.0,), (False,), 0.0, 0.9),
                           Atom((1.0,), (True,), 1.0, 0.1)])
        with pytest.raises(ValueError, match="rates"):
            nmar_condition(a, b)

    def test_sign_agreement_on_signal_joints(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            j = random_signal_joint(rng)
            rep = nmar_condition(j, mar_twin(j))
            gap = rep.risk_mar - rep.risk_nmar
            assert rep.lhs == pytest.approx(gap, abs=1e-12)
            assert (rep.lhs >= 0) == (gap >= -1e-12)


class TestCensoredLinearRisks:
    def test_mcar_limit_is_variance(self):
        _, rm = censored_linear_risks(1.0, 0.0, 1 - 1e-9)
        assert rm == pytest.approx(1.0, rel=1e-6)

    def test_zero_slope_gives_noise_floor(self):
        rc, rm = censored_linear_risks(0.0, 0.25, 0.5)
        assert rc == pytest.approx(0.25, abs=1e-9)
        assert rm == pytest.approx(0.25, abs=1e-9)

    def test_censoring_beats_mcar(self):
        rc, rm = censored_linear_risks(1.0, 0.25, 0.2)
        q = 0.8416212335729143  # standard normal 0.8 quantile
        # Truncated-normal variance identity as an independent cross-check:
        # Var[X|X>=q] = 1 + q h - h^2 with h the hazard phi(q)/(1-Phi(q)).
        phi = np.exp(-q * q / 2) / np.sqrt(2 * np.pi)
        h = phi / 0.2
        var_trunc = 1 + q * h - h ** 2
        assert rc == pytest.approx(0.25 + 0.2 * var_trunc, abs=1e-6)
        assert rm == pytest.approx(0.25 + 0.2 * 1.0, abs=1e-9)
        assert rc < rm

    def test_discrete_law(self):
        law = ("discrete", [0.0, 1.0, 2.0, 3.0], [0.25, 0.25, 0.25, 0.25])
        rc, rm = censored_linear_risks(2.0, 0.1, 0.5, law=law)
        # Censoring keeps X >= q_{0.5} and the 0.5-quantile of this law is 1
        # (first value with cdf >= 1/2), so the tail {1, 2, 3} has mean 2 and
        # variance 2/3; the full variance is 1.25.
        assert rc == pytest.approx(0.1 + 0.5 * 4.0 * (2.0 / 3.0), abs=1e-12)
        assert rm == pytest.approx(0.1 + 0.5 * 4.0 * 1.25, abs=1e-12)

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            censored_linear_risks(1.0, 0.1, 1.5)


class TestVerifySuite:
    def test_all_checks_pass(self):
        checks = run_checks(n_random=60, n_corollary=40)
        assert all(ok for _, ok, _ in checks), checks
