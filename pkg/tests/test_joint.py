import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtri

from missreg.data import MaskedMatrix, TargetVector
from missreg.downstream import DownstreamSpec, fit_downstream
from missreg.joint import JointConfig, JointModel, fit_joint, predict_joint

LINEAR = JointConfig(downstream=DownstreamSpec(kind="linear"))


def censored_toy(seed, n=2000, p=0.2, noise_sd=0.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 1))
    y = x[:, 0] + noise_sd * rng.normal(size=n)
    thr = np.sort(x[:, 0])[int(np.ceil((1 - p) * n)) - 1]
    mask = x > thr
    return MaskedMatrix(x, mask), TargetVector(y)


def truncated_mean_oracle(p):
    """E[X | X >= q_{1-p}] for standard normal X, by quadrature."""
    q = float(ndtri(1 - p))
    pdf = lambda t: np.exp(-t * t / 2) / np.sqrt(2 * np.pi)
    tail, _ = integrate.quad(pdf, q, 12, epsabs=1e-12)
    m1, _ = integrate.quad(lambda t: t * pdf(t), q, 12, epsabs=1e-12)
    return m1 / tail


class TestFitJoint:
    def test_no_missing_one_outer_iteration(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 3))
        y = X @ np.ones(3) + 0.1 * rng.normal(size=200)
        mm = MaskedMatrix(X, np.zeros_like(X, bool))
        jm = fit_joint(mm, TargetVector(y), LINEAR, seed=1)
        assert jm.outer_iterations == 1
        assert np.allclose(jm.mu, X.mean(axis=0))

    def test_censored_toy_reaches_truncated_mean(self):
        mm, tv = censored_toy(seed=3)
        jm = fit_joint(mm, tv, LINEAR, seed=1)
        target = truncated_mean_oracle(0.2)
        assert target == pytest.approx(1.400, abs=1e-3)
        obs = ~mm.mask[:, 0]
        sigma = mm.values[obs, 0].std(ddof=0) / np.sqrt(obs.sum())
        assert abs(jm.mu[0] - target) < 3 * sigma

    def test_mcar_toy_stays_at_mean(self):
        rng = np.random.default_rng(4)
        n = 2000
        x = rng.normal(size=(n, 1))
        y = x[:, 0].copy()
        mask = (rng.random((n, 1)) < 0.2)
        mm = MaskedMatrix(x, mask)
        jm = fit_joint(mm, TargetVector(y), LINEAR, seed=1)
        obs = ~mask[:, 0]
        sigma = x[obs, 0].std(ddof=0) / np.sqrt(obs.sum())
        assert abs(jm.mu[0] - 0.0) < 3 * sigma

    def test_error_trace_non_increasing(self):
        mm, tv = censored_toy(seed=5, n=500, noise_sd=0.5)
        jm = fit_joint(mm, tv, LINEAR, seed=2)
        assert np.all(np.diff(jm.error_trace) <= 1e-12)

    def test_never_worse_than_mean_impute_start(self):
        mm, tv = censored_toy(seed=6, n=800, noise_sd=0.7)
        jm = fit_joint(mm, tv, LINEAR, seed=3)
        obs = ~mm.mask
        means = np.where(obs, mm.zero_filled(), 0.0).sum(0) / obs.sum(0)
        X0 = mm.filled(means)
        baseline = fit_downstream(X0, tv.y, "regression",
                                  DownstreamSpec(kind="linear"), seed=3)
        base_err = float(np.mean((tv.y - baseline.predict_response(X0)) ** 2))
        assert jm.error_trace[-1] <= base_err + 1e-12

    def test_deterministic(self):
        mm, tv = censored_toy(seed=7, n=400, noise_sd=0.3)
        a = fit_joint(mm, tv, LINEAR, seed=5)
        b = fit_joint(mm, tv, LINEAR, seed=5)
        assert np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.error_trace, b.error_trace)

    def test_degenerate_column_rejected(self):
        vals = np.zeros((10, 2))
        mask = np.zeros((10, 2), bool)
        mask[:, 1] = True
        mm = MaskedMatrix(vals, mask)
        with pytest.raises(ValueError, match="fully-missing"):
            fit_joint(mm, TargetVector(np.zeros(10)), LINEAR, seed=0)

    def test_categorical_rejected(self):
        from missreg.data import categorical
        mm = MaskedMatrix([[0.0], [1.0]], [[False], [True]],
                          [categorical(["a", "b"])])
        with pytest.raises(ValueError, match="one-hot"):
            fit_joint(mm, TargetVector([0.0, 1.0]), LINEAR, seed=0)


class TestPredictJoint:
    def test_complete_row_uses_raw_values(self):
        mm, tv = censored_toy(seed=8, n=600, noise_sd=0.2)
        jm = fit_joint(mm, tv, LINEAR, seed=1)
        x = np.array([[0.5]])
        pred = predict_joint(jm, MaskedMatrix(x, np.zeros((1, 1), bool)))
        assert pred[0] == pytest.approx(
            jm.predictor.predict_response(x)[0], abs=0)

    def test_all_masked_row_predicts_at_mu(self):
        mm, tv = censored_toy(seed=9, n=600, noise_sd=0.2)
        jm = fit_joint(mm, tv, LINEAR, seed=1)
        pred = predict_joint(jm, MaskedMatrix([[np.nan]], [[True]]))
        assert pred[0] == pytest.approx(
            jm.predictor.predict_response(jm.mu.reshape(1, -1))[0], abs=0)

    def test_training_replay_bit_exact(self):
        mm, tv = censored_toy(seed=10, n=500, noise_sd=0.4)
        jm = fit_joint(mm, tv, LINEAR, seed=2)
        replay = predict_joint(jm, mm)
        direct = jm.predictor.predict_response(mm.filled(jm.mu))
        assert np.array_equal(replay, direct)

    def test_dimension_mismatch(self):
        mm, tv = censored_toy(seed=11, n=300)
        jm = fit_joint(mm, tv, LINEAR, seed=0)
        bad = MaskedMatrix(np.zeros((2, 2)), np.zeros((2, 2), bool))
        with pytest.raises(ValueError):
            predict_joint(jm, bad)

    def test_serialization_round_trip(self):
        mm, tv = censored_toy(seed=12, n=400, noise_sd=0.3)
        jm = fit_joint(mm, tv, LINEAR, seed=2)
        jm2 = JointModel.from_dict(jm.to_dict())
        assert np.array_equal(predict_joint(jm, mm), predict_joint(jm2, mm))


class TestBinaryTask:
    def test_auc_error_metric(self):
        rng = np.random.default_rng(13)
        n = 600
        x = rng.normal(size=(n, 2))
        eta = 2.0 * x[:, 0]
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
        mask = np.zeros((n, 2), bool)
        mask[:, 0] = x[:, 0] > np.quantile(x[:, 0], 0.7)
        mm = MaskedMatrix(x, mask)
        jm = fit_joint(mm, TargetVector(y, "binary"), LINEAR, seed=1)
        assert np.all(np.diff(jm.error_trace) <= 1e-12)
        assert jm.error_trace[-1] <= jm.error_trace[0]
