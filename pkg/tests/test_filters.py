import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from encmf.errors import DomainError, NumericalError
from encmf.filters import (ConditionalMeanModel, SirConditionalMean, cmf_analysis,
                           conditional_variance_sir, enkf_analysis, genkf_analysis,
                           mlencmf_analysis, posterior_mean_sir, posterior_second_moment_sir,
                           sir_moments)
from encmf.observation import NoiseModel, forecast_observations, identity_map, piecewise_map
from encmf.stats import AffineEstimator, ensemble_mean, fit_affine, kalman_gain_generalized, kalman_gain_linear

PRIOR_STD, NOISE_STD = 2.0, 0.5


def linear_pair(seed=0, N=50, n=2, m=2):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(N, n))
    H = rng.normal(size=(m, n))
    Y = Q @ H.T + 0.3 * rng.normal(size=(N, m))
    return Q, Y, rng.normal(size=m)


def demo_forecast(N, seed):
    rng = np.random.default_rng(seed)
    Q = PRIOR_STD * rng.standard_normal((N, 1))
    Y = forecast_observations(Q, piecewise_map(), NoiseModel.isotropic(1, NOISE_STD ** 2), rng)
    return Q, Y, rng


class TestEnKF:
    def test_zero_gain(self):
        Q, Y, y = linear_pair()
        assert np.array_equal(enkf_analysis(Q, Y, y, np.zeros((2, 2))), Q)

    def test_scalar_substitution(self):
        Q = np.array([[1.0], [2.0], [-3.0]])
        Y = np.array([[0.5], [-1.0], [4.0]])
        np.testing.assert_array_equal(enkf_analysis(Q, Y, [0.0], [[1.0]]), Q - Y)

    def test_mean_identity(self):
        Q, Y, y = linear_pair(1)
        K = np.array([[0.3, -0.2], [0.1, 0.7]])
        Qa = enkf_analysis(Q, Y, y, K)
        np.testing.assert_allclose(ensemble_mean(Qa), ensemble_mean(Q) + K @ (y - ensemble_mean(Y)),
                                   atol=1e-13)

    def test_dimension_checks(self):
        Q, Y, y = linear_pair()
        with pytest.raises(DomainError):
            enkf_analysis(Q, Y, y, np.zeros((3, 2)))
        with pytest.raises(DomainError):
            enkf_analysis(Q, Y[:-1], y, np.zeros((2, 2)))
        with pytest.raises(DomainError):
            enkf_analysis(Q, Y, np.zeros(3), np.zeros((2, 2)))


class TestGEnKF:
    def test_identity_zero_noise_collapses(self):
        Q = np.random.default_rng(3).normal(size=(40, 3))
        y = np.array([0.5, -1.0, 2.0])
        np.testing.assert_allclose(genkf_analysis(Q, Q.copy(), y), np.tile(y, (40, 1)), atol=1e-7)

    def test_matches_linear_gain_monte_carlo(self):
        rng = np.random.default_rng(8)
        N = 100_000
        Q = rng.normal(size=(N, 2)) * [1.0, 2.0]
        H = np.array([[1.0, 1.0]])
        Y = Q @ H.T + 0.5 * rng.standard_normal((N, 1))
        y = np.array([1.3])
        Kl = kalman_gain_linear(H, np.diag([1.0, 4.0]), [[0.25]])
        diff = genkf_analysis(Q, Y, y) - enkf_analysis(Q, Y, y, Kl)
        assert np.max(np.abs(ensemble_mean(diff))) < 5 * 4 / np.sqrt(N)

    def test_conjugate_posterior_variance(self):
        rng = np.random.default_rng(12)
        N = 100_000
        Q = PRIOR_STD * rng.standard_normal((N, 1))
        Y = Q + NOISE_STD * rng.standard_normal((N, 1))
        Qa = genkf_analysis(Q, Y, [1.0])
        # 4 * 0.25 / 4.25
        assert Qa.var() == pytest.approx(0.23529411764705882, rel=0.02)


class TestCMF:
    def test_constant_cm_cancels(self):
        Q, Y, y = linear_pair(2)
        Qa = cmf_analysis(Q, Y, y, lambda v: np.broadcast_to([3.0, -1.0], np.shape(v)[:-1] + (2,)))
        np.testing.assert_array_equal(Qa, Q)

    @given(st.integers(0, 10_000), st.integers(2, 4), st.integers(1, 3))
    def test_affine_cm_equals_enkf_bitwise(self, seed, n, m):
        Q, Y, y = linear_pair(seed, N=12, n=n, m=m)
        est = fit_affine(Q, Y)
        assert np.array_equal(cmf_analysis(Q, Y, y, est), enkf_analysis(Q, Y, y, est.gain))

    def test_mean_identity(self):
        Q, Y, y = linear_pair(4)

        def cm(v):
            return np.sin(np.asarray(v)) + 1.0

        Qa = cmf_analysis(Q, Y, y, cm)
        expected = ensemble_mean(Q) + cm(y) - ensemble_mean(cm(Y))
        np.testing.assert_allclose(ensemble_mean(Qa), expected, atol=1e-13)

    def test_precomputed_forecast_values(self):
        Q, Y, y = linear_pair(5)
        cm = lambda v: np.tanh(np.asarray(v))  # noqa: E731
        np.testing.assert_array_equal(cmf_analysis(Q, Y, y, cm, cm_forecast=cm(Y)),
                                      cmf_analysis(Q, Y, y, cm))

    def test_wrong_dimension(self):
        Q, Y, y = linear_pair(6)
        with pytest.raises(DomainError):
            cmf_analysis(Q, Y, y, lambda v: np.zeros(np.shape(v)[:-1] + (5,)))


class TestMLEnCMF:
    def test_inactive_network_is_genkf_bitwise(self):
        Q, Y, y = linear_pair(7, N=30)
        cm = ConditionalMeanModel(fit_affine(Q, Y), nn=lambda v: np.ones(np.shape(v)), a=0)
        assert np.array_equal(mlencmf_analysis(Q, Y, y, cm), genkf_analysis(Q, Y, y))

    def test_constant_correction_cancels(self):
        Q, Y, y = linear_pair(8, N=30)
        lin = fit_affine(Q, Y)
        const = lambda v: np.full(np.shape(np.atleast_2d(v))[:-1] + (2,), 4.0)  # noqa: E731
        on = mlencmf_analysis(Q, Y, y, ConditionalMeanModel(lin, const, a=1))
        off = mlencmf_analysis(Q, Y, y, ConditionalMeanModel(lin, const, a=0))
        assert np.array_equal(on, off)

    def test_flag_invariants(self):
        lin = AffineEstimator(np.eye(1), np.zeros(1))
        with pytest.raises(DomainError):
            ConditionalMeanModel(lin, None, a=1)
        with pytest.raises(DomainError):
            ConditionalMeanModel(lin, None, a=2)


class TestSir:
    def test_likelihood_concentration(self):
        prior = np.array([[-3.0], [-1.0], [0.5], [2.0]])
        est = posterior_mean_sir(prior, [4.0], piecewise_map(), NoiseModel.isotropic(1, 1e-6))
        np.testing.assert_allclose(est, [2.0], atol=1e-12)

    def test_conjugate_mean(self):
        rng = np.random.default_rng(21)
        prior = PRIOR_STD * rng.standard_normal((100_000, 1))
        noise = NoiseModel.isotropic(1, NOISE_STD ** 2)
        for y in (-1.5, 0.3, 2.0):
            res = sir_moments(prior, [[y]], identity_map(1), noise)
            exact = 4.0 / 4.25 * y
            assert abs(res.mean[0, 0] - exact) < 3 * res.stderr[0, 0]

    def test_uninformative_likelihood(self):
        prior = np.random.default_rng(0).normal(size=(500, 2))
        noise = NoiseModel.isotropic(2, 1e12)
        np.testing.assert_allclose(posterior_mean_sir(prior, [1.0, -1.0], identity_map(2), noise),
                                   prior.mean(axis=0), atol=1e-9)
        var = conditional_variance_sir(prior[:, :1], [[0.0]], identity_map(1), NoiseModel.isotropic(1, 1e12))
        assert var[0, 0, 0] == pytest.approx(prior[:, 0].var(), rel=1e-6)

    def test_constant_prior_zero_variance(self):
        prior = np.full((50, 1), 1.7)
        second = posterior_second_moment_sir(prior, [0.4], piecewise_map(), NoiseModel.isotropic(1, 0.25))
        mean = posterior_mean_sir(prior, [0.4], piecewise_map(), NoiseModel.isotropic(1, 0.25))
        assert second[0, 0] - mean[0] ** 2 == pytest.approx(0.0, abs=1e-12)

    def test_far_observation_does_not_underflow(self):
        prior = np.random.default_rng(1).normal(size=(1000, 1))
        est = posterior_mean_sir(prior, [60.0], identity_map(1), NoiseModel.isotropic(1, 0.01))
        np.testing.assert_allclose(est, [prior.max()], atol=1e-6)

    def test_non_finite_weights_raise(self):
        prior = np.random.default_rng(1).normal(size=(10, 1))
        with pytest.raises(NumericalError):
            posterior_mean_sir(prior, [np.inf], identity_map(1), NoiseModel.isotropic(1, 1.0))

    def test_full_covariance_matches_diagonal_path(self):
        prior = np.random.default_rng(2).normal(size=(300, 2))
        ys = np.array([[0.2, -0.4], [1.0, 1.0]])
        diag = sir_moments(prior, ys, identity_map(2), NoiseModel(np.diag([0.5, 0.8]))).mean
        full = NoiseModel(np.array([[0.5, 1e-300], [1e-300, 0.8]]))
        assert not full._diagonal
        np.testing.assert_allclose(sir_moments(prior, ys, identity_map(2), full).mean, diag, atol=1e-12)

    def test_chunking_is_invisible(self):
        prior = np.random.default_rng(3).normal(size=(200, 1))
        ys = np.linspace(-2, 5, 37)[:, None]
        a = sir_moments(prior, ys, piecewise_map(), NoiseModel.isotropic(1, 0.25), chunk=5)
        b = sir_moments(prior, ys, piecewise_map(), NoiseModel.isotropic(1, 0.25), chunk=1000)
        # row blocking changes BLAS kernels, so only rounding-level agreement is expected
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-13, atol=1e-14)


@pytest.fixture(scope="module")
def setting():
    Q, Y, rng = demo_forecast(20_000, seed=31)
    prior = PRIOR_STD * rng.standard_normal((10_000, 1))
    cm = SirConditionalMean(prior, piecewise_map(), NoiseModel.isotropic(1, NOISE_STD ** 2))
    return Q, Y, cm, cm(Y)


class TestOracleProperties:
    """Statistical properties of the CMF driven by the importance-sampling CM."""

    def test_law_of_total_expectation(self, setting):
        Q, Y, cm, g = setting
        gap = abs(g.mean() - Q.mean())
        assert gap < 3 * Q.std() / np.sqrt(len(Q))

    @pytest.mark.parametrize("test_fn", [lambda y: y, lambda y: y ** 2, np.sin], ids=["y", "y2", "sin"])
    def test_orthogonality(self, setting, test_fn):
        Q, Y, cm, g = setting
        prod = ((Q - g) * test_fn(Y)).ravel()
        assert abs(prod.mean()) < 3 * prod.std() / np.sqrt(prod.size)

    def test_assimilated_mean_tracks_posterior(self, setting):
        Q, Y, cm, g = setting
        for y_hat in (-2.1, 0.2, 4.3):
            Qa = cmf_analysis(Q, Y, [y_hat], cm, cm_forecast=g)
            post = cm([y_hat])[0]
            se = Qa.std() / np.sqrt(len(Qa))
            assert abs(Qa.mean() - post) < 3 * np.hypot(se, 0.01)
