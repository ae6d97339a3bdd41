import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from akfsr.errors import InvalidParameterError, NumericError
from akfsr.reward import (DEFAULT_OMEGAS, LIKELIHOOD_FLOOR, RewardFilterState, gaussian_likelihood,
                          kf_predict, kf_update_single, mmae_step)


def scalar_state(theta, P, b, f=0.9, omegas=(1.0,)):
    return RewardFilterState(np.array([theta]), np.array([[P]]), np.array([[b]]),
                             np.asarray(omegas), np.full(len(omegas), 1 / len(omegas)), f)


def reference_bank(state, h, r):
    """Independent per-filter loop with explicit mixture moments."""
    theta_prior, P_prior = kf_predict(state)
    thetas, covs, liks = [], [], []
    for omega in state.omega_candidates:
        z = h @ P_prior @ h + omega
        t, p = kf_update_single(theta_prior, P_prior, h, r, omega)
        thetas.append(t)
        covs.append(p)
        eps = r - h @ theta_prior
        liks.append(max(np.exp(-eps**2 / (2 * z)) / np.sqrt(2 * np.pi * z), LIKELIHOOD_FLOOR))
    w = state.bank_weights * np.array(liks)
    w = w / w.sum()
    theta = sum(wi * t for wi, t in zip(w, thetas))
    P = sum(wi * (p + np.outer(t - theta, t - theta)) for wi, t, p in zip(w, thetas, covs))
    return theta, P, w, covs


class TestPredict:
    def test_scalar(self):
        theta, P = kf_predict(scalar_state(1.0, 1.0, 0.1))
        assert theta[0] == pytest.approx(0.9)
        assert P[0, 0] == pytest.approx(0.91)

    def test_no_process_noise(self):
        state = RewardFilterState.create(3, p0=2.0, b=0.0)
        theta, P = kf_predict(state)
        np.testing.assert_array_equal(theta, 0)
        np.testing.assert_allclose(P, 0.81 * 2.0 * np.eye(3))

    def test_positive_definite(self):
        state = RewardFilterState.create(4, p0=0.0, b=1e-3)
        assert np.linalg.eigvalsh(kf_predict(state)[1]).min() > 0


class TestSingleUpdate:
    def test_scalar_hand_computed(self):
        theta, P = kf_update_single(np.zeros(1), np.array([[10.0]]), np.ones(1), 1.0, 1.0)
        assert theta[0] == pytest.approx(10 / 11)
        assert P[0, 0] == pytest.approx(10 / 11)

    def test_zero_residual(self):
        rng = np.random.default_rng(0)
        prior = rng.normal(size=3)
        h = rng.normal(size=3)
        theta, _ = kf_update_single(prior, np.eye(3), h, h @ prior, 2.0)
        np.testing.assert_allclose(theta, prior)

    def test_vanishing_gain(self):
        rng = np.random.default_rng(1)
        prior = rng.normal(size=3)
        P_prior = np.eye(3) * 2
        theta, P = kf_update_single(prior, P_prior, rng.normal(size=3), 5.0, 1e12)
        np.testing.assert_allclose(theta, prior, rtol=1e-6)
        assert np.linalg.norm(P - P_prior) <= 1e-6 * np.linalg.norm(P_prior)

    def test_bad_omega(self):
        with pytest.raises(InvalidParameterError):
            kf_update_single(np.zeros(1), np.eye(1), np.ones(1), 1.0, 0.0)

    def test_bad_innovation_variance(self):
        with pytest.raises(NumericError):
            kf_update_single(np.zeros(1), -np.eye(1), np.ones(1), 1.0, 0.5)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_information_form(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        a = rng.normal(size=(n, n))
        P_prior = a @ a.T + 0.5 * np.eye(n)
        h = rng.normal(size=n)
        omega = float(rng.uniform(0.1, 10))
        _, P = kf_update_single(np.zeros(n), P_prior, h, 1.0, omega)
        expected = np.linalg.inv(P_prior) + np.outer(h, h) / omega
        np.testing.assert_allclose(np.linalg.inv(P), expected, rtol=1e-8, atol=1e-8)

    @pytest.mark.parametrize("c", [-1.0, 2.0, 3.0])
    def test_linear_in_measurements(self, c):
        rng = np.random.default_rng(7)
        hs = rng.normal(size=(50, 4))
        rs = rng.normal(size=50)
        base = RewardFilterState.create(4, omegas=(2.0,))
        scaled = RewardFilterState.create(4, omegas=(2.0,))
        for h, r in zip(hs, rs):
            mmae_step(base, h, r)
            mmae_step(scaled, h, c * r)
            np.testing.assert_allclose(scaled.theta, c * base.theta, rtol=1e-10, atol=1e-14)


class TestLikelihood:
    def test_standard(self):
        assert gaussian_likelihood(0.0, 1.0) == pytest.approx(0.398942, abs=1e-6)

    def test_unit_density(self):
        assert gaussian_likelihood(0.0, 1 / (2 * np.pi)) == pytest.approx(1.0)

    def test_floor(self):
        assert gaussian_likelihood(1000.0, 1.0) == LIKELIHOOD_FLOOR

    def test_vectorised(self):
        out = gaussian_likelihood(0.5, np.array([1.0, 2.0]))
        assert out.shape == (2,)

    def test_rejects_nonpositive(self):
        with pytest.raises(NumericError):
            gaussian_likelihood(0.0, 0.0)


class TestMmae:
    def test_single_filter_reduces_to_kf(self):
        state = RewardFilterState.create(3, omegas=(1.5,))
        rng = np.random.default_rng(0)
        for _ in range(10):
            h, r = rng.normal(size=3), rng.normal()
            prior = kf_predict(state)
            expected = kf_update_single(*prior, h, r, 1.5)
            mmae_step(state, h, r)
            np.testing.assert_allclose(state.theta, expected[0], rtol=1e-12)
            np.testing.assert_allclose(state.P, expected[1], rtol=1e-12, atol=1e-15)
            assert state.bank_weights[0] == 1.0

    def test_equal_candidates_keep_equal_weights(self):
        state = RewardFilterState.create(2, omegas=(1.0, 1.0))
        rng = np.random.default_rng(1)
        for _ in range(20):
            mmae_step(state, rng.normal(size=2), rng.normal())
        np.testing.assert_allclose(state.bank_weights, [0.5, 0.5])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_per_filter_reference(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        state = RewardFilterState.create(n, p0=float(rng.uniform(0.1, 10)))
        for _ in range(int(rng.integers(1, 6))):
            h, r = rng.normal(size=n), float(rng.normal(scale=3))
            theta, P, w, covs = reference_bank(state, h, r)
            result = mmae_step(state, h, r)
            np.testing.assert_allclose(result.theta, theta, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(result.P, P, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(result.bank_weights, w, rtol=1e-9, atol=1e-300)
            mixture = sum(wi * p for wi, p in zip(w, covs))
            assert np.linalg.eigvalsh(result.P - mixture).min() >= -1e-10

    def test_degenerate_weights_reset(self):
        state = RewardFilterState.create(1, p0=1e-6, omegas=(0.01, 0.1))
        mmae_step(state, np.ones(1), 1e6)
        np.testing.assert_allclose(state.bank_weights, [0.5, 0.5])

    def test_identifies_noise_level(self):
        votes = np.zeros(len(DEFAULT_OMEGAS))
        for seed in range(5):
            rng = np.random.default_rng(seed)
            theta_true = rng.normal(size=3)
            state = RewardFilterState.create(3, f_scale=1.0, b=0.0)
            for _ in range(500):
                h = rng.normal(size=3)
                mmae_step(state, h, h @ theta_true + rng.normal(scale=np.sqrt(2.0)))
            votes += state.bank_weights
        assert DEFAULT_OMEGAS[int(np.argmax(votes))] == 2.0

    def test_bad_candidates(self):
        with pytest.raises(InvalidParameterError):
            RewardFilterState.create(2, omegas=(1.0, -1.0))
