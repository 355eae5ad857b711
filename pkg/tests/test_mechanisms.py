import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.utils.estimator_checks import check_get_params_invariance

from dpal.exceptions import ParameterError
from dpal.mechanisms import (BoundedNoiseAdversary, GaussianMechanism, LaplaceMechanism,
                             NoisyRelease, PrivacyParams, bounded_noise_adversary,
                             gaussian_mechanism, gaussian_sigma, laplace_mechanism,
                             laplace_scale, noiseless)


def test_privacy_params_validation():
    with pytest.raises(ParameterError):
        PrivacyParams(0.0)
    with pytest.raises(ParameterError):
        PrivacyParams(1.0, 1.0)


def test_laplace_vanishing_noise():
    y = np.arange(10.0)
    r = laplace_mechanism(y, 1.0, 1e9, seed=0)
    assert np.max(np.abs(r.answers - y)) < 1e-6


def test_laplace_moments():
    b = laplace_scale(2.0, 0.5)
    assert b == pytest.approx(2.0 / (0.5 * math.log(2)))
    noise = laplace_mechanism(np.zeros(100_000), 2.0, 0.5, seed=1).answers
    assert abs(noise.mean()) <= 3 * b * math.sqrt(2) / math.sqrt(100_000)
    assert noise.var() == pytest.approx(2 * b ** 2, rel=0.05)


def test_laplace_rejects_bad_epsilon():
    with pytest.raises(ParameterError):
        laplace_mechanism([1.0], 1.0, 0.0)


def test_gaussian_sigma_example_and_limits():
    assert gaussian_sigma(4, PrivacyParams(2.0, math.exp(-1))) == pytest.approx(1.0)
    assert gaussian_sigma(4, PrivacyParams(2.0, 0.25), log_base=2) == pytest.approx(math.sqrt(8) / 2)
    r = gaussian_mechanism(np.ones(5), 5, PrivacyParams(1.0, 1 - 1e-15), seed=0)
    assert np.max(np.abs(r.answers - 1)) < 1e-5
    with pytest.raises(ParameterError):
        gaussian_mechanism(np.ones(2), 2, PrivacyParams(1.0, 0.0))


def test_gaussian_norm_concentration():
    k, params = 50, PrivacyParams(1.0, 0.1)
    sigma = gaussian_sigma(k, params)
    fails = 0
    for seed in range(10_000 // 100):
        Y = np.random.default_rng(seed).normal(0, sigma, size=(100, k))
        fails += int(np.sum((Y ** 2).sum(axis=1) > 4 * k * sigma ** 2))
    assert fails == 0


@pytest.mark.property
def test_gaussian_noise_is_spherical():
    trials, k = 20_000, 4
    sigma = gaussian_sigma(k, PrivacyParams(1.0, 0.5))
    noise = np.array([gaussian_mechanism(np.zeros(k), k, PrivacyParams(1.0, 0.5), seed=s).answers
                      for s in range(trials)])
    C = np.cov(noise.T)
    off = C[~np.eye(k, dtype=bool)]
    assert np.all(np.abs(off) <= 5 * sigma ** 2 / math.sqrt(trials))


def test_bounded_noise_examples():
    y = np.arange(4.0)
    np.testing.assert_array_equal(bounded_noise_adversary(y, 0.0, 0.0, 1.0, seed=0).answers, y)
    r = bounded_noise_adversary(y, 0.5, 0.5, 100.0, seed=0)
    assert r.wild.sum() == 2
    assert r.profile == {"alpha": 0.5, "gamma": 0.5, "wild_magnitude": 100.0}
    with pytest.raises(ParameterError):
        bounded_noise_adversary(y, 0.5, 1.0, 100.0)


@pytest.mark.property
@given(st.integers(1, 200), st.floats(0, 5), st.floats(0, 0.99), st.integers(0, 2 ** 31 - 1))
def test_bounded_noise_profile(k, alpha, gamma, seed):
    y = np.random.default_rng(seed).normal(size=k)
    r = bounded_noise_adversary(y, alpha, gamma, alpha + 10, seed)
    noise = r.answers - y
    assert r.wild.sum() == math.floor(gamma * k)
    assert np.all(np.abs(noise[~r.wild]) <= alpha + 1e-12)
    assert np.sum(np.abs(noise) <= alpha + 1e-12) >= k - math.floor(gamma * k)
    assert len(r) == k
    again = bounded_noise_adversary(y, alpha, gamma, alpha + 10, seed)
    np.testing.assert_array_equal(r.answers, again.answers)


@pytest.mark.property
@given(st.integers(1, 50), st.integers(0, 2 ** 31 - 1))
def test_mechanisms_deterministic_and_length_preserving(k, seed):
    y = np.arange(k, dtype=float)
    for f in (lambda s: laplace_mechanism(y, 1.0, 1.0, s),
              lambda s: gaussian_mechanism(y, k, PrivacyParams(1.0, 0.1), s),
              lambda s: noiseless(y, s)):
        a, b = f(seed), f(seed)
        assert len(a) == k
        np.testing.assert_array_equal(a.answers, b.answers)


def test_release_json_round_trip():
    r = bounded_noise_adversary(np.ones(3), 1.0, 0.0, 2.0, seed=4)
    back = NoisyRelease.from_json(r.to_json())
    np.testing.assert_array_equal(back.answers, r.answers)
    assert back.profile == r.profile and back.seed == 4
    assert noiseless([1.0]).profile is None


@pytest.mark.parametrize("est", [LaplaceMechanism(random_state=0),
                                 GaussianMechanism(random_state=0),
                                 BoundedNoiseAdversary(alpha=0.5, gamma=0.25, random_state=0)])
def test_transformers(est):
    X = np.arange(12.0).reshape(3, 4)
    out = est.fit(X).transform(X)
    assert out.shape == X.shape
    np.testing.assert_array_equal(out, est.fit_transform(X))
    check_get_params_invariance(type(est).__name__, est)
