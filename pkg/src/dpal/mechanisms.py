"""Noise-adding release mechanisms.

Privacy parameters follow the base-2 convention: a mechanism is ε-DP when
output probabilities on neighbouring databases are within a factor ``2^ε``.
The Laplace scale therefore carries a ``1/ln 2`` factor. The Gaussian
mechanism uses ``σ² = k·log(1/δ)/ε²`` with the natural log by default
(``log_base=2`` is available).
"""

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import validate_data

from ._validation import check_positive, check_rng, check_vector
from .exceptions import ParameterError


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")


@dataclass
class NoisyRelease:
    """Released answers plus provenance.

    ``profile`` is set only by the bounded-noise adversary and declares
    ``alpha``, ``gamma`` and ``wild_magnitude``. ``wild`` (not serialized)
    marks the coordinates that adversary corrupted.
    """

    answers: np.ndarray
    mechanism: str
    seed: Optional[int] = None
    profile: Optional[dict] = None
    params: dict = field(default_factory=dict)
    wild: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.answers = check_vector(self.answers, "answers", allow_empty=True)

    def __len__(self):
        return self.answers.size

    def to_json(self):
        out = {"answers": self.answers.tolist(), "mechanism": self.mechanism,
               "seed": self.seed, "profile": self.profile}
        if self.params:
            out["params"] = self.params
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["answers"], dtype=np.float64), obj["mechanism"],
                   obj.get("seed"), obj.get("profile"), obj.get("params") or {})


def _seed_value(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def noiseless(true_answers, seed=None):
    return NoisyRelease(np.array(true_answers, dtype=np.float64), "noiseless",
                        _seed_value(seed))


def laplace_scale(l1_sensitivity, epsilon):
    return l1_sensitivity / (epsilon * math.log(2))


def laplace_mechanism(true_answers, l1_sensitivity, epsilon, seed=None):
    """Add i.i.d. Laplace noise of scale ``l1_sensitivity / (ε ln 2)``."""
    y = check_vector(true_answers, "true_answers", allow_empty=True)
    check_positive(l1_sensitivity, "l1_sensitivity")
    check_positive(epsilon, "epsilon")
    b = laplace_scale(l1_sensitivity, epsilon)
    rng = check_rng(seed)
    return NoisyRelease(y + rng.laplace(0.0, b, size=y.shape), "laplace", _seed_value(seed),
                        params={"epsilon": epsilon, "l1_sensitivity": l1_sensitivity,
                                "scale": b})


def gaussian_sigma(k, params: PrivacyParams, log_base="e"):
    if not 0 < params.delta < 1:
        raise ParameterError(f"the Gaussian mechanism needs delta in (0, 1), got {params.delta}")
    if log_base == "e":
        log = math.log(1 / params.delta)
    elif log_base == 2:
        log = math.log2(1 / params.delta)
    else:
        raise ParameterError(f"log_base must be 'e' or 2, got {log_base!r}")
    return math.sqrt(k * log) / params.epsilon


def gaussian_mechanism(true_answers, k, params: PrivacyParams, seed=None, log_base="e"):
    """Add i.i.d. normal noise with variance ``k·log(1/δ)/ε²`` per coordinate."""
    y = check_vector(true_answers, "true_answers", allow_empty=True)
    sigma = gaussian_sigma(k, params, log_base)
    rng = check_rng(seed)
    return NoisyRelease(y + rng.normal(0.0, sigma, size=y.shape), "gaussian",
                        _seed_value(seed),
                        params={"epsilon": params.epsilon, "delta": params.delta,
                                "sigma": sigma, "log_base": str(log_base)})


def bounded_noise_adversary(true_answers, alpha, gamma, wild_magnitude, seed=None,
                            wild_signs=None):
    """Corrupt ``floor(γk)`` random coordinates by ``±wild_magnitude``, the rest uniformly in ``[−α, α]``.

    ``wild_signs`` (a ±1 vector of length ``k``) fixes the direction of each
    wild perturbation, e.g. to push against a decoder's earlier output;
    otherwise directions are random.
    """
    y = check_vector(true_answers, "true_answers", allow_empty=True)
    check_positive(alpha, "alpha", strict=False)
    if not 0 <= gamma < 1:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    if wild_magnitude < alpha:
        raise ParameterError("wild_magnitude must be at least alpha")
    k = y.size
    rng = check_rng(seed)
    n_wild = math.floor(gamma * k)
    wild = np.zeros(k, dtype=bool)
    wild[rng.choice(k, size=n_wild, replace=False)] = True
    noise = rng.uniform(-alpha, alpha, size=k) if alpha > 0 else np.zeros(k)
    if wild_signs is None:
        signs = rng.choice(np.array([-1.0, 1.0]), size=k)
    else:
        signs = np.sign(check_vector(wild_signs, "wild_signs", length=k))
        signs[signs == 0] = 1.0
    noise[wild] = signs[wild] * wild_magnitude
    return NoisyRelease(y + noise, "bounded_noise", _seed_value(seed),
                        profile={"alpha": alpha, "gamma": gamma,
                                 "wild_magnitude": wild_magnitude},
                        wild=wild)


class _Mechanism(TransformerMixin, BaseEstimator):
    """Stateless transformer: each row of ``X`` is one vector of true answers."""

    def fit(self, X, y=None):
        validate_data(self, X, dtype=np.float64)
        return self

    def transform(self, X):
        X = validate_data(self, X, dtype=np.float64, reset=False)
        rng = check_rng(self.random_state)
        return np.vstack([self._release(row, rng).answers for row in X])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        tags.non_deterministic = self.random_state is None
        return tags


class LaplaceMechanism(_Mechanism):
    def __init__(self, epsilon=1.0, l1_sensitivity=1.0, random_state=None):
        self.epsilon = epsilon
        self.l1_sensitivity = l1_sensitivity
        self.random_state = random_state

    def _release(self, row, rng):
        return laplace_mechanism(row, self.l1_sensitivity, self.epsilon, rng)


class GaussianMechanism(_Mechanism):
    """Gaussian mechanism; ``k`` defaults to the number of columns of ``X``."""

    def __init__(self, epsilon=1.0, delta=1e-3, k=None, log_base="e", random_state=None):
        self.epsilon = epsilon
        self.delta = delta
        self.k = k
        self.log_base = log_base
        self.random_state = random_state

    def _release(self, row, rng):
        k = row.size if self.k is None else self.k
        return gaussian_mechanism(row, k, PrivacyParams(self.epsilon, self.delta), rng,
                                  self.log_base)


class BoundedNoiseAdversary(_Mechanism):
    def __init__(self, alpha=1.0, gamma=0.0, wild_magnitude=1e3, random_state=None):
        self.alpha = alpha
        self.gamma = gamma
        self.wild_magnitude = wild_magnitude
        self.random_state = random_state

    def _release(self, row, rng):
        return bounded_noise_adversary(row, self.alpha, self.gamma, self.wild_magnitude, rng)
