"""Analytic toy targets: shifted Gaussian, Gaussian mixture, Student."""

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ..errors import ConfigError
from .base import Gaussian, StudentT, correlated_cov, ratio_target

SHIFT_CORRELATION = 0.7
STUDENT_PRIOR_DOF = 3
STUDENT_TARGET_DOF = 10


def shift_moments(d):
    """Mean and covariance of the shifted, correlated Gaussian target."""
    mean = 2.0 * np.ones(d)
    cov = correlated_cov(np.linspace(0.1, 10.0, d), SHIFT_CORRELATION)
    return mean, cov


class GaussianMixture:
    def __init__(self, weights, components):
        self.log_w = np.log(np.asarray(weights, dtype=float))
        self.components = list(components)

    @property
    def dim(self):
        return self.components[0].dim

    def _parts(self, x):
        return np.stack([lw + c.logpdf(x) for lw, c in zip(self.log_w, self.components)])

    def logpdf(self, x):
        return logsumexp(self._parts(x), axis=0)

    def grad(self, x):
        parts = self._parts(x)
        resp = np.exp(parts - logsumexp(parts, axis=0))
        return sum(r[:, None] * c.grad(x) for r, c in zip(resp, self.components))

    def sample(self, rng, n):
        labels = rng.choice(len(self.components), size=n, p=np.exp(self.log_w))
        out = np.empty((n, self.dim))
        for k, c in enumerate(self.components):
            idx = np.flatnonzero(labels == k)
            out[idx] = c.sample(rng, idx.size)
        return out


def build_gaussian_shift_model(d):
    """N(0, I) tempered towards N(2·1, Xi) with variances spread over [0.1, 10]."""
    if d < 2:
        raise ConfigError("gaussian shift model needs d >= 2")
    mean, cov = shift_moments(d)
    prior = Gaussian(np.zeros(d), np.eye(d))
    post = Gaussian(mean, cov)
    return ratio_target(prior, post, d, "gaussian",
                        info={"posterior": post, "mean": mean, "cov": cov, "log_z": 0.0})


def build_mixture_model(d):
    if d < 1:
        raise ConfigError("mixture model needs d >= 1")
    mu = 4.0 * np.ones(d)
    variances = np.linspace(1.0, 2.0, d)
    post = GaussianMixture(
        [0.3, 0.7],
        [Gaussian(mu, correlated_cov(variances, 0.7)),
         Gaussian(-mu, correlated_cov(variances, 0.1))],
    )
    prior = Gaussian(np.ones(d), 5.0 * np.eye(d))
    return ratio_target(prior, post, d, "mixture",
                        info={"posterior": post, "mean": -1.6 * np.ones(d), "log_z": 0.0,
                              "mode_proportion": mixture_mode_proportion(d)})


def mixture_mode_proportion(d):
    """Exact expectation of the positive-sign proportion under the mixture target."""
    sd = np.sqrt(np.linspace(1.0, 2.0, d))
    p_pos = 0.3 * norm.cdf(4.0 / sd) + 0.7 * norm.cdf(-4.0 / sd)
    return float(np.mean(p_pos))


def build_student_model(d):
    """Isotropic t_3 tempered towards a shifted, correlated t_10."""
    if d < 2:
        raise ConfigError("student model needs d >= 2")
    mean, scale = shift_moments(d)
    prior = StudentT(np.zeros(d), np.eye(d), STUDENT_PRIOR_DOF)
    post = StudentT(mean, scale, STUDENT_TARGET_DOF)
    nu = STUDENT_TARGET_DOF
    return ratio_target(prior, post, d, "student",
                        info={"posterior": post, "mean": mean,
                              "cov": scale * nu / (nu - 2), "log_z": 0.0})
