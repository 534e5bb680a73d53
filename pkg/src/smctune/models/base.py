"""Tempered target interface and closed-form density helpers."""

import threading

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from ..errors import ConfigError, InvalidStateError


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


class TemperedTarget:
    """Prior/likelihood pair defining the path ``log p(x) + lam * log l(y|x)``.

    All density callables take an ``(n, d)`` array and return ``(n,)`` values
    (or ``(n, d)`` gradients). The public methods also accept a single point
    of shape ``(d,)``.

    Evaluation counters count points, not calls: a batch of ``n`` particles
    adds ``n``, a single point adds one.
    """

    def __init__(self, dim, log_prior, log_likelihood, grad_log_prior,
                 grad_log_likelihood, prior_sampler, name="target", info=None):
        if dim < 1:
            raise ConfigError("dim must be positive")
        self.dim = int(dim)
        self.log_prior = log_prior
        self.log_likelihood = log_likelihood
        self.grad_log_prior = grad_log_prior
        self.grad_log_likelihood = grad_log_likelihood
        self.prior_sampler = prior_sampler
        self.name = name
        self.info = {} if info is None else dict(info)
        self._lock = threading.Lock()
        self.lik_evals = 0
        self.grad_evals = 0

    def __repr__(self):
        return f"TemperedTarget(name={self.name!r}, dim={self.dim})"

    def _check(self, x, lam=None):
        if x.shape[-1] != self.dim:
            raise InvalidStateError(f"invalid state: expected dimension {self.dim}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise InvalidStateError("invalid state: non-finite coordinates")
        if lam is not None and not 0.0 <= lam <= 1.0:
            raise ValueError(f"temperature {lam} outside [0, 1]")

    def _count(self, lik=0, grad=0):
        with self._lock:
            self.lik_evals += lik
            self.grad_evals += grad

    def reset_counters(self):
        with self._lock:
            self.lik_evals = 0
            self.grad_evals = 0

    def evaluate(self, x):
        """Return ``(log_prior, log_likelihood)``; one likelihood evaluation per point."""
        xb, single = _as_batch(x)
        self._check(xb)
        self._count(lik=xb.shape[0])
        lp = self.log_prior(xb)
        ll = self.log_likelihood(xb)
        if single:
            return float(lp[0]), float(ll[0])
        return lp, ll

    def tempered_logpdf(self, x, lam):
        xb, single = _as_batch(x)
        self._check(xb, lam)
        self._count(lik=xb.shape[0])
        out = self.log_prior(xb) + lam * self.log_likelihood(xb)
        return float(out[0]) if single else out

    def tempered_grad(self, x, lam):
        xb, single = _as_batch(x)
        self._check(xb, lam)
        self._count(grad=xb.shape[0])
        out = self.grad_log_prior(xb) + lam * self.grad_log_likelihood(xb)
        return out[0] if single else out

    def sample_prior(self, rng, n):
        return np.asarray(self.prior_sampler(rng, n), dtype=float).reshape(n, self.dim)


class Gaussian:
    """Multivariate normal with a cached Cholesky factor."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = self.mean.size
        try:
            self.chol = linalg.cholesky(self.cov, lower=True)
        except linalg.LinAlgError as exc:
            raise ConfigError(f"covariance is not positive definite: {exc}") from None
        self.precision = linalg.cho_solve((self.chol, True), np.eye(d))
        self._const = -0.5 * d * np.log(2 * np.pi) - np.sum(np.log(np.diag(self.chol)))

    @property
    def dim(self):
        return self.mean.size

    def quad(self, x):
        z = linalg.solve_triangular(self.chol, (x - self.mean).T, lower=True)
        return np.sum(z * z, axis=0)

    def logpdf(self, x):
        return self._const - 0.5 * self.quad(x)

    def grad(self, x):
        return -(x - self.mean) @ self.precision

    def sample(self, rng, n):
        return self.mean + rng.standard_normal((n, self.dim)) @ self.chol.T


class StudentT:
    """Multivariate Student distribution with location, scale matrix and ``nu`` dof."""

    def __init__(self, loc, scale, nu):
        self.nu = float(nu)
        self.base = Gaussian(loc, scale)
        d = self.base.dim
        self._const = (gammaln((self.nu + d) / 2) - gammaln(self.nu / 2)
                       - 0.5 * d * np.log(self.nu * np.pi)
                       - np.sum(np.log(np.diag(self.base.chol))))

    @property
    def dim(self):
        return self.base.dim

    def logpdf(self, x):
        q = self.base.quad(x)
        return self._const - 0.5 * (self.nu + self.dim) * np.log1p(q / self.nu)

    def grad(self, x):
        q = self.base.quad(x)
        return ((self.nu + self.dim) / (self.nu + q))[:, None] * self.base.grad(x)

    def sample(self, rng, n):
        g = rng.chisquare(self.nu, size=n)
        z = self.base.sample(rng, n) - self.base.mean
        return self.base.mean + z / np.sqrt(g / self.nu)[:, None]


def correlated_cov(variances, rho):
    """Covariance ``D^{1/2} C D^{1/2}`` with constant off-diagonal correlation ``rho``."""
    variances = np.asarray(variances, dtype=float)
    d = variances.size
    corr = np.full((d, d), rho)
    np.fill_diagonal(corr, 1.0)
    s = np.sqrt(variances)
    return (s[:, None] * s[None, :]) * corr


def ratio_target(prior, posterior, dim, name, info=None):
    """Target whose likelihood is the density ratio ``posterior / prior``.

    Both arguments expose ``logpdf``, ``grad`` and ``sample``. With normalized
    densities the path runs between two probability measures, so the true
    log normalizing-constant ratio is zero.
    """
    return TemperedTarget(
        dim,
        log_prior=prior.logpdf,
        log_likelihood=lambda x: posterior.logpdf(x) - prior.logpdf(x),
        grad_log_prior=prior.grad,
        grad_log_likelihood=lambda x: posterior.grad(x) - prior.grad(x),
        prior_sampler=prior.sample,
        name=name,
        info=info,
    )
