"""Metropolis-type move kernels: HMC (leapfrog), MALA and random walk.

Every step function works on a batch of particles ``x`` of shape ``(n, d)``
(a single ``(d,)`` point is also accepted) with per-particle tuning
parameters, and targets ``p(x) l(y|x)**lam`` preconditioned by a diagonal
mass matrix.

``delta_E`` is always the log acceptance exponent ``H(old) - H(new)``, so
``min(1, exp(delta_E))`` is the acceptance probability.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError

DIVERGENCE_THRESHOLD = 1e4


@dataclass(frozen=True)
class MassMatrix:
    diag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float)
        if diag.ndim != 1 or not np.all(np.isfinite(diag)) or not np.all(diag > 0):
            raise ValueError("mass entries must be positive and finite")
        object.__setattr__(self, "diag", diag)

    @classmethod
    def identity(cls, d):
        return cls(np.ones(d))

    @property
    def inv_diag(self):
        return 1.0 / self.diag

    @property
    def sqrt_diag(self):
        return np.sqrt(self.diag)


@dataclass(frozen=True)
class HmcParams:
    eps: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        L = np.asarray(self.L)
        if not np.all(eps > 0) or not np.all(np.isfinite(eps)):
            raise ValueError("step sizes must be positive")
        if not np.all(L >= 1) or not np.all(L == np.round(L)):
            raise ValueError("leapfrog counts must be integers >= 1")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "L", L.astype(int))


@dataclass(frozen=True)
class ScaleParams:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if not np.all(sigma > 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("proposal scales must be positive")
        object.__setattr__(self, "sigma", sigma)


@dataclass
class MoveOutcome:
    new_position: np.ndarray
    proposal_position: np.ndarray
    delta_E: np.ndarray
    accepted: np.ndarray
    grads_used: np.ndarray
    new_logprior: np.ndarray
    new_loglik: np.ndarray

    def first(self):
        return MoveOutcome(self.new_position[0], self.proposal_position[0], float(self.delta_E[0]),
                           bool(self.accepted[0]), int(self.grads_used[0]),
                           float(self.new_logprior[0]), float(self.new_loglik[0]))


def _batch(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def kinetic(p, mass):
    return 0.5 * np.sum(p * p * mass.inv_diag, axis=-1)


def hamiltonian(x, p, lam, target, mass):
    """Negative joint log density of position and momentum."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidStateError("invalid state: non-finite momentum")
    return -target.tempered_logpdf(x, lam) + kinetic(p, mass)


def _integrate(xb, pb, eps, L, lam, target, mass):
    n = xb.shape[0]
    inv = mass.inv_diag
    diverged = np.zeros(n, dtype=bool)
    grads = np.ones(n, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        pb += 0.5 * eps[:, None] * target.tempered_grad(xb, lam)
        diverged |= ~np.all(np.isfinite(pb), axis=1)
        for s in range(int(L.max())):
            act = np.flatnonzero((L > s) & ~diverged)
            if act.size == 0:
                break
            xa = xb[act] + eps[act, None] * pb[act] * inv
            ok = np.all(np.isfinite(xa), axis=1)
            diverged[act[~ok]] = True
            act, xa = act[ok], xa[ok]
            xb[act] = xa
            g = target.tempered_grad(xa, lam)
            grads[act] += 1
            kick = np.where(L[act] == s + 1, 0.5, 1.0) * eps[act]
            pa = pb[act] + kick[:, None] * g
            ok = np.all(np.isfinite(pa), axis=1)
            diverged[act[~ok]] = True
            pb[act[ok]] = pa[ok]
    return xb, pb, diverged, grads


def leapfrog(x, p, eps, L, lam, target, mass):
    """Run ``L`` leapfrog steps per particle.

    Consecutive half-kicks are fused, so a trajectory of length ``L`` costs
    ``L + 1`` gradient evaluations. Returns ``(x_hat, p_hat, diverged)``;
    a diverged particle is frozen at its last finite state.
    """
    xb, single = _batch(x)
    pb = np.atleast_2d(np.asarray(p, dtype=float)).copy()
    n = xb.shape[0]
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    L = np.broadcast_to(np.asarray(L, dtype=int), (n,))
    if np.any(eps <= 0) or np.any(L < 1):
        raise ValueError("leapfrog needs eps > 0 and L >= 1")
    xb, pb, diverged, _ = _integrate(xb.copy(), pb, eps, L, lam, target, mass)
    if single:
        return xb[0], pb[0], bool(diverged[0])
    return xb, pb, diverged


def _accept(x, x_hat, lp0, ll0, lp1, ll1, delta, rng, grads):
    u = rng.uniform(size=delta.shape)
    accepted = np.log(u) <= delta
    new = np.where(accepted[:, None], x_hat, x)
    return MoveOutcome(new, x_hat, delta, accepted, grads,
                       np.where(accepted, lp1, lp0), np.where(accepted, ll1, ll0))


def _evaluate_finite(target, x, ok):
    lp = np.full(x.shape[0], -np.inf)
    ll = np.full(x.shape[0], -np.inf)
    if np.any(ok):
        lp[ok], ll[ok] = target.evaluate(x[ok])
    return lp, ll


def _finish(delta, bad):
    delta = np.where(bad | ~np.isfinite(delta) | (np.abs(delta) > DIVERGENCE_THRESHOLD),
                     -np.inf, delta)
    return delta


def hmc_step(x, params, lam, target, mass, rng):
    """One HMC transition per particle with ``params`` = HmcParams."""
    xb, single = _batch(x)
    n, d = xb.shape
    p = rng.standard_normal((n, d)) * mass.sqrt_diag
    lp0, ll0 = target.evaluate(xb)
    eps = np.broadcast_to(params.eps, (n,))
    L = np.broadcast_to(params.L, (n,))
    x_hat, p_hat, div, grads = _integrate(xb.copy(), p.copy(), eps, L, lam, target, mass)
    lp1, ll1 = _evaluate_finite(target, x_hat, ~div)
    with np.errstate(invalid="ignore", over="ignore"):
        h0 = -(lp0 + lam * ll0) + kinetic(p, mass)
        h1 = -(lp1 + lam * ll1) + kinetic(p_hat, mass)
        delta = _finish(h0 - h1, div)
    out = _accept(xb, x_hat, lp0, ll0, lp1, ll1, delta, rng, grads)
    return out.first() if single else out


def mala_step(x, params, lam, target, mass, rng):
    """Langevin proposal ``x + s^2/2 M^-1 grad + s M^-1/2 xi`` with exact MH correction."""
    xb, single = _batch(x)
    n, d = xb.shape
    sigma = np.broadcast_to(params.sigma, (n,))[:, None]
    xi = rng.standard_normal((n, d))
    inv = mass.inv_diag
    lp0, ll0 = target.evaluate(xb)
    g0 = target.tempered_grad(xb, lam)
    with np.errstate(over="ignore", invalid="ignore"):
        fwd = xb + 0.5 * sigma**2 * inv * g0
        x_hat = fwd + sigma * np.sqrt(inv) * xi
        ok = np.all(np.isfinite(x_hat), axis=1)
        lp1, ll1 = _evaluate_finite(target, x_hat, ok)
        g1 = np.zeros_like(xb)
        if np.any(ok):
            g1[ok] = target.tempered_grad(x_hat[ok], lam)
        bwd = x_hat + 0.5 * sigma**2 * inv * g1
        var = sigma**2 * inv
        log_q_fwd = -0.5 * np.sum((x_hat - fwd) ** 2 / var, axis=1)
        log_q_bwd = -0.5 * np.sum((xb - bwd) ** 2 / var, axis=1)
        delta = (lp1 + lam * ll1) - (lp0 + lam * ll0) + log_q_bwd - log_q_fwd
        delta = _finish(delta, ~ok)
    out = _accept(xb, x_hat, lp0, ll0, lp1, ll1, delta, rng, np.where(ok, 2, 1))
    return out.first() if single else out


def rw_step(x, params, lam, target, mass, rng):
    """Gaussian random-walk Metropolis with covariance ``sigma^2 M^-1``."""
    xb, single = _batch(x)
    n, d = xb.shape
    sigma = np.broadcast_to(params.sigma, (n,))[:, None]
    xi = rng.standard_normal((n, d))
    x_hat = xb + sigma * np.sqrt(mass.inv_diag) * xi
    ok = np.all(np.isfinite(x_hat), axis=1)
    lp0, ll0 = target.evaluate(xb)
    lp1, ll1 = _evaluate_finite(target, x_hat, ok)
    with np.errstate(invalid="ignore"):
        delta = _finish((lp1 + lam * ll1) - (lp0 + lam * ll0), ~ok)
    out = _accept(xb, x_hat, lp0, ll0, lp1, ll1, delta, rng, np.zeros(n, dtype=int))
    return out.first() if single else out


KERNELS = {"hmc": hmc_step, "mala": mala_step, "rw": rw_step}
