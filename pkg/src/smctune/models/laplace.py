"""Gaussian (Laplace) starting distribution for posterior targets."""

import numpy as np
from scipy import optimize

from ..errors import ConvergenceError, InvalidStateError
from .base import Gaussian, TemperedTarget


def fd_hessian(grad, x, h=1e-5):
    """Central finite differences of ``grad`` (maps (n,d) -> (n,d)); symmetrized."""
    d = x.size
    pts = np.concatenate([x + h * np.eye(d), x - h * np.eye(d)])
    g = grad(pts)
    hess = (g[:d] - g[d:]) / (2 * h)
    return 0.5 * (hess + hess.T)


def laplace_init(target, x0=None, max_iter=500):
    """Replace ``target``'s starting distribution by N(mode, H^{-1}).

    The mode of log p + log l is found by BFGS followed by Newton polishing
    with a finite-difference Hessian. The returned target keeps the same
    posterior: its likelihood is redefined as posterior / new prior, so the
    path interpolates from the Gaussian to the posterior and the log
    normalizing constant is unchanged.
    """
    d = target.dim
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)

    def logpost(x):
        return target.log_prior(x) + target.log_likelihood(x)

    def gradpost(x):
        return target.grad_log_prior(x) + target.grad_log_likelihood(x)

    g0 = gradpost(x0[None])[0]
    if not np.all(np.isfinite(g0)):
        raise InvalidStateError("invalid state: non-finite gradient at start point")

    res = optimize.minimize(lambda x: -logpost(x[None])[0], x0,
                            jac=lambda x: -gradpost(x[None])[0],
                            method="BFGS", options={"maxiter": max_iter, "gtol": 1e-8})
    mode = res.x
    for _ in range(50):
        g = gradpost(mode[None])[0]
        hess = -fd_hessian(gradpost, mode)
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian at Laplace mode", mode) from None
        mode = mode + step
        if np.max(np.abs(step)) < 1e-12 * (1 + np.max(np.abs(mode))):
            break
    else:
        raise ConvergenceError("Laplace mode search did not converge", mode)
    if not np.all(np.isfinite(mode)):
        raise ConvergenceError("Laplace mode search diverged", mode)

    precision = -fd_hessian(gradpost, mode)
    cov = np.linalg.inv(precision)
    init = Gaussian(mode, 0.5 * (cov + cov.T))

    return TemperedTarget(
        d,
        log_prior=init.logpdf,
        log_likelihood=lambda x: logpost(x) - init.logpdf(x),
        grad_log_prior=init.grad,
        grad_log_likelihood=lambda x: gradpost(x) - init.grad(x),
        prior_sampler=init.sample,
        name=f"{target.name}+laplace",
        info={**target.info, "laplace": init},
    )
