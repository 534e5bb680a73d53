"""Adaptation of kernel parameters across the particle cloud.

Two schemes are provided:

* FT: resample the previous step's parameters in proportion to their
  Rao-Blackwellized jumping-distance utility, then perturb them.
* PR: before each move, run one exploratory trajectory per particle with
  uniformly drawn parameters, fit a median regression of the energy error to
  bound the step size, and draw production parameters from the explored ones
  weighted by utility.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import RegressionError
from .kernels import KERNELS, HmcParams, ScaleParams, hmc_step

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = {"hmc": 0.9, "mala": 0.574, "rw": 0.234}
ENERGY_CAP = 1e4  # |delta_E| fed to the regression for diverged trajectories
EXPLORE_FLOOR = 1e-6


@dataclass
class TuningConfig:
    noise_sd: float = 0.015
    eps_init: float = 0.1
    L_init: int = 100
    sigma_init: float = 1.0
    lmax_step: int = 5
    lmax_share: float = 0.1
    lmax_high: float = 0.9
    lmax_low: float = 0.5
    lmax_floor: int = 5
    target_acceptance: dict = field(default_factory=lambda: dict(TARGET_ACCEPTANCE))


@dataclass
class ParamPopulation:
    params: object  # HmcParams or ScaleParams with (N,) arrays
    utilities: np.ndarray
    eps_star: float
    L_max: int = 1

    def __post_init__(self):
        u = np.asarray(self.utilities, dtype=float)
        if np.any(~np.isfinite(u)) or np.any(u < 0):
            raise ValueError("utilities must be finite and nonnegative")
        if not self.eps_star > 0 or self.L_max < 1:
            raise ValueError("eps_star must be positive and L_max >= 1")
        self.utilities = u


@dataclass(frozen=True)
class QuadraticFit:
    alpha0: float
    alpha1: float

    def __call__(self, eps):
        return self.alpha0 + self.alpha1 * np.asarray(eps) ** 2


def wsjd_utility(x_prev, x_hat, L, delta_E, mass):
    """Squared jump to the proposal, mass-weighted, per leapfrog step, times acceptance.

    The distance is ``sum_j mass_j * (x_prev_j - x_hat_j)**2``, i.e. the
    Mahalanobis norm for the particle covariance that the mass inverts.
    """
    diff = np.asarray(x_prev, dtype=float) - np.asarray(x_hat, dtype=float)
    jump = np.sum(diff * diff * mass.diag, axis=-1)
    with np.errstate(over="ignore"):
        acc = np.minimum(1.0, np.exp(np.minimum(np.asarray(delta_E, dtype=float), 0.0)))
    return jump / np.asarray(L, dtype=float) * acc


def _categorical(weights, n, rng):
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        log.warning("all utilities are zero; drawing parameters uniformly")
        return rng.integers(0, w.size, size=n)
    return rng.choice(w.size, size=n, p=w / total)


def truncated_normal(mean, sd, rng):
    """Normal(mean, sd**2) restricted to (0, inf), by inverse CDF."""
    mean = np.asarray(mean, dtype=float)
    if sd == 0:
        return mean.copy()
    lo = ndtr(-mean / sd)
    u = lo + (1.0 - lo) * rng.uniform(size=mean.shape)
    x = mean + sd * ndtri(u)
    return np.maximum(x, np.finfo(float).tiny)


def ft_update(pop, rng, noise_sd=0.015, perturb_L=True):
    """Draw each particle's parameters from the utility-weighted perturbation mixture."""
    n = pop.utilities.size
    anc = _categorical(pop.utilities, n, rng)
    if isinstance(pop.params, HmcParams):
        eps = truncated_normal(pop.params.eps[anc], noise_sd, rng)
        L = pop.params.L[anc]
        if perturb_L:
            L = np.clip(L + rng.integers(-1, 2, size=n), 1, pop.L_max)
        return HmcParams(eps, L)
    return ScaleParams(truncated_normal(pop.params.sigma[anc], noise_sd, rng))


def median_regression(y, x, max_iter=50, tol=1e-10):
    """L1 fit of ``y ~ a0 + a1 * x`` by iteratively reweighted least squares."""
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    for _ in range(max_iter):
        w = 1.0 / np.maximum(np.abs(y - design @ coef), 1e-8)
        sw = np.sqrt(w)
        new, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        change = np.max(np.abs(new - coef)) / max(np.max(np.abs(coef)), 1e-300)
        coef = new
        if change < tol:
            break
    return coef


def fit_eps_star(abs_delta_E, eps_samples, target=abs(np.log(0.9)), eps_star_prev=None):
    """Fit ``|dE| = a0 + a1 eps^2`` by median regression and solve for ``target``.

    Returns ``(QuadraticFit, eps_star)``. When the fit has no positive root
    the previous bound is halved (intercept already above target) or doubled
    (no detectable growth of the error over the explored range).
    """
    y = np.minimum(np.nan_to_num(np.abs(np.asarray(abs_delta_E, dtype=float)),
                                 nan=ENERGY_CAP, posinf=ENERGY_CAP), ENERGY_CAP)
    eps = np.asarray(eps_samples, dtype=float)
    if y.size < 8 or y.size != eps.size:
        raise RegressionError("pretune regression failed: need at least 8 paired samples")
    if np.ptp(eps) == 0:
        raise RegressionError("pretune regression failed: degenerate design")
    a0, a1 = median_regression(y, eps**2)
    if not (np.isfinite(a0) and np.isfinite(a1)):
        raise RegressionError("pretune regression failed: non-finite coefficients")
    fit = QuadraticFit(float(a0), float(a1))
    prev = float(eps.max()) if eps_star_prev is None else float(eps_star_prev)
    if a1 > 0 and a0 < target:
        return fit, float(np.sqrt((target - a0) / a1))
    if a0 >= target:
        log.info("median regression intercept %.3g above target; shrinking bound", a0)
        return fit, 0.5 * prev
    log.info("energy error flat over explored range; growing bound")
    return fit, 2.0 * prev


def adapt_lmax(sampled_L, L_max, step=5, share=0.1, high=0.9, low=0.5, floor=5):
    sampled_L = np.asarray(sampled_L)
    if np.mean(sampled_L > high * L_max) >= share:
        return L_max + step
    if np.mean(sampled_L > low * L_max) < share:
        return max(L_max - step, floor)
    return L_max


def ft_init(kernel, n, rng, cfg=None):
    """Starting population: eps ~ U[0, 0.1], L ~ U{1..100} or sigma ~ U[0, 1]."""
    cfg = cfg or TuningConfig()
    tiny = np.finfo(float).tiny
    if kernel == "hmc":
        eps = np.maximum(rng.uniform(0.0, cfg.eps_init, size=n), tiny)
        L = rng.integers(1, cfg.L_init + 1, size=n)
        return ParamPopulation(HmcParams(eps, L), np.zeros(n), cfg.eps_init, cfg.L_init)
    sigma = np.maximum(rng.uniform(0.0, cfg.sigma_init, size=n), tiny)
    return ParamPopulation(ScaleParams(sigma), np.zeros(n), cfg.sigma_init, 1)


pr_init = ft_init


def _explore(x, lam, target, mass, kernel, upper, L_max, rng):
    n = x.shape[0]
    eps = rng.uniform(EXPLORE_FLOOR * upper, upper, size=n)
    if kernel == "hmc":
        params = HmcParams(eps, rng.integers(1, L_max + 1, size=n))
        out = hmc_step(x, params, lam, target, mass, rng)
        util = wsjd_utility(x, out.proposal_position, params.L, out.delta_E, mass)
    else:
        params = ScaleParams(eps)
        out = KERNELS[kernel](x, params, lam, target, mass, rng)
        util = wsjd_utility(x, out.proposal_position, 1, out.delta_E, mass)
    return params, out, util


def pr_pretune(x, lam, target, mass, eps_star_prev, L_max, rng, cfg=None):
    """Exploration pass and production draw for HMC.

    ``x`` is left untouched. Returns ``(population, eps_star_new, L_max_new)``
    where ``population`` holds the production (eps, L) per particle.
    """
    cfg = cfg or TuningConfig()
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 8:
        raise RegressionError("pretune regression failed: need at least 8 particles")
    params, out, util = _explore(x, lam, target, mass, "hmc", eps_star_prev, L_max, rng)
    _, eps_star = fit_eps_star(np.abs(out.delta_E), params.eps,
                               abs(np.log(cfg.target_acceptance["hmc"])), eps_star_prev)
    idx = _categorical(util, x.shape[0], rng)
    prod = HmcParams(params.eps[idx], params.L[idx])
    L_max_new = adapt_lmax(prod.L, L_max, cfg.lmax_step, cfg.lmax_share, cfg.lmax_high,
                           cfg.lmax_low, cfg.lmax_floor)
    pop = ParamPopulation(prod, util[idx], eps_star, L_max_new)
    pop.explored = (params, out.delta_E, util)
    return pop, eps_star, L_max_new


def scale_pretune(x, lam, target, mass, kernel, scale_star_prev, rng, cfg=None):
    """Exploration pass and production draw for RW or MALA scales."""
    cfg = cfg or TuningConfig()
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 8:
        raise RegressionError("pretune regression failed: need at least 8 particles")
    params, out, util = _explore(x, lam, target, mass, kernel, scale_star_prev, 1, rng)
    _, star = fit_eps_star(np.abs(out.delta_E), params.sigma,
                           abs(np.log(cfg.target_acceptance[kernel])), scale_star_prev)
    idx = _categorical(util, x.shape[0], rng)
    pop = ParamPopulation(ScaleParams(params.sigma[idx]), util[idx], star, 1)
    pop.explored = (params, out.delta_E, util)
    return pop, star


class FixedTuner:
    name = "fixed"

    def __init__(self, kernel, params):
        self.kernel = kernel
        self.fixed = params

    def propose(self, x, lam, target, mass, rng):
        return self.fixed

    def observe(self, x_prev, outcome, params, mass):
        pass

    def state(self):
        return {}


class FTTuner:
    """Parameters follow the particles' performance from the previous move step."""

    name = "ft"

    def __init__(self, kernel, cfg=None):
        self.kernel = kernel
        self.cfg = cfg or TuningConfig()
        self.pop = None
        self._observed = False

    def propose(self, x, lam, target, mass, rng):
        if self.pop is None or not self._observed:
            self.pop = ft_init(self.kernel, x.shape[0], rng, self.cfg)
            return self.pop.params
        params = ft_update(self.pop, rng, self.cfg.noise_sd)
        self.pop = ParamPopulation(params, np.zeros(x.shape[0]), self.pop.eps_star, self.pop.L_max)
        self._observed = False
        return params

    def observe(self, x_prev, outcome, params, mass):
        L = params.L if isinstance(params, HmcParams) else 1
        self.pop.utilities = wsjd_utility(x_prev, outcome.proposal_position, L,
                                          outcome.delta_E, mass)
        self._observed = True

    def state(self):
        return {"eps_star": self.pop.eps_star, "L_max": self.pop.L_max} if self.pop else {}


class PRTuner:
    """Pre-tuning pass before every move step."""

    name = "pr"

    def __init__(self, kernel, cfg=None):
        self.kernel = kernel
        self.cfg = cfg or TuningConfig()
        self.star = self.cfg.eps_init if kernel == "hmc" else self.cfg.sigma_init
        self.L_max = self.cfg.L_init if kernel == "hmc" else 1

    def propose(self, x, lam, target, mass, rng):
        if self.kernel == "hmc":
            pop, self.star, self.L_max = pr_pretune(x, lam, target, mass, self.star,
                                                    self.L_max, rng, self.cfg)
        else:
            pop, self.star = scale_pretune(x, lam, target, mass, self.kernel, self.star,
                                           rng, self.cfg)
        return pop.params

    def observe(self, x_prev, outcome, params, mass):
        pass

    def state(self):
        return {"eps_star": self.star, "L_max": self.L_max}


def make_tuner(kernel, tuner, cfg=None, fixed=None):
    if tuner == "ft":
        return FTTuner(kernel, cfg)
    if tuner == "pr":
        return PRTuner(kernel, cfg)
    if tuner == "fixed":
        if fixed is None:
            fixed = {"eps": 0.1, "L": 10} if kernel == "hmc" else {"sigma": 0.5}
        return FixedTuner(kernel, HmcParams(**fixed) if kernel == "hmc" else ScaleParams(**fixed))
    raise ValueError(f"unknown tuner {tuner!r}")
