"""Adaptive tempered SMC: reweight, pick the next exponent, resample, move."""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import rng as streams
from .errors import ConfigError, DegenerateCloudError, InvalidStateError
from .kernels import KERNELS, HmcParams, MassMatrix
from .tuning import TuningConfig, make_tuner

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8


@dataclass
class ParticleCloud:
    positions: np.ndarray
    log_weights: np.ndarray
    cached_loglik: np.ndarray
    cached_logprior: np.ndarray
    resampled: bool = True

    @property
    def N(self):
        return self.positions.shape[0]

    def normalized_weights(self):
        if not np.any(np.isfinite(self.log_weights)):
            raise DegenerateCloudError("degenerate cloud: all weights are zero")
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    def mean(self):
        return self.normalized_weights() @ self.positions

    def variance(self):
        w = self.normalized_weights()
        m = w @ self.positions
        return w @ (self.positions - m) ** 2


def ess(log_weights):
    """Effective sample size ``(sum w)^2 / sum w^2`` from log weights."""
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        raise DegenerateCloudError("degenerate cloud: all weights are zero")
    return float(np.exp(2 * logsumexp(lw) - logsumexp(2 * lw)))


def _cess(delta, loglik, log_w):
    # conditional ESS: N (sum W w)^2 / sum W w^2 with W the current normalized weights
    inc = delta * loglik
    return float(loglik.size * np.exp(2 * logsumexp(log_w + inc) - logsumexp(log_w + 2 * inc)))


def next_temperature(cached_loglik, lam_prev, alpha, N=None, log_weights=None,
                     tol=1e-10, max_iter=100):
    """Largest step keeping the (conditional) ESS at ``alpha * N``, by bisection.

    With uniform current weights the criterion is the plain ESS of the
    incremental weights ``l(y|x)**(lam - lam_prev)``.
    """
    loglik = np.asarray(cached_loglik, dtype=float)
    if np.any(np.isnan(loglik)):
        raise InvalidStateError("invalid state: NaN log-likelihood in the cloud")
    N = loglik.size if N is None else N
    if not 0.0 <= lam_prev < 1.0 or not 0.0 < alpha < 1.0:
        raise ValueError("need lam_prev in [0, 1) and alpha in (0, 1)")
    if log_weights is None:
        log_w = np.full(loglik.size, -np.log(loglik.size))
    else:
        lw = np.asarray(log_weights, dtype=float)
        log_w = lw - logsumexp(lw)
    target = alpha * N
    span = 1.0 - lam_prev

    def f(delta):
        return _cess(delta, loglik, log_w)

    if f(span) >= target:
        return 1.0
    lo, hi = 0.0, span
    if f(lo) >= target:
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if f(mid) >= target:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol:
                break
        delta = 0.5 * (lo + hi)
    else:
        grid = np.linspace(0.0, span, 10001)[1:]
        vals = np.array([f(g) for g in grid])
        hits = np.flatnonzero(vals <= target)
        if hits.size == 0:
            raise DegenerateCloudError(f"no temperature increase possible from {lam_prev}")
        delta = grid[hits[0]]
    lam = lam_prev + delta
    if not lam > lam_prev:
        raise DegenerateCloudError(f"no temperature increase possible from {lam_prev}")
    return min(lam, 1.0)


def reweight(cloud, lam_prev, lam):
    """Return updated log weights and the log normalizing-constant increment."""
    if not lam > lam_prev:
        raise ValueError("reweight needs lam > lam_prev")
    inc = (lam - lam_prev) * cloud.cached_loglik
    w_prev = cloud.log_weights - logsumexp(cloud.log_weights)
    new = cloud.log_weights + inc
    return new, float(logsumexp(w_prev + inc))


def systematic_indices(weights, rng):
    n = weights.size
    u = (rng.uniform() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right")


def multinomial_indices(weights, rng):
    return rng.choice(weights.size, size=weights.size, p=weights)


def resample(cloud, rng, scheme="systematic"):
    w = cloud.normalized_weights()
    if scheme == "systematic":
        idx = systematic_indices(w, rng)
    elif scheme == "multinomial":
        idx = multinomial_indices(w, rng)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return ParticleCloud(cloud.positions[idx], np.zeros(cloud.N), cloud.cached_loglik[idx],
                         cloud.cached_logprior[idx], True)


def update_mass_matrix(cloud):
    """Diagonal mass: inverse of the weighted particle variances (floored)."""
    if cloud.N < 2:
        raise ValueError("mass matrix needs at least two particles")
    return MassMatrix(1.0 / np.maximum(cloud.variance(), VARIANCE_FLOOR))


def lag_correlation(a, b):
    """Componentwise Pearson correlation; unmixed (1.0) where either side is constant."""
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    sa = np.sqrt(np.sum(a * a, axis=0))
    sb = np.sqrt(np.sum(b * b, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.sum(a * b, axis=0) / (sa * sb)
    return np.where((sa > 0) & (sb > 0), rho, 1.0)


@dataclass
class MoveReport:
    steps: int
    acceptance: float
    max_steps_hit: bool
    sweeps: list = field(default_factory=list)  # (x_before, x_after) per sweep, when kept


def adaptive_move(cloud, kernel, params, lam, target, mass, rng_for_sweep, alpha_prime=0.1,
                  max_steps=50, fixed_steps=None, observe=None, keep_sweeps=False):
    """Apply ``kernel`` until the running product of lag-one correlations of
    ``x + x**2`` drops below ``alpha_prime`` for more than 90% of the
    components (at least one sweep, at most ``max_steps``).

    ``rng_for_sweep(k)`` supplies the generator for sweep ``k``. Returns the
    moved cloud and a MoveReport.
    """
    step = KERNELS[kernel] if isinstance(kernel, str) else kernel
    x = cloud.positions
    lp, ll = cloud.cached_logprior, cloud.cached_loglik
    d = x.shape[1]
    prod = np.ones(d)
    acc, sweeps = [], []
    k = 0
    while True:
        k += 1
        out = step(x, params, lam, target, mass, rng_for_sweep(k))
        rho = lag_correlation(x + x**2, out.new_position + out.new_position**2)
        prod = prod * rho
        if observe is not None:
            observe(x, out, params, mass)
        if keep_sweeps:
            sweeps.append((x, out.new_position))
        acc.append(float(np.mean(np.minimum(1.0, np.exp(np.minimum(out.delta_E, 0.0))))))
        x, lp, ll = out.new_position, out.new_logprior, out.new_loglik
        if fixed_steps is not None:
            if k >= fixed_steps:
                break
            continue
        if np.mean(prod > alpha_prime) < 0.1:
            break
        if k >= max_steps:
            log.warning("move step cap %d reached at lambda=%.4g", max_steps, lam)
            break
    hit = fixed_steps is None and k >= max_steps and np.mean(prod > alpha_prime) >= 0.1
    moved = ParticleCloud(x, cloud.log_weights.copy(), ll, lp, cloud.resampled)
    return moved, MoveReport(k, float(np.mean(acc)), bool(hit), sweeps)


@dataclass
class SamplerConfig:
    model: dict = field(default_factory=lambda: {"name": "gaussian", "dim": 10})
    kernel: str = "hmc"
    tuner: str = "pr"
    N: int = 1024
    alpha: float = 0.9
    alpha_prime: float = 0.1
    max_move_steps: int = 50
    resample_trigger: float = 0.5
    resampling: str = "systematic"
    seed: int = 0
    fixed_ladder: Optional[list] = None
    fixed_move_steps: Optional[int] = None
    fixed_params: Optional[dict] = None
    final_move: bool = True
    tuning: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel: unknown kernel {self.kernel!r}")
        if self.tuner not in ("ft", "pr", "fixed"):
            raise ConfigError(f"tuner: unknown tuner {self.tuner!r}")
        if not isinstance(self.N, int) or self.N < 2:
            raise ConfigError("N: need an integer >= 2")
        if self.tuner == "pr" and self.N < 8:
            raise ConfigError("N: pre-tuning needs at least 8 particles")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha: must lie in (0, 1)")
        if not 0 < self.alpha_prime <= 1:
            raise ConfigError("alpha_prime: must lie in (0, 1]")
        if not isinstance(self.max_move_steps, int) or self.max_move_steps < 1:
            raise ConfigError("max_move_steps: need an integer >= 1")
        if not 0 <= self.resample_trigger <= 1:
            raise ConfigError("resample_trigger: must lie in [0, 1] (1 = always resample)")
        if self.resampling not in ("systematic", "multinomial"):
            raise ConfigError(f"resampling: unknown scheme {self.resampling!r}")
        if self.fixed_ladder is not None:
            lad = np.asarray(self.fixed_ladder, dtype=float)
            if lad.size < 2 or lad[0] != 0 or lad[-1] != 1 or np.any(np.diff(lad) <= 0):
                raise ConfigError("fixed_ladder: must increase strictly from 0 to 1")
        if self.fixed_move_steps is not None and self.fixed_move_steps < 1:
            raise ConfigError("fixed_move_steps: need an integer >= 1")
        unknown = set(self.tuning) - {f.name for f in fields(TuningConfig)}
        if unknown:
            raise ConfigError(f"tuning: unknown keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


TRACE_COLUMNS = [
    "t", "phase", "lambda", "ess", "resampled", "move_steps", "max_steps_hit", "acceptance",
    "logz_increment", "grad_evals", "lik_evals", "eps_q10", "eps_q50", "eps_q90",
    "L_q10", "L_q50", "L_q90", "eps_star", "L_max", "wall_time",
]


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    log_z: float = 0.0
    mean: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None
    final_cloud: Optional[ParticleCloud] = None
    final_sweeps: list = field(default_factory=list)
    final_mass: Optional[MassMatrix] = None
    grad_evals: int = 0
    lik_evals: int = 0

    @property
    def lambdas(self):
        return [0.0] + [r["lambda"] for r in self.records if r["phase"] != "final"]

    def summary(self):
        steps = [r for r in self.records if r["phase"] == "step"]
        return {
            "log_z": self.log_z,
            "mean": list(map(float, self.mean)),
            "variance": list(map(float, self.variance)),
            "n_temperatures": len(self.lambdas),
            "mean_move_steps": float(np.mean([r["move_steps"] for r in steps])) if steps else 0.0,
            "mean_acceptance": float(np.mean([r["acceptance"] for r in steps])) if steps else float("nan"),
            "grad_evals": self.grad_evals,
            "lik_evals": self.lik_evals,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
            w.writeheader()
            for r in self.records:
                w.writerow({k: r.get(k, "") for k in TRACE_COLUMNS})

    def write_json(self, path, extra=None):
        with open(path, "w") as fh:
            json.dump({**self.summary(), **(extra or {})}, fh, indent=1)


def _param_summary(params, tuner):
    row = {}
    if params is not None:
        vals = params.eps if isinstance(params, HmcParams) else params.sigma
        q = np.quantile(np.broadcast_to(vals, (1,)) if np.ndim(vals) == 0 else vals, [0.1, 0.5, 0.9])
        row.update(eps_q10=q[0], eps_q50=q[1], eps_q90=q[2])
        if isinstance(params, HmcParams):
            Lq = np.quantile(np.atleast_1d(params.L), [0.1, 0.5, 0.9])
            row.update(L_q10=Lq[0], L_q50=Lq[1], L_q90=Lq[2])
    row.update(tuner.state())
    return row


def _init_cloud(target, N, rng):
    x = target.sample_prior(rng, N)
    lp, ll = target.evaluate(x)
    return ParticleCloud(x, np.zeros(N), ll, lp, True)


def run_sampler(config, target, tuner=None, seed=None):
    """Run the tempered SMC sampler and return its RunTrace."""
    seed = config.seed if seed is None else seed
    tcfg = TuningConfig(**config.tuning)
    tuner = tuner or make_tuner(config.kernel, config.tuner, tcfg, config.fixed_params)
    target.reset_counters()
    t0 = time.perf_counter()
    trace = RunTrace()
    N = config.N
    ladder = None if config.fixed_ladder is None else [float(v) for v in config.fixed_ladder]

    def record(**row):
        row.update(grad_evals=target.grad_evals, lik_evals=target.lik_evals,
                   wall_time=time.perf_counter() - t0)
        trace.records.append(row)

    def move(cloud, lam, t, phase):
        mass = update_mass_matrix(cloud)
        params = tuner.propose(cloud.positions, lam, target, mass, streams.stream(seed, t, 0, streams.TUNE))
        moved, rep = adaptive_move(
            cloud, config.kernel, params, lam, target, mass,
            lambda k: streams.stream(seed, t, k, streams.MOVE),
            config.alpha_prime, config.max_move_steps, config.fixed_move_steps,
            observe=tuner.observe, keep_sweeps=phase == "final")
        return moved, rep, mass, params

    def advance(cloud, lam, t):
        # one iteration: move (after the first), pick the exponent, reweight, resample
        rep = params = None
        if t > 1:
            cloud, rep, _, params = move(cloud, lam, t, "step")
        if ladder is not None:
            new_lam = ladder[t] if t < len(ladder) else 1.0
        else:
            new_lam = next_temperature(cloud.cached_loglik, lam, config.alpha, N,
                                       log_weights=None if cloud.resampled else cloud.log_weights)
        log_w, inc = reweight(cloud, lam, new_lam)
        cloud = ParticleCloud(cloud.positions, log_w, cloud.cached_loglik, cloud.cached_logprior, False)
        trace.log_z += inc
        cur_ess = ess(log_w)
        resampled = cur_ess < config.resample_trigger * N or config.resample_trigger >= 1
        if resampled:
            cloud = resample(cloud, streams.stream(seed, t, 0, streams.RESAMPLE), config.resampling)
        row = dict(t=t, phase="step" if rep else "init", **{"lambda": new_lam}, ess=cur_ess,
                   resampled=int(resampled), logz_increment=inc,
                   move_steps=rep.steps if rep else 0,
                   max_steps_hit=int(rep.max_steps_hit) if rep else 0,
                   acceptance=rep.acceptance if rep else "")
        row.update(_param_summary(params, tuner) if rep else {})
        record(**row)
        return cloud, new_lam

    cloud = _init_cloud(target, N, streams.stream(seed, 0, 0, streams.INIT))
    lam, t = 0.0, 1
    while lam < 1.0:
        try:
            cloud, lam = advance(cloud, lam, t)
        except Exception as exc:
            exc.args = (f"step {t} (lambda={lam:.6g}): {exc.args[0] if exc.args else exc}",
                        *exc.args[1:])
            raise
        t += 1

    if config.final_move:
        cloud, rep, mass, params = move(cloud, 1.0, t, "final")
        trace.final_sweeps = rep.sweeps
        trace.final_mass = mass
        row = dict(t=t, phase="final", **{"lambda": 1.0}, ess=ess(cloud.log_weights),
                   resampled=0, logz_increment=0.0, move_steps=rep.steps,
                   max_steps_hit=int(rep.max_steps_hit), acceptance=rep.acceptance)
        row.update(_param_summary(params, tuner))
        record(**row)

    trace.final_cloud = cloud
    trace.mean = cloud.mean()
    trace.variance = cloud.variance()
    trace.grad_evals = target.grad_evals
    trace.lik_evals = target.lik_evals
    return trace
