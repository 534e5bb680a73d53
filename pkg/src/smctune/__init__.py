"""Adaptive tempered SMC with HMC, MALA and random-walk kernels and their tuners."""

from .errors import (ConfigError, ConvergenceError, DegenerateCloudError, IngestionError,
                     InvalidStateError, RegressionError)
from .kernels import HmcParams, MassMatrix, ScaleParams, hmc_step, leapfrog, mala_step, rw_step
from .smc import ParticleCloud, RunTrace, SamplerConfig, ess, next_temperature, run_sampler
from .tuning import TuningConfig, fit_eps_star, make_tuner

__all__ = [
    "ConfigError", "ConvergenceError", "DegenerateCloudError", "IngestionError",
    "InvalidStateError", "RegressionError", "HmcParams", "MassMatrix", "ScaleParams",
    "hmc_step", "leapfrog", "mala_step", "rw_step", "ParticleCloud", "RunTrace",
    "SamplerConfig", "ess", "next_temperature", "run_sampler", "TuningConfig",
    "fit_eps_star", "make_tuner",
]
