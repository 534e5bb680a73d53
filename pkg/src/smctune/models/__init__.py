from .base import Gaussian, StudentT, TemperedTarget
from .binary import BinaryDataset, build_logit_model, build_probit_model, load_binary_dataset
from .laplace import laplace_init
from .lgcp import (LgcpGrid, bin_points, build_lgcp_model, cell_intensity_scale, lgcp_covariance,
                   load_points)
from .toys import (build_gaussian_shift_model, build_mixture_model, build_student_model,
                   mixture_mode_proportion, shift_moments)


def tempered_logpdf(target, x, lam):
    return target.tempered_logpdf(x, lam)


def tempered_grad(target, x, lam):
    return target.tempered_grad(x, lam)


__all__ = [
    "BinaryDataset", "Gaussian", "LgcpGrid", "StudentT", "TemperedTarget",
    "bin_points", "build_gaussian_shift_model", "cell_intensity_scale", "lgcp_covariance", "build_lgcp_model", "build_logit_model",
    "build_mixture_model", "build_probit_model", "build_student_model", "laplace_init",
    "load_binary_dataset", "load_points", "mixture_mode_proportion", "shift_moments",
    "tempered_grad", "tempered_logpdf",
]
