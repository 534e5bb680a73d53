"""Log Gaussian Cox process on a regular grid over the unit square."""

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import ConfigError, IngestionError
from .base import Gaussian, TemperedTarget

BETA = 1.0 / 33
SIGMA2 = 1.91
TOTAL_COUNT = 126
MU = np.log(TOTAL_COUNT) - SIGMA2 / 2


def cell_intensity_scale(side):
    """Intensity multiplier m per grid cell.

    Taken as 1/side**2 (the cell area), so the prior-expected total count is
    exp(MU + SIGMA2/2) = TOTAL_COUNT whatever the grid resolution.
    """
    return 1.0 / side**2


@dataclass
class LgcpGrid:
    side: int
    counts: np.ndarray  # (side, side)
    beta: float = BETA
    sigma2: float = SIGMA2
    mu: float = MU

    def __post_init__(self):
        if self.side < 2:
            raise ConfigError("LGCP grid side must be >= 2")
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (self.side, self.side):
            raise ConfigError(f"counts must have shape ({self.side}, {self.side})")
        if np.any(self.counts < 0) or not np.all(self.counts == np.round(self.counts)):
            raise ConfigError("counts must be nonnegative integers")
        self.cov = lgcp_covariance(self.side, self.beta, self.sigma2)
        try:
            self.prior_chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            raise ConfigError("LGCP covariance Cholesky failed") from None

    @property
    def dim(self):
        return self.side**2


def lgcp_covariance(side, beta=BETA, sigma2=SIGMA2):
    jj, kk = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    coords = np.column_stack([jj.ravel(), kk.ravel()]).astype(float)
    dist = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    return sigma2 * np.exp(-dist / (side * beta))


def bin_points(points, side):
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise IngestionError("points must be an (n, 2) array")
    if np.any(points < 0) or np.any(points >= 1):
        raise IngestionError("point coordinates must lie in [0, 1)")
    idx = np.floor(points * side).astype(int)
    counts = np.zeros((side, side), dtype=int)
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1)
    return counts


def load_points(path=None):
    """Read an ``x,y`` point file; without a path, the bundled synthetic pattern."""
    if path is None:
        fh = resources.files("smctune.data").joinpath("lgcp_points.csv").open("r", encoding="utf-8")
    else:
        try:
            fh = open(path, newline="", encoding="utf-8")
        except OSError as exc:
            raise IngestionError(f"cannot read {path}: {exc}") from None
    with fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows or [h.strip() for h in rows[0]] != ["x", "y"]:
        raise IngestionError("point file needs an 'x,y' header")
    try:
        return np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise IngestionError(f"bad point row: {exc}") from None


def build_lgcp_model(side, counts=None):
    """Posterior of the latent log-intensity field given grid counts."""
    if counts is None:
        counts = bin_points(load_points(), side)
    grid = LgcpGrid(side, counts)
    y = grid.counts.ravel().astype(float)
    m = cell_intensity_scale(side)
    prior = Gaussian(np.full(grid.dim, grid.mu), grid.cov)

    def loglik(x):
        return x @ y - m * np.exp(x).sum(axis=1)

    def grad(x):
        return y - m * np.exp(x)

    return TemperedTarget(grid.dim, prior.logpdf, loglik, prior.grad, grad, prior.sample,
                          name="lgcp", info={"grid": grid, "m": m})
