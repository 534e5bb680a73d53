"""Binary regression posteriors (logit, probit) and CSV ingestion."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, log_ndtr

from ..errors import IngestionError
from .base import Gaussian, TemperedTarget

DROP_CORRELATION = 0.95


@dataclass(frozen=True)
class BinaryDataset:
    design: np.ndarray  # (J, d), first column is the intercept
    labels: np.ndarray  # (J,) in {0, 1}
    names: tuple

    @property
    def shape(self):
        return self.design.shape


def _parse_labels(raw, column, positive_label):
    values = sorted(set(raw))
    if positive_label is not None:
        if len(values) > 2 or str(positive_label) not in values:
            raise IngestionError(f"column {column!r}: labels {values} are not binary "
                                 f"with positive label {positive_label!r}")
        return np.array([v == str(positive_label) for v in raw], dtype=float)
    try:
        numeric = np.array([float(v) for v in raw])
    except ValueError:
        raise IngestionError(f"column {column!r}: non-numeric labels {values[:5]}; "
                             "pass positive_label") from None
    if not np.all((numeric == 0) | (numeric == 1)):
        raise IngestionError(f"column {column!r}: labels must be 0/1, found {sorted(set(numeric))[:5]}")
    return numeric


def drop_correlated_columns(x, names, threshold=DROP_CORRELATION):
    """Scan left to right and drop any column too correlated with a kept one."""
    corr = np.corrcoef(x, rowvar=False)
    keep = []
    for j in range(x.shape[1]):
        if all(abs(corr[j, k]) <= threshold for k in keep):
            keep.append(j)
    return x[:, keep], [names[j] for j in keep]


def load_binary_dataset(path, label_column, positive_label=None, drop_correlated=None):
    """Read a headed CSV, standardize predictors and prepend an intercept.

    ``drop_correlated`` (a float threshold, e.g. 0.95) removes collinear
    predictors before standardization.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if label_column not in header:
        raise IngestionError(f"{path}: label column {label_column!r} not in header")
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    li = header.index(label_column)
    pred_idx = [j for j in range(len(header)) if j != li]
    names = [header[j] for j in pred_idx]
    x = np.empty((len(rows), len(pred_idx)))
    raw_labels = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}")
        raw_labels.append(row[li].strip())
        for c, j in enumerate(pred_idx):
            cell = row[j].strip()
            if cell == "":
                raise IngestionError(f"column {header[j]!r}: missing value in row {r + 2}")
            try:
                x[r, c] = float(cell)
            except ValueError:
                raise IngestionError(f"column {header[j]!r}: non-numeric value {cell!r}") from None
    if any(v == "" for v in raw_labels):
        raise IngestionError(f"column {label_column!r}: missing label")
    labels = _parse_labels(raw_labels, label_column, positive_label)

    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    for c, s in enumerate(sd):
        if not s > 0:
            raise IngestionError(f"column {names[c]!r}: zero variance")
    if drop_correlated is not None:
        x, names = drop_correlated_columns(x, names, drop_correlated)
    x = (x - x.mean(axis=0)) / x.std(axis=0, ddof=1)
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    return BinaryDataset(design, labels, tuple(["(intercept)"] + list(names)))


def _binary_target(data, loglik, grad, name):
    d = data.design.shape[1]
    prior = Gaussian(np.zeros(d), np.eye(d))
    return TemperedTarget(d, prior.logpdf, loglik, prior.grad, grad, prior.sample,
                          name=name, info={"J": data.design.shape[0]})


def build_logit_model(data):
    z, y = data.design, data.labels

    def loglik(beta):
        u = beta @ z.T
        return np.sum((y - 1.0) * u - np.logaddexp(0.0, -u), axis=1)

    def grad(beta):
        u = beta @ z.T
        return (y - expit(u)) @ z

    return _binary_target(data, loglik, grad, "logit")


def _mills(u):
    # phi(u) / Phi(u), finite for all u
    return np.exp(-0.5 * u * u - 0.5 * np.log(2 * np.pi) - log_ndtr(u))


def build_probit_model(data):
    z, y = data.design, data.labels

    def loglik(beta):
        u = beta @ z.T
        return np.sum(y * log_ndtr(u) + (1.0 - y) * log_ndtr(-u), axis=1)

    def grad(beta):
        u = beta @ z.T
        return (y * _mills(u) - (1.0 - y) * _mills(-u)) @ z

    return _binary_target(data, loglik, grad, "probit")
