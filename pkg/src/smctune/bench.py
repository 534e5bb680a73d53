"""Experiment grids over models, kernels and tuners, and the metrics on them."""

import csv
import itertools
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .models import (build_gaussian_shift_model, build_lgcp_model, build_logit_model,
                     build_mixture_model, build_probit_model, build_student_model,
                     bin_points, laplace_init, load_binary_dataset, load_points,
                     mixture_mode_proportion, shift_moments)
from .smc import SamplerConfig, run_sampler

SCHEDULES = ("adaptive", "fixed_ladder", "fixed_moves")
MODELS = ("gaussian", "mixture", "student", "lgcp", "logit", "probit")

RUN_COLUMNS = [
    "run", "cell", "kernel", "tuner", "schedule", "rep", "seed", "status",
    "log_z", "mean1", "mean_trace", "var_trace", "mode_proportion",
    "esjd_euclid", "esjd_mahal", "n_temperatures", "mean_move_steps", "mean_acceptance",
    "grad_evals", "lik_evals", "load", "error",
]
METRICS = ("log_z", "mean1", "mean_trace", "var_trace", "mode_proportion")


# -- models ----------------------------------------------------------------

def validate_model_spec(spec):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("model: need an object with a 'name'")
    name = spec["name"]
    if name not in MODELS:
        raise ConfigError(f"model.name: unknown model {name!r}")
    if name in ("gaussian", "mixture", "student"):
        d = spec.get("dim")
        lo = 1 if name == "mixture" else 2
        if not isinstance(d, int) or d < lo:
            raise ConfigError(f"model.dim: {name} needs an integer dim >= {lo}")
    elif name == "lgcp":
        side = spec.get("side")
        if not isinstance(side, int) or side < 2:
            raise ConfigError("model.side: lgcp needs an integer side >= 2")
    else:
        if "data" not in spec or "label" not in spec:
            raise ConfigError(f"model: {name} needs 'data' and 'label'")
        if spec.get("init", "laplace") not in ("prior", "laplace"):
            raise ConfigError("model.init: must be 'prior' or 'laplace'")


def build_model(spec):
    validate_model_spec(spec)
    name = spec["name"]
    if name == "gaussian":
        return build_gaussian_shift_model(spec["dim"])
    if name == "mixture":
        return build_mixture_model(spec["dim"])
    if name == "student":
        return build_student_model(spec["dim"])
    if name == "lgcp":
        return build_lgcp_model(spec["side"], bin_points(load_points(spec.get("points")), spec["side"]))
    data = load_binary_dataset(spec["data"], spec["label"], spec.get("positive"),
                               spec.get("drop_correlated"))
    target = (build_logit_model if name == "logit" else build_probit_model)(data)
    return laplace_init(target) if spec.get("init", "laplace") == "laplace" else target


@lru_cache(maxsize=8)
def _cached_model(key):
    return build_model(json.loads(key))


def truths(spec):
    """Reference values known in closed form for the toy models."""
    validate_model_spec(spec)
    name = spec["name"]
    if name == "gaussian":
        mean, cov = shift_moments(spec["dim"])
        return {"log_z": 0.0, "mean1": float(mean[0]), "mean_trace": float(mean.sum()),
                "var_trace": float(np.trace(cov)), "mean": mean.tolist()}
    if name == "student":
        mean, scale = shift_moments(spec["dim"])
        return {"log_z": 0.0, "mean1": float(mean[0]), "mean_trace": float(mean.sum()),
                "var_trace": float(np.trace(scale) * 10 / 8), "mean": mean.tolist()}
    if name == "mixture":
        d = spec["dim"]
        return {"log_z": 0.0, "mean1": -1.6, "mean_trace": -1.6 * d,
                "mode_proportion": mixture_mode_proportion(d), "mean": [-1.6] * d}
    return {}


# -- metrics ---------------------------------------------------------------

def esjd_final(sweeps, mass=None):
    """Mean squared jump per particle and sweep at the final temperature.

    Euclidean when ``mass`` is None, otherwise weighted by the mass diagonal.
    """
    if not sweeps:
        raise ValueError("no sweep at the final temperature")
    w = 1.0 if mass is None else mass.diag
    return float(np.mean([np.mean(np.sum((b - a) ** 2 * w, axis=1)) for a, b in sweeps]))


def mode_proportion(positions, weights=None):
    """Average share of positive coordinates per particle (zero counts as positive)."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    t = np.mean(positions >= 0, axis=1)
    if weights is None:
        return float(np.mean(t))
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * t) / np.sum(w))


def run_load(kernel, grad_evals, lik_evals):
    return lik_evals if kernel == "rw" else grad_evals + lik_evals


def aggregate_metrics(records, truth=None):
    """Per-cell mean, variance, MSE and their load-adjusted versions."""
    truth = truth or {}
    rows = []
    by_cell = {}
    for r in records:
        if r.get("status", "ok") == "ok":
            by_cell.setdefault(r["cell"], []).append(r)
    for cell in sorted(by_cell):
        rs = by_cell[cell]
        load = float(np.mean([float(r["load"]) for r in rs]))
        for m in METRICS:
            vals = np.array([float(r[m]) for r in rs if r.get(m) not in (None, "")])
            if vals.size == 0 or not np.all(np.isfinite(vals)):
                continue
            var = float(np.var(vals, ddof=1)) if vals.size >= 2 else float("nan")
            row = {"cell": cell, "metric": m, "n": int(vals.size), "mean": float(vals.mean()),
                   "variance": var, "mean_load": load, "adjusted_variance": var * load,
                   "log_adjusted_variance": _log(var * load)}
            if m in truth:
                mse = float(np.mean((vals - truth[m]) ** 2))
                row.update(truth=truth[m], mse=mse, adjusted_mse=mse * load,
                           log_adjusted_mse=_log(mse * load))
            rows.append(row)
    return rows


def _log(v):
    if math.isnan(v):
        return float("nan")
    return math.log(v) if v > 0 else float("-inf")


# -- experiments -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    model: dict
    samplers: list = field(default_factory=lambda: ["hmc"])
    tuners: list = field(default_factory=lambda: ["pr"])
    schedules: list = field(default_factory=lambda: ["adaptive"])
    N: int = 1024
    repetitions: int = 1
    seed: int = 0
    output_dir: str = "results"
    sampler: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_model_spec(self.model)
        if not self.samplers:
            raise ConfigError("samplers: empty sampler list")
        if not self.tuners:
            raise ConfigError("tuners: empty tuner list")
        for k in self.samplers:
            if k not in ("hmc", "mala", "rw"):
                raise ConfigError(f"samplers: unknown kernel {k!r}")
        for t in self.tuners:
            if t not in ("ft", "pr", "fixed"):
                raise ConfigError(f"tuners: unknown tuner {t!r}")
        for s in self.schedules:
            if s not in SCHEDULES:
                raise ConfigError(f"schedules: unknown schedule {s!r}")
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise ConfigError("repetitions: need an integer >= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed: need a nonnegative integer")
        bad = set(self.sampler) & {"model", "kernel", "tuner", "N", "seed"}
        if bad:
            raise ConfigError(f"sampler: fields {sorted(bad)} are set at the experiment level")
        self.sampler_config("hmc", "pr", 0)  # validates the overrides

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "kernel" in data and "samplers" not in data:
            # single SamplerConfig: one cell, one repetition
            sc = SamplerConfig.from_dict(data)
            extra = {k: v for k, v in sc.to_dict().items()
                     if k not in ("model", "kernel", "tuner", "N", "seed")}
            return cls(model=sc.model, samplers=[sc.kernel], tuners=[sc.tuner], N=sc.N,
                       seed=sc.seed, sampler=extra)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "model" not in data:
            raise ConfigError("model: missing")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def sampler_config(self, kernel, tuner, seed, **extra):
        opts = {**self.sampler, **extra}
        try:
            return SamplerConfig(model=self.model, kernel=kernel, tuner=tuner, N=self.N,
                                 seed=seed, **opts)
        except TypeError as exc:
            raise ConfigError(f"sampler: {exc}") from None

    def cells(self):
        return list(itertools.product(self.samplers, self.tuners, self.schedules))


def cell_name(kernel, tuner, schedule):
    return f"{kernel}-{tuner}-{schedule}"


def run_seed(base, index):
    """Seed for run number ``index``; a bijection of the index for fixed ``base``."""
    return base ^ index


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)


def _atomic_write(path, writer):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _execute(task):
    """Run one sampler; returns a runs.csv row (plus the ladder for pilots)."""
    cfg_dict, meta, outdir = task
    sc = SamplerConfig.from_dict(cfg_dict)
    row = {k: meta[k] for k in ("run", "cell", "kernel", "tuner", "schedule", "rep")}
    row["seed"] = sc.seed
    try:
        target = _cached_model(json.dumps(sc.model, sort_keys=True))
        trace = run_sampler(sc, target)
    except Exception as exc:  # a failing cell must not stop the grid
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row, None
    cloud = trace.final_cloud
    w = cloud.normalized_weights()
    summ = trace.summary()
    esjd = {"esjd_euclid": "", "esjd_mahal": ""}
    if trace.final_sweeps:
        esjd = {"esjd_euclid": esjd_final(trace.final_sweeps),
                "esjd_mahal": esjd_final(trace.final_sweeps, trace.final_mass)}
    row.update(
        status="ok", error="", log_z=trace.log_z, mean1=float(trace.mean[0]),
        mean_trace=float(trace.mean.sum()), var_trace=float(trace.variance.sum()),
        mode_proportion=mode_proportion(cloud.positions, w), **esjd,
        n_temperatures=summ["n_temperatures"], mean_move_steps=summ["mean_move_steps"],
        mean_acceptance=summ["mean_acceptance"], grad_evals=trace.grad_evals,
        lik_evals=trace.lik_evals, load=run_load(sc.kernel, trace.grad_evals, trace.lik_evals))
    if outdir is not None:
        stem = Path(outdir) / f"trace_{meta['cell']}_{meta['rep']}"
        _atomic_write(f"{stem}.csv", trace.write_csv)
        extra = {k: row[k] for k in RUN_COLUMNS if k in row and k not in summ}
        extra["lambdas"] = trace.lambdas
        _atomic_write(f"{stem}.json", lambda p: trace.write_json(p, extra))
    return row, {"lambdas": trace.lambdas, "mean_move_steps": summ["mean_move_steps"]}


def _map(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_execute, tasks))


def run_experiment(config, outdir=None, jobs=1):
    """Run every (kernel, tuner, schedule, repetition) and write the CSV outputs.

    Non-adaptive schedules take their ladder length or move count from one
    adaptive pilot run of the same kernel and tuner.
    """
    cells = config.cells()
    R = config.repetitions
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "config.json", "w") as fh:
            json.dump(asdict(config), fh, indent=1, sort_keys=True)

    pilots = {}
    pilot_pairs = sorted({(k, t) for k, t, s in cells if s != "adaptive"})
    tasks = []
    for j, (k, t) in enumerate(pilot_pairs):
        seed = run_seed(config.seed, len(cells) * R + j)
        meta = {"run": -1, "cell": cell_name(k, t, "pilot"), "kernel": k, "tuner": t,
                "schedule": "pilot", "rep": 0}
        tasks.append((config.sampler_config(k, t, seed).to_dict(), meta, None))
    for (k, t), (row, info) in zip(pilot_pairs, _map(tasks, jobs)):
        if info is None:
            raise RuntimeError(f"pilot run for {k}-{t} failed: {row['error']}")
        pilots[(k, t)] = info

    tasks = []
    for c, (k, t, s) in enumerate(cells):
        extra = {}
        if s == "fixed_ladder":
            extra["fixed_ladder"] = np.linspace(0.0, 1.0, len(pilots[(k, t)]["lambdas"])).tolist()
        elif s == "fixed_moves":
            extra["fixed_move_steps"] = max(1, int(round(pilots[(k, t)]["mean_move_steps"])))
        for r in range(R):
            idx = c * R + r
            sc = config.sampler_config(k, t, run_seed(config.seed, idx), **extra)
            meta = {"run": idx, "cell": cell_name(k, t, s), "kernel": k, "tuner": t,
                    "schedule": s, "rep": r}
            tasks.append((sc.to_dict(), meta, str(outdir) if outdir is not None else None))
    rows = [row for row, _ in _map(tasks, jobs)]
    if outdir is not None:
        _atomic_write(outdir / "runs.csv", lambda p: write_rows(p, rows, RUN_COLUMNS))
    return rows


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SUMMARY_COLUMNS = ["cell", "metric", "n", "mean", "variance", "mean_load", "adjusted_variance",
                   "log_adjusted_variance", "truth", "mse", "adjusted_mse", "log_adjusted_mse"]


def report(outdir):
    """Aggregate ``runs.csv`` into ``summary.csv`` and ``summary.md``."""
    outdir = Path(outdir)
    rows = read_rows(outdir / "runs.csv")
    with open(outdir / "config.json") as fh:
        cfg = json.load(fh)
    summary = aggregate_metrics(rows, truths(cfg["model"]))
    _atomic_write(outdir / "summary.csv", lambda p: write_rows(p, summary, SUMMARY_COLUMNS))
    lines = ["| " + " | ".join(SUMMARY_COLUMNS) + " |",
             "|" + "---|" * len(SUMMARY_COLUMNS)]
    for r in summary:
        cells = []
        for k in SUMMARY_COLUMNS:
            v = r.get(k, "")
            cells.append(f"{v:.4g}" if isinstance(v, float) else str(v))
        lines.append("| " + " | ".join(cells) + " |")
    _atomic_write(outdir / "summary.md", lambda p: Path(p).write_text("\n".join(lines) + "\n"))
    return summary


def verify(outdir):
    """Recompute every runs.csv metric from the per-run trace files.

    Returns a list of mismatch descriptions (empty when consistent).
    """
    outdir = Path(outdir)
    problems = []
    for row in read_rows(outdir / "runs.csv"):
        if row["status"] != "ok":
            continue
        stem = outdir / f"trace_{row['cell']}_{row['rep']}"
        trace = read_rows(f"{stem}.csv")
        with open(f"{stem}.json") as fh:
            summ = json.load(fh)
        last = trace[-1]
        grad, lik = int(last["grad_evals"]), int(last["lik_evals"])
        expected = {
            "log_z": math.fsum(float(r["logz_increment"]) for r in trace),
            "mean1": summ["mean"][0],
            "mean_trace": math.fsum(summ["mean"]),
            "var_trace": math.fsum(summ["variance"]),
            "grad_evals": grad,
            "lik_evals": lik,
            "load": run_load(row["kernel"], grad, lik),
            "n_temperatures": len(summ["lambdas"]),
            "mode_proportion": summ["mode_proportion"],
        }
        for key, want in expected.items():
            got = float(row[key])
            if not math.isclose(got, float(want), rel_tol=1e-9, abs_tol=1e-9):
                problems.append(f"{row['cell']} rep {row['rep']}: {key} {got} != {want}")
    return problems
