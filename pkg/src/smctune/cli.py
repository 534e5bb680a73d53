"""Command-line front end: ``smctune run|validate|truths|report|verify``."""

import argparse
import json
import os
import sys

from . import bench
from .errors import ConfigError

OUT_ENV = "SMCTUNE_OUT"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; usage errors are config errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parser():
    p = _Parser(prog="smctune", description="Tempered SMC with tuned HMC/MALA/RW kernels.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment grid")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("config")
    t = sub.add_parser("truths", help="print reference values for a toy model")
    t.add_argument("model")
    t.add_argument("dim", type=int)
    rep = sub.add_parser("report", help="aggregate runs.csv into summary.csv and summary.md")
    rep.add_argument("dir")
    ver = sub.add_parser("verify", help="recompute runs.csv from the trace files")
    ver.add_argument("dir")
    return p


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    if args.command == "validate":
        cfg = bench.load_config(args.config)
        print(f"ok: {len(cfg.cells())} cells x {cfg.repetitions} repetitions")
        return 0
    if args.command == "truths":
        if args.model not in ("gaussian", "mixture", "student"):
            raise ConfigError(f"model: no closed-form reference values for {args.model!r}")
        vals = bench.truths({"name": args.model, "dim": args.dim})
        print(json.dumps(vals, indent=1))
        return 0
    if args.command == "run":
        cfg = bench.load_config(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs: need an integer >= 1")
        out = args.out or os.environ.get(OUT_ENV) or cfg.output_dir
        rows = bench.run_experiment(cfg, out, jobs=args.jobs)
        bench.report(out)
        failed = [r for r in rows if r["status"] != "ok"]
        print(f"{len(rows) - len(failed)} runs ok, {len(failed)} failed; results in {out}")
        for r in failed:
            print(f"  {r['cell']} rep {r['rep']}: {r['error']}", file=sys.stderr)
        return 2 if failed else 0
    if args.command == "report":
        summary = bench.report(args.dir)
        print(f"{len(summary)} summary rows written to {args.dir}")
        return 0
    if args.command == "verify":
        problems = bench.verify(args.dir)
        for p in problems:
            print(p, file=sys.stderr)
        print("verified" if not problems else f"{len(problems)} mismatches")
        return 0 if not problems else 2
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
