"""Command-line entry point: ``gensyn run|truth|graph|plot``."""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from .errors import ConfigError, GensynError, NumericalError
from .graph import build_graph
from .pipeline import METHODS, load_config, run, run_manifest
from .schema import load_schema
from .truth import load_truth_spec, make_ground_truth, write_ground_truth

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _tau(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("tau must be nonnegative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gensyn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="synthesize populations and write reports")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="run config ([run] section)")
    src.add_argument("--manifest", type=Path, help="CSV of location,config for batch runs")
    p.add_argument("--method", action="append", choices=(*METHODS, "all"),
                   help="method to run; repeatable (default: the config's list)")
    tau = p.add_mutually_exclusive_group()
    tau.add_argument("--tau", type=_tau, help="probability threshold for the fused prior (default 1/N)")
    tau.add_argument("--tau-sweep", action="store_true", help="also evaluate GenSyn over the threshold grid")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--output", type=Path, help="override the output directory")

    t = sub.add_parser("truth", help="generate a ground-truth population and its macro tables")
    t.add_argument("--spec", type=Path, required=True)
    t.add_argument("--seed", type=_seed, default=0)
    t.add_argument("--output", type=Path, help="directory (default: beside the truth file, named after it)")

    g = sub.add_parser("graph", help="print the dependency graph in DOT format")
    g.add_argument("--config", type=Path, required=True, help="run config or schema file")
    g.add_argument("--output", type=Path)

    pl = sub.add_parser("plot", help="plot data and figures from a report directory")
    pl.add_argument("--report", type=Path, required=True)
    return parser


def _schema_path(path: Path) -> Path:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if "run" in parser and "schema" in parser["run"]:
        return path.parent / parser["run"]["schema"]
    return path


def cmd_run(args) -> int:
    methods = None
    if args.method:
        methods = METHODS if "all" in args.method else tuple(dict.fromkeys(args.method))
    overrides = {"methods": methods, "seed": args.seed, "tau": args.tau, "output": args.output}
    if args.tau_sweep:
        overrides["tau_sweep"] = True
    if args.manifest:
        if args.output:
            raise ConfigError("--output cannot be combined with --manifest")
        codes = run_manifest(args.manifest, **overrides)
        for loc, code in codes.items():
            print(f"{loc}: exit {code}")
        if all(c == EXIT_OK for c in codes.values()):
            return EXIT_OK
        return EXIT_PARTIAL if any(c == EXIT_OK for c in codes.values()) else max(codes.values())
    config = load_config(args.config, **overrides)
    result = run(config)
    for method, info in result.report["methods"].items():
        if info["status"] == "ok":
            kl = "n/a" if info["kl"] is None else f"{info['kl']:.4f}"
            fro = "n/a" if info["frobenius"] is None else f"{info['frobenius']:.4f}"
            print(f"{method:12s} tae={info['tae']:.1f} kl={kl} frobenius={fro}")
        else:
            print(f"{method:12s} FAILED: {info['error']}")
    print(f"report: {Path(config.output) / 'report.json'}")
    return result.exit_code


def cmd_truth(args) -> int:
    spec = load_truth_spec(args.spec)
    out = args.output or args.spec.with_suffix("")
    truth = make_ground_truth(spec, args.seed)
    paths = write_ground_truth(truth, out, seed=args.seed)
    print(f"wrote ground truth ({len(truth.population)} records) to {out}")
    print(f"run it with: gensyn run --config {paths['config']}")
    return EXIT_OK


def cmd_graph(args) -> int:
    schema = load_schema(_schema_path(args.config))
    dot = build_graph(schema).to_dot()
    if args.output:
        args.output.write_text(dot)
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_report

    for path in plot_report(args.report):
        print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "truth": cmd_truth, "graph": cmd_graph, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GensynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
