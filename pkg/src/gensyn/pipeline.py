"""End-to-end runs: load inputs, build every estimate, write populations and reports."""
from __future__ import annotations

import configparser
import csv
import json
import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import baselines
from .conditional import apply_rules, run_chain
from .copula import CopulaSpec, estimate_p2, spec_from_schema
from .distribution import TupleDistribution
from .errors import ConfigError, GensynError, NumericalError
from .graph import DependencyGraph, build_graph, order_variables
from .maxent import ConstraintSet, MaxEntResult, build_constraints, fuse_priors, solve, tau_grid, threshold
from .metrics import evaluate
from .schema import (AuxiliaryMatrix, ConditionalTable, Schema, UnivariateTable, component_labels, load_schema,
                     normalize_auxiliary, read_d1, read_d2, read_d3)
from .synthesis import SyntheticPopulation, expand

log = logging.getLogger(__name__)

METHODS = ("gensyn", "maxent", "conditional", "sync", "syntropy", "synthacs")
RARE_SHARE = 0.01


@dataclass(frozen=True)
class RunConfig:
    schema: Path
    d1: Path
    d2: Path
    d3: Path
    output: Path
    n_pop: int
    reference: Path | None = None
    tau: float | None = None  # None means 1/n_pop
    tau_sweep: bool = False
    iterations: int = 20
    n_draw: int | None = None  # None means min(n_pop, 50000)
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    anneal_proposals: int = 100_000

    def __post_init__(self):
        if self.n_pop < 1:
            raise ConfigError("n_pop must be at least 1")
        if self.tau is not None and self.tau < 0:
            raise ConfigError("tau must be nonnegative")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.n_draw is not None and self.n_draw < 1:
            raise ConfigError("n_draw must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"unknown methods: {', '.join(unknown) or '(none given)'}")
        for label in ("schema", "d1", "d2", "d3", "reference"):
            path = getattr(self, label)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")

    @property
    def draws(self) -> int:
        return self.n_draw or min(self.n_pop, 50_000)

    @property
    def threshold_value(self) -> float:
        return 1.0 / self.n_pop if self.tau is None else self.tau


def parse_methods(text: str) -> tuple[str, ...]:
    items = [m.strip().lower() for m in text.split(",") if m.strip()]
    if items == ["all"]:
        return METHODS
    return tuple(dict.fromkeys(items))


def _auto(value: str | None, cast):
    if value is None or value.strip().lower() in ("", "auto"):
        return None
    return cast(value)


def load_config(path, **overrides) -> RunConfig:
    """Read a ``[run]`` INI section; relative paths resolve against the file's directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"run config not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if "run" not in parser:
        raise ConfigError(f"{path}: missing [run] section")
    sec = parser["run"]
    base = path.parent

    def resolve(key, required=True):
        if key not in sec or not sec[key].strip():
            if required:
                raise ConfigError(f"{path}: [run] needs {key!r}")
            return None
        return (base / sec[key].strip()).resolve()

    try:
        fields = dict(
            schema=resolve("schema"),
            d1=resolve("d1"),
            d2=resolve("d2"),
            d3=resolve("d3"),
            reference=resolve("reference", required=False),
            output=(base / sec.get("output", "output").strip()).resolve(),
            n_pop=int(sec["n_pop"]) if "n_pop" in sec else None,
            tau=_auto(sec.get("tau"), float),
            tau_sweep=sec.getboolean("tau_sweep", False),
            iterations=int(sec.get("iterations", "20")),
            n_draw=_auto(sec.get("n_draw"), int),
            seed=int(sec.get("seed", "0")),
            methods=parse_methods(sec.get("methods", "all")),
            anneal_proposals=int(sec.get("anneal_proposals", "100000")),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if fields["n_pop"] is None:
        raise ConfigError(f"{path}: [run] needs 'n_pop'")
    return RunConfig(**fields)


def method_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream per stage so adding a method never shifts another's draws."""
    return np.random.default_rng([seed, zlib.crc32(label.encode())])


@dataclass
class Inputs:
    schema: Schema
    d1: dict[str, UnivariateTable]
    d2: list[ConditionalTable]
    d3: AuxiliaryMatrix
    reference: SyntheticPopulation | None = None

    @classmethod
    def load(cls, config: RunConfig) -> "Inputs":
        schema = load_schema(config.schema)
        d1 = read_d1(config.d1, schema)
        missing = [n for n in schema.names if n not in d1]
        if missing:
            raise ConfigError(f"D1 has no table for {', '.join(missing)}")
        ref = SyntheticPopulation.read_csv(config.reference, schema) if config.reference else None
        return cls(schema, d1, read_d2(config.d2, schema), read_d3(config.d3, schema), ref)


class Stages:
    """Shared intermediate results, computed on first use."""

    def __init__(self, config: RunConfig, inputs: Inputs):
        self.config = config
        self.inputs = inputs
        self._cache: dict[str, object] = {}

    def _get(self, key: str, build: Callable[[], object]):
        if key not in self._cache:
            try:
                self._cache[key] = build()
            except GensynError as exc:
                self._cache[key] = exc
        value = self._cache[key]
        if isinstance(value, GensynError):
            raise value
        return value

    @property
    def graph(self) -> DependencyGraph:
        def build():
            schema = self.inputs.schema
            g = build_graph(schema)
            order = order_variables(g, self.inputs.d1, schema.ordering_mode, schema.declared_order or None)
            return g.with_order(order)
        return self._get("graph", build)

    @property
    def p1(self) -> TupleDistribution:
        return self._get("p1", lambda: run_chain(self.inputs.schema, self.graph, self.inputs.d1, self.inputs.d2))

    @property
    def copula(self) -> CopulaSpec:
        return self._get("copula", lambda: spec_from_schema(
            self.inputs.schema, normalize_auxiliary(self.inputs.d3),
            iterations=self.config.iterations, n_draw=self.config.draws))

    @property
    def p2(self) -> TupleDistribution:
        def build():
            raw = estimate_p2(self.copula, self.inputs.schema.space, d1=self.inputs.d1,
                              rng=method_rng(self.config.seed, "p2"))
            return apply_rules(raw, self.inputs.schema)
        return self._get("p2", build)

    @property
    def fused(self) -> TupleDistribution:
        return self._get("fused", lambda: fuse_priors(self.p1, self.p2))

    @property
    def constraints(self) -> ConstraintSet:
        return self._get("constraints", lambda: build_constraints(self.inputs.d1, self.inputs.schema))

    def gensyn(self, tau: float) -> MaxEntResult:
        return self._get(f"gensyn:{tau!r}", lambda: solve(threshold(self.fused, tau), self.constraints))


@dataclass
class MethodOutcome:
    population: SyntheticPopulation
    details: dict = field(default_factory=dict)
    extra_files: dict[str, Callable[[Path], None]] = field(default_factory=dict)


def _solver_details(res: MaxEntResult, support: int) -> dict:
    return {
        "converged": res.converged,
        "max_violation": res.max_violation,
        "iterations": res.iterations,
        "support": support,
        "unreachable": list(res.unreachable),
    }


def _write_prior(path: Path, stages: Stages) -> None:
    space = stages.inputs.schema.space
    p1, p2, fused = stages.p1, stages.p2, stages.fused
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tuple_index", *space.names, "p1", "p2", "fused"])
        codes = fused.codes()
        cats = [v.categories for v in space.variables]
        for i, idx in enumerate(fused.index.tolist()):
            w.writerow([idx, *(cats[k][c] for k, c in enumerate(codes[i])),
                        repr(p1.get(idx)), repr(p2.get(idx)), repr(float(fused.prob[i]))])


def run_gensyn(stages: Stages) -> MethodOutcome:
    tau = stages.config.threshold_value
    res = stages.gensyn(tau)
    labels = component_labels(stages.inputs.schema)
    files = {
        "convergence.csv": res.write_log,
        "prior.csv": lambda p: _write_prior(p, stages),
        "p1.csv": stages.p1.to_csv,
        "weights.csv": res.weights.to_csv,
        "copula_sigma.csv": lambda p: stages.copula.to_csv(p, p.with_name("copula_marginals.csv"), labels),
    }
    details = _solver_details(res, len(res.weights))
    details.update(tau=tau, p1_support=len(stages.p1), p2_support=len(stages.p2), prior_support=len(stages.fused))
    return MethodOutcome(expand(res.weights, stages.config.n_pop), details, files)


def run_maxent(stages: Stages) -> MethodOutcome:
    res = baselines.baseline_maxent(stages.constraints, stages.inputs.schema.space)
    return MethodOutcome(expand(res.weights, stages.config.n_pop), _solver_details(res, len(res.weights)))


def run_conditional(stages: Stages) -> MethodOutcome:
    cfg = stages.config
    pop = baselines.baseline_conditional(stages.inputs.schema, stages.graph, stages.inputs.d1, stages.inputs.d2,
                                         cfg.n_pop, method_rng(cfg.seed, "conditional"), p1=stages.p1)
    return MethodOutcome(pop, {"p1_support": len(stages.p1)})


def run_sync(stages: Stages) -> MethodOutcome:
    cfg, inp = stages.config, stages.inputs
    targets = baselines.exact_targets(inp.d1, inp.schema.names, cfg.n_pop)
    spec = stages.copula.with_draws(n_draw=cfg.n_pop, iterations=1)
    pop = baselines.baseline_sync(spec, targets, cfg.n_pop, method_rng(cfg.seed, "sync"), inp.schema.space)
    return MethodOutcome(pop)


def run_syntropy(stages: Stages) -> MethodOutcome:
    cfg = stages.config
    res = baselines.baseline_syntropy(stages.p1, stages.constraints, cfg.threshold_value)
    return MethodOutcome(expand(res.weights, cfg.n_pop), _solver_details(res, len(res.weights)))


def run_synthacs(stages: Stages) -> MethodOutcome:
    cfg, inp = stages.config, stages.inputs
    params = baselines.AnnealParams(proposals=cfg.anneal_proposals)
    res = baselines.baseline_synthacs(inp.schema, stages.graph, inp.d1, inp.d2, cfg.n_pop,
                                      method_rng(cfg.seed, "synthacs"), params, p1=stages.p1)
    details = {
        "approximation": "conditional chain sample refined by simulated annealing",
        "initial_tae": res.initial_tae,
        "final_tae": res.final_tae,
        "proposals": res.proposals,
        "accepted": res.accepted,
        "cooling": params.cooling,
    }
    return MethodOutcome(res.population, details)


RUNNERS = {
    "gensyn": run_gensyn,
    "maxent": run_maxent,
    "conditional": run_conditional,
    "sync": run_sync,
    "syntropy": run_syntropy,
    "synthacs": run_synthacs,
}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def rare_categories(d1: dict[str, UnivariateTable], share: float = RARE_SHARE) -> list[tuple[str, int]]:
    out = []
    for name, table in d1.items():
        for c, p in enumerate(table.proportions):
            if 0 < p < share:
                out.append((name, c))
    return out


def tau_sweep(stages: Stages, taus=None) -> list[dict]:
    """GenSyn at each threshold: KL, TAE, support and rare-category recovery."""
    cfg, inp = stages.config, stages.inputs
    taus = list(taus or tau_grid(cfg.n_pop))
    rare = rare_categories(inp.d1)
    rows = []
    for tau in taus:
        row = {"tau": tau, "tau_times_n": tau * cfg.n_pop}
        try:
            res = stages.gensyn(tau)
        except GensynError as exc:
            row.update(status="failed", error=str(exc))
            rows.append(row)
            continue
        pop = expand(res.weights, cfg.n_pop)
        report = evaluate(pop, inp.d1, inp.reference)
        row.update(status="ok", kl=report["kl"], tae=report["tae"], support=len(res.weights),
                   unreachable=len(res.unreachable))
        for name, c in rare:
            target = inp.d1[name].proportions[c] * cfg.n_pop
            got = pop.marginal_counts(name)[c]
            row[f"rare:{name}:{inp.schema[name].categories[c]}"] = 100.0 * abs(got - target) / target
        rows.append(row)
    return rows


def write_sweep(path: Path, rows: list[dict]) -> None:
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow(["" if r.get(k) is None else (repr(float(r[k])) if isinstance(r[k], float) else r[k])
                        for k in keys])


@dataclass
class RunResult:
    report: dict
    exit_code: int
    populations: dict[str, SyntheticPopulation] = field(default_factory=dict)
    metrics: dict[str, dict] = field(default_factory=dict)
    sweep: list[dict] | None = None


def run(config: RunConfig, inputs: Inputs | None = None) -> RunResult:
    """Run every requested method; a failing method is recorded and the rest continue."""
    inputs = inputs or Inputs.load(config)
    if inputs.reference is not None and len(inputs.reference) == 0:
        raise ConfigError("reference population is empty")
    stages = Stages(config, inputs)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict[str, dict] = {}
    populations, metrics = {}, {}
    failures: list[GensynError] = []
    for method in config.methods:
        mdir = out / method
        mdir.mkdir(exist_ok=True)
        try:
            outcome = RUNNERS[method](stages)
            report = evaluate(outcome.population, inputs.d1, inputs.reference)
        except GensynError as exc:
            log.error("%s failed: %s", method, exc)
            failures.append(exc)
            summary[method] = {"status": "failed", "error": str(exc), "error_type": type(exc).__name__}
            write_json(mdir / "metrics.json", {"method": method, **summary[method]})
            continue
        report = {"method": method, "status": "ok", **report, "details": outcome.details}
        outcome.population.to_csv(mdir / "population.csv")
        for name, writer in outcome.extra_files.items():
            writer(mdir / name)
        write_json(mdir / "metrics.json", report)
        populations[method], metrics[method] = outcome.population, report
        summary[method] = {"status": "ok", "tae": report["tae"], "kl": report["kl"],
                           "frobenius": report["frobenius"]}

    sweep = None
    if config.tau_sweep:
        sweep = tau_sweep(stages)
        write_sweep(out / "tau_sweep.csv", sweep)

    report = {
        "config": {
            "n_pop": config.n_pop,
            "tau": config.threshold_value,
            "iterations": config.iterations,
            "n_draw": config.draws,
            "seed": config.seed,
            "methods": list(config.methods),
            "variables": list(inputs.schema.names),
            "tuple_space": inputs.schema.space.size,
        },
        "methods": summary,
    }
    if sweep is not None:
        report["tau_sweep"] = sweep
    write_json(out / "report.json", report)

    if not failures:
        code = 0
    elif len(failures) < len(config.methods):
        code = 4
    elif all(isinstance(f, ConfigError) for f in failures):
        code = 2
    else:
        code = 3
    return RunResult(report, code, populations, metrics, sweep)


def read_manifest(path) -> list[tuple[str, Path]]:
    """``location,config`` CSV; config paths resolve against the manifest directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"location", "config"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: manifest header must include location,config")
        return [(row["location"], (path.parent / row["config"]).resolve()) for row in reader]


def run_manifest(path, **overrides) -> dict[str, int]:
    """Independent run per listed location; returns each location's exit code."""
    codes = {}
    for location, cfg_path in read_manifest(path):
        try:
            codes[location] = run(load_config(cfg_path, **overrides)).exit_code
        except ConfigError as exc:
            log.error("%s: %s", location, exc)
            codes[location] = 2
        except NumericalError as exc:
            log.error("%s: %s", location, exc)
            codes[location] = 3
    return codes


def with_methods(config: RunConfig, methods) -> RunConfig:
    return replace(config, methods=tuple(methods))


def metrics_schema() -> dict:
    """The JSON schema every ``metrics.json`` validates against."""
    from importlib.resources import files

    return json.loads((files("gensyn") / "data" / "metrics.schema.json").read_text())
