"""Synthetic ground truth and the macro tables derived from it.

The truth population is drawn from a DAG model over the declared
conditioning, optionally mixed over a hidden binary factor that shifts a
chosen set of variables. Because the factor is not a schema variable, the
association it induces between those variables does not flow through any
conditioning table, which is exactly what the conditional chain cannot
recover.

Auxiliary locations are reweighted copies of the truth population: each
location tilts the share of the hidden factor (``location_spread`` on the
logit scale), optionally reweights the categories of the leading variable
(``composition_spread``, log-scale standard deviation), and then perturbs every component count multiplicatively
(``perturbation`` is the standard deviation of the log-noise). With both at
zero every auxiliary row equals the truth's own shares.
"""
from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distribution import TupleDistribution
from .errors import ConfigError
from .graph import build_graph
from .schema import (AuxiliaryMatrix, ConditionalTable, Schema, UnivariateTable, load_schema,
                     write_d1, write_d2, write_d3, write_schema)
from .synthesis import SyntheticPopulation


@dataclass
class GroundTruthSpec:
    schema: Schema
    population: int = 5000
    aux_locations: int = 10
    perturbation: float = 0.05
    location_spread: float = 1.5
    composition_spread: float = 0.0
    latent_share: float = 0.5
    latent_classes: int = 2
    latent_variables: tuple[str, ...] = ()
    latent_strength: float = 2.5
    dependence: float = 1.0
    rare: dict = field(default_factory=dict)  # variable -> (category, prevalence)
    joint: np.ndarray | None = None

    def __post_init__(self):
        if self.population < 1:
            raise ConfigError("population must be positive")
        if self.aux_locations < 2:
            raise ConfigError("need at least two auxiliary locations")
        if min(self.perturbation, self.location_spread, self.composition_spread) < 0:
            raise ConfigError("perturbation and spreads must be nonnegative")
        if not 0 < self.latent_share < 1:
            raise ConfigError("latent_share must lie in (0, 1)")
        if self.latent_classes < 1:
            raise ConfigError("latent_classes must be at least 1")
        for name in self.latent_variables:
            if name not in self.schema:
                raise ConfigError(f"unknown latent variable {name!r}")
        for name, (cat, prev) in self.rare.items():
            self.schema[name].code(cat)
            if not 0 < prev < 1:
                raise ConfigError(f"rare prevalence for {name!r} must lie in (0, 1)")
        if self.joint is not None:
            joint = np.asarray(self.joint, dtype=float).reshape(self.schema.space.shape)
            if np.any(joint < 0) or abs(joint.sum() - 1) > 1e-9:
                raise ConfigError("explicit joint must be a normalized nonnegative table")
            self.joint = joint


def load_truth_spec(path) -> GroundTruthSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"truth spec not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if "truth" not in parser:
        raise ConfigError(f"{path}: missing [truth] section")
    t = parser["truth"]
    if "schema" not in t:
        raise ConfigError(f"{path}: [truth] needs a schema path")
    schema = load_schema(path.parent / t["schema"])
    rare = {}
    if "rare" in parser:
        for var, spec in parser["rare"].items():
            cat, _, prev = spec.rpartition(":")
            rare[var] = (cat.strip(), float(prev))
    joint = None
    if t.get("joint"):
        joint = read_joint(path.parent / t["joint"], schema)
    try:
        return GroundTruthSpec(
            schema=schema,
            population=t.getint("population", 5000),
            aux_locations=t.getint("aux_locations", 10),
            perturbation=t.getfloat("perturbation", 0.05),
            location_spread=t.getfloat("location_spread", 1.5),
            composition_spread=t.getfloat("composition_spread", 0.0),
            latent_share=t.getfloat("latent_share", 0.5),
            latent_classes=t.getint("latent_classes", 2),
            latent_variables=tuple(x.strip() for x in t.get("latent_variables", "").split(",") if x.strip()),
            latent_strength=t.getfloat("latent_strength", 2.5),
            dependence=t.getfloat("dependence", 1.0),
            rare=rare,
            joint=joint,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def read_joint(path, schema: Schema) -> np.ndarray:
    """``<variables...>,probability`` CSV to a dense table; absent tuples are zero."""
    space = schema.space
    dense = np.zeros(space.shape)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            codes = tuple(schema[n].code(row[n]) for n in space.names)
            dense[codes] += float(row["probability"])
    return dense / dense.sum()


@dataclass
class GroundTruth:
    schema: Schema
    population: SyntheticPopulation
    joint: TupleDistribution
    d1: dict[str, UnivariateTable]
    d2: list[ConditionalTable]
    d3: AuxiliaryMatrix

    def reference(self) -> TupleDistribution:
        return self.population.distribution()


def _cpt(rng, schema: Schema, name: str, parents, spec: GroundTruthSpec, tilt) -> np.ndarray:
    var = schema[name]
    shape = [schema[p].size for p in parents] + [var.size]
    logits = spec.dependence * rng.standard_normal(shape)
    if tilt is not None:
        logits = logits + tilt
    probs = np.exp(logits - logits.max(axis=-1, keepdims=True))
    for rule in schema.rules:
        if rule.child == name and rule.parent in parents:
            axis = list(parents).index(rule.parent)
            sl = [slice(None)] * len(shape)
            sl[axis] = [schema[rule.parent].code(c) for c in rule.parent_categories]
            block = probs[tuple(sl)]
            block[..., [var.code(c) for c in rule.child_categories]] = 0.0
            probs[tuple(sl)] = block
    probs /= probs.sum(axis=-1, keepdims=True)
    if name in spec.rare:
        cat, prev = spec.rare[name]
        c = var.code(cat)
        rest = np.delete(np.arange(var.size), c)
        others = probs[..., rest]
        probs[..., rest] = others / others.sum(axis=-1, keepdims=True) * (1 - prev)
        probs[..., c] = prev
    return probs


def _broadcast(schema: Schema, axes, table: np.ndarray) -> np.ndarray:
    pos = [schema.names.index(a) for a in axes]
    perm = np.argsort(pos)
    shape = [1] * len(schema.variables)
    for a in axes:
        shape[schema.names.index(a)] = schema[a].size
    return table.transpose(perm).reshape(shape)


def class_shares(spec: GroundTruthSpec) -> np.ndarray:
    """Class probabilities: ``latent_share`` for the last class, the rest split evenly."""
    t = spec.latent_classes
    if t == 1:
        return np.ones(1)
    return np.r_[np.full(t - 1, (1 - spec.latent_share) / (t - 1)), spec.latent_share]


def _class_joints(spec: GroundTruthSpec, rng: np.random.Generator) -> list[np.ndarray]:
    schema = spec.schema
    graph = build_graph(schema)
    seed = graph.seed_pair or ()
    t = spec.latent_classes
    offsets = {name: rng.standard_normal((t, schema[name].size)) for name in spec.latent_variables}
    if t == 2:
        # symmetric pair of tilts, one direction per class
        offsets = {name: np.array([-0.5, 0.5])[:, None] * o[:1] for name, o in offsets.items()}
    joints = []
    base_state = rng.bit_generator.state
    for z in range(t):
        # identical base tables for every class, only the tilt differs
        local = np.random.default_rng()
        local.bit_generator.state = base_state
        joint = np.ones(schema.space.shape)
        for name in graph.order:
            parents = schema.parents(name)
            if name in seed:
                parents = () if name == seed[0] else (seed[0],)
            tilt = spec.latent_strength * offsets[name][z] if name in offsets else None
            cpt = _cpt(local, schema, name, parents, spec, tilt)
            joint = joint * _broadcast(schema, tuple(parents) + (name,), cpt)
        joints.append(joint / joint.sum())
    return joints


def _marginals(schema: Schema, dense: np.ndarray) -> np.ndarray:
    k = len(schema.variables)
    return np.concatenate([dense.sum(axis=tuple(a for a in range(k) if a != j)) for j in range(k)])


def make_ground_truth(spec: GroundTruthSpec, seed: int | None = 0) -> GroundTruth:
    schema = spec.schema
    space = schema.space
    rng = np.random.default_rng(seed)
    shares = class_shares(spec)
    if spec.joint is not None:
        joints = [spec.joint] * spec.latent_classes
    else:
        joints = _class_joints(spec, rng)

    n = spec.population
    sizes = rng.multinomial(n, shares)
    parts = [rng.multinomial(m, j.ravel()).reshape(space.shape) for m, j in zip(sizes, joints)]
    counts = sum(parts)

    nz = np.flatnonzero(counts.ravel())
    population = SyntheticPopulation.from_counts(space, nz, counts.ravel()[nz])
    joint = TupleDistribution.from_dense(space, sum(w * j for w, j in zip(shares, joints)))

    k = len(schema.variables)
    d1 = {}
    for j, v in enumerate(schema.variables):
        d1[v.name] = UnivariateTable(v.name, counts.sum(axis=tuple(a for a in range(k) if a != j)))

    d2 = []
    for child in schema.names:
        parents = schema.parents(child)
        if not parents:
            continue
        axes = tuple(parents) + (child,)
        keep = [schema.names.index(a) for a in axes]
        summed = counts.sum(axis=tuple(a for a in range(k) if a not in keep))
        order = np.argsort(keep)  # summed axes are in schema order
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        d2.append(ConditionalTable(child, parents, summed.transpose(inverse)))

    realized = np.where(sizes > 0, sizes / n, 0.0)
    logw = np.log(np.where(realized > 0, realized, 1.0))
    lead = build_graph(schema).order[0]
    bshape = [1] * k
    bshape[schema.names.index(lead)] = schema[lead].size
    rows, names = [], []
    for loc in range(spec.aux_locations):
        # class shares on the log scale, renormalized, then per-class reweighting
        mix = np.where(realized > 0, np.exp(logw + spec.location_spread * rng.standard_normal(len(sizes))), 0.0)
        mix /= mix.sum()
        scale = np.divide(mix, realized, out=np.zeros_like(mix), where=realized > 0)
        tilt = np.exp(spec.composition_spread * rng.standard_normal(schema[lead].size)).reshape(bshape)
        mixed = tilt * sum(w * part for w, part in zip(scale, parts))
        row = _marginals(schema, mixed * (n / mixed.sum()))
        if spec.perturbation > 0:
            row = row * np.exp(spec.perturbation * rng.standard_normal(row.size))
        rows.append(np.round(row, 6))
        names.append(f"aux_{loc + 1:02d}")
    d3 = AuxiliaryMatrix(tuple(names), np.array(rows), schema)
    return GroundTruth(schema, population, joint, d1, d2, d3)


def write_ground_truth(truth: GroundTruth, out_dir, n_pop: int | None = None, seed: int = 0) -> dict[str, Path]:
    """Write schema, D1/D2/D3, the truth population and a ready-to-run config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "schema": out / "schema.ini",
        "d1": out / "d1.csv",
        "d2": out / "d2.csv",
        "d3": out / "d3.csv",
        "reference": out / "truth_population.csv",
        "joint": out / "truth_joint.csv",
        "config": out / "run.ini",
    }
    write_schema(truth.schema, paths["schema"])
    write_d1(truth.d1.values(), paths["d1"], truth.schema)
    write_d2(truth.d2, paths["d2"], truth.schema)
    write_d3(truth.d3, paths["d3"])
    truth.population.to_csv(paths["reference"])
    truth.joint.to_csv(paths["joint"])
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {
        "schema": "schema.ini",
        "d1": "d1.csv",
        "d2": "d2.csv",
        "d3": "d3.csv",
        "reference": "truth_population.csv",
        "n_pop": str(n_pop or len(truth.population)),
        "seed": str(seed),
        "methods": "all",
        "output": "report",
    }
    with open(paths["config"], "w") as fh:
        parser.write(fh)
    return paths
