"""Categorical schema, tuple space and the three macro-data table kinds.

Files handled here:

* schema config (INI): ``[variable:<name>]`` sections with ``categories`` and
  ``source``, a ``[conditioning]`` section (``child = parent1[, parent2]``),
  optional ``[remap:<name>]`` label renames, ``[rule:<id>]`` structural
  zeros and an ``[ordering]`` section.
* D1 CSV: ``variable,category,count``
* D2 CSV: ``child,parent1,parent2,p1_cat,p2_cat,child_cat,count`` with ``-``
  for an absent second parent.
* D3 CSV: ``location,<var>:<cat>,...`` with columns in schema order.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError

ABSENT = "-"


def _split_list(text: str) -> list[str]:
    return [item.strip() for item in text.replace("\n", ",").split(",") if item.strip()]


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


def format_number(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def _parse_count(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{where}: count {text!r} is not a number") from None
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"{where}: count must be a nonnegative decimal, got {text!r}")
    return value


@dataclass(frozen=True)
class Variable:
    name: str
    categories: tuple[str, ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if not self.name:
            raise ConfigError("variable name must be non-empty")
        if not self.categories:
            raise ConfigError(f"variable {self.name!r} has no categories")
        if len(set(self.categories)) != len(self.categories):
            raise ConfigError(f"variable {self.name!r} has duplicate category labels")

    @property
    def size(self) -> int:
        return len(self.categories)

    def code(self, label: str) -> int:
        try:
            return self.categories.index(label)
        except ValueError:
            raise ConfigError(f"unknown category {label!r} for variable {self.name!r}") from None


@dataclass(frozen=True)
class Rule:
    """Structural zero: ``child`` cannot take ``child_categories`` when
    ``parent`` is in ``parent_categories``."""

    name: str
    parent: str
    parent_categories: tuple[str, ...]
    child: str
    child_categories: tuple[str, ...]


@dataclass(frozen=True)
class Schema:
    variables: tuple[Variable, ...]
    conditioning: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    remap: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    rules: tuple[Rule, ...] = ()
    ordering_mode: str = "entropy"
    declared_order: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(
            self, "conditioning", {k: tuple(v) for k, v in self.conditioning.items() if v}
        )
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "declared_order", tuple(self.declared_order))
        names = [v.name for v in self.variables]
        if len(names) < 2:
            raise ConfigError("a schema needs at least two variables")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate variable names in schema")
        known = set(names)
        for child, parents in self.conditioning.items():
            if child not in known:
                raise ConfigError(f"conditioning refers to unknown variable {child!r}")
            for p in parents:
                if p not in known:
                    raise ConfigError(f"unknown parent {p!r} for variable {child!r}")
                if p == child:
                    raise ConfigError(f"variable {child!r} conditioned on itself")
            if len(set(parents)) != len(parents):
                raise ConfigError(f"duplicate parents for {child!r}")
        for var in self.remap:
            if var not in known:
                raise ConfigError(f"remap section for unknown variable {var!r}")
        for rule in self.rules:
            for name, labels in ((rule.parent, rule.parent_categories),
                                 (rule.child, rule.child_categories)):
                if name not in known:
                    raise ConfigError(f"rule {rule.name!r} refers to unknown variable {name!r}")
                for label in labels:
                    self[name].code(label)
        if self.ordering_mode not in ("entropy", "declared"):
            raise ConfigError(f"ordering mode must be 'entropy' or 'declared', got {self.ordering_mode!r}")
        if self.declared_order and sorted(self.declared_order) != sorted(names):
            raise ConfigError("declared ordering must list every variable exactly once")

    def __getitem__(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def __contains__(self, name) -> bool:
        return any(v.name == name for v in self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def space(self) -> "TupleSpace":
        return TupleSpace(self.variables)

    def parents(self, name: str) -> tuple[str, ...]:
        return self.conditioning.get(name, ())

    def translate(self, variable: str, label: str) -> str:
        return self.remap.get(variable, {}).get(label, label)


def tuple_space_size(schema: Schema) -> int:
    return math.prod(v.size for v in schema.variables)


@dataclass(frozen=True)
class TupleSpace:
    """Cartesian product of category sets, enumerated lexicographically
    (first variable most significant)."""

    variables: tuple[Variable, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.variables)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def position(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def index_of(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim == 1:
            codes = codes[None, :]
        return np.ravel_multi_index(tuple(codes.T), self.shape).astype(np.int64)

    def tuple_of(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        return np.stack(np.unravel_index(index, self.shape), axis=-1).astype(np.int64)

    def labels_of(self, index: int) -> tuple[str, ...]:
        codes = self.tuple_of(int(index))
        return tuple(v.categories[c] for v, c in zip(self.variables, codes))


# -- schema file ----------------------------------------------------------------

def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    return parser


def parse_schema(text: str) -> Schema:
    parser = _new_parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse schema config: {exc}") from None

    variables, remap, rules = [], {}, []
    conditioning: dict[str, tuple[str, ...]] = {}
    mode, declared = "entropy", ()
    for section in parser.sections():
        body = parser[section]
        kind, _, name = section.partition(":")
        kind, name = kind.strip(), name.strip()
        if kind == "variable":
            if "categories" not in body:
                raise ConfigError(f"[{section}] lacks a categories list")
            variables.append(Variable(name, tuple(_split_list(body["categories"])), body.get("source", "")))
        elif kind == "conditioning":
            for child, parents in body.items():
                conditioning[child] = tuple(_split_list(parents))
        elif kind == "remap":
            remap[name] = dict(body.items())
        elif kind == "rule":
            try:
                rules.append(Rule(name, body["parent"], tuple(_split_list(body["parent_categories"])),
                                  body["child"], tuple(_split_list(body["child_categories"]))))
            except KeyError as exc:
                raise ConfigError(f"[{section}] missing key {exc}") from None
        elif kind == "ordering":
            mode = body.get("mode", "entropy")
            declared = tuple(_split_list(body.get("declared", "")))
        else:
            raise ConfigError(f"unknown schema section [{section}]")
    if len({v.name for v in variables}) != len(variables):
        raise ConfigError("duplicate variable names in schema")
    return Schema(tuple(variables), conditioning, remap, tuple(rules), mode, declared)


def load_schema(path) -> Schema:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"schema file not found: {path}")
    return parse_schema(path.read_text())


def dump_schema(schema: Schema) -> str:
    parser = _new_parser()
    for v in schema.variables:
        parser[f"variable:{v.name}"] = {"categories": ", ".join(v.categories), "source": v.source}
    if schema.conditioning:
        parser["conditioning"] = {k: ", ".join(p) for k, p in schema.conditioning.items()}
    for var, mapping in schema.remap.items():
        parser[f"remap:{var}"] = dict(mapping)
    for rule in schema.rules:
        parser[f"rule:{rule.name}"] = {
            "parent": rule.parent,
            "parent_categories": ", ".join(rule.parent_categories),
            "child": rule.child,
            "child_categories": ", ".join(rule.child_categories),
        }
    ordering = {"mode": schema.ordering_mode}
    if schema.declared_order:
        ordering["declared"] = ", ".join(schema.declared_order)
    parser["ordering"] = ordering
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def write_schema(schema: Schema, path) -> None:
    Path(path).write_text(dump_schema(schema))


# -- D1 --------------------------------------------------------------------------

@dataclass(frozen=True)
class UnivariateTable:
    variable: str
    counts: np.ndarray
    location: str = "target"

    def __post_init__(self):
        counts = _frozen(self.counts)
        if counts.ndim != 1 or np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ConfigError(f"D1 table for {self.variable!r} must hold nonnegative counts")
        if counts.sum() <= 0:
            raise ConfigError(f"D1 table for {self.variable!r} has zero total")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def read_d1(path, schema: Schema, location: str = "target") -> dict[str, UnivariateTable]:
    raw: dict[str, np.ndarray] = {}
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"variable", "category", "count"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: D1 header must be variable,category,count")
        for lineno, row in enumerate(reader, start=2):
            var = row["variable"].strip()
            if var not in schema:
                raise ConfigError(f"{path}:{lineno}: unknown variable {var!r}")
            label = schema.translate(var, row["category"].strip())
            code = schema[var].code(label)
            if (var, code) in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate entry for {var}={label}")
            seen.add((var, code))
            raw.setdefault(var, np.zeros(schema[var].size))[code] = _parse_count(row["count"], f"{path}:{lineno}")
    return {var: UnivariateTable(var, counts, location) for var, counts in raw.items()}


def write_d1(tables: Iterable[UnivariateTable], path, schema: Schema) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "category", "count"])
        for t in tables:
            for label, count in zip(schema[t.variable].categories, t.counts):
                w.writerow([t.variable, label, format_number(count)])


# -- D2 --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalTable:
    """Cross-tabulated counts, axes ordered (parent1[, parent2], child)."""

    child: str
    parents: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        counts = _frozen(self.counts)
        if not 1 <= len(self.parents) <= 2:
            raise ConfigError(f"D2 table for {self.child!r} needs one or two parents")
        if counts.ndim != len(self.parents) + 1:
            raise ConfigError(f"D2 table for {self.child!r} has wrong dimensionality")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ConfigError(f"D2 table for {self.child!r} has negative counts")
        object.__setattr__(self, "counts", counts)

    @property
    def key(self) -> tuple[str, frozenset]:
        return self.child, frozenset(self.parents)

    @property
    def variables(self) -> tuple[str, ...]:
        return self.parents + (self.child,)


def read_d2(path, schema: Schema) -> list[ConditionalTable]:
    cells: dict[tuple[str, tuple[str, ...]], np.ndarray] = {}
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"child", "parent1", "parent2", "p1_cat", "p2_cat", "child_cat", "count"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: D2 header must be " + ",".join(sorted(need)))
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            child = row["child"].strip()
            parents = tuple(p for p in (row["parent1"].strip(), row["parent2"].strip()) if p != ABSENT)
            labels = [row["p1_cat"].strip(), row["p2_cat"].strip()][: len(parents)]
            for name in (child,) + parents:
                if name not in schema:
                    raise ConfigError(f"{where}: unknown variable {name!r}")
            if not parents:
                raise ConfigError(f"{where}: D2 row without parents")
            key = (child, parents)
            if key not in cells:
                cells[key] = np.zeros([schema[p].size for p in parents] + [schema[child].size])
            idx = tuple(schema[p].code(schema.translate(p, lab)) for p, lab in zip(parents, labels))
            idx += (schema[child].code(schema.translate(child, row["child_cat"].strip())),)
            if (key, idx) in seen:
                raise ConfigError(f"{where}: duplicate D2 cell")
            seen.add((key, idx))
            cells[key][idx] = _parse_count(row["count"], where)
    return [ConditionalTable(child, parents, counts) for (child, parents), counts in cells.items()]


def write_d2(tables: Iterable[ConditionalTable], path, schema: Schema) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["child", "parent1", "parent2", "p1_cat", "p2_cat", "child_cat", "count"])
        for t in tables:
            axes = [schema[n].categories for n in t.variables]
            for idx in np.ndindex(*t.counts.shape):
                labels = [axes[a][i] for a, i in enumerate(idx)]
                parents = list(t.parents) + [ABSENT] * (2 - len(t.parents))
                pcats = labels[:-1] + [ABSENT] * (2 - len(t.parents))
                w.writerow([t.child, *parents, *pcats, labels[-1], format_number(t.counts[idx])])


# -- D3 --------------------------------------------------------------------------

def component_blocks(schema: Schema) -> dict[str, slice]:
    """Column slice of each variable inside the concatenated component axis."""
    blocks, start = {}, 0
    for v in schema.variables:
        blocks[v.name] = slice(start, start + v.size)
        start += v.size
    return blocks


def component_labels(schema: Schema) -> list[str]:
    return [f"{v.name}:{c}" for v in schema.variables for c in v.categories]


@dataclass(frozen=True)
class AuxiliaryMatrix:
    """Locations x components count matrix (components in schema order)."""

    locations: tuple[str, ...]
    counts: np.ndarray
    schema: Schema

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        counts = _frozen(self.counts)
        m_comp = sum(v.size for v in self.schema.variables)
        if counts.ndim != 2 or counts.shape != (len(self.locations), m_comp):
            raise ConfigError(f"D3 matrix must be {len(self.locations)} x {m_comp}, got {counts.shape}")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ConfigError("D3 matrix has negative or non-finite cells")
        if len(self.locations) < 2:
            raise ConfigError("D3 needs at least two auxiliary locations")
        object.__setattr__(self, "counts", counts)

    @property
    def blocks(self) -> dict[str, slice]:
        return component_blocks(self.schema)


def normalize_auxiliary(d3: AuxiliaryMatrix) -> np.ndarray:
    """Convert counts to per-variable shares within each location row."""
    out = np.empty_like(d3.counts)
    for name, block in d3.blocks.items():
        totals = d3.counts[:, block].sum(axis=1)
        bad = np.flatnonzero(totals <= 0)
        if bad.size:
            raise ConfigError(f"location {d3.locations[bad[0]]!r} has zero total for variable {name!r}")
        out[:, block] = d3.counts[:, block] / totals[:, None]
    return out


def read_d3(path, schema: Schema) -> AuxiliaryMatrix:
    expected = component_labels(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty D3 file") from None
        if not header or header[0] != "location":
            raise ConfigError(f"{path}: D3 header must start with 'location'")
        columns = []
        for col in header[1:]:
            var, sep, label = col.partition(":")
            if not sep or var not in schema:
                raise ConfigError(f"{path}: bad D3 column {col!r}")
            columns.append(f"{var}:{schema.translate(var, label)}")
        if columns != expected:
            raise ConfigError(f"{path}: D3 columns must follow schema order: {','.join(expected)}")
        locations, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields")
            locations.append(row[0])
            rows.append([_parse_count(x, f"{path}:{lineno}") for x in row[1:]])
    return AuxiliaryMatrix(tuple(locations), np.array(rows, dtype=float).reshape(len(rows), len(expected)), schema)


def write_d3(d3: AuxiliaryMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["location"] + component_labels(d3.schema))
        for loc, row in zip(d3.locations, d3.counts):
            w.writerow([loc] + [format_number(x) for x in row])


def d1_from_mapping(schema: Schema, counts: Mapping[str, Sequence[float]]) -> dict[str, UnivariateTable]:
    return {name: UnivariateTable(name, np.asarray(c, dtype=float)) for name, c in counts.items()}
