"""Joint distribution from chained conditional tables (the ``p1`` estimate)."""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .distribution import TupleDistribution
from .errors import ConfigError, NumericalError
from .graph import DependencyGraph
from .schema import ConditionalTable, Rule, Schema, TupleSpace, UnivariateTable, Variable


def index_tables(tables: Iterable[ConditionalTable]) -> dict:
    out = {}
    for t in tables:
        out.setdefault(t.key, t)
    return out


def _masked(cond: np.ndarray, axes: Sequence[str], child: str, rules: Sequence[Rule], schema: Schema) -> np.ndarray:
    """Zero rule-forbidden (parent category, child category) cells."""
    cond = cond.copy()
    for rule in rules:
        if rule.child != child or rule.parent not in axes:
            continue
        axis = list(axes).index(rule.parent)
        pcodes = [schema[rule.parent].code(c) for c in rule.parent_categories]
        ccodes = [schema[child].code(c) for c in rule.child_categories]
        sl = [slice(None)] * cond.ndim
        sl[axis] = pcodes
        block = cond[tuple(sl)]
        block[..., ccodes] = 0.0
        cond[tuple(sl)] = block
    return cond


def _row_normalize(counts: np.ndarray, fallback: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    totals = counts.sum(axis=-1, keepdims=True)
    empty = totals[..., 0] <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 0.0)
    if fallback is not None and empty.any():
        cond[empty] = fallback
        empty = np.zeros_like(empty)
    return cond, empty


def seed_joint(table: ConditionalTable, schema: Schema, order: Sequence[str] | None = None) -> TupleDistribution:
    """Normalized joint over a seed pair from its cross-tabulated counts."""
    if len(table.parents) != 1:
        raise ConfigError("seed table must cover exactly two variables")
    names = table.variables
    counts = np.asarray(table.counts, dtype=float)
    if counts.sum() <= 0:
        raise ConfigError(f"seed table {names} is all zero")
    for rule in schema.rules:
        if {rule.parent, rule.child} == set(names):
            # keep the parent marginal, renormalize the affected child rows
            axes = (rule.parent, rule.child)
            if names != axes:
                counts = counts.T
            marg = counts.sum(axis=1)
            cond, _ = _row_normalize(_masked(counts, axes[:1], rule.child, [rule], schema), None)
            counts = cond * marg[:, None]
            if names != axes:
                counts = counts.T
    order = tuple(order or names)
    if order != names:
        counts = counts.T
    space = TupleSpace(tuple(schema[n] for n in order))
    return TupleDistribution.from_dense(space, counts)


def extend(joint: TupleDistribution, child: Variable, cond: ConditionalTable, schema: Schema | None = None,
           fallback: UnivariateTable | None = None) -> TupleDistribution:
    """Append ``child`` using p(child | parents) * p(joint).

    Conditional rows are read off ``cond`` counts. A parent combination that
    carries mass but has an all-zero row falls back to the child's D1
    marginal when ``fallback`` is given.
    """
    if cond.child != child.name:
        raise ConfigError(f"conditional table is for {cond.child!r}, not {child.name!r}")
    missing = [p for p in cond.parents if p not in joint.space.names]
    if missing:
        raise ConfigError(f"parents {missing} of {child.name!r} are not in the joint yet")
    counts = np.asarray(cond.counts, dtype=float)
    if schema is not None and schema.rules:
        counts = _masked(counts, cond.parents, child.name, schema.rules, schema)
    probs, empty = _row_normalize(counts, None if fallback is None else fallback.proportions)

    codes = joint.codes()
    parent_codes = tuple(codes[:, joint.space.position(p)] for p in cond.parents)
    rows = probs[parent_codes]
    bad = empty[parent_codes] & (joint.prob > 0)
    if bad.any():
        labels = joint.space.labels_of(joint.index[np.argmax(bad)])
        raise NumericalError(f"no conditional mass for {child.name!r} given {dict(zip(joint.space.names, labels))}")
    return _append(joint, child, rows)


def extend_independent(joint: TupleDistribution, child: Variable, d1: UnivariateTable) -> TupleDistribution:
    if d1.variable != child.name:
        raise ConfigError(f"D1 table is for {d1.variable!r}, not {child.name!r}")
    return _append(joint, child, np.broadcast_to(d1.proportions, (len(joint), child.size)))


def _append(joint: TupleDistribution, child: Variable, rows: np.ndarray) -> TupleDistribution:
    space = TupleSpace(joint.space.variables + (child,))
    index = joint.index[:, None] * child.size + np.arange(child.size)[None, :]
    return TupleDistribution.from_pairs(space, index, joint.prob[:, None] * rows)


def marginal_joint(d1: UnivariateTable, variable: Variable) -> TupleDistribution:
    space = TupleSpace((variable,))
    return TupleDistribution.from_dense(space, d1.proportions)


def run_chain(schema: Schema, graph: DependencyGraph, d1: Mapping[str, UnivariateTable],
              d2: Iterable[ConditionalTable], order: Sequence[str] | None = None) -> TupleDistribution:
    """Chain conditionals in graph order; returns p1 over the schema's tuple space."""
    order = tuple(order or graph.order)
    tables = index_tables(d2)

    if graph.seed_pair:
        a, b = order[:2]
        table = tables.get((b, frozenset((a,)))) or tables.get((a, frozenset((b,))))
        if table is None:
            raise ConfigError(f"no D2 table covers the seed pair ({a}, {b})")
        joint = seed_joint(table, schema, order=(a, b))
        start = 2
    else:
        first = order[0]
        if schema.parents(first):
            raise ConfigError(f"first variable {first!r} has parents")
        if first not in d1:
            raise ConfigError(f"no D1 table for {first!r}")
        joint = marginal_joint(d1[first], schema[first])
        start = 1

    for name in order[start:]:
        parents = schema.parents(name)
        if parents:
            table = tables.get((name, frozenset(parents)))
            if table is None:
                raise ConfigError(f"no D2 table for {name!r} given {', '.join(parents)}")
            joint = extend(joint, schema[name], table, schema, d1.get(name))
        else:
            if name not in d1:
                raise ConfigError(f"no D1 table for independent variable {name!r}")
            joint = extend_independent(joint, schema[name], d1[name])
    return joint.reorder(schema.names)


def apply_rules(p: TupleDistribution, schema: Schema) -> TupleDistribution:
    """Drop tuples that break a structural rule and renormalize the rest."""
    if not schema.rules:
        return p
    codes = p.codes()
    keep = np.ones(len(p), dtype=bool)
    for rule in schema.rules:
        pcodes = [schema[rule.parent].code(c) for c in rule.parent_categories]
        ccodes = [schema[rule.child].code(c) for c in rule.child_categories]
        hit = np.isin(codes[:, p.space.position(rule.parent)], pcodes)
        hit &= np.isin(codes[:, p.space.position(rule.child)], ccodes)
        keep &= ~hit
    if not keep.any():
        raise NumericalError("structural rules remove every tuple")
    return TupleDistribution.from_pairs(p.space, p.index[keep], p.prob[keep])
