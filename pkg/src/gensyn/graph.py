"""Variable dependency DAG built from declared conditioning."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, CycleError
from .schema import Schema, UnivariateTable


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    seed_pair: tuple[str, str] | None
    level: Mapping[str, int]
    order: tuple[str, ...]

    def parents(self, name: str) -> tuple[str, ...]:
        return tuple(p for p, c in self.edges if c == name)

    def children(self, name: str) -> tuple[str, ...]:
        return tuple(c for p, c in self.edges if p == name)

    def with_order(self, order) -> "DependencyGraph":
        order = tuple(order)
        check_order(self, order)
        return DependencyGraph(self.nodes, self.edges, self.seed_pair, self.level, order)

    def to_dot(self) -> str:
        lines = ["digraph dependencies {"]
        for name in self.order:
            lines.append(f'  "{name}" [level={self.level[name]}];')
        for p, c in self.edges:
            lines.append(f'  "{p}" -> "{c}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def check_order(graph: DependencyGraph, order) -> None:
    if sorted(order) != sorted(graph.nodes):
        raise ConfigError("ordering must contain every variable exactly once")
    pos = {n: i for i, n in enumerate(order)}
    collapsed = set(graph.seed_pair or ())
    for p, c in graph.edges:
        if {p, c} <= collapsed:
            continue
        if pos[p] >= pos[c]:
            raise ConfigError(f"ordering places {c!r} before its parent {p!r}")
    if graph.seed_pair and sorted(pos[n] for n in graph.seed_pair) != [0, 1]:
        raise ConfigError("the seed pair must open the ordering")


def build_graph(schema: Schema) -> DependencyGraph:
    """Collapse the single mutually-conditioned pair and assign levels.

    Levels are longest-path depths counted from 1; the seed pair and every
    root sit at level 1.
    """
    names = schema.names
    edges = tuple((p, c) for c in names for p in schema.parents(c))
    edge_set = set(edges)

    seed = None
    for p, c in edges:
        if (c, p) in edge_set:
            seed = tuple(sorted((p, c), key=names.index))
            break

    def node(n):
        return "+".join(seed) if seed and n in seed else n

    cnodes = list(dict.fromkeys(node(n) for n in names))
    cparents: dict[str, set[str]] = {n: set() for n in cnodes}
    for p, c in edges:
        if node(p) != node(c):
            cparents[node(c)].add(node(p))

    # Kahn's algorithm on the collapsed graph
    indeg = {n: len(cparents[n]) for n in cnodes}
    level = {n: 1 for n in cnodes if indeg[n] == 0}
    ready = [n for n in cnodes if indeg[n] == 0]
    done = []
    while ready:
        n = ready.pop(0)
        done.append(n)
        for m in cnodes:
            if n in cparents[m]:
                indeg[m] -= 1
                level[m] = max(level.get(m, 1), level[n] + 1)
                if indeg[m] == 0:
                    ready.append(m)
    if len(done) != len(cnodes):
        stuck = [n for n in names if node(n) not in done]
        raise CycleError(stuck)
    if seed and cparents[node(seed[0])]:
        raise ConfigError(f"mutually conditioned pair {seed} has other parents; it must sit at level 1")

    levels = {n: level[node(n)] for n in names}
    graph = DependencyGraph(names, edges, seed, levels, ())
    return graph.with_order(_sorted_order(graph, {n: i for i, n in enumerate(names)}))


def _sorted_order(graph: DependencyGraph, rank: Mapping[str, float | int]) -> tuple[str, ...]:
    seed = graph.seed_pair or ()

    def key(n):
        return (graph.level[n], 0 if n in seed else 1, rank[n] if n not in seed else graph.nodes.index(n), n)

    return tuple(sorted(graph.nodes, key=key))


def marginal_entropy(counts) -> float:
    p = np.asarray(counts, dtype=float)
    p = p / p.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def order_variables(graph: DependencyGraph, d1: Mapping[str, UnivariateTable] | None = None,
                    mode: str = "entropy", declared=None) -> tuple[str, ...]:
    """Total order respecting levels.

    Within a level variables are sorted by ascending entropy of their D1
    marginal (``mode="entropy"``) or by their position in ``declared``
    (``mode="declared"``); remaining ties fall back to the variable name.
    """
    if mode == "entropy":
        if d1 is None:
            raise ConfigError("entropy ordering needs D1 tables")
        missing = [n for n in graph.nodes if n not in d1]
        if missing:
            raise ConfigError(f"entropy ordering: no D1 table for {', '.join(missing)}")
        rank = {n: round(marginal_entropy(d1[n].counts), 12) for n in graph.nodes}
    elif mode == "declared":
        declared = tuple(declared or graph.nodes)
        rank = {n: declared.index(n) for n in graph.nodes}
    else:
        raise ConfigError(f"unknown ordering mode {mode!r}")
    order = _sorted_order(graph, rank)
    check_order(graph, order)
    return order
