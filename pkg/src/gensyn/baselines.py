"""Comparison methods built from the same stages as the main pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .conditional import run_chain
from .copula import CopulaSpec, draw_component_probs, integer_targets, match_marginals
from .distribution import TupleDistribution
from .graph import DependencyGraph
from .maxent import ConstraintSet, MaxEntResult, solve, threshold
from .schema import ConditionalTable, Schema, TupleSpace, UnivariateTable
from .synthesis import SyntheticPopulation


def baseline_maxent(constraints: ConstraintSet, space: TupleSpace | None = None,
                    tau: float | None = None) -> MaxEntResult:
    """Maximum entropy with a flat prior over the whole tuple space."""
    space = space or constraints.schema.space
    u = TupleDistribution.uniform(space)
    if tau is not None and 1.0 / space.size >= tau:
        u = threshold(u, tau)
    return solve(u, constraints)


def sample_population(p: TupleDistribution, n_pop: int, rng: np.random.Generator) -> SyntheticPopulation:
    counts = rng.multinomial(n_pop, p.prob / p.prob.sum())
    keep = counts > 0
    return SyntheticPopulation.from_counts(p.space, p.index[keep], counts[keep])


def baseline_conditional(schema: Schema, graph: DependencyGraph, d1: Mapping[str, UnivariateTable],
                         d2: Iterable[ConditionalTable], n_pop: int, rng: np.random.Generator,
                         p1: TupleDistribution | None = None) -> SyntheticPopulation:
    """Multinomial sample of ``n_pop`` records from the conditional chain."""
    p1 = p1 if p1 is not None else run_chain(schema, graph, d1, d2)
    return sample_population(p1, n_pop, rng)


def baseline_sync(spec: CopulaSpec, eta: Mapping[str, np.ndarray], n_pop: int, rng: np.random.Generator,
                  space: TupleSpace) -> SyntheticPopulation:
    """One copula round with ``n_pop`` draws matched to exact integer marginals."""
    y = draw_component_probs(spec, rng, n_pop)
    profiles = match_marginals(y, spec.blocks, eta, rng, space.names)
    order = np.argsort(space.index_of(profiles), kind="stable")
    return SyntheticPopulation(space, profiles[order])


def exact_targets(d1: Mapping[str, UnivariateTable], names, n_pop: int) -> dict[str, np.ndarray]:
    """D1 counts when they already total ``n_pop``, else their Hamilton rounding."""
    out = {}
    for name in names:
        counts = d1[name].counts
        if np.allclose(counts, np.round(counts)) and int(round(counts.sum())) == n_pop:
            out[name] = np.round(counts).astype(np.int64)
        else:
            out[name] = integer_targets(d1, [name], n_pop)[name]
    return out


def baseline_syntropy(p1: TupleDistribution, constraints: ConstraintSet, tau: float | None = None,
                      n_pop: int | None = None) -> MaxEntResult:
    """Max entropy with the thresholded conditional chain as prior."""
    return solve(threshold(p1, tau, n_pop), constraints)


@dataclass
class AnnealParams:
    proposals: int = 100_000
    cooling: float = 0.995
    initial_temperature: float | None = None  # defaults to the starting TAE


@dataclass
class AnnealResult:
    population: SyntheticPopulation
    initial_tae: float
    final_tae: float
    proposals: int
    accepted: int
    best_trace: list = field(default_factory=list)


def anneal_to_marginals(population: SyntheticPopulation, targets: Mapping[str, np.ndarray],
                        candidates: SyntheticPopulation, rng: np.random.Generator,
                        params: AnnealParams | None = None) -> AnnealResult:
    """Simulated annealing over record replacements to shrink TAE.

    A proposal swaps a random record for the next candidate profile. Moves
    that do not raise TAE are always accepted, worse ones with probability
    ``exp(-delta / T)``; ``T`` decays geometrically per proposal. The best
    population seen is returned, so ``best_trace`` never increases.
    """
    params = params or AnnealParams()
    names = population.space.names
    k = len(names)
    recs = population.records.copy()
    n = recs.shape[0]
    target = [list(np.asarray(targets[nm], dtype=np.int64).tolist()) for nm in names]
    counts = [np.bincount(recs[:, j], minlength=len(target[j])).tolist() for j in range(k)]
    current = sum(abs(c - t) for j in range(k) for c, t in zip(counts[j], target[j]))
    initial = current
    temp = float(params.initial_temperature if params.initial_temperature is not None else max(current, 1))
    best, best_at = current, 0
    trace = [current]
    moves = []
    pool = candidates.records
    picks = rng.integers(0, n, size=params.proposals) if n else np.zeros(0, np.int64)
    cand_rows = rng.integers(0, pool.shape[0], size=params.proposals)
    coins = rng.random(params.proposals)
    rows = recs.tolist()
    pool_rows = pool.tolist()
    accepted = done = 0
    for step in range(params.proposals):
        if current == 0 or n == 0:
            break
        done += 1
        i = int(picks[step])
        old, new = rows[i], pool_rows[int(cand_rows[step])]
        delta = 0
        for j in range(k):
            a, b = old[j], new[j]
            if a != b:
                ca, cb, ta, tb = counts[j][a], counts[j][b], target[j][a], target[j][b]
                delta += abs(ca - 1 - ta) - abs(ca - ta) + abs(cb + 1 - tb) - abs(cb - tb)
        if delta <= 0 or coins[step] < math.exp(-delta / temp):
            for j in range(k):
                counts[j][old[j]] -= 1
                counts[j][new[j]] += 1
            moves.append((i, new))
            rows[i] = new
            current += delta
            accepted += 1
            if current < best:
                best, best_at = current, len(moves)
                trace.append(best)
        temp = max(temp * params.cooling, 1e-12)
    best_recs = recs.copy()
    for i, new in moves[:best_at]:
        best_recs[i] = new
    return AnnealResult(SyntheticPopulation(population.space, _sorted(population.space, best_recs)),
                        float(initial), float(best), done, accepted, trace)


def _sorted(space, recs: np.ndarray) -> np.ndarray:
    return recs[np.argsort(space.index_of(recs), kind="stable")] if len(recs) else recs


def baseline_synthacs(schema: Schema, graph: DependencyGraph, d1: Mapping[str, UnivariateTable],
                      d2: Iterable[ConditionalTable], n_pop: int, rng: np.random.Generator,
                      params: AnnealParams | None = None, p1: TupleDistribution | None = None) -> AnnealResult:
    """Conditional-chain sample refined by annealing toward the D1 counts.

    A structural stand-in for the SynthACS R package; annealing schedule
    values are our own defaults.
    """
    p1 = p1 if p1 is not None else run_chain(schema, graph, d1, d2)
    start = sample_population(p1, n_pop, rng)
    pool = sample_population(p1, max(n_pop, 1000), rng)
    targets = exact_targets(d1, schema.names, n_pop)
    return anneal_to_marginals(start, targets, pool, rng, params)
