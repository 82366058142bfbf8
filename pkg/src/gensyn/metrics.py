"""Evaluation measures: TAE, KL divergence, Cramer's V and Frobenius distance."""
from __future__ import annotations

import itertools
from typing import Mapping

import numpy as np

from .distribution import TupleDistribution, same_space
from .errors import ConfigError
from .schema import UnivariateTable
from .synthesis import SyntheticPopulation

KL_EPS = 1e-9


def tae(observed: Mapping[str, np.ndarray], expected: Mapping[str, np.ndarray]) -> float:
    """Total absolute error summed over variables and categories."""
    return float(sum(per_variable_tae(observed, expected).values()))


def per_variable_tae(observed, expected) -> dict[str, float]:
    if set(observed) != set(expected):
        raise ConfigError("TAE needs the same variables on both sides")
    out = {}
    for name in expected:
        o = np.asarray(observed[name], dtype=float)
        e = np.asarray(expected[name], dtype=float)
        if o.shape != e.shape:
            raise ConfigError(f"TAE: category sets of {name!r} are misaligned")
        out[name] = float(np.abs(o - e).sum())
    return out


def population_tae(population: SyntheticPopulation, d1: Mapping[str, UnivariateTable]) -> dict[str, float]:
    observed = {n: population.marginal_counts(n) for n in d1}
    return per_variable_tae(observed, {n: t.counts for n, t in d1.items()})


def kl_divergence(p: TupleDistribution, q: TupleDistribution, eps: float = KL_EPS) -> float:
    """``sum_x P(x) ln(P(x)/Q(x))`` (nats).

    ``eps`` is added to every Q cell on P's support before Q is renormalized,
    which keeps the value finite when Q misses tuples P supports.
    """
    if not same_space(p.space, q.space):
        raise ConfigError("KL divergence needs distributions over the same tuple space")
    support = np.union1d(p.index, q.index)
    pd = np.zeros(support.size)
    qd = np.zeros(support.size)
    pd[np.searchsorted(support, p.index)] = p.prob
    qd[np.searchsorted(support, q.index)] = q.prob
    on_p = pd > 0
    qd[on_p] += eps
    qd /= qd.sum()
    return float(max(np.sum(pd[on_p] * np.log(pd[on_p] / qd[on_p])), 0.0))


def cramers_v_table(table) -> float:
    """Cramer's V of a two-way table of counts or probabilities (no bias correction).

    Empty rows/columns are ignored; if fewer than two rows or columns remain
    the association is defined as 0.
    """
    t = np.asarray(table, dtype=float)
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    r, c = t.shape
    if min(r, c) < 2:
        return 0.0
    n = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    chi2 = float(((t - expected) ** 2 / expected).sum())
    v = np.sqrt(chi2 / (n * (min(r, c) - 1)))
    return float(min(max(v, 0.0), 1.0))


def contingency(a: str, b: str, population) -> np.ndarray:
    if isinstance(population, TupleDistribution):
        return population.pair_table(a, b)
    space = population.space
    ia, ib = space.position(a), space.position(b)
    ra, rb = space.shape[ia], space.shape[ib]
    flat = population.records[:, ia] * rb + population.records[:, ib]
    return np.bincount(flat, minlength=ra * rb).reshape(ra, rb)


def cramers_v(var_a: str, var_b: str, population) -> float:
    """Cramer's V between two variables of a population (or a distribution)."""
    if len(population) == 0:
        raise ConfigError("Cramer's V needs a non-empty population")
    return cramers_v_table(contingency(var_a, var_b, population))


def association_matrix(population, names=None) -> np.ndarray:
    names = list(names or population.space.names)
    k = len(names)
    out = np.eye(k)
    for i, j in itertools.combinations(range(k), 2):
        out[i, j] = out[j, i] = cramers_v(names[i], names[j], population)
    return out


def frobenius_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError("association matrices differ in shape")
    return float(np.sqrt(((a - b) ** 2).sum()))


def evaluate(population: SyntheticPopulation, d1: Mapping[str, UnivariateTable],
             reference: SyntheticPopulation | None = None) -> dict:
    """Metrics block: TAE vs D1 always; KL and Frobenius when a reference is given."""
    names = list(population.space.names)
    per_var = population_tae(population, d1)
    assoc = association_matrix(population, names)
    report = {
        "n_pop": len(population),
        "tae": float(sum(per_var.values())),
        "per_variable_tae": per_var,
        "kl": None,
        "frobenius": None,
        "association_matrix": {"variables": names, "values": assoc.tolist()},
    }
    if reference is not None:
        ref_assoc = association_matrix(reference, names)
        report["kl"] = kl_divergence(reference.distribution(), population.distribution())
        report["frobenius"] = frobenius_distance(ref_assoc, assoc)
        report["reference_association_matrix"] = {"variables": names, "values": ref_assoc.tolist()}
    return report
