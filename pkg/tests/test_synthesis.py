import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gensyn.distribution import TupleDistribution
from gensyn.schema import Schema, TupleSpace, Variable
from gensyn.synthesis import SyntheticPopulation, expand, largest_remainder

from oracles import brute_force_rounding

SPACE = TupleSpace((Variable("a", ("a0", "a1", "a2")), Variable("b", ("b0", "b1"))))


def _weights(index, prob):
    return TupleDistribution.from_pairs(SPACE, index, prob)


def test_expand_examples():
    pop = expand(_weights([0, 1], [0.25, 0.75]), 4)
    assert pop.prevalence()[1].tolist() == [1, 3]
    pop = expand(_weights([0, 1, 2], [0.333, 0.333, 0.334]), 10)
    assert pop.prevalence()[1].tolist() == [3, 3, 4]
    point = expand(_weights([5], [1.0]), 17)
    assert len(point) == 17
    assert (point.records == point.records[0]).all()


def test_rounding_ties_go_to_lower_index():
    assert largest_remainder([0.5, 0.5, 0.5, 0.5], 2).tolist() == [1, 1, 0, 0]


def test_expand_rejects_empty_population():
    with pytest.raises(ValueError):
        expand(_weights([0], [1.0]), 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda q: sum(q) > 1e-3),
       st.integers(1, 20))
def test_rounding_is_exact_and_optimal(raw, n):
    quotas = np.array(raw) / sum(raw) * n
    counts = largest_remainder(quotas, n)
    assert counts.sum() == n
    assert np.all(counts >= 0)
    got = float(np.abs(counts - quotas).sum())
    assert got <= brute_force_rounding(quotas.tolist(), n) + 1e-9


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5000))
def test_population_size_is_exact_and_within_support(seed, n):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, SPACE.size + 1))
    index = np.sort(rng.choice(SPACE.size, size=k, replace=False))
    w = _weights(index, rng.dirichlet(np.ones(k)))
    pop = expand(w, n)
    assert len(pop) == n
    assert set(pop.prevalence()[0].tolist()) <= set(index.tolist())


def test_csv_round_trip(tmp_path):
    schema = Schema(SPACE.variables)
    pop = expand(_weights([0, 3, 5], [0.2, 0.3, 0.5]), 10)
    pop.to_csv(tmp_path / "pop.csv")
    assert (tmp_path / "pop.csv").read_text().splitlines()[:2] == ["a,b", "a0,b0"]
    back = SyntheticPopulation.read_csv(tmp_path / "pop.csv", schema)
    np.testing.assert_array_equal(back.records, pop.records)
