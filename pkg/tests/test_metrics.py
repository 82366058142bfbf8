import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gensyn.copula import estimate_p2, spec_from_schema
from gensyn.conditional import run_chain
from gensyn.distribution import TupleDistribution
from gensyn.errors import ConfigError
from gensyn.graph import build_graph
from gensyn.metrics import (association_matrix, cramers_v, cramers_v_table, evaluate, frobenius_distance,
                            kl_divergence, tae)
from gensyn.schema import Schema, TupleSpace, UnivariateTable, Variable, normalize_auxiliary
from gensyn.synthesis import SyntheticPopulation
from gensyn.truth import load_truth_spec, make_ground_truth

from conftest import data_path
from oracles import chi_square_v, kl_sum

LINE = TupleSpace((Variable("a", ("a0", "a1", "a2")),))


def _dist(p, space=LINE):
    return TupleDistribution.from_dense(space, p)


def test_tae_examples():
    assert tae({"a": [3, 4]}, {"a": [3, 4]}) == 0
    assert tae({"a": [10, 20]}, {"a": [15, 15]}) == 10
    with pytest.raises(ConfigError):
        tae({"a": [1, 2]}, {"a": [1, 2, 3]})
    with pytest.raises(ConfigError):
        tae({"a": [1]}, {"b": [1]})


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50)), min_size=3, max_size=6))
def test_tae_is_an_l1_distance(rows):
    x, y, z = ({"v": np.array([r[i] for r in rows])} for i in range(3))
    assert tae(x, x) == 0
    assert tae(x, z) <= tae(x, y) + tae(y, z)


def test_kl_examples():
    two = TupleSpace((Variable("a", ("a0", "a1")),))
    assert kl_divergence(_dist([0.5, 0.5], two), _dist([0.5, 0.5], two)) == 0
    assert kl_divergence(_dist([0.5, 0.5], two), _dist([0.25, 0.75], two)) == pytest.approx(0.143841, abs=1e-6)
    assert kl_sum([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841, abs=1e-6)


def test_kl_smoothing_is_finite_and_decreases_with_eps():
    p, q = _dist([0.4, 0.4, 0.2]), _dist([0.5, 0.5, 0.0])
    coarse, fine = kl_divergence(p, q, eps=1e-6), kl_divergence(p, q, eps=1e-9)
    assert math.isfinite(fine)
    assert coarse < fine


@settings(max_examples=1000)
@given(st.integers(0, 2**32 - 1))
def test_kl_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p, q = (rng.dirichlet(np.full(3, 0.5)) for _ in range(2))
    assert kl_divergence(_dist(p), _dist(q)) >= 0


def test_kl_matches_direct_summation(rng):
    p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    assert kl_divergence(_dist(p), _dist(q)) == pytest.approx(kl_sum(p, (q + 1e-9) / (1 + 3e-9)), abs=1e-12)


def test_cramers_v_examples():
    assert cramers_v_table([[30, 10], [10, 30]]) == pytest.approx(0.5, abs=1e-12)
    assert chi_square_v([[30, 10], [10, 30]]) == pytest.approx(0.5, abs=1e-12)
    assert cramers_v_table(np.outer([2, 3], [1, 4, 5])) == pytest.approx(0, abs=1e-12)
    assert cramers_v_table([[5, 0], [3, 0]]) == 0
    space = TupleSpace((Variable("p", ("0", "1")), Variable("c", ("0", "1"))))
    copy = SyntheticPopulation(space, np.array([[0, 0], [1, 1], [1, 1], [0, 0], [1, 1]]))
    assert cramers_v("p", "c", copy) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        cramers_v("p", "c", SyntheticPopulation(space, np.zeros((0, 2), dtype=int)))


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_cramers_v_permutation_invariant_and_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    r, c = rng.integers(2, 5, size=2)
    table = rng.integers(1, 40, size=(r, c))
    v = cramers_v_table(table)
    assert 0 <= v <= 1
    assert v == pytest.approx(chi_square_v(table), abs=1e-12)
    shuffled = table[rng.permutation(r)][:, rng.permutation(c)]
    assert cramers_v_table(shuffled) == pytest.approx(v, abs=1e-12)


def test_frobenius_examples():
    eye = np.eye(2)
    assert frobenius_distance(eye, eye) == 0
    assert frobenius_distance(eye, np.zeros((2, 2))) == pytest.approx(math.sqrt(2))
    b = eye.copy()
    b[0, 1] = b[1, 0] = 0.05
    assert frobenius_distance(eye, b) == pytest.approx(0.0707, abs=1e-4)
    with pytest.raises(ConfigError):
        frobenius_distance(eye, np.eye(3))


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_frobenius_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.uniform(size=(4, 4)) for _ in range(3))
    assert frobenius_distance(a, b) == pytest.approx(frobenius_distance(b, a))
    assert frobenius_distance(a, c) <= frobenius_distance(a, b) + frobenius_distance(b, c) + 1e-12


def test_association_matrix_shape(rng):
    space = TupleSpace((Variable("a", "xy"), Variable("b", "uvw"), Variable("c", "pq")))
    pop = SyntheticPopulation(space, np.column_stack([rng.integers(0, s, 200) for s in (2, 3, 2)]))
    m = association_matrix(pop)
    assert m.shape == (3, 3)
    np.testing.assert_array_equal(np.diag(m), 1)
    np.testing.assert_array_equal(m, m.T)
    assert np.all((m >= 0) & (m <= 1))


def test_evaluate_block():
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")))
    pop = SyntheticPopulation(schema.space, np.array([[0, 0], [1, 1], [1, 0]]))
    d1 = {"a": UnivariateTable("a", np.array([1.0, 2.0])), "b": UnivariateTable("b", np.array([1.0, 2.0]))}
    report = evaluate(pop, d1, reference=pop)
    assert report["tae"] == 2
    assert report["per_variable_tae"] == {"a": 0.0, "b": 2.0}
    assert report["kl"] == pytest.approx(0, abs=1e-12)
    assert report["frobenius"] == 0
    assert evaluate(pop, d1)["kl"] is None


def test_unconditioned_association_conditional_underestimates_and_copula_is_nearer():
    truth = make_ground_truth(load_truth_spec(data_path("harness_truth.ini")), seed=0)
    schema = truth.schema
    p1 = run_chain(schema, build_graph(schema), truth.d1, truth.d2)
    spec = spec_from_schema(schema, normalize_auxiliary(truth.d3), n_draw=5000, iterations=5)
    p2 = estimate_p2(spec, schema.space, d1=truth.d1, rng=np.random.default_rng(0))
    # marital and poverty share no conditioning path in the harness schema
    v_truth = cramers_v("marital", "poverty", truth.population)
    v_chain = cramers_v("marital", "poverty", p1)
    v_copula = cramers_v("marital", "poverty", p2)
    assert v_chain < v_truth
    assert abs(v_copula - v_truth) < abs(v_chain - v_truth)
