import math
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gensyn.errors import ConfigError
from gensyn.schema import (AuxiliaryMatrix, ConditionalTable, Schema, TupleSpace, UnivariateTable, Variable,
                           component_labels, dump_schema, load_schema, normalize_auxiliary, parse_schema,
                           read_d1, read_d2, read_d3, tuple_space_size, write_d1, write_d2, write_d3)

from conftest import data_path
from oracles import enumerate_tuples


def test_acs_schema_has_eight_variables_with_documented_categories():
    schema = load_schema(data_path("acs_schema.ini"))
    assert len(schema.variables) == 8
    assert [v.size for v in schema.variables] == [16, 2, 5, 7, 3, 2, 2, 3]
    assert schema.parents("poverty") == ("gender", "employment")


def test_single_variable_config_is_rejected():
    text = "[variable:a]\ncategories = x, y\n"
    with pytest.raises(ConfigError, match="at least two"):
        parse_schema(text)


def test_unknown_parent_is_rejected():
    text = textwrap.dedent("""
        [variable:a]
        categories = x, y
        [variable:b]
        categories = u, v
        [conditioning]
        b = income
    """)
    with pytest.raises(ConfigError, match="unknown parent 'income'"):
        parse_schema(text)


@pytest.mark.parametrize("text, message", [
    ("[variable:a]\ncategories = x, x\n[variable:b]\ncategories = u\n", "duplicate category"),
    ("[variable:a]\ncategories = x\n[variable:a]\ncategories = y\n", "cannot parse"),
    ("[variable:a]\n[variable:b]\ncategories = u\n", "lacks a categories"),
    ("[variable:a]\ncategories = x\n[variable:b]\ncategories = u\n[bogus]\nk = v\n", "unknown schema section"),
    ("not an ini file", "cannot parse"),
])
def test_malformed_configs(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_schema(text)


def test_missing_schema_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_schema(tmp_path / "nope.ini")


def test_acyclicity_is_not_checked_at_load():
    text = textwrap.dedent("""
        [variable:a]
        categories = x, y
        [variable:b]
        categories = u, v
        [variable:c]
        categories = p, q
        [conditioning]
        a = b
        b = c
        c = a
    """)
    assert parse_schema(text).parents("c") == ("a",)


def test_tuple_space_sizes():
    assert tuple_space_size(load_schema(data_path("acs_schema.ini"))) == 40_320
    assert tuple_space_size(Schema((Variable("a", "01"), Variable("b", "01")))) == 4
    # product of the nine combined-set category counts
    combined = load_schema(data_path("combined_schema.ini"))
    assert tuple_space_size(combined) == math.prod([16, 2, 5, 7, 3, 2, 2, 2, 2]) == 53_760


def test_normalize_two_category_block():
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")))
    d3 = AuxiliaryMatrix(("l1", "l2"), np.array([[10, 30, 1, 1], [5, 5, 2, 6]]), schema)
    out = normalize_auxiliary(d3)
    assert out[0, :2] == pytest.approx([0.25, 0.75])
    assert out[1, 2:] == pytest.approx([0.25, 0.75])


def test_normalize_zero_block_names_location_and_variable():
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")))
    d3 = AuxiliaryMatrix(("l1", "l2"), np.array([[1, 1, 1, 1], [3, 4, 0, 0]]), schema)
    with pytest.raises(ConfigError, match="'l2'.*'b'"):
        normalize_auxiliary(d3)


def test_normalize_three_locations_blocks_sum_to_one(rng):
    schema = Schema((Variable("a", "xy"), Variable("b", "uvw")))
    d3 = AuxiliaryMatrix(("l1", "l2", "l3"), rng.uniform(0.1, 50, size=(3, 5)), schema)
    out = normalize_auxiliary(d3)
    assert out.shape == (3, 5)
    for r in range(3):
        # direct summation per block
        assert abs(sum(out[r, 0:2]) - 1) < 1e-9
        assert abs(sum(out[r, 2:5]) - 1) < 1e-9


def test_auxiliary_needs_two_locations():
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")))
    with pytest.raises(ConfigError, match="at least two"):
        AuxiliaryMatrix(("l1",), np.ones((1, 4)), schema)


def test_univariate_table_validation():
    with pytest.raises(ConfigError, match="zero total"):
        UnivariateTable("a", np.zeros(2))
    with pytest.raises(ConfigError, match="nonnegative"):
        UnivariateTable("a", np.array([1.0, -1.0]))


def test_conditional_table_validation():
    with pytest.raises(ConfigError, match="one or two parents"):
        ConditionalTable("c", (), np.ones(2))
    with pytest.raises(ConfigError, match="dimensionality"):
        ConditionalTable("c", ("a",), np.ones(2))


small_schemas = st.lists(st.integers(2, 4), min_size=2, max_size=4).map(
    lambda sizes: Schema(tuple(Variable(f"v{i}", tuple(f"c{j}" for j in range(s))) for i, s in enumerate(sizes)))
)


@given(small_schemas)
def test_flat_index_bijection(schema):
    space = schema.space
    tuples = enumerate_tuples(space.shape)
    idx = space.index_of(np.array(tuples))
    assert idx.tolist() == list(range(space.size))
    assert [tuple(t) for t in space.tuple_of(idx).tolist()] == tuples


@settings(max_examples=30)
@given(small_schemas, st.data())
def test_schema_and_table_round_trip(tmp_path_factory, schema, data):
    tmp = tmp_path_factory.mktemp("rt")
    names = schema.names
    cond = {names[-1]: (names[0],)}
    if len(names) > 2:
        cond[names[1]] = (names[0], names[-1])
    schema = Schema(schema.variables, cond)
    path = tmp / "s.ini"
    path.write_text(dump_schema(schema))
    again = load_schema(path)
    assert again == schema

    counts = st.floats(0, 1000, allow_nan=False).map(lambda x: round(x, 3))
    d1 = {}
    for v in schema.variables:
        c = np.array(data.draw(st.lists(counts, min_size=v.size, max_size=v.size)))
        c[0] += 1
        d1[v.name] = UnivariateTable(v.name, c)
    write_d1(d1.values(), tmp / "d1.csv", schema)
    back = read_d1(tmp / "d1.csv", schema)
    assert set(back) == set(d1)
    for name in d1:
        np.testing.assert_array_equal(back[name].counts, d1[name].counts)

    d2 = []
    for child, parents in cond.items():
        shape = [schema[p].size for p in parents] + [schema[child].size]
        d2.append(ConditionalTable(child, parents, np.arange(np.prod(shape), dtype=float).reshape(shape)))
    write_d2(d2, tmp / "d2.csv", schema)
    back2 = {t.key: t for t in read_d2(tmp / "d2.csv", schema)}
    for t in d2:
        np.testing.assert_array_equal(back2[t.key].counts, t.counts)
        assert back2[t.key].parents == t.parents

    m = sum(v.size for v in schema.variables)
    d3 = AuxiliaryMatrix(("g0", "g1", "g2"), np.arange(3 * m, dtype=float).reshape(3, m) + 0.5, schema)
    write_d3(d3, tmp / "d3.csv")
    back3 = read_d3(tmp / "d3.csv", schema)
    assert back3.locations == d3.locations
    np.testing.assert_array_equal(back3.counts, d3.counts)


@settings(max_examples=30)
@given(st.lists(st.lists(st.floats(0.01, 100), min_size=5, max_size=5), min_size=2, max_size=6))
def test_normalize_is_idempotent(rows):
    schema = Schema((Variable("a", "xy"), Variable("b", "uvw")))
    once = normalize_auxiliary(AuxiliaryMatrix(tuple(f"l{i}" for i in range(len(rows))), np.array(rows), schema))
    twice = normalize_auxiliary(AuxiliaryMatrix(tuple(f"l{i}" for i in range(len(rows))), once, schema))
    np.testing.assert_allclose(twice, once, atol=1e-12)


def test_d2_missing_cells_read_as_zero_and_absent_parent(tmp_path):
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")), {"b": ("a",)})
    (tmp_path / "d2.csv").write_text("child,parent1,parent2,p1_cat,p2_cat,child_cat,count\nb,a,-,y,-,v,7\n")
    (t,) = read_d2(tmp_path / "d2.csv", schema)
    np.testing.assert_array_equal(t.counts, [[0, 0], [0, 7]])


def test_remap_translates_labels(tmp_path):
    text = textwrap.dedent("""
        [variable:sex]
        categories = male, female
        [variable:b]
        categories = u, v
        [remap:sex]
        M = male
        F = female
    """)
    schema = parse_schema(text)
    (tmp_path / "d1.csv").write_text("variable,category,count\nsex,M,3\nsex,F,5\nb,u,1\nb,v,1\n")
    d1 = read_d1(tmp_path / "d1.csv", schema)
    np.testing.assert_array_equal(d1["sex"].counts, [3, 5])


@pytest.mark.parametrize("body, message", [
    ("variable,category,count\nzz,u,1\n", "unknown variable"),
    ("variable,category,count\nb,w,1\n", "unknown category"),
    ("variable,category,count\nb,u,-1\n", "nonnegative"),
    ("variable,category,count\nb,u,abc\n", "not a number"),
    ("variable,category,count\nb,u,1\nb,u,2\n", "duplicate"),
    ("var,cat,n\nb,u,1\n", "header"),
])
def test_d1_rejections(tmp_path, body, message):
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")))
    (tmp_path / "d1.csv").write_text(body)
    with pytest.raises(ConfigError, match=message):
        read_d1(tmp_path / "d1.csv", schema)


def test_d3_column_order_enforced(tmp_path):
    schema = Schema((Variable("a", "xy"), Variable("b", "uv")))
    labels = component_labels(schema)
    swapped = [labels[1], labels[0]] + labels[2:]
    (tmp_path / "d3.csv").write_text("location," + ",".join(swapped) + "\nl1,1,1,1,1\nl2,1,1,1,1\n")
    with pytest.raises(ConfigError, match="schema order"):
        read_d3(tmp_path / "d3.csv", schema)


def test_tuple_space_labels():
    space = TupleSpace((Variable("a", ("p", "q")), Variable("b", ("r", "s", "t"))))
    assert space.labels_of(5) == ("q", "t")
    assert space.index_of([1, 0]).tolist() == [3]
