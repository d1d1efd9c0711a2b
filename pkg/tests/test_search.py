import numpy as np
import pytest

from kernelges.data import Dataset, Variable
from kernelges.graphs import Cpdag, GraphError
from kernelges.scores import ScoreCache, graph_score
from kernelges.search import (
    EdgeOperator,
    apply_operator,
    enumerate_deletes,
    enumerate_inserts,
    ges,
)


def noise_dataset(names, n, seed):
    rng = np.random.default_rng(seed)
    return Dataset([Variable(v) for v in names], rng.normal(size=(n, len(names))))


def test_empty_three_node_insert_enumeration():
    ds = noise_dataset(("a", "b", "c"), 30, 0)
    g = Cpdag(("a", "b", "c"))
    cache = ScoreCache()
    graph_score(ds, g, cache=cache)
    assert len(cache) == 3  # the three root families
    ops = enumerate_inserts(g, ds, cache=cache)
    assert len(ops) == 6  # ordered pairs, T = () only
    assert all(op.subset == () for op in ops)
    # both orders of a pair land in the same one-edge class, so their deltas
    # agree and only one new family per pair is optimized
    by_pair = {}
    for op in ops:
        by_pair.setdefault(frozenset((op.x, op.y)), []).append(op.delta)
    assert len(by_pair) == 3
    for deltas in by_pair.values():
        assert deltas[0] == pytest.approx(deltas[1], abs=1e-9)
    assert len(cache) == 6


def test_single_undirected_edge_delete_enumeration():
    ds = noise_dataset(("x", "y"), 25, 1)
    g = Cpdag(("x", "y"), undirected={("x", "y")})
    ops = enumerate_deletes(g, ds)
    assert len(ops) == 1
    assert (ops[0].x, ops[0].y, ops[0].subset) == ("x", "y", ())


def test_enumerate_deletes_on_empty_graph():
    ds = noise_dataset(("x", "y"), 25, 2)
    assert enumerate_deletes(Cpdag(("x", "y")), ds) == []


def test_insert_apply_then_delete_roundtrip():
    ds = noise_dataset(("x", "y"), 40, 3)
    g = Cpdag(("x", "y"))
    ins = enumerate_inserts(g, ds)[0]
    g1 = apply_operator(g, ins)
    assert g1.has_undirected("x", "y")
    dels = enumerate_deletes(g1, ds)
    assert len(dels) == 1
    # same two families swap back, so the deltas cancel exactly
    assert dels[0].delta == pytest.approx(-ins.delta, abs=1e-9)
    assert apply_operator(g1, dels[0]) == g


def test_insert_with_t_set_creates_v_structure():
    ds = noise_dataset(("x", "y", "z"), 30, 4)
    g = Cpdag(("x", "y", "z"), undirected={("y", "z")})
    ops = enumerate_inserts(g, ds)
    chosen = [op for op in ops if (op.x, op.y, op.subset) == ("x", "z", ("y",))]
    assert len(chosen) == 1
    g1 = apply_operator(g, chosen[0])
    assert g1.directed == frozenset({("x", "z"), ("y", "z")})
    assert g1.undirected == frozenset()


def test_insert_blocked_by_semi_directed_path():
    # with a -> b -> c present, inserting toward a would create a cycle in
    # every extension; only the (a, c) orientation is offered
    ds = noise_dataset(("a", "b", "c"), 30, 5)
    g = Cpdag(("a", "b", "c"), directed={("a", "b"), ("b", "c")})
    ops = [op for op in enumerate_inserts(g, ds) if {op.x, op.y} == {"a", "c"}]
    assert [(op.x, op.y) for op in ops] == [("a", "c")]


def test_delete_requires_remaining_clique():
    # u and v are common undirected neighbors of x and y but not adjacent to
    # each other, so H must take at least one of them
    ds = noise_dataset(("x", "y", "u", "v"), 30, 6)
    g = Cpdag(
        ("x", "y", "u", "v"),
        undirected={("x", "y"), ("x", "u"), ("x", "v"), ("y", "u"), ("y", "v")},
    )
    ops = [op for op in enumerate_deletes(g, ds) if {op.x, op.y} == {"x", "y"}]
    subsets = {op.subset for op in ops}
    assert subsets == {("u",), ("v",), ("u", "v")}


def test_apply_operator_rejects_invalid():
    ds = noise_dataset(("x", "y"), 20, 7)
    g = Cpdag(("x", "y"), undirected={("x", "y")})
    with pytest.raises(GraphError):
        apply_operator(g, EdgeOperator("insert", "x", "y"))
    with pytest.raises(GraphError):
        apply_operator(Cpdag(("x", "y")), EdgeOperator("delete", "x", "y"))
    with pytest.raises(GraphError):
        apply_operator(g, EdgeOperator("delete", "x", "y", subset=("y",)))


def test_operator_deltas_match_graph_score_differences():
    ds = noise_dataset(("a", "b", "c"), 40, 8)
    g = Cpdag(("a", "b", "c"))
    cache = ScoreCache()
    before = graph_score(ds, g, cache=cache)
    for op in enumerate_inserts(g, ds, cache=cache):
        after = graph_score(ds, apply_operator(g, op), cache=ScoreCache())
        assert op.delta == pytest.approx(after - before, abs=1e-6)


def test_ges_two_variable_dependence_gives_one_undirected_edge():
    rng = np.random.default_rng(9)
    x = rng.normal(size=120)
    y = np.sin(2.0 * x) + 0.2 * rng.normal(size=120)
    ds = Dataset([Variable("x"), Variable("y")], np.column_stack([x, y]))
    res = ges(ds)
    assert res.cpdag.directed == frozenset()
    assert res.cpdag.undirected == frozenset({("x", "y")})


def test_ges_recovers_collider():
    rng = np.random.default_rng(100)
    n = 250
    x = rng.normal(size=n)
    y = rng.normal(size=n)
    z = np.tanh(x + y) + 0.3 * rng.normal(size=n)
    ds = Dataset(
        [Variable("x"), Variable("y"), Variable("z")], np.column_stack([x, y, z])
    )
    res = ges(ds)
    assert res.cpdag.directed == frozenset({("x", "z"), ("y", "z")})
    assert res.cpdag.undirected == frozenset()


def test_ges_steps_are_monotone_and_consistent():
    rng = np.random.default_rng(11)
    n = 150
    a = rng.normal(size=n)
    b = a**2 + 0.4 * rng.normal(size=n)
    c = np.cos(b) + 0.4 * rng.normal(size=n)
    ds = Dataset(
        [Variable("a"), Variable("b"), Variable("c")], np.column_stack([a, b, c])
    )
    cache = ScoreCache()
    res = ges(ds, cache=cache)
    total = graph_score(ds, Cpdag(ds.names), cache=cache)
    for step in res.steps:
        assert step.operator.delta > 0
        total += step.operator.delta
        assert step.total_score == pytest.approx(total, rel=1e-12)
    seen_backward = False
    for step in res.steps:
        if step.phase == "backward":
            seen_backward = True
        else:
            assert not seen_backward  # no forward step after backward began
    assert res.total_score == pytest.approx(
        graph_score(ds, res.cpdag, cache=ScoreCache()), abs=1e-6
    )


def test_ges_deterministic():
    ds = noise_dataset(("p", "q", "r"), 60, 12)
    r1 = ges(ds)
    r2 = ges(ds)
    assert r1.cpdag == r2.cpdag
    assert r1.total_score == r2.total_score
    assert [(s.phase, s.operator) for s in r1.steps] == [
        (s.phase, s.operator) for s in r2.steps
    ]
