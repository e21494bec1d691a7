import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphmix.errors import ParameterError, ParseError, SizeGuardError
from graphmix.graph import (
    UNREACHABLE,
    Graph,
    all_pairs_distances,
    ball,
    clique_union,
    cycle,
    distance,
    distances_from,
    dump_graph,
    edgeless,
    erdos_renyi,
    generate_graph,
    grid,
    load_graph,
    normalize_spec,
    path,
    power_graph,
    spec_to_json,
)

from .oracles import nx_distances


def test_path_edges():
    g = path(4)
    assert g.n == 4
    assert g.edges() == [(0, 1), (1, 2), (2, 3)]


def test_torus_3x3_is_4_regular():
    g = grid(3, 3, wrap=True)
    assert g.n == 9
    assert all(g.degree(v) == 4 for v in range(9))
    assert g.num_edges == 18


def test_erdos_renyi_p0_edgeless():
    g = erdos_renyi(10, 0.0, seed=7)
    assert g.n == 10 and g.num_edges == 0


def test_erdos_renyi_p1_complete():
    assert erdos_renyi(7, 1.0, seed=3).num_edges == 21


def test_erdos_renyi_deterministic_in_seed():
    a, b, c = erdos_renyi(40, 0.2, 5), erdos_renyi(40, 0.2, 5), erdos_renyi(40, 0.2, 6)
    assert a == b
    assert a != c


@pytest.mark.parametrize(
    "spec",
    [{"kind": "path", "n": 0}, {"kind": "erdos_renyi", "n": 5, "p": 1.5, "seed": 0}, "grid:0x3", {"kind": "nope"}],
)
def test_invalid_specs(spec):
    with pytest.raises(ParameterError):
        generate_graph(spec)


def test_shorthand_and_dict_agree():
    assert normalize_spec("torus:20x20") == normalize_spec({"kind": "grid", "rows": 20, "cols": 20, "wrap": True})
    assert generate_graph("path:10") == path(10)
    assert generate_graph("clique_union:2,3") == clique_union([2, 3])


@pytest.mark.parametrize("spec", ["path:10", "cycle:7", "torus:4x6", "grid:3x4", "clique_union:2,3",
                                  "erdos_renyi:10,0.3,7", "edgeless:5"])
def test_spec_json_round_trip(spec):
    import json

    once = spec_to_json(spec)
    assert spec_to_json(json.loads(once)) == once


def test_load_graph_examples():
    assert load_graph("3 2\n0 1\n1 2") == path(3)
    g = load_graph("2 0")
    assert g.n == 2 and g.num_edges == 0


@pytest.mark.parametrize(
    "text, line",
    [("2 1\n0 0", 2), ("3 2\n0 1\n1 5", 3), ("3 2\n0 1", 2), ("x y", 1), ("", 1), ("3 1\n0 1 2", 2)],
)
def test_load_graph_errors_carry_line(text, line):
    with pytest.raises(ParseError) as err:
        load_graph(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_dump_load_round_trip():
    g = grid(3, 4)
    assert load_graph(dump_graph(g)) == g


def test_distance_rows():
    assert list(distances_from(cycle(6), 0).dist) == [0, 1, 2, 3, 2, 1]
    assert list(distances_from(path(4), 0).dist) == [0, 1, 2, 3]
    row = distances_from(clique_union([2, 2]), 0)
    assert list(row.dist) == [0, 1, UNREACHABLE, UNREACHABLE]
    assert math.isinf(distance(clique_union([2, 2]), 0, 3))


def test_distance_out_of_range():
    with pytest.raises(ParameterError):
        distances_from(path(3), 3)


def test_power_graph_examples():
    g = path(4)
    assert power_graph(g, 1) is g
    p2 = power_graph(g, 2)
    assert sorted(p2.edges()) == [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]
    assert power_graph(cycle(5), 2).num_edges == 10


def test_power_graph_rejects_zero():
    with pytest.raises(ParameterError):
        power_graph(path(3), 0)


def test_ball():
    assert ball(cycle(10), 0, 2) == [0, 1, 2, 8, 9]
    assert ball(path(5), 4, 0) == [4]


def test_all_pairs_guard():
    big = Graph(20_001, tuple(() for _ in range(20_001)))
    with pytest.raises(SizeGuardError):
        all_pairs_distances(big)


def test_vertex_transitive_families():
    assert cycle(6).is_vertex_transitive_family()
    assert grid(4, 4, wrap=True).is_vertex_transitive_family()
    assert edgeless(4).is_vertex_transitive_family()
    assert clique_union([3, 3]).is_vertex_transitive_family()
    assert not path(5).is_vertex_transitive_family()
    assert not clique_union([2, 3]).is_vertex_transitive_family()


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 14), p=st.floats(0, 1), seed=st.integers(0, 2**32))
def test_distances_match_networkx(n, p, seed):
    g = erdos_renyi(n, p, seed)
    ref = nx_distances(g)
    D = all_pairs_distances(g)
    for u in range(n):
        for v in range(n):
            assert D[u, v] == ref[u].get(v, math.inf)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0, 1), seed=st.integers(0, 1000), k=st.integers(1, 4))
def test_power_graph_adjacency_is_distance_threshold(n, p, seed, k):
    g = erdos_renyi(n, p, seed)
    gk = power_graph(g, k)
    D = all_pairs_distances(g)
    for u in range(n):
        expected = {v for v in range(n) if v != u and D[u, v] <= k}
        assert set(gk.adjacency[u]) == expected


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 15), p=st.floats(0, 1), seed=st.integers(0, 1000))
def test_distances_symmetric_and_triangle(n, p, seed):
    D = all_pairs_distances(erdos_renyi(n, p, seed))
    assert np.array_equal(D, D.T)
    for w in range(n):
        assert np.all(D <= D[:, [w]] + D[[w], :])
