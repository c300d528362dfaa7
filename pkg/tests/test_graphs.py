"""Graph core: parsing, generators, derived graphs, verifiers."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsemis.graphs import (
    CheckResult,
    Graph,
    GraphFormatError,
    connected_components,
    generate_graph,
    graph_from_edges,
    k_hop_ball,
    line_graph,
    load_graph,
    save_graph,
    verify_matching,
    verify_mis,
)


def test_load_single_edge(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("2 1\n0 1\n")
    g = load_graph(p)
    assert g.n == 2 and g.m == 1 and g.has_edge(0, 1)


def test_load_empty_graph(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("3 0\n")
    g = load_graph(p)
    assert g.n == 3 and g.m == 0 and g.max_degree == 0


def test_load_triangle(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("3 3\n0 1\n1 2\n2 0\n")
    g = load_graph(p)
    assert g.m == 3 and g.max_degree == 2


def test_load_merges_duplicates_and_reversed(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("3 3\n0 1\n1 0\n0 1\n")
    assert load_graph(p).m == 1


@pytest.mark.parametrize(
    "content,line",
    [
        ("", 1),
        ("x y\n", 1),
        ("2 1\n0 5\n", 2),
        ("2 1\n1 1\n", 2),
        ("2 2\n0 1\n", 3),
    ],
)
def test_load_errors_carry_line_numbers(tmp_path, content, line):
    p = tmp_path / "bad.edges"
    p.write_text(content)
    with pytest.raises(GraphFormatError) as err:
        load_graph(p)
    assert err.value.line == line


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=20), st.integers(min_value=0, max_value=2**31))
def test_save_load_round_trip(n, seed):
    g = generate_graph("gnp", {"n": n, "p": 0.3}, seed)
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.edges")
        save_graph(g, path)
        again = load_graph(path)
        save_graph(again, path + "2")
        assert g == again
        assert open(path).read() == open(path + "2").read()


def test_generate_star_path_complete():
    star = generate_graph("star", {"n": 5}, 0)
    assert star.max_degree == 4 and star.m == 4
    path = generate_graph("path", {"n": 4}, 0)
    assert path.m == 3 and path.max_degree == 2
    comp = generate_graph("complete", {"n": 5}, 0)
    assert comp.m == 10 and comp.max_degree == 4


def test_generate_gnp_extremes():
    g = generate_graph("gnp", {"n": 100, "p": 0.0}, seed=7)
    assert g.m == 0
    g1 = generate_graph("gnp", {"n": 20, "p": 1.0}, seed=7)
    assert g1.m == 190


def test_generate_gnp_deterministic():
    a = generate_graph("gnp", {"n": 60, "p": 0.1}, seed=5)
    b = generate_graph("gnp", {"n": 60, "p": 0.1}, seed=5)
    c = generate_graph("gnp", {"n": 60, "p": 0.1}, seed=6)
    assert a == b
    assert a != c


def test_generate_d_regular_degree_histogram():
    g = generate_graph("d_regular", {"n": 10, "d": 3}, seed=1)
    assert (g.degrees() == 3).all()
    with pytest.raises(ValueError):
        generate_graph("d_regular", {"n": 5, "d": 3}, seed=1)  # odd n*d


def test_line_graph_small_cases():
    path = generate_graph("path", {"n": 3}, 0)
    lg, emap = line_graph(path)
    assert lg.n == 2 and lg.m == 1 and sorted(emap) == [(0, 1), (1, 2)]
    tri = generate_graph("complete", {"n": 3}, 0)
    lg_t, _ = line_graph(tri)
    assert lg_t.n == 3 and lg_t.m == 3
    star = generate_graph("star", {"n": 5}, 0)
    lg_s, _ = line_graph(star)
    assert lg_s.n == 4 and lg_s.m == 6  # K_4


def test_line_graph_degree_identity():
    g = generate_graph("gnp", {"n": 30, "p": 0.15}, seed=2)
    lg, emap = line_graph(g)
    assert lg.n == g.m
    for i, (u, v) in enumerate(emap):
        assert lg.degree(i) == g.degree(u) + g.degree(v) - 2


class UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[ra] = rb


def test_components_trivial():
    path = generate_graph("path", {"n": 3}, 0)
    assert connected_components(path, [0, 2]) == [[0], [2]]
    assert connected_components(path, []) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_components_match_union_find(seed):
    g = generate_graph("gnp", {"n": 200, "p": 0.005}, seed)
    comps = connected_components(g)
    uf = UnionFind(g.n)
    for u, v in g.edges():
        uf.union(u, v)
    roots = {}
    for v in range(g.n):
        roots.setdefault(uf.find(v), set()).add(v)
    expected = sorted([sorted(s) for s in roots.values()], key=lambda c: c[0])
    assert comps == expected
    covered = sorted(x for c in comps for x in c)
    assert covered == list(range(g.n))


def test_k_hop_ball_examples():
    path = generate_graph("path", {"n": 4}, 0)
    ball, dist = k_hop_ball(path, 0, 2)
    assert ball == [0, 1, 2] and dist[2] == 2
    ball0, _ = k_hop_ball(path, 1, 0)
    assert ball0 == [1]


def test_k_hop_ball_matches_bfs_oracle():
    g = generate_graph("gnp", {"n": 120, "p": 0.04}, seed=9)
    import collections

    for v in (0, 5, 50):
        for r in (1, 2, 3):
            dist = {v: 0}
            dq = collections.deque([v])
            while dq:
                u = dq.popleft()
                if dist[u] == r:
                    continue
                for w in g.neighbors(u):
                    w = int(w)
                    if w not in dist:
                        dist[w] = dist[u] + 1
                        dq.append(w)
            ball, got = k_hop_ball(g, v, r)
            assert ball == sorted(dist)
            assert got == dist


def test_verify_mis_cases():
    edge = graph_from_edges(2, [(0, 1)])
    assert verify_mis(edge, [0]).ok
    res = verify_mis(edge, [0, 1])
    assert res.kind == "not_independent" and res.witness == (0, 1)
    tri = generate_graph("complete", {"n": 3}, 0)
    res2 = verify_mis(tri, [])
    assert res2.kind == "not_maximal" and res2.witness == 0


def test_verify_mis_isolated_nodes_must_join():
    g = graph_from_edges(3, [(0, 1)])
    assert verify_mis(g, [0]).kind == "not_maximal"
    assert verify_mis(g, [0, 2]).ok


def test_verify_matching_cases():
    p3 = generate_graph("path", {"n": 3}, 0)
    assert verify_matching(p3, [(0, 1)], require_maximal=True).ok
    p4 = generate_graph("path", {"n": 4}, 0)
    res = verify_matching(p4, [(0, 1), (1, 2)])
    assert res.kind == "overlapping" and res.witness == 1
    p5 = generate_graph("path", {"n": 5}, 0)
    res2 = verify_matching(p5, [(1, 2)], require_maximal=True)
    assert res2.kind == "not_maximal" and res2.witness == (3, 4)
    with pytest.raises(ValueError):
        verify_matching(p3, [(0, 2)])


def test_independence_preserved_in_induced_subgraphs():
    g = generate_graph("gnp", {"n": 40, "p": 0.2}, seed=3)
    from sparsemis.engine import MisParams, post_shatter, run_sparsified_mis
    from sparsemis.tape import TapeSpec

    params = MisParams(c_iterations=4.0)
    tape = TapeSpec(seed=5, repetitions_k=params.repetitions(g.max_degree), max_iterations=200)
    tr = run_sparsified_mis(g, tape, params)
    post_shatter(g, tr)
    mis = set(tr.mis_nodes)
    assert verify_mis(g, sorted(mis)).ok
    # closed-neighborhood induced subgraph keeps the set independent
    closed = set()
    for v in mis:
        closed.add(v)
        closed.update(int(u) for u in g.neighbors(v))
    sub_nodes = sorted(closed)
    idx = {x: i for i, x in enumerate(sub_nodes)}
    sub = graph_from_edges(
        len(sub_nodes),
        [(idx[u], idx[v]) for u, v in g.edges() if u in closed and v in closed],
    )
    inside = [idx[v] for v in mis]
    member = np.zeros(sub.n, dtype=bool)
    member[inside] = True
    for u, v in sub.edges():
        assert not (member[u] and member[v])
