"""Matching dynamics, line-graph route, vertex cover, exact oracle."""

import numpy as np
import pytest

from sparsemis.engine import MisParams
from sparsemis.graphs import generate_graph, graph_from_edges, verify_matching
from sparsemis.matching import (
    MatchParams,
    exact_max_matching_small,
    maximal_matching_via_line_mis,
    run_base_matching,
    run_sparse_matching,
    vertex_cover_2approx,
)
from sparsemis.tape import TapeSpec, below_fraction, edge_tape_value


def mk_tape(seed):
    return TapeSpec(seed=seed, repetitions_k=4, max_iterations=64)


def test_empty_graph_empty_matching():
    g = graph_from_edges(4, [])
    m, _ = run_base_matching(g, mk_tape(1), MatchParams())
    assert m == []
    ms, stats, _ = run_sparse_matching(g, mk_tape(1), MatchParams())
    assert ms == [] and stats == []


def test_delta_one_zero_iterations_pure_vs_greedy_flag():
    g = graph_from_edges(2, [(0, 1)])
    m, log = run_base_matching(g, mk_tape(5), MatchParams())
    assert m == [] and log.iterations == []  # ceil(log2 1) = 0 iterations
    m2, _ = run_base_matching(g, mk_tape(5), MatchParams(greedy_finish=True))
    assert m2 == [(0, 1)]


def test_single_isolated_marked_edge_is_matched():
    # find a tape where exactly one eligible edge marks in iteration 0
    g = generate_graph("path", {"n": 6}, 0)
    params = MatchParams()
    for seed in range(200):
        tape = mk_tape(seed)
        m, log = run_base_matching(g, tape, params)
        if log.iterations and log.iterations[0]["marked"] == 1:
            assert log.iterations[0]["matched"] == 1
            return
    pytest.fail("no seed produced a single marked edge")


def test_two_adjacent_marked_edges_block_each_other():
    g = generate_graph("star", {"n": 8}, 0)  # all edges share the center
    params = MatchParams()
    for seed in range(400):
        tape = mk_tape(seed)
        m, log = run_base_matching(g, tape, params)
        for row in log.iterations:
            if row["marked"] >= 2:
                assert row["matched"] == 0  # adjacent marks are never isolated
                return
    pytest.fail("no seed produced two simultaneous marks on the star")


def test_marked_subset_of_included_by_shared_tape_value():
    g = generate_graph("gnp", {"n": 40, "p": 0.2}, seed=3)
    delta = g.max_degree
    params = MatchParams()
    K = params.amplification(delta)
    tape = mk_tape(9)
    for i in range(params.iteration_count(delta)):
        p_num, p_den = 2**i, 4 * delta
        pp_num = min(K * p_num, p_den)
        for u, v in list(g.edges())[:200]:
            r = edge_tape_value(tape, u, v, i + 1)
            marked = below_fraction(p_num, p_den, r)
            included = below_fraction(pp_num, p_den, r)
            assert not marked or included


def test_sparse_capped_inclusion_contains_every_edge():
    # when K*p_i >= 1 every surviving edge is included
    g = generate_graph("complete", {"n": 6}, 0)
    delta = g.max_degree
    params = MatchParams(kappa=64.0)
    K = params.amplification(delta)
    assert K * 1 >= 4 * delta  # p'_0 capped at 1
    tape = mk_tape(2)
    _, _, log = run_sparse_matching(g, tape, params)
    first = log.iterations[0]
    assert first["included"] == g.m


def test_outputs_are_valid_matchings():
    for seed in range(6):
        g = generate_graph("gnp", {"n": 80, "p": 0.08}, seed=seed)
        tape = mk_tape(seed + 20)
        m, _ = run_base_matching(g, tape, MatchParams())
        assert verify_matching(g, m).ok
        ms, _, _ = run_sparse_matching(g, tape, MatchParams())
        assert verify_matching(g, ms).ok


def test_line_mis_matching_triangle_exactly_one_edge():
    g = generate_graph("complete", {"n": 3}, 0)
    params = MisParams(c_iterations=6.0)
    tape = TapeSpec(seed=4, repetitions_k=params.repetitions(2), max_iterations=128)
    m = maximal_matching_via_line_mis(g, tape, params)
    assert len(m) == 1
    assert verify_matching(g, m, require_maximal=True).ok


def test_line_mis_matching_path_maximal():
    g = generate_graph("path", {"n": 4}, 0)
    params = MisParams(c_iterations=6.0)
    tape = TapeSpec(seed=5, repetitions_k=params.repetitions(2), max_iterations=128)
    m = maximal_matching_via_line_mis(g, tape, params)
    assert len(m) >= 1
    assert verify_matching(g, m, require_maximal=True).ok


def test_line_mis_matching_empty_graph():
    g = graph_from_edges(3, [])
    params = MisParams()
    tape = TapeSpec(seed=1, repetitions_k=4, max_iterations=16)
    assert maximal_matching_via_line_mis(g, tape, params) == []


def test_vertex_cover_examples():
    single = graph_from_edges(2, [(0, 1)])
    cover = vertex_cover_2approx(single, [(0, 1)])
    assert cover == [0, 1]
    opt = exact_max_matching_small(single)
    assert len(cover) <= 2 * len(opt)
    star = generate_graph("star", {"n": 6}, 0)
    cover2 = vertex_cover_2approx(star, [(0, 1)])
    assert 0 in cover2 and len(cover2) == 2
    with pytest.raises(ValueError):
        vertex_cover_2approx(generate_graph("path", {"n": 5}, 0), [(1, 2)])


def test_exact_matching_examples():
    p4 = generate_graph("path", {"n": 4}, 0)
    assert len(exact_max_matching_small(p4)) == 2
    tri = generate_graph("complete", {"n": 3}, 0)
    assert len(exact_max_matching_small(tri)) == 1
    k4 = generate_graph("complete", {"n": 4}, 0)
    assert len(exact_max_matching_small(k4)) == 2
    with pytest.raises(ValueError):
        exact_max_matching_small(generate_graph("complete", {"n": 13}, 0))


def test_exact_matching_vs_greedy_lower_bound():
    for seed in range(10):
        g = generate_graph("gnp", {"n": 14, "p": 0.4}, seed=seed)
        if g.m > 64:
            continue
        opt = exact_max_matching_small(g)
        assert verify_matching(g, opt).ok
        # optimal at least as large as any greedy matching
        greedy = []
        used = set()
        for u, v in g.edges():
            if u not in used and v not in used:
                greedy.append((u, v))
                used.update((u, v))
        assert len(opt) >= len(greedy)


def test_sparse_h_degree_bound_statistical():
    # per-phase H-degree stays below 2^(sqrt(log2 D)/2) * c * log2 D, c = 8
    import math

    worst_ratio = 0.0
    for seed in range(30):
        g = generate_graph("gnp", {"n": 1500, "p": 45 / 1500}, seed=seed)
        delta = g.max_degree
        bound = 2 ** (math.sqrt(math.log2(delta)) / 2) * 8 * math.log2(delta)
        tape = mk_tape(seed + 63)
        _, stats, _ = run_sparse_matching(g, tape, MatchParams())
        for s in stats:
            worst_ratio = max(worst_ratio, s["max_h_degree"] / bound)
            assert s["max_h_degree"] <= bound, (seed, s, bound)
    assert worst_ratio <= 1.0


def test_degree_drop_statistical():
    # after simulated iteration i, the fraction of surviving nodes whose
    # base-graph degree exceeds 2*d_i stays small across sweeps
    over = 0
    surv = 0
    for seed in range(20):
        g = generate_graph("gnp", {"n": 400, "p": 0.08}, seed=seed)
        tape = mk_tape(seed + 91)
        _, _, log = run_sparse_matching(g, tape, MatchParams())
        for row in log.iterations:
            over += row["over_twice_threshold"]
            surv += row["survivors"]
    assert surv > 0
    assert over / surv <= 0.05
