"""Machine-model simulator: plans, assignment, exponentiation, fidelity."""

import numpy as np
import pytest

from sparsemis.engine import MisParams, post_shatter, run_sparsified_mis
from sparsemis.graphs import generate_graph, graph_from_edges, k_hop_ball, verify_mis
from sparsemis.mpc import (
    ComponentExceedsMachine,
    MachineLedger,
    MemoryExceeded,
    MpcConfig,
    MpcConfigError,
    StepPlan,
    assign_nodes,
    exponentiate,
    plan_degree_steps,
    run_mpc,
    simulation_radius,
)
from sparsemis.sparsify import PhaseWindow, build_sparse_graph, classify_nodes
from sparsemis.tape import TapeSpec


def test_plan_examples():
    assert plan_degree_steps(2).thresholds == (1,)
    assert plan_degree_steps(256).thresholds == (16, 4, 2, 1)
    assert plan_degree_steps(100).thresholds == (10, 3, 1)


def test_plan_invariants():
    with pytest.raises(MpcConfigError):
        StepPlan((4, 4, 1))
    with pytest.raises(MpcConfigError):
        StepPlan((8, 5))


def test_assign_single_machine():
    g = generate_graph("path", {"n": 4}, 0)
    cfg = MpcConfig(capacity_words=100, machine_count=1)
    machine_of, ledger = assign_nodes(g, cfg, seed=0)
    assert (machine_of == 0).all()
    assert ledger.stored[0] == 2 * 4 + 2 * 3  # records+labels + directed edges


def test_assign_infeasible_names_deficit():
    g = generate_graph("star", {"n": 50}, 0)
    cfg = MpcConfig(capacity_words=10, machine_count=1)
    with pytest.raises(MpcConfigError) as err:
        assign_nodes(g, cfg, seed=0)
    assert "deficit" in str(err.value)


def test_assign_respects_capacity_across_machines():
    g = generate_graph("gnp", {"n": 400, "p": 0.02}, seed=4)
    cfg = MpcConfig(alpha=0.75)
    machine_of, ledger = assign_nodes(g, cfg, seed=2)
    assert ledger.stored.max() <= ledger.capacity
    again, _ = assign_nodes(g, cfg, seed=2)
    assert np.array_equal(machine_of, again)


def _sparse_path(n):
    """A path as a sparse graph (all vertices light members)."""
    g = generate_graph("path", {"n": n}, 0)
    status = np.zeros(n, dtype=np.int8)
    p = np.ones(n, dtype=np.int64)
    tape = TapeSpec(seed=3, repetitions_k=4, max_iterations=16)
    window = PhaseWindow(1, 4)
    cls = classify_nodes(g, status, p, tape, window, 4)
    cls.relevant[:] = True
    cls.good[:] = True
    return g, build_sparse_graph(g, cls, p, tape, window, 4)


def test_exponentiate_radius_one_is_free():
    g, h = _sparse_path(5)
    cfg = MpcConfig(capacity_words=10_000, machine_count=2)
    machine_of, ledger = assign_nodes(g, cfg, seed=0)
    rounds_before = ledger.rounds_total
    balls, rounds = exponentiate(h, 1, cfg, ledger, machine_of)
    assert rounds == 0 and ledger.rounds_total == rounds_before
    for v in range(h.n_vertices):
        assert set(balls[v]) == {v} | {
            a if b == v else b for a, b in h.edges if v in (a, b)
        }


def test_exponentiate_path_nine_radius_four():
    g, h = _sparse_path(9)
    cfg = MpcConfig(capacity_words=100_000, machine_count=2)
    machine_of, ledger = assign_nodes(g, cfg, seed=0)
    balls, rounds = exponentiate(h, 4, cfg, ledger, machine_of)
    assert rounds == 2  # doubling 1 -> 2 -> 4
    middle = h.light_index_of[4]
    assert len(balls[middle]) == 9


def test_exponentiate_matches_bfs_oracle():
    g = generate_graph("gnp", {"n": 90, "p": 0.06}, seed=8)
    status = np.zeros(g.n, dtype=np.int8)
    p = np.ones(g.n, dtype=np.int64)
    tape = TapeSpec(seed=5, repetitions_k=4, max_iterations=16)
    window = PhaseWindow(1, 3)
    cls = classify_nodes(g, status, p, tape, window, 4)
    h = build_sparse_graph(g, cls, p, tape, window, 4)
    cfg = MpcConfig(capacity_words=10**7, machine_count=3)
    machine_of, ledger = assign_nodes(g, cfg, seed=1)
    # oracle adjacency of h
    adj = {v: set() for v in range(h.n_vertices)}
    for a, b in h.edges:
        adj[a].add(b)
        adj[b].add(a)
    for radius in (1, 2, 3):
        balls, _ = exponentiate(h, radius, cfg, ledger, machine_of)
        for v in range(h.n_vertices):
            dist = {v: 0}
            frontier = [v]
            for d in range(1, radius + 1):
                nxt = []
                for u in frontier:
                    for w in adj[u]:
                        if w not in dist:
                            dist[w] = d
                            nxt.append(w)
                frontier = nxt
            assert balls[v] == sorted(dist)


def test_simulation_radius():
    assert simulation_radius(1) == 1
    assert simulation_radius(2) == 3
    assert simulation_radius(3) == 5


def test_run_mpc_single_machine_degenerate():
    g = generate_graph("gnp", {"n": 60, "p": 0.08}, seed=3)
    params = MisParams(c_iterations=3.0)
    k = params.repetitions(g.max_degree)
    tape = TapeSpec(seed=9, repetitions_k=k, max_iterations=400)
    cfg = MpcConfig(capacity_words=10**7, machine_count=1)
    plan = plan_degree_steps(g.max_degree)
    mis_mask, trace, ledger = run_mpc(g, tape, params, cfg, seed=0, step_plan=plan)
    ref = run_sparsified_mis(g, tape, params, step_plan=plan.thresholds)
    post_shatter(g, ref)
    assert np.array_equal(mis_mask, ref.mis_mask)
    assert ledger.rounds_total > 0
    assert verify_mis(g, np.nonzero(mis_mask)[0].tolist()).ok


@pytest.mark.parametrize("seed,r", [(0, 1), (1, 2), (2, 3)])
def test_run_mpc_trace_equals_centralized(seed, r):
    g = generate_graph("gnp", {"n": 180, "p": 0.06}, seed=seed)
    params = MisParams(c_iterations=4.0, phase_length_r=r)
    k = params.repetitions(g.max_degree)
    tape = TapeSpec(seed=seed + 40, repetitions_k=k, max_iterations=600)
    plan = plan_degree_steps(g.max_degree)
    ref = run_sparsified_mis(g, tape, params, step_plan=plan.thresholds)
    post_shatter(g, ref)
    cfg = MpcConfig(alpha=0.9, capacity_words=600_000, machine_count=5)
    mis_mask, trace, ledger = run_mpc(g, tape, params, cfg, seed=7, step_plan=plan)
    assert np.array_equal(mis_mask, ref.mis_mask)
    assert trace.same_rows(ref)
    assert ledger.peak_words <= ledger.capacity
    assert ledger.rounds_total == sum(ledger.rounds_by_step.values())


def test_run_mpc_memory_exceeded_is_hard():
    g = generate_graph("gnp", {"n": 150, "p": 0.15}, seed=1)
    params = MisParams(c_iterations=3.0, phase_length_r=2)
    k = params.repetitions(g.max_degree)
    tape = TapeSpec(seed=3, repetitions_k=k, max_iterations=400)
    # room for the shard but not for collected balls
    base_need = 2 * g.n + 2 * g.m + 64
    cfg = MpcConfig(capacity_words=base_need, machine_count=1)
    with pytest.raises(MemoryExceeded):
        run_mpc(g, tape, params, cfg, seed=0)


def test_ledger_barrier_enforces_capacity():
    ledger = MachineLedger(machines=2, capacity=10)
    ledger.store(0, 8)
    ledger.barrier("x")
    ledger.store(0, 8)
    with pytest.raises(MemoryExceeded):
        ledger.barrier("x")


def test_rounds_accounting_identity():
    g = generate_graph("gnp", {"n": 120, "p": 0.05}, seed=5)
    params = MisParams(c_iterations=3.0)
    k = params.repetitions(g.max_degree)
    tape = TapeSpec(seed=11, repetitions_k=k, max_iterations=400)
    cfg = MpcConfig(capacity_words=10**6, machine_count=4)
    _, _, ledger = run_mpc(g, tape, params, cfg, seed=0)
    assert ledger.rounds_total == sum(ledger.rounds_by_step.values())
    assert ledger.peak_words <= ledger.capacity
