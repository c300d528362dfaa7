"""Sparsified local graph algorithm simulators.

Executes randomized MIS and matching dynamics round-by-round, builds the
per-phase sparsified graphs, and replays the same executions under a
machine-model simulator with memory ledgers and a query-model harness with
probe ledgers, verifying that all views produce identical outputs from one
shared randomness tape.
"""

from .engine import (
    MisParams,
    post_shatter,
    run_base_mis,
    run_recursive_mis,
    run_sparsified_mis,
)
from .graphs import (
    Graph,
    generate_graph,
    graph_from_edges,
    line_graph,
    load_graph,
    save_graph,
    verify_matching,
    verify_mis,
)
from .lca import LcaHarness, consistency_audit, lca_answer, parnas_ron_baseline
from .matching import (
    MatchParams,
    exact_max_matching_small,
    maximal_matching_via_line_mis,
    run_base_matching,
    run_sparse_matching,
    vertex_cover_2approx,
)
from .mpc import MpcConfig, plan_degree_steps, run_mpc
from .sparsify import (
    PhaseWindow,
    build_sparse_graph,
    check_degree_bound,
    classify_nodes,
    simulate_phase_on_sparse,
)
from .tape import Fraction, TapeSpec, below, tape_value

__version__ = "0.1.0"

__all__ = [
    "Fraction",
    "Graph",
    "LcaHarness",
    "MatchParams",
    "MisParams",
    "MpcConfig",
    "PhaseWindow",
    "TapeSpec",
    "below",
    "build_sparse_graph",
    "check_degree_bound",
    "classify_nodes",
    "consistency_audit",
    "exact_max_matching_small",
    "generate_graph",
    "graph_from_edges",
    "lca_answer",
    "line_graph",
    "load_graph",
    "maximal_matching_via_line_mis",
    "parnas_ron_baseline",
    "plan_degree_steps",
    "post_shatter",
    "run_base_matching",
    "run_base_mis",
    "run_mpc",
    "run_recursive_mis",
    "run_sparse_matching",
    "run_sparsified_mis",
    "save_graph",
    "simulate_phase_on_sparse",
    "tape_value",
    "verify_matching",
    "verify_mis",
    "vertex_cover_2approx",
]
