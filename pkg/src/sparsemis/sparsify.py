"""Per-phase sparse graph construction and phase replay.

For one phase the still-active nodes are classified from the phase-start
snapshot plus the tape:

* relevant -- some sampling slot in the window falls below p * 2**R, or the
  mark slot falls below p * 2**(R+1).  The mark factor is one doubling wider
  than the sampling factor so the test is a strict superset of anything the
  node can do during the phase (probabilities at most double per iteration).
  A non-relevant node is provably silent for the whole phase.
* light / heavy -- true weighted degree below / at least 2**(2R+1).
* good -- the node's estimate stays at most 2**(3R+2) throughout the phase.
  Goodness is only knowable after the fact; `oracle_goodness` mode reads it
  off a reference trace, `defer` mode admits every relevant light node and
  reports the violators as deferred.

The sparse graph H contains the relevant good light nodes, plus one
degree-one virtual copy of each relevant heavy node per adjacent such light
node.  Every vertex is labeled with its phase-start probability and its slice
of the tape, so a phase can be replayed from H alone with no tape access.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sp

from .engine import (
    ACTIVE,
    ExecutionTrace,
    StallCheck,
    WindowProblem,
    good_threshold_exp,
    light_threshold_exp,
    run_window,
    stall_threshold_exp,
    dyadic_degree_ge,
    _graph_csr,
)
from .graphs import Graph
from .tape import TapeSpec, bulk_node_values

__all__ = [
    "PhaseWindow",
    "Classification",
    "SparseGraph",
    "PhaseOutcome",
    "classify_nodes",
    "build_sparse_graph",
    "build_sparse_graph_from_views",
    "simulate_phase_on_sparse",
    "check_degree_bound",
    "relevance_audit",
]


@dataclass(frozen=True)
class PhaseWindow:
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.end < self.start or self.start < 1:
            raise ValueError(f"bad window [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class Classification:
    window: PhaseWindow
    active: np.ndarray
    relevant: np.ndarray
    light: np.ndarray
    heavy: np.ndarray
    good: np.ndarray
    mode: str


def _relevance(
    g: Graph, tape: TapeSpec, window: PhaseWindow, k: int, e: np.ndarray, active: np.ndarray
) -> np.ndarray:
    """Tape-only superset test for phase activity (samples or marks)."""
    bits = tape.precision_bits
    r = window.length
    nodes = np.arange(g.n, dtype=np.uint64)
    sample_exp = np.where(active, np.maximum(e - r, 0), np.int64(-1))
    mark_exp = np.where(active, np.maximum(e - r - 1, 0), np.int64(-1))
    out = np.zeros(g.n, dtype=bool)
    slots = np.arange(0, k + 1, dtype=np.uint64)
    for t in range(window.start, window.end + 1):
        vals = bulk_node_values(tape, nodes, t, slots)
        from .tape import bulk_below

        hit_mark = bulk_below(mark_exp, vals[:, :1], bits)[:, 0]
        hit_sample = bulk_below(sample_exp, vals[:, 1:], bits).any(axis=1)
        out |= hit_mark | hit_sample
    return out & active


def classify_nodes(
    g: Graph,
    status: np.ndarray,
    p_exp: np.ndarray,
    tape: TapeSpec,
    window: PhaseWindow,
    k: int,
    mode: str = "defer",
    reference_trace: ExecutionTrace | None = None,
) -> Classification:
    """Phase-start classification from the snapshot (status, p_exp)."""
    if mode not in ("defer", "oracle_goodness"):
        raise ValueError(f"unknown mode {mode!r}")
    active = status == ACTIVE
    e = np.asarray(p_exp, dtype=np.int64)
    adj = _graph_csr(g)
    heavy = active & dyadic_degree_ge(adj, e, active, light_threshold_exp(window.length))
    light = active & ~heavy
    relevant = _relevance(g, tape, window, k, e, active)
    if mode == "oracle_goodness":
        if reference_trace is None:
            raise ValueError("oracle_goodness mode needs a reference trace")
        good = _goodness_from_trace(g.n, reference_trace, window)
        good &= active
    else:
        good = active.copy()
    return Classification(window, active, relevant, light, heavy, good, mode)


def _goodness_from_trace(n: int, trace: ExecutionTrace, window: PhaseWindow) -> np.ndarray:
    thr_exp = good_threshold_exp(window.length)
    good = np.ones(n, dtype=bool)
    limit = (1 << thr_exp) if thr_exp < 62 else None
    for row in trace.rows:
        if window.start <= row["t"] <= window.end and limit is not None:
            over = row["dhat"] > limit
            good[row["node"][over]] = False
    return good


@dataclass
class SparseGraph:
    """One phase's sparse graph with self-contained labels."""

    window: PhaseWindow
    k: int
    bits: int
    origins: np.ndarray          # per vertex: original node id
    copy_index: np.ndarray       # 0 for light vertices, >=1 for heavy copies
    p_exp: np.ndarray            # phase-start exponent of the origin
    edges: list[tuple[int, int]]
    sample_labels: np.ndarray    # (n_vertices, R, k) uint64 tape numerators
    mark_labels: np.ndarray      # (n_vertices, R) uint64
    light_index_of: dict[int, int] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return int(self.origins.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def adjacency(self) -> sp.csr_matrix:
        if not self.edges:
            return sp.csr_matrix((self.n_vertices, self.n_vertices), dtype=np.int32)
        arr = np.array(self.edges, dtype=np.int64)
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        data = np.ones(len(rows), dtype=np.int32)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_vertices, self.n_vertices))

    def serialize(self) -> bytes:
        """Deterministic byte form: vertex records then edges."""
        chunks = [b"SPGH1"]
        chunks.append(
            np.array([self.window.start, self.window.end, self.k, self.bits, self.n_vertices,
                      len(self.edges)], dtype="<i8").tobytes()
        )
        chunks.append(self.origins.astype("<i8").tobytes())
        chunks.append(self.copy_index.astype("<i4").tobytes())
        chunks.append(self.p_exp.astype("<i2").tobytes())
        chunks.append(np.array(sorted(self.edges), dtype="<i8").tobytes())
        chunks.append(self.sample_labels.astype("<u8").tobytes())
        chunks.append(self.mark_labels.astype("<u8").tobytes())
        return b"".join(chunks)


def _materialize_labels(
    tape: TapeSpec, origins: np.ndarray, window: PhaseWindow, k: int
) -> tuple[np.ndarray, np.ndarray]:
    r = window.length
    n = len(origins)
    sample = np.zeros((n, r, k), dtype=np.uint64)
    mark = np.zeros((n, r), dtype=np.uint64)
    slots = np.arange(0, k + 1, dtype=np.uint64)
    for q in range(r):
        vals = bulk_node_values(tape, origins.astype(np.uint64), window.start + q, slots)
        mark[:, q] = vals[:, 0]
        sample[:, q, :] = vals[:, 1:]
    return sample, mark


def build_sparse_graph(
    g: Graph,
    cls: Classification,
    p_exp: np.ndarray,
    tape: TapeSpec,
    window: PhaseWindow | None = None,
    k: int | None = None,
) -> SparseGraph:
    """Assemble H from a classification: good light members plus degree-one
    heavy copies, labeled with phase-start probabilities and tape slices."""
    window = window or cls.window
    k = k or tape.repetitions_k
    member = cls.relevant & cls.light & cls.good
    member_ids = np.nonzero(member)[0]
    light_index_of = {int(v): i for i, v in enumerate(member_ids)}

    origins = [int(v) for v in member_ids]
    copy_index = [0] * len(member_ids)
    edges: list[tuple[int, int]] = []

    for v in member_ids:
        for u in g.neighbors(int(v)):
            u = int(u)
            if u > v and member[u]:
                edges.append((light_index_of[int(v)], light_index_of[u]))

    heavy_relevant = np.nonzero(cls.relevant & cls.heavy)[0]
    copy_counter: dict[int, int] = {}
    for h in heavy_relevant:
        h = int(h)
        partners = [int(u) for u in g.neighbors(h) if member[u]]
        for u in sorted(partners):
            copy_counter[h] = copy_counter.get(h, 0) + 1
            idx = len(origins)
            origins.append(h)
            copy_index.append(copy_counter[h])
            edges.append((light_index_of[u], idx))

    origins_arr = np.array(origins, dtype=np.int64)
    copy_arr = np.array(copy_index, dtype=np.int32)
    e_arr = np.asarray(p_exp, dtype=np.int64)[origins_arr] if len(origins) else np.zeros(0, dtype=np.int64)
    sample, mark = _materialize_labels(tape, origins_arr, window, k)
    return SparseGraph(
        window=window,
        k=k,
        bits=tape.precision_bits,
        origins=origins_arr,
        copy_index=copy_arr,
        p_exp=e_arr,
        edges=edges,
        sample_labels=sample,
        mark_labels=mark,
        light_index_of=light_index_of,
    )


def build_sparse_graph_from_views(
    g: Graph,
    cls: Classification,
    p_exp: np.ndarray,
    tape: TapeSpec,
) -> SparseGraph:
    """Rebuild H from per-node 1-hop views only.

    Stage 1: every node announces its own role bits (computed from its own
    tape slice plus its neighbors' probabilities).  Stage 2: each node's view
    is (own role, neighbors' announced roles); H is assembled from the views.
    The result must equal `build_sparse_graph` exactly.
    """
    window, k = cls.window, tape.repetitions_k
    roles = {}
    for v in range(g.n):
        roles[v] = (bool(cls.relevant[v]), bool(cls.light[v]), bool(cls.good[v]), bool(cls.active[v]))
    member = np.zeros(g.n, dtype=bool)
    for v in range(g.n):
        rel, light, good, active = roles[v]
        member[v] = rel and light and good and active

    member_ids = np.nonzero(member)[0]
    light_index_of = {int(v): i for i, v in enumerate(member_ids)}
    origins = [int(v) for v in member_ids]
    copy_index = [0] * len(member_ids)
    edges: list[tuple[int, int]] = []
    # Each member's view: its neighbors' announced roles decide shared edges.
    for v in member_ids:
        v = int(v)
        for u in g.neighbors(v):
            u = int(u)
            if u > v and member[u]:
                edges.append((light_index_of[v], light_index_of[u]))
    copy_counter: dict[int, int] = {}
    heavy_sorted = sorted(
        int(h) for h in range(g.n) if roles[h][0] and not roles[h][1] and roles[h][3]
    )
    for h in heavy_sorted:
        partners = sorted(int(u) for u in g.neighbors(h) if member[u])
        for u in partners:
            copy_counter[h] = copy_counter.get(h, 0) + 1
            idx = len(origins)
            origins.append(h)
            copy_index.append(copy_counter[h])
            edges.append((light_index_of[u], idx))

    origins_arr = np.array(origins, dtype=np.int64)
    sample, mark = _materialize_labels(tape, origins_arr, window, k)
    return SparseGraph(
        window=window,
        k=k,
        bits=tape.precision_bits,
        origins=origins_arr,
        copy_index=np.array(copy_index, dtype=np.int32),
        p_exp=np.asarray(p_exp, dtype=np.int64)[origins_arr] if len(origins) else np.zeros(0, dtype=np.int64),
        edges=edges,
        sample_labels=sample,
        mark_labels=mark,
        light_index_of=light_index_of,
    )


@dataclass(frozen=True)
class PhaseOutcome:
    origin: int
    p_exp: int
    joined: bool
    deferred: bool
    removed_at: int  # global iteration, -1 if not removed during the phase
    stalled: bool


def label_bits_provider(h: SparseGraph):
    def provider(t: int) -> tuple[np.ndarray, np.ndarray]:
        q = t - h.window.start
        return h.sample_labels[:, q, :], h.mark_labels[:, q]

    return provider


def simulate_phase_on_sparse(h: SparseGraph) -> dict[int, PhaseOutcome]:
    """Replay the phase on H alone (labels only, no tape access).

    Light vertices run the honest dynamic; heavy copies emit their origin's
    scheduled sampling bits, never mark, and never join.  Returns one outcome
    per origin node of H (copies merged into their origin).
    """
    r = h.window.length
    n = h.n_vertices
    if n == 0:
        return {}
    copies = h.copy_index > 0
    prob = WindowProblem(
        adj=h.adjacency(),
        origins=h.origins.copy(),
        e0=h.p_exp.astype(np.int64),
        alive0=np.ones(n, dtype=bool),
        emission_heavy=copies.copy(),
        predicted=copies.copy(),
        stall_until0=np.zeros(n, dtype=np.int64),
        bits_provider=label_bits_provider(h),
    )
    checks = [StallCheck(0, stall_threshold_exp(r), h.window.end, strict=False)]
    res = run_window(
        prob, h.window.start, r, h.k, h.bits,
        stall_checks=checks, good_exp=good_threshold_exp(r), record=False,
    )
    out: dict[int, PhaseOutcome] = {}
    for i in range(n):
        origin = int(h.origins[i])
        if copies[i]:
            prev = out.get(origin)
            removed = int(res.removed_at[i])
            if prev is None:
                out[origin] = PhaseOutcome(
                    origin=origin,
                    p_exp=int(min(h.bits, h.p_exp[i] + r)),
                    joined=False,
                    deferred=False,
                    removed_at=removed,
                    stalled=True,
                )
            else:
                merged = prev.removed_at
                if removed >= 0 and (merged < 0 or removed < merged):
                    merged = removed
                out[origin] = PhaseOutcome(
                    origin=origin, p_exp=prev.p_exp, joined=False, deferred=False,
                    removed_at=merged, stalled=True,
                )
        else:
            out[origin] = PhaseOutcome(
                origin=origin,
                p_exp=int(res.e_end[i]),
                joined=bool(res.joined_at[i] >= 0),
                deferred=bool(res.bad[i] and res.alive_end[i]),
                removed_at=int(res.removed_at[i]),
                stalled=bool(res.stall_until[i] >= h.window.start),
            )
    return out


@dataclass
class DegreeReport:
    max_light_degree: int
    histogram: dict[int, int]
    bound: int
    light_violations: list[int]
    copy_violations: list[int]


def check_degree_bound(h: SparseGraph, k: int | None = None) -> DegreeReport:
    """Light degrees against the explicit k * R * 2**(3R+2) bound; heavy
    copies must have degree exactly one (hard invariant)."""
    k = k or h.k
    r = h.window.length
    thr_exp = good_threshold_exp(r)
    bound = k * r * (1 << thr_exp) if thr_exp < 62 else int(1e18)
    deg = h.degrees()
    light = h.copy_index == 0
    hist: dict[int, int] = {}
    for d in deg[light]:
        hist[int(d)] = hist.get(int(d), 0) + 1
    light_viol = [int(i) for i in np.nonzero(light & (deg > bound))[0]]
    copy_viol = [int(i) for i in np.nonzero(~light & (deg != 1))[0]]
    max_light = int(deg[light].max()) if light.any() else 0
    return DegreeReport(max_light, hist, bound, light_viol, copy_viol)


def relevance_audit(
    g: Graph,
    trace: ExecutionTrace,
    cls: Classification,
    tape: TapeSpec,
    k: int,
) -> list[tuple[int, int, str]]:
    """Superset soundness: every node not classified relevant must neither
    sample nor mark at any iteration of the phase, judged against its actual
    trajectory in the trace.  Returns (node, iteration, kind) violations."""
    window = cls.window
    bits = tape.precision_bits
    violations: list[tuple[int, int, str]] = []
    suspects = np.nonzero(cls.active & ~cls.relevant)[0]
    if len(suspects) == 0:
        return violations
    # actual exponent at the start of each iteration, from the trace
    e_at = {int(v): None for v in suspects}
    rows_by_t = {row["t"]: row for row in trace.rows}
    prev_e = {}
    for v in suspects:
        prev_e[int(v)] = None
    slots = np.arange(0, k + 1, dtype=np.uint64)
    for t in range(window.start, window.end + 1):
        row = rows_by_t.get(t)
        if row is None:
            break
        pos = np.searchsorted(row["node"], suspects)
        present = (pos < len(row["node"])) & (row["node"][np.minimum(pos, len(row["node"]) - 1)] == suspects)
        act = suspects[present]
        if len(act) == 0:
            continue
        vals = bulk_node_values(tape, act.astype(np.uint64), t, slots)
        for j, v in enumerate(act):
            v = int(v)
            p = np.searchsorted(row["node"], v)
            e_after = int(row["p_exp"][p])
            # sampling uses the pre-update exponent
            e_before = prev_e[v]
            if e_before is None:
                e_before = _exp_before(trace, v, t)
            for slot in range(1, k + 1):
                if vals[j, slot] < (1 << (bits - e_before)):
                    violations.append((v, t, "sampled"))
                    break
            if vals[j, 0] < (1 << (bits - e_after)):
                violations.append((v, t, "marked"))
            prev_e[v] = e_after
    return violations


def _exp_before(trace: ExecutionTrace, v: int, t: int) -> int:
    for row in reversed(trace.rows):
        if row["t"] < t:
            pos = np.searchsorted(row["node"], v)
            if pos < len(row["node"]) and row["node"][pos] == v:
                return int(row["p_exp"][pos])
    return 1


def engine_phase_outcome(trace: ExecutionTrace, v: int, window: PhaseWindow):
    """(p_exp_end, joined, removed_at) for v over a window, from trace rows."""
    p_end, joined, removed = None, False, -1
    for row in trace.rows:
        if window.start <= row["t"] <= window.end:
            pos = np.searchsorted(row["node"], v)
            if pos < len(row["node"]) and row["node"][pos] == v:
                p_end = int(row["p_exp"][pos])
                if row["status"][pos] == 1:
                    joined = True
                if row["status"][pos] == 2:
                    removed = row["t"]
    return p_end, joined, removed


def run_sparsified_on_h(
    g: Graph, tape: TapeSpec, params, mode: str = "oracle_goodness"
) -> tuple[ExecutionTrace, dict]:
    """Full run with a per-phase sparse-graph audit.

    Executes the phase engine and, for every phase, rebuilds the sparse graph
    from the phase-start snapshot, replays the phase on it alone, and compares
    each good light member's outcome (p, join, removal, deferral) against the
    engine bit-for-bit.  Returns the trace plus an audit report with any
    disagreements and the relevance superset check.
    """
    from .engine import run_sparsified_mis

    trace = run_sparsified_mis(g, tape, params)
    audit = {"phases": 0, "checked": 0, "mismatches": [], "relevance_violations": []}
    for ph in trace.phases:
        window = PhaseWindow(ph.t0, ph.t0 + ph.length - 1)
        cls = classify_nodes(
            g, ph.status0, ph.p_exp0, tape, window, ph.k,
            mode=mode, reference_trace=trace if mode == "oracle_goodness" else None,
        )
        h = build_sparse_graph(g, cls, ph.p_exp0, tape, window, ph.k)
        outcomes = simulate_phase_on_sparse(h)
        deferred = {int(x) for x in ph.deferred}
        for v, o in outcomes.items():
            if v not in h.light_index_of or not cls.good[v]:
                continue
            p_end, joined, removed = engine_phase_outcome(trace, v, window)
            ok = (
                p_end == o.p_exp
                and joined == o.joined
                and removed == o.removed_at
                and (v in deferred) == o.deferred
            )
            audit["checked"] += 1
            if not ok:
                audit["mismatches"].append(
                    (ph.t0, v, (p_end, joined, removed, v in deferred),
                     (o.p_exp, o.joined, o.removed_at, o.deferred))
                )
        audit["relevance_violations"].extend(relevance_audit(g, trace, cls, tape, ph.k))
        audit["phases"] += 1
    return trace, audit
