"""Round-synchronous MIS engines.

Three centralized reference executions over a shared randomness tape:

* ``run_base_mis``     -- the plain probability-halving dynamic with exact
                          weighted degrees.
* ``run_sparsified_mis`` -- the phase-structured variant: sampled degree
                          estimates (median of k repetitions), phase-start
                          stalling, and deferral of estimate-outlier nodes.
* ``run_recursive_mis`` -- the nested-subphase variant whose stalling rule
                          applies at every level of a halving window tree.

Every phase is executed by one shared kernel (``run_window``) that the
sparse-graph simulator, the machine-model simulator and the query-model
harness reuse on their own vertex sets.  Keeping a single kernel is what
makes the cross-model bit-equality tests meaningful.

Semantics pinned here (and relied upon by the other simulators):

* Sampling at iteration t uses the pre-update exponent; marking uses the
  post-update exponent.  A node joins iff it is marked and no neighbor
  active at the start of the iteration is marked.  Joiners and all their
  graph neighbors are removed at the end of the iteration.
* A node classified heavy at phase start emits its sampling bits on the
  predicted halving schedule for the whole phase, independent of its own
  status.  This makes every estimate a function of 1-hop phase-start
  information plus the tape, so a phase is replayable from a radius-R view.
* Stalled nodes never mark.  Heavy nodes' own probability updates stay
  honest (estimate-driven); only their emissions are scheduled.
* A node that is light for a phase and whose estimate ever exceeds the
  good threshold is set Deferred at phase end and leaves the dynamic;
  deferred nodes are completed by ``post_shatter``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .graphs import Graph, connected_components
from .tape import TapeSpec, bulk_below, bulk_node_values

ACTIVE, IN_MIS, REMOVED, DEFERRED = 0, 1, 2, 3

STATUS_NAMES = {ACTIVE: "active", IN_MIS: "in_mis", REMOVED: "removed", DEFERRED: "deferred"}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _log2c(x: float) -> float:
    return math.log2(max(2.0, float(x)))


@dataclass(frozen=True)
class MisParams:
    """Knobs of the phase-structured engines.

    Thresholds are unified in the phase length R: stall at 2**(2R), light
    below 2**(2R+1), good at 2**(3R+2), relevance oversampling factor 2**R
    (2**(R+1) for the mark slot).
    """

    alpha: float = 0.5
    c_iterations: float = 6.0
    c_sampling: float = 1.0
    phase_length_r: int | None = None
    recursion_base_r0: int | None = None

    def repetitions(self, delta: int) -> int:
        return max(1, round(12.0 * self.c_sampling * _log2c(delta)))

    def phase_length(self, delta: int) -> int:
        if self.phase_length_r is not None:
            if self.phase_length_r < 1:
                raise ValueError("phase_length_r must be >= 1")
            return self.phase_length_r
        return max(1, round(self.alpha * math.sqrt(_log2c(delta)) / 10.0))

    def base_iterations(self, delta: int) -> int:
        return max(1, round(self.c_iterations * _log2c(delta)))

    def iterations(self, delta: int) -> int:
        """Iteration budget rounded up to a whole number of phases."""
        r = self.phase_length(delta)
        t = self.base_iterations(delta)
        return ((t + r - 1) // r) * r

    def recursion_base(self, delta: int, total: int) -> int:
        if self.recursion_base_r0 is not None:
            return max(1, min(self.recursion_base_r0, total))
        r0 = round(4.0 * math.log2(_log2c(delta)))
        return max(1, min(r0 if r0 >= 1 else 1, total))


def stall_threshold_exp(r: int) -> int:
    return 2 * r


def light_threshold_exp(r: int) -> int:
    return 2 * r + 1


def good_threshold_exp(r: int) -> int:
    return 3 * r + 2


def update_probability(p_exp: int, halve: bool, precision_bits: int = 64) -> int:
    """One probability update on exponents: p = 2**-p_exp.

    Halving clamps at 2**-precision_bits, doubling caps at 1/2.
    """
    if not (1 <= p_exp <= precision_bits):
        raise ValueError(f"exponent {p_exp} outside [1, {precision_bits}]")
    if halve:
        return min(precision_bits, p_exp + 1)
    return max(1, p_exp - 1)


# ---------------------------------------------------------------------------
# Exact dyadic comparisons and medians
# ---------------------------------------------------------------------------

_HI_CUT = 40
_LO_BITS = 24


def dyadic_degree_ge(
    adj: sp.csr_matrix, p_exp: np.ndarray, mask: np.ndarray, thr_exp: int
) -> np.ndarray:
    """Exact per-node test sum(2**-p_exp[u] for masked neighbors u) >= 2**thr_exp.

    Contributions are split into two integer lanes (exponents <= 40 scaled by
    2**40, the rest scaled by 2**64) so the comparison never touches a float.
    """
    e = np.asarray(p_exp, dtype=np.int64)
    hi = np.where(mask & (e <= _HI_CUT), np.int64(1) << np.maximum(_HI_CUT - e, 0), 0)
    lo = np.where(mask & (e > _HI_CUT), np.int64(1) << np.maximum(64 - e, 0), 0)
    hi_sum = adj @ hi
    lo_sum = adj @ lo
    total_hi = hi_sum + (lo_sum >> _LO_BITS)
    if thr_exp + _HI_CUT >= 62:
        return np.zeros(len(e), dtype=bool)
    return total_hi >= (np.int64(1) << (_HI_CUT + thr_exp))


def dyadic_degree_exact(neigh_exps: Sequence[int], bits: int = 64) -> tuple[int, int]:
    """Reference weighted degree as an exact (numerator, 2**bits) pair."""
    return sum(1 << (bits - e) for e in neigh_exps), bits


def ge_pow2(values: np.ndarray, exp: int, strict: bool = False) -> np.ndarray:
    """values >= 2**exp (or > with strict), safe for huge exponents."""
    v = np.asarray(values, dtype=np.int64)
    if exp >= 62:
        return np.zeros(v.shape, dtype=bool)
    t = np.int64(1) << exp
    return v > t if strict else v >= t


def lower_median(sums: np.ndarray) -> np.ndarray:
    """Lower median over axis 1 (k repetitions)."""
    k = sums.shape[1]
    col = (k + 1) // 2 - 1
    return np.sort(sums, axis=1)[:, col].astype(np.int64)


# ---------------------------------------------------------------------------
# Window kernel
# ---------------------------------------------------------------------------

@dataclass
class StallCheck:
    """Evaluate the node's estimate at `offset` against 2**thr_exp; on trigger
    the node stalls through global iteration `end` (inclusive)."""

    offset: int
    thr_exp: int
    end: int
    strict: bool = False


@dataclass
class WindowProblem:
    """A window-local view: any vertex set with its own adjacency.

    origins map local vertices to tape ids; `emission_heavy` vertices emit
    sampling bits on the halving schedule from e0; `predicted` vertices
    (virtual heavy copies in the simulators) additionally skip all honest
    dynamics: they never mark or join and their exponent follows the
    schedule.  `scripted` vertices replay externally provided per-iteration
    emissions, marks and joins (a machine reconstructing its silent nodes
    from shipped neighbor transcripts).
    """

    adj: sp.csr_matrix
    origins: np.ndarray
    e0: np.ndarray
    alive0: np.ndarray
    emission_heavy: np.ndarray
    predicted: np.ndarray
    stall_until0: np.ndarray
    bits_provider: Callable[[int], tuple[np.ndarray, np.ndarray]] | None = None
    scripted: np.ndarray | None = None        # bool mask
    script_bits: np.ndarray | None = None     # (n, R, k) bool, alive-masked
    script_marked: np.ndarray | None = None   # (n, R) bool
    script_joined: np.ndarray | None = None   # (n, R) bool
    record_mask: np.ndarray | None = None     # record rows only for these
    first_dhat: np.ndarray | None = None      # exact first-iteration estimates
    first_marked: np.ndarray | None = None    # exact first-iteration marks

    @property
    def size(self) -> int:
        return int(self.origins.shape[0])


@dataclass
class WindowResult:
    t0: int
    length: int
    heavy: np.ndarray
    light: np.ndarray
    bad: np.ndarray
    e_end: np.ndarray
    alive_end: np.ndarray
    joined_at: np.ndarray
    removed_at: np.ndarray
    stall_until: np.ndarray
    records: list[dict]
    first_dhat: np.ndarray


def _tape_provider(spec: TapeSpec, origins: np.ndarray, k: int):
    slots = np.arange(0, k + 1, dtype=np.uint64)

    def provider(t: int) -> tuple[np.ndarray, np.ndarray]:
        vals = bulk_node_values(spec, origins, t, slots)
        return vals[:, 1:], vals[:, 0]

    return provider


def run_window(
    prob: WindowProblem,
    t0: int,
    length: int,
    k: int,
    bits: int,
    *,
    tape: TapeSpec | None = None,
    stall_checks: Sequence[StallCheck] = (),
    classify_estimate: bool = False,
    good_exp: int | None = None,
    record: bool = True,
) -> WindowResult:
    """Run `length` iterations of the sampled dynamic on a window problem.

    With classify_estimate, heavy/light is decided from the first iteration's
    estimates (threshold 2**(2R+1)); otherwise prob.emission_heavy stands.
    """
    n = prob.size
    provider = prob.bits_provider or _tape_provider(tape, prob.origins, k)
    e = prob.e0.astype(np.int64).copy()
    alive = prob.alive0.copy()
    heavy = prob.emission_heavy.copy()
    predicted = prob.predicted
    scripted = prob.scripted if prob.scripted is not None else np.zeros(n, dtype=bool)
    stall_until = prob.stall_until0.astype(np.int64).copy()
    e0 = prob.e0.astype(np.int64)
    joined_at = np.full(n, -1, dtype=np.int64)
    removed_at = np.full(n, -1, dtype=np.int64)
    bad = np.zeros(n, dtype=bool)
    light = alive & ~heavy & ~predicted
    first_dhat = np.full(n, -1, dtype=np.int64)
    records: list[dict] = []
    light_exp = light_threshold_exp(length)

    for q in range(length):
        t = t0 + q
        start_alive = alive.copy()
        sched = np.minimum(bits, e0 + q)
        ebits = np.where(heavy | predicted, sched, np.where(alive, e, np.int64(-1)))
        sample_nums, mark_nums = provider(t)
        sbits = bulk_below(ebits, sample_nums, bits)
        if scripted.any():
            sbits[scripted] = prob.script_bits[scripted, q, :]
        sums = prob.adj @ sbits.astype(np.int32)
        dhat = lower_median(sums)
        if q == 0 and prob.first_dhat is not None:
            dhat = prob.first_dhat.astype(np.int64)

        if q == 0:
            first_dhat = dhat.copy()
            if classify_estimate:
                heavy = alive & ~predicted & ~scripted & ge_pow2(dhat, light_exp)
                light = alive & ~heavy & ~predicted & ~scripted

        for chk in stall_checks:
            if chk.offset == q:
                trig = alive & ~predicted & ge_pow2(dhat, chk.thr_exp, strict=chk.strict)
                stall_until = np.where(trig, np.maximum(stall_until, chk.end), stall_until)

        stalled = predicted | (alive & (stall_until >= t))
        halve = (dhat >= 2) | stalled
        e_new = np.where(
            predicted,
            np.minimum(bits, e0 + q + 1),
            np.where(alive, np.where(halve, np.minimum(bits, e + 1), np.maximum(1, e - 1)), e),
        )
        mark_exp = np.where(alive & ~stalled & ~scripted, e_new, np.int64(-1))
        marked = bulk_below(mark_exp, mark_nums[:, None], bits)[:, 0]
        if q == 0 and prob.first_marked is not None:
            marked = prob.first_marked & alive & ~stalled & ~predicted
        if scripted.any():
            marked[scripted] = prob.script_marked[scripted, q]
        blocked = (prob.adj @ marked.astype(np.int32)) > 0
        joined = marked & ~blocked & ~scripted
        if scripted.any():
            joined = joined | (scripted & prob.script_joined[:, q])
        removed = alive & ~joined & ~scripted & ((prob.adj @ joined.astype(np.int32)) > 0)

        if good_exp is not None:
            bad |= alive & light & ge_pow2(dhat, good_exp, strict=True)

        e = e_new
        joined_at[joined & ~scripted] = t
        removed_at[removed] = t
        alive = alive & ~(joined | removed)

        if record:
            idx = np.nonzero(start_alive if prob.record_mask is None else start_alive & prob.record_mask)[0]
            status_after = np.where(
                joined[idx], IN_MIS, np.where(removed[idx], REMOVED, ACTIVE)
            ).astype(np.int8)
            records.append(
                {
                    "t": t,
                    "local": idx.astype(np.int32),
                    "dhat": dhat[idx],
                    "p_exp": e[idx].astype(np.int16),
                    "marked": marked[idx],
                    "stalled": stalled[idx] & ~predicted[idx],
                    "status": status_after,
                    "bits": np.packbits(sbits[idx], axis=1),
                }
            )

    return WindowResult(
        t0=t0,
        length=length,
        heavy=heavy,
        light=light,
        bad=bad,
        e_end=e,
        alive_end=alive,
        joined_at=joined_at,
        removed_at=removed_at,
        stall_until=stall_until,
        records=records,
        first_dhat=first_dhat,
    )


# ---------------------------------------------------------------------------
# Execution traces
# ---------------------------------------------------------------------------

@dataclass
class PhaseInfo:
    t0: int
    length: int
    k: int
    step: int
    participants: np.ndarray
    heavy: np.ndarray        # global ids
    deferred: np.ndarray     # global ids deferred at phase end
    stall_checks: list[StallCheck] = field(default_factory=list)
    status0: np.ndarray | None = None   # snapshot at phase start
    p_exp0: np.ndarray | None = None


@dataclass
class ExecutionTrace:
    """Per-iteration, per-node record of one engine run; the equality object
    for all cross-model tests."""

    engine: str
    n: int
    iterations: int
    rows: list[dict] = field(default_factory=list)
    phases: list[PhaseInfo] = field(default_factory=list)
    final_status: np.ndarray | None = None
    final_p_exp: np.ndarray | None = None
    post_mis: np.ndarray | None = None

    @property
    def mis_mask(self) -> np.ndarray:
        mask = self.final_status == IN_MIS
        if self.post_mis is not None:
            mask = mask.copy()
            mask[self.post_mis] = True
        return mask

    @property
    def mis_nodes(self) -> list[int]:
        return np.nonzero(self.mis_mask)[0].tolist()

    @property
    def survivors(self) -> np.ndarray:
        return np.nonzero((self.final_status == ACTIVE) | (self.final_status == DEFERRED))[0]

    def row_for(self, t: int) -> dict | None:
        for row in self.rows:
            if row["t"] == t:
                return row
        return None

    def node_history(self, v: int) -> list[dict]:
        """All iteration rows touching node v (global id)."""
        out = []
        for row in self.rows:
            pos = np.searchsorted(row["node"], v)
            if pos < len(row["node"]) and row["node"][pos] == v:
                out.append({key: row[key][pos] for key in ("dhat", "p_exp", "marked", "stalled", "status")} | {"t": row["t"]})
        return out

    def to_csv_text(self) -> str:
        lines = ["iteration,node,p_num,p_exp,dhat,marked,stalled,status"]
        for row in self.rows:
            t = row["t"]
            for i in range(len(row["node"])):
                lines.append(
                    f"{t},{row['node'][i]},1,{row['p_exp'][i]},{row['dhat'][i]},"
                    f"{int(row['marked'][i])},{int(row['stalled'][i])},{int(row['status'][i])}"
                )
        return "\n".join(lines) + "\n"

    def to_fixture_bytes(self) -> bytes:
        """Compact deterministic binary form (golden-test fixture)."""
        chunks = [b"SPMT1"]
        chunks.append(np.array([self.n, self.iterations, len(self.rows)], dtype="<i8").tobytes())
        for row in self.rows:
            m = len(row["node"])
            chunks.append(np.array([row["t"], m], dtype="<i8").tobytes())
            chunks.append(row["node"].astype("<i4").tobytes())
            chunks.append(row["p_exp"].astype("<i2").tobytes())
            chunks.append(row["dhat"].astype("<i8").tobytes())
            flags = (
                row["marked"].astype(np.uint8)
                | (row["stalled"].astype(np.uint8) << 1)
                | (row["status"].astype(np.uint8) << 2)
            )
            chunks.append(flags.astype("<u1").tobytes())
        chunks.append(self.final_status.astype("<i1").tobytes())
        chunks.append(self.final_p_exp.astype("<i2").tobytes())
        return b"".join(chunks)

    def same_rows(self, other: "ExecutionTrace") -> bool:
        if self.iterations != other.iterations or len(self.rows) != len(other.rows):
            return False
        for a, b in zip(self.rows, other.rows):
            for key in ("t",):
                if a[key] != b[key]:
                    return False
            for key in ("node", "p_exp", "dhat", "marked", "stalled", "status"):
                if not np.array_equal(a[key], b[key]):
                    return False
        return np.array_equal(self.final_status, other.final_status) and np.array_equal(
            self.final_p_exp, other.final_p_exp
        )


def _graph_csr(g: Graph) -> sp.csr_matrix:
    data = np.ones(len(g.indices), dtype=np.int32)
    return sp.csr_matrix((data, g.indices.astype(np.int64), g.indptr), shape=(g.n, g.n))


def first_iteration_data(
    adj: sp.csr_matrix,
    origins: np.ndarray,
    e: np.ndarray,
    alive: np.ndarray,
    tape: TapeSpec,
    t0: int,
    k: int,
    stall_checks: Sequence[StallCheck] = (),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (dhat, stalled, marked) of a phase's first iteration.

    This is 1-hop information: each node can derive it from its neighbors'
    phase-start probabilities plus the tape, so simulators may carry it in
    vertex labels instead of widening their collected balls by one layer.
    """
    bits = tape.precision_bits
    ebits = np.where(alive, e.astype(np.int64), np.int64(-1))
    vals = bulk_node_values(
        tape, origins.astype(np.uint64), t0, np.arange(0, k + 1, dtype=np.uint64)
    )
    sbits = bulk_below(ebits, vals[:, 1:], bits)
    sums = adj @ sbits.astype(np.int32)
    dhat = lower_median(sums)
    stalled = np.zeros(len(e), dtype=bool)
    for chk in stall_checks:
        if chk.offset == 0:
            stalled |= alive & ge_pow2(dhat, chk.thr_exp, strict=chk.strict)
    halve = (dhat >= 2) | stalled
    e_new = np.where(alive, np.where(halve, np.minimum(bits, e + 1), np.maximum(1, e - 1)), e)
    mark_exp = np.where(alive & ~stalled, e_new, np.int64(-1))
    marked = bulk_below(mark_exp, vals[:, :1], bits)[:, 0]
    return dhat, stalled, marked


# ---------------------------------------------------------------------------
# Base engine (exact degrees, no phases)
# ---------------------------------------------------------------------------

def run_base_mis(g: Graph, tape: TapeSpec, iterations: int) -> ExecutionTrace:
    """The exact-degree halving dynamic for `iterations` iterations."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    tape.validate_for(g.max_degree, iterations)
    bits = tape.precision_bits
    adj = _graph_csr(g)
    status = np.zeros(g.n, dtype=np.int8)
    e = np.ones(g.n, dtype=np.int64)
    trace = ExecutionTrace("base", g.n, iterations)
    nodes = np.arange(g.n, dtype=np.uint64)
    for t in range(1, iterations + 1):
        alive = status == ACTIVE
        halve = dyadic_degree_ge(adj, e, alive, 1)
        e_new = np.where(alive, np.where(halve, np.minimum(bits, e + 1), np.maximum(1, e - 1)), e)
        mark_nums = bulk_node_values(tape, nodes, t, np.array([0], dtype=np.uint64))[:, 0]
        mark_exp = np.where(alive, e_new, np.int64(-1))
        marked = bulk_below(mark_exp, mark_nums[:, None], bits)[:, 0]
        blocked = (adj @ marked.astype(np.int32)) > 0
        joined = marked & ~blocked
        removed = alive & ~joined & ((adj @ joined.astype(np.int32)) > 0)
        idx = np.nonzero(alive)[0]
        e = e_new
        status[joined] = IN_MIS
        status[removed] = REMOVED
        if len(idx) == 0:
            continue
        trace.rows.append(
            {
                "t": t,
                "node": idx.astype(np.int32),
                "local": idx.astype(np.int32),
                "dhat": np.full(len(idx), -1, dtype=np.int64),
                "p_exp": e[idx].astype(np.int16),
                "marked": marked[idx],
                "stalled": np.zeros(len(idx), dtype=bool),
                "status": status[idx].astype(np.int8),
            }
        )
    trace.final_status = status
    trace.final_p_exp = e.astype(np.int16)
    return trace


# ---------------------------------------------------------------------------
# Phase-structured engines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepPlanLike:
    thresholds: tuple[int, ...]


def _induced_local(g: Graph, members: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """CSR of the subgraph induced on `members` (bool mask), plus id map."""
    if members.all():
        return _graph_csr(g), np.arange(g.n, dtype=np.int64)
    ids = np.nonzero(members)[0]
    local_of = np.full(g.n, -1, dtype=np.int64)
    local_of[ids] = np.arange(len(ids))
    rows, cols = [], []
    for li, v in enumerate(ids):
        nb = g.neighbors(int(v))
        keep = nb[members[nb]]
        rows.extend([li] * len(keep))
        cols.extend(local_of[keep])
    data = np.ones(len(rows), dtype=np.int32)
    adj = sp.csr_matrix((data, (rows, cols)), shape=(len(ids), len(ids)))
    return adj, ids


def _merge_window_rows(trace: ExecutionTrace, result: WindowResult, ids: np.ndarray) -> None:
    for rec in result.records:
        if len(rec["local"]) == 0:
            continue
        node = ids[rec["local"]].astype(np.int32)
        order = np.argsort(node)
        trace.rows.append(
            {
                "t": rec["t"],
                "node": node[order],
                "dhat": rec["dhat"][order],
                "p_exp": rec["p_exp"][order],
                "marked": rec["marked"][order],
                "stalled": rec["stalled"][order],
                "status": rec["status"][order],
                "bits": rec["bits"][order],
            }
        )


def _apply_window_globally(
    g: Graph,
    status: np.ndarray,
    e: np.ndarray,
    ids: np.ndarray,
    result: WindowResult,
) -> None:
    """Commit a window result: statuses, exponents, and removals of
    non-participant neighbors of joiners."""
    e[ids] = result.e_end
    joined = ids[result.joined_at >= 0]
    removed = ids[result.removed_at >= 0]
    status[joined] = IN_MIS
    status[removed] = REMOVED
    for v in joined:
        nb = g.neighbors(int(v))
        outside = nb[status[nb] == ACTIVE]
        status[outside] = REMOVED


def run_sparsified_mis(
    g: Graph,
    tape: TapeSpec,
    params: MisParams,
    step_plan: Sequence[int] | None = None,
) -> ExecutionTrace:
    """Phase-structured engine; optionally scheduled over degree-class steps.

    With a step plan, each step runs the dynamic on the subgraph induced by
    still-active nodes whose current degree meets the step threshold
    (threshold <= 1 admits every remaining node), which is the schedule the
    machine-model simulator follows.
    """
    bits = tape.precision_bits
    status = np.zeros(g.n, dtype=np.int8)
    e = np.ones(g.n, dtype=np.int64)
    trace = ExecutionTrace("sparsified", g.n, 0)
    thresholds = tuple(step_plan) if step_plan is not None else (1,)
    adj_full = _graph_csr(g)
    global_t = 0

    for step_idx, thr in enumerate(thresholds):
        alive = status == ACTIVE
        if not alive.any():
            continue
        deg_alive = adj_full @ alive.astype(np.int32)
        if thr <= 1:
            participants = alive
        else:
            participants = alive & (deg_alive >= thr)
        if not participants.any():
            continue
        sub, ids = _induced_local(g, participants)
        delta_s = int((sub @ np.ones(sub.shape[0], dtype=np.int32)).max()) if sub.shape[0] else 0
        r = params.phase_length(delta_s)
        k = params.repetitions(delta_s)
        total = params.iterations(delta_s)
        if k > tape.repetitions_k:
            raise ValueError(f"engine needs k={k} repetitions, tape has {tape.repetitions_k}")
        tape.validate_for(max(g.max_degree, 2), global_t + total)

        for phase in range(total // r):
            t0 = global_t + 1 + phase * r
            alive_local = status[ids] == ACTIVE
            if not alive_local.any():
                break
            status_snap = status.copy()
            p_snap = e.astype(np.int16).copy()
            heavy_local = alive_local & dyadic_degree_ge(
                sub, e[ids], alive_local, light_threshold_exp(r)
            )
            prob = WindowProblem(
                adj=sub,
                origins=ids.astype(np.int64),
                e0=e[ids],
                alive0=alive_local,
                emission_heavy=heavy_local,
                predicted=np.zeros(len(ids), dtype=bool),
                stall_until0=np.zeros(len(ids), dtype=np.int64),
            )
            checks = [StallCheck(0, stall_threshold_exp(r), t0 + r - 1, strict=False)]
            result = run_window(
                prob, t0, r, k, bits,
                tape=tape, stall_checks=checks, good_exp=good_threshold_exp(r),
            )
            _merge_window_rows(trace, result, ids)
            _apply_window_globally(g, status, e, ids, result)
            defer_local = result.alive_end & result.light & result.bad
            deferred = ids[defer_local & (status[ids] == ACTIVE)]
            status[deferred] = DEFERRED
            trace.phases.append(
                PhaseInfo(
                    t0=t0,
                    length=r,
                    k=k,
                    step=step_idx,
                    participants=ids.copy(),
                    heavy=ids[heavy_local],
                    deferred=np.asarray(deferred),
                    stall_checks=checks,
                    status0=status_snap,
                    p_exp0=p_snap,
                )
            )
        global_t += total

    trace.iterations = global_t
    trace.final_status = status
    trace.final_p_exp = e.astype(np.int16)
    return trace


def window_tree_leaves(total: int, base: int) -> tuple[list[tuple[int, int]], dict[int, list[tuple[int, int]]]]:
    """Split [1, total] by halving until windows are <= base long.

    Returns the leaf windows in order plus, per start iteration, every tree
    window (including internal ones) starting there, outermost first.
    """
    starts: dict[int, list[tuple[int, int]]] = {}
    leaves: list[tuple[int, int]] = []

    def split(a: int, b: int) -> None:
        starts.setdefault(a, []).append((a, b))
        length = b - a + 1
        if length <= base:
            leaves.append((a, b))
            return
        mid = a + (length + 1) // 2 - 1
        split(a, mid)
        split(mid + 1, b)

    split(1, total)
    return leaves, starts


def run_recursive_mis(g: Graph, tape: TapeSpec, params: MisParams) -> ExecutionTrace:
    """Nested-subphase engine: the stalling check runs at the first iteration
    of every tree window (strict >), classification and deferral are
    estimate-based per leaf window."""
    bits = tape.precision_bits
    delta = g.max_degree
    total = params.base_iterations(delta)
    base = params.recursion_base(delta, total)
    leaves, starts = window_tree_leaves(total, base)
    tape.validate_for(max(2, delta), total)

    status = np.zeros(g.n, dtype=np.int8)
    e = np.ones(g.n, dtype=np.int64)
    stall_until = np.zeros(g.n, dtype=np.int64)
    trace = ExecutionTrace("recursive", g.n, total)
    adj = _graph_csr(g)
    ids = np.arange(g.n)
    k = params.repetitions(delta)
    if k > tape.repetitions_k:
        raise ValueError(f"engine needs k={k} repetitions, tape has {tape.repetitions_k}")

    for (a, b) in leaves:
        r = b - a + 1
        alive_local = status == ACTIVE
        if not alive_local.any():
            break
        status_snap = status.copy()
        p_snap = e.astype(np.int16).copy()
        checks = [
            StallCheck(0, stall_threshold_exp(wb - wa + 1), wb, strict=True)
            for (wa, wb) in starts.get(a, [])
        ]
        prob = WindowProblem(
            adj=adj,
            origins=ids.astype(np.int64),
            e0=e.copy(),
            alive0=alive_local,
            emission_heavy=np.zeros(g.n, dtype=bool),
            predicted=np.zeros(g.n, dtype=bool),
            stall_until0=stall_until.copy(),
            )
        result = run_window(
            prob, a, r, k, bits,
            tape=tape, stall_checks=checks, classify_estimate=True,
            good_exp=good_threshold_exp(r),
        )
        _merge_window_rows(trace, result, ids)
        _apply_window_globally(g, status, e, ids, result)
        stall_until = result.stall_until
        defer_local = result.alive_end & result.light & result.bad
        deferred = ids[defer_local & (status == ACTIVE)]
        status[deferred] = DEFERRED
        trace.phases.append(
            PhaseInfo(
                t0=a, length=r, k=k, step=0,
                participants=ids.copy(),
                heavy=ids[result.heavy],
                deferred=np.asarray(deferred),
                stall_checks=checks,
                status0=status_snap,
                p_exp0=p_snap,
            )
        )

    trace.final_status = status
    trace.final_p_exp = e.astype(np.int16)
    return trace


# ---------------------------------------------------------------------------
# Post-shattering and standalone estimator
# ---------------------------------------------------------------------------

def greedy_component_mis(
    g: Graph, component: Sequence[int], fixed_mis: np.ndarray
) -> list[int]:
    """Ascending-id greedy over one surviving component, respecting
    already-fixed MIS neighbors."""
    chosen: list[int] = []
    chosen_mask = set()
    for v in sorted(component):
        nb = g.neighbors(v)
        if any(fixed_mis[u] for u in nb):
            continue
        if any(int(u) in chosen_mask for u in nb):
            continue
        chosen.append(v)
        chosen_mask.add(v)
    return chosen


def post_shatter(g: Graph, trace: ExecutionTrace) -> ExecutionTrace:
    """Complete a run deterministically: greedy MIS per surviving component."""
    survivors = trace.survivors
    fixed = trace.final_status == IN_MIS
    added: list[int] = []
    for comp in connected_components(g, survivors):
        added.extend(greedy_component_mis(g, comp, fixed))
    trace.post_mis = np.array(sorted(added), dtype=np.int64)
    return trace


def estimate_dhat(
    v: int,
    active_neighbor_exps: Sequence[tuple[int, int]],
    tape: TapeSpec,
    t: int,
    k: int,
) -> int:
    """Median-of-k sampled degree estimate for node v at iteration t.

    `active_neighbor_exps` lists (neighbor id, p exponent) for the neighbors
    active at the start of the iteration.
    """
    if k < 1 or k > tape.repetitions_k:
        raise ValueError(f"k={k} outside [1, {tape.repetitions_k}]")
    if not active_neighbor_exps:
        return 0
    ids = np.array([u for u, _ in active_neighbor_exps], dtype=np.uint64)
    exps = np.array([x for _, x in active_neighbor_exps], dtype=np.int64)
    nums = bulk_node_values(tape, ids, t, np.arange(1, k + 1, dtype=np.uint64))
    sbits = bulk_below(exps, nums, tape.precision_bits)
    sums = sbits.sum(axis=0, dtype=np.int64)[None, :]
    return int(lower_median(sums)[0])
