"""Low-memory machine-model simulator with word and round ledgers.

Machines hold disjoint node shards.  One run proceeds in degree-class steps;
within a step, each phase costs one label-exchange round, a block of
graph-exponentiation rounds that collect each sparse-graph member's
simulation ball, and one apply round that commits joins/removals/updated
probabilities and ships the per-iteration transcripts that silent (non-member)
nodes need to reconstruct their own trajectories.

Word accounting (one word per stored item): a node record is 1 word, a
directed adjacency entry is 1 word, a label is 1 word for the probability /
role bundle plus one word per covered iteration (the per-iteration slice of
random bits).  Transcript matrices cost ceil(k/64)+2 words per (member,
iteration).  Stored words are checked against the machine capacity at every
round boundary; exceeding it is a hard failure.

The collected ball radius is 2R+1 for a phase of length R (radius R carries
a node's own trajectory, but join/removal causes chain two hops per
iteration; the extra rounds are O(log R) and leave the round complexity
class unchanged).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .engine import (
    ACTIVE,
    DEFERRED,
    IN_MIS,
    REMOVED,
    ExecutionTrace,
    MisParams,
    PhaseInfo,
    StallCheck,
    WindowProblem,
    first_iteration_data,
    good_threshold_exp,
    greedy_component_mis,
    run_window,
    stall_threshold_exp,
    _graph_csr,
    _induced_local,
)
from .graphs import Graph, connected_components
from .sparsify import Classification, PhaseWindow, build_sparse_graph, classify_nodes
from .tape import TapeSpec, _core

__all__ = [
    "MpcConfig",
    "MachineLedger",
    "MemoryExceeded",
    "ComponentExceedsMachine",
    "StepPlan",
    "plan_degree_steps",
    "assign_nodes",
    "exponentiate",
    "run_mpc",
    "simulation_radius",
]


class MpcConfigError(ValueError):
    pass


class MemoryExceeded(RuntimeError):
    def __init__(self, machine: int, round_no: int, words: int, capacity: int):
        self.machine, self.round_no, self.words, self.capacity = machine, round_no, words, capacity
        super().__init__(
            f"machine {machine} holds {words} words > capacity {capacity} at round {round_no}"
        )


class ComponentExceedsMachine(RuntimeError):
    pass


@dataclass(frozen=True)
class MpcConfig:
    """alpha sets the default capacity ceil(n**alpha); explicit capacity and
    machine count override it (desk-scale graphs need real ball room)."""

    alpha: float = 0.5
    capacity_words: int | None = None
    machine_count: int | None = None

    def capacity_for(self, n: int) -> int:
        if self.capacity_words is not None:
            return int(self.capacity_words)
        return max(4, math.ceil(n ** self.alpha))


@dataclass
class MachineLedger:
    machines: int
    capacity: int
    stored: np.ndarray = field(default=None)
    peak_words: int = 0
    rounds_total: int = 0
    rounds_by_step: dict[str, int] = field(default_factory=dict)
    sent_log: list[tuple[int, int]] = field(default_factory=list)   # (round, total words sent)
    overflow_sends: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.stored is None:
            self.stored = np.zeros(self.machines, dtype=np.int64)

    def store(self, machine: int, words: int) -> None:
        self.stored[machine] += words

    def free(self, machine: int, words: int) -> None:
        self.stored[machine] -= words

    def barrier(self, label: str, sent: np.ndarray | None = None) -> None:
        """One synchronous round boundary: capacity is enforced here."""
        self.rounds_total += 1
        self.rounds_by_step[label] = self.rounds_by_step.get(label, 0) + 1
        if sent is not None:
            total = int(sent.sum())
            self.sent_log.append((self.rounds_total, total))
            over = np.nonzero(sent > self.capacity)[0]
            for m in over:
                self.overflow_sends.append((self.rounds_total, int(m), int(sent[m])))
        worst = int(self.stored.max()) if self.machines else 0
        self.peak_words = max(self.peak_words, worst)
        if worst > self.capacity:
            m = int(np.argmax(self.stored))
            raise MemoryExceeded(m, self.rounds_total, worst, self.capacity)


@dataclass(frozen=True)
class StepPlan:
    thresholds: tuple[int, ...]

    def __post_init__(self) -> None:
        t = self.thresholds
        if not t or any(t[i] <= t[i + 1] for i in range(len(t) - 1)):
            raise MpcConfigError(f"thresholds must be strictly decreasing, got {t}")
        if t[-1] > 2:
            raise MpcConfigError(f"last threshold must be <= 2, got {t[-1]}")


def plan_degree_steps(delta: int) -> StepPlan:
    """Degree thresholds delta**(2**-i), floored, deduplicated, ending at 1."""
    if delta < 1:
        raise MpcConfigError("max degree must be >= 1")
    thresholds: list[int] = []
    i = 1
    while True:
        t = int(math.floor(delta ** (2.0 ** -i)))
        if t <= 1:
            break
        if not thresholds or t < thresholds[-1]:
            thresholds.append(t)
        i += 1
        if i > 64:
            break
    thresholds.append(1)
    return StepPlan(tuple(thresholds))


def _label_words(r: int) -> int:
    return 1 + r  # probability/role bundle + one word per covered iteration


def _matrix_words(r: int, k: int) -> int:
    return r * ((k + 63) // 64 + 2)


def assign_nodes(
    g: Graph, cfg: MpcConfig, seed: int
) -> tuple[np.ndarray, MachineLedger]:
    """Spread nodes over machines by keyed hash; charge the initial shard
    (node records + adjacency + one label word per node)."""
    capacity = cfg.capacity_for(g.n)
    degs = g.degrees()
    total_words = int(g.n * 2 + degs.sum())
    machines = cfg.machine_count or max(1, math.ceil(2 * total_words / capacity))
    # spread uniformly: hash-shuffled order, then least-loaded placement
    keys = [(_core(seed, 0x4D504331, v, 0, 0, 0), v) for v in range(g.n)]
    machine_of = np.zeros(g.n, dtype=np.int64)
    ledger = MachineLedger(machines=machines, capacity=capacity)
    for _, v in sorted(keys):
        m = int(np.argmin(ledger.stored))
        machine_of[v] = m
        ledger.store(m, 2 + g.degree(v))
    worst = int(ledger.stored.max())
    if worst > capacity:
        m = int(np.argmax(ledger.stored))
        raise MpcConfigError(
            f"infeasible capacity: machine {m} needs {worst} words, capacity is "
            f"{capacity} (deficit {worst - capacity})"
        )
    ledger.peak_words = worst
    return machine_of, ledger


def simulation_radius(r: int) -> int:
    """Ball radius needed to replay a phase of length r exactly for the
    center, given labels that carry exact first-iteration data.

    Join/removal causality travels two hops per iteration after the first,
    so radius 1 suffices for single-iteration phases and 2r-1 in general.
    """
    return 1 if r <= 1 else 2 * r - 1


def exponentiation_rounds(radius: int) -> int:
    return 0 if radius <= 1 else math.ceil(math.log2(radius))


def _sparse_adj_lists(n: int, edges: list[tuple[int, int]]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return adj


def _ball(adj: list[list[int]], v: int, radius: int) -> list[int]:
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
        if not frontier:
            break
    return sorted(dist)


def exponentiate(
    h,
    radius: int,
    cfg: MpcConfig,
    ledger: MachineLedger,
    machine_of: np.ndarray,
    label: str = "exponentiate",
) -> tuple[dict[int, list[int]], int]:
    """Collect every sparse-graph vertex's radius-ball by neighborhood
    doubling: ceil(log2 radius) rounds, each doubling the known radius.

    Returns {vertex: sorted ball} and the rounds consumed.  Ball storage is
    charged to the owner of the vertex's origin; doubling traffic is charged
    as sent words per round.
    """
    adj = _sparse_adj_lists(h.n_vertices, h.edges)
    rounds = exponentiation_rounds(radius)
    r_words = _label_words(h.window.length)
    balls = {v: _ball(adj, v, min(1, radius)) for v in range(h.n_vertices)}
    charged = {v: 0 for v in range(h.n_vertices)}

    def charge_current() -> np.ndarray:
        sent = np.zeros(ledger.machines, dtype=np.int64)
        for v, ball in balls.items():
            m = int(machine_of[int(h.origins[v])])
            words = len(ball) * (1 + r_words)
            ledger.store(m, words - charged[v])
            charged[v] = words
            sent[m] += words * max(1, len(ball) - 1)
        return sent

    known = 1
    for _ in range(rounds):
        known = min(radius, known * 2)
        for v in range(h.n_vertices):
            balls[v] = _ball(adj, v, known)
        sent = charge_current()
        ledger.barrier(label, sent)
    if rounds == 0:
        charge_current()
    return balls, rounds


# ---------------------------------------------------------------------------
# The full run
# ---------------------------------------------------------------------------

def run_mpc(
    g: Graph,
    tape: TapeSpec,
    params: MisParams,
    cfg: MpcConfig,
    seed: int = 0,
    step_plan: StepPlan | None = None,
) -> tuple[np.ndarray, ExecutionTrace, MachineLedger]:
    """Execute the phase-structured MIS through the machine model.

    Returns (MIS membership mask, execution trace, ledger).  The trace is
    assembled from per-machine ball simulations plus the apply-round
    reconstructions of silent nodes, and must equal the step-scheduled
    centralized engine bit-for-bit.
    """
    plan = step_plan or plan_degree_steps(max(1, g.max_degree))
    machine_of, ledger = assign_nodes(g, cfg, seed)
    bits = tape.precision_bits
    status = np.zeros(g.n, dtype=np.int8)
    e = np.ones(g.n, dtype=np.int64)
    trace = ExecutionTrace("mpc", g.n, 0)
    adj_full = _graph_csr(g)
    global_t = 0

    for step_idx, thr in enumerate(plan.thresholds):
        alive = status == ACTIVE
        if not alive.any():
            continue
        deg_alive = adj_full @ alive.astype(np.int32)
        participants = alive if thr <= 1 else (alive & (deg_alive >= thr))
        if not participants.any():
            continue
        sub, ids = _induced_local(g, participants)
        delta_s = int((sub @ np.ones(sub.shape[0], dtype=np.int32)).max()) if sub.shape[0] else 0
        r = params.phase_length(delta_s)
        k = params.repetitions(delta_s)
        total = params.iterations(delta_s)
        if k > tape.repetitions_k:
            raise MpcConfigError(f"needs k={k} repetitions, tape has {tape.repetitions_k}")
        tape.validate_for(max(2, g.max_degree), global_t + total)
        step_label = f"step{step_idx}"

        for phase in range(total // r):
            t0 = global_t + 1 + phase * r
            if not (status[ids] == ACTIVE).any():
                break
            _run_one_phase(
                g, sub, ids, status, e, tape, k, r, t0, bits,
                machine_of, ledger, cfg, trace, step_idx, step_label,
            )
        global_t += total

    post_rounds = _post_shatter_mpc(g, status, machine_of, ledger, trace)
    trace.iterations = global_t
    trace.final_status = status
    trace.final_p_exp = e.astype(np.int16)
    mis_mask = trace.mis_mask
    ledger.rounds_by_step["post_shatter"] = post_rounds
    return mis_mask, trace, ledger


def _run_one_phase(
    g, sub, ids, status, e, tape, k, r, t0, bits,
    machine_of, ledger, cfg, trace, step_idx, step_label,
) -> None:
    window = PhaseWindow(t0, t0 + r - 1)
    status_snap = status.copy()
    p_snap = e.astype(np.int16).copy()

    # Round 1 (build): exchange probability/status/role over participant edges,
    # classify, assemble the phase's sparse graph, and compute the exact
    # first-iteration label data (estimate, stall, mark) -- all 1-hop facts.
    cls = classify_nodes(g, status, e, tape, window, k, mode="defer")
    cls_part = _restrict_classification(cls, ids, g.n)
    h = build_sparse_graph(g, cls_part, e, tape, window, k)
    alive_part = np.zeros(g.n, dtype=bool)
    alive_part[ids[status[ids] == ACTIVE]] = True
    checks = [StallCheck(0, stall_threshold_exp(r), t0 + r - 1, strict=False)]
    dhat0, stall0, marked0 = first_iteration_data(
        sub, ids, e[ids], alive_part[ids], tape, t0, k, stall_checks=checks
    )
    first = {
        "dhat": _scatter(g.n, ids, dhat0, -1),
        "marked": _scatter(g.n, ids, marked0, False),
    }
    sent = np.zeros(ledger.machines, dtype=np.int64)
    recv_words = np.zeros(ledger.machines, dtype=np.int64)
    for v in ids[alive_part[ids]]:
        m = int(machine_of[v])
        deg = g.degree(int(v))
        sent[m] += deg
        recv_words[m] += deg
    for m in range(ledger.machines):
        ledger.store(m, int(recv_words[m]))
    ledger.barrier(step_label, sent)

    # Exponentiation rounds: members collect their simulation balls.
    radius = simulation_radius(r)
    balls, _ = exponentiate(h, radius, cfg, ledger, machine_of, label=step_label)

    # Local simulation: one kernel run per machine over the union of its
    # members' balls; rows are authoritative for owned members only.
    member_rows, member_results = _machine_member_sims(
        h, balls, machine_of, tape, k, r, t0, bits, first
    )

    # Apply round: joins/removals/probabilities committed on g; member
    # transcripts shipped to owners of silent nodes, which then reconstruct.
    joins = {}
    for v, res in member_results.items():
        if res["joined_at"] >= 0:
            joins[v] = res["joined_at"]
    silent_rows, silent_results, matrix_recv = _reconstruct_silent_nodes(
        g, ids, status, e, h, member_results, tape, k, r, t0, bits, machine_of, cls_part, first
    )
    sent = np.zeros(ledger.machines, dtype=np.int64)
    for v in joins:
        sent[int(machine_of[v])] += g.degree(int(v))
    for m, words in matrix_recv.items():
        ledger.store(m, words)
        sent[m] += words
    ledger.barrier(step_label, sent)

    # Reconcile removals against the committed join set (a neighbor's join in
    # the final iteration is outside a ball's horizon).
    results = {**member_results, **silent_results}
    for v, res in results.items():
        if res["joined_at"] >= 0:
            res["removed_at"] = -1
            continue
        cause = -1
        for u in g.neighbors(int(v)):
            tj = joins.get(int(u))
            if tj is not None and (cause < 0 or tj < cause):
                cause = tj
        res["removed_at"] = cause

    for row in _merge_phase_rows(member_rows, silent_rows, results, t0, r):
        trace.rows.append(row)
    heavy_ids = np.nonzero(cls_part.heavy)[0]
    deferred: list[int] = []
    for v, res in results.items():
        e[v] = res["e_end"]
        if res["joined_at"] >= 0:
            status[v] = IN_MIS
    for v, res in results.items():
        if status[v] == ACTIVE and res["removed_at"] >= 0:
            status[v] = REMOVED
    for v in joins:
        nb = g.neighbors(int(v))
        status[nb[status[nb] == ACTIVE]] = REMOVED
    for v, res in sorted(results.items()):
        if status[v] == ACTIVE and res["bad"] and res["light"]:
            status[v] = DEFERRED
            deferred.append(v)
    # free phase-scoped storage (labels, balls, matrices); shard remains
    base = np.zeros(ledger.machines, dtype=np.int64)
    for v in range(g.n):
        base[int(machine_of[v])] += 2 + g.degree(v)
    ledger.stored[:] = base
    trace.phases.append(
        PhaseInfo(
            t0=t0, length=r, k=k, step=step_idx,
            participants=ids.copy(),
            heavy=heavy_ids,
            deferred=np.array(sorted(deferred), dtype=np.int64),
            stall_checks=[StallCheck(0, stall_threshold_exp(r), t0 + r - 1, strict=False)],
            status0=status_snap,
            p_exp0=p_snap,
        )
    )


def _scatter(n: int, ids: np.ndarray, values: np.ndarray, fill) -> np.ndarray:
    out = np.full(n, fill, dtype=values.dtype if values.dtype != bool else bool)
    out[ids] = values
    return out


def _restrict_classification(cls: Classification, ids: np.ndarray, n: int) -> Classification:
    """Zero out everything outside the step participants."""
    mask = np.zeros(n, dtype=bool)
    mask[ids] = True
    return Classification(
        window=cls.window,
        active=cls.active & mask,
        relevant=cls.relevant & mask,
        light=cls.light & mask,
        heavy=cls.heavy & mask,
        good=cls.good & mask,
        mode=cls.mode,
    )


def _machine_member_sims(h, balls, machine_of, tape, k, r, t0, bits, first):
    """Per machine: kernel on the union of its members' balls."""
    member_results: dict[int, dict] = {}
    if h.n_vertices == 0:
        return [], member_results
    owners: dict[int, list[int]] = {}
    light_vertices = np.nonzero(h.copy_index == 0)[0]
    for v in light_vertices:
        owners.setdefault(int(machine_of[int(h.origins[v])]), []).append(int(v))

    rows_out: list[dict] = []
    for m, verts in sorted(owners.items()):
        union: set[int] = set()
        for v in verts:
            union.update(balls[v])
        local_ids = sorted(union)
        lmap = {x: i for i, x in enumerate(local_ids)}
        nn = len(local_ids)
        pairs = [(lmap[a], lmap[b]) for a, b in h.edges if a in lmap and b in lmap]
        if pairs:
            arr = np.array(pairs, dtype=np.int64)
            rows = np.concatenate([arr[:, 0], arr[:, 1]])
            cols = np.concatenate([arr[:, 1], arr[:, 0]])
            adj = sp.csr_matrix(
                (np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(nn, nn)
            )
        else:
            adj = sp.csr_matrix((nn, nn), dtype=np.int32)
        sel = np.array(local_ids, dtype=np.int64)
        copies = h.copy_index[sel] > 0
        record_mask = np.zeros(nn, dtype=bool)
        for v in verts:
            record_mask[lmap[v]] = True
        sample = h.sample_labels[sel]
        mark = h.mark_labels[sel]

        def provider(t: int, _s=sample, _m=mark, _t0=t0):
            q = t - _t0
            return _s[:, q, :], _m[:, q]

        origins_sel = h.origins[sel].astype(np.int64)
        prob = WindowProblem(
            adj=adj,
            origins=origins_sel,
            e0=h.p_exp[sel].astype(np.int64),
            alive0=np.ones(nn, dtype=bool),
            emission_heavy=copies.copy(),
            predicted=copies.copy(),
            stall_until0=np.zeros(nn, dtype=np.int64),
            bits_provider=provider,
            record_mask=record_mask,
            first_dhat=first["dhat"][origins_sel],
            first_marked=first["marked"][origins_sel] & ~copies,
        )
        checks = [StallCheck(0, stall_threshold_exp(r), t0 + r - 1, strict=False)]
        res = run_window(
            prob, t0, r, k, bits, stall_checks=checks,
            good_exp=good_threshold_exp(r), record=True,
        )
        origin_of = {v: int(h.origins[v]) for v in verts}
        for v in verts:
            li = lmap[v]
            member_results[origin_of[v]] = {
                "e_end": int(res.e_end[li]),
                "joined_at": int(res.joined_at[li]),
                "removed_at": int(res.removed_at[li]),
                "bad": bool(res.bad[li]),
                "light": True,
                "local": li,
                "records": res.records,
            }
        rows_out.append((verts, lmap, res.records, origin_of, m))
    return rows_out, member_results


def _reconstruct_silent_nodes(
    g, ids, status, e, h, member_results, tape, k, r, t0, bits, machine_of, cls, first
):
    """Silent (non-member) participants rebuild their trajectories from the
    transcripts of member neighbors plus heavy neighbors' schedules."""
    member_of = {}
    for origin, res in member_results.items():
        member_of[origin] = res
    part_mask = np.zeros(g.n, dtype=bool)
    part_mask[ids] = True
    silent = [
        int(v) for v in ids
        if status[v] == ACTIVE and int(v) not in member_of
    ]
    silent_rows: list[dict] = []
    silent_results: dict[int, dict] = {}
    matrix_recv: dict[int, int] = {}
    if not silent:
        return silent_rows, silent_results, matrix_recv

    # transcripts of members: bits masked by liveness, marks, join flags
    transcripts = _member_transcripts(h, member_results, r, k)

    nodes = sorted(silent)
    nmap = {v: i for i, v in enumerate(nodes)}
    scripted_ids: list[int] = []
    smap: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    heavy_mask_g = cls.heavy
    for v in nodes:
        for u in g.neighbors(v):
            u = int(u)
            if not part_mask[u]:
                continue
            if u in transcripts:
                if u not in smap:
                    smap[u] = len(nodes) + len(scripted_ids)
                    scripted_ids.append(u)
                edges.append((nmap[v], smap[u]))
                matrix_recv[int(machine_of[v])] = matrix_recv.get(int(machine_of[v]), 0) + _matrix_words(r, k)
            elif heavy_mask_g[u] and status[u] == ACTIVE:
                if u not in smap:
                    smap[u] = len(nodes) + len(scripted_ids)
                    scripted_ids.append(u)
                edges.append((nmap[v], smap[u]))
    nn = len(nodes) + len(scripted_ids)
    if edges:
        arr = np.array(edges, dtype=np.int64)
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(nn, nn))
    else:
        adj = sp.csr_matrix((nn, nn), dtype=np.int32)

    origins = np.array(nodes + scripted_ids, dtype=np.int64)
    e0 = e[origins]
    scripted_mask = np.zeros(nn, dtype=bool)
    emission_heavy = np.zeros(nn, dtype=bool)
    predicted = np.zeros(nn, dtype=bool)
    script_bits = np.zeros((nn, r, k), dtype=bool)
    script_marked = np.zeros((nn, r), dtype=bool)
    script_joined = np.zeros((nn, r), dtype=bool)
    for u, li in smap.items():
        if u in transcripts:
            scripted_mask[li] = True
            tb, tm, tj = transcripts[u]
            script_bits[li] = tb
            script_marked[li] = tm
            script_joined[li] = tj
        else:
            emission_heavy[li] = True
            predicted[li] = True
    record_mask = np.zeros(nn, dtype=bool)
    record_mask[: len(nodes)] = True

    prob = WindowProblem(
        adj=adj,
        origins=origins,
        e0=e0,
        alive0=np.ones(nn, dtype=bool),
        emission_heavy=emission_heavy,
        predicted=predicted,
        stall_until0=np.zeros(nn, dtype=np.int64),
        scripted=scripted_mask,
        script_bits=script_bits,
        script_marked=script_marked,
        script_joined=script_joined,
        record_mask=record_mask,
        first_dhat=first["dhat"][origins],
        first_marked=first["marked"][origins] & ~predicted & ~scripted_mask,
    )
    checks = [StallCheck(0, stall_threshold_exp(r), t0 + r - 1, strict=False)]
    res = run_window(
        prob, t0, r, k, bits, tape=tape, stall_checks=checks,
        good_exp=good_threshold_exp(r), record=True,
    )
    for v in nodes:
        li = nmap[v]
        silent_results[v] = {
            "e_end": int(res.e_end[li]),
            "joined_at": int(res.joined_at[li]),
            "removed_at": int(res.removed_at[li]),
            "bad": bool(res.bad[li]),
            "light": not bool(heavy_mask_g[v]),
        }
    silent_rows.append((nodes, nmap, res.records))
    return silent_rows, silent_results, matrix_recv


def _member_transcripts(h, member_results, r, k):
    """(bits, marked, joined) per member, masked by in-phase liveness."""
    out: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for origin, res in member_results.items():
        records = res["records"]
        li = res["local"]
        tb = np.zeros((r, k), dtype=bool)
        tm = np.zeros(r, dtype=bool)
        tj = np.zeros(r, dtype=bool)
        for rec in records:
            q = rec["t"] - records[0]["t"]
            pos = np.searchsorted(rec["local"], li)
            if pos < len(rec["local"]) and rec["local"][pos] == li:
                tb[q] = np.unpackbits(rec["bits"][pos], count=k).astype(bool)
                tm[q] = bool(rec["marked"][pos])
                tj[q] = rec["status"][pos] == IN_MIS
        out[origin] = (tb, tm, tj)
    return out


def _merge_phase_rows(member_rows, silent_rows, results, t0, r):
    """Assemble engine-format per-iteration rows from the machine outputs.

    Row existence comes straight from the ball simulations (exact below the
    final iteration); the status column is restamped from the reconciled
    join/removal events so last-iteration removals land correctly.
    """
    per_t: dict[int, dict[int, tuple]] = {q: {} for q in range(r)}
    for verts, lmap, records, origin_of, _m in member_rows:
        inv = {lmap[v]: origin_of[v] for v in verts}
        for rec in records:
            q = rec["t"] - t0
            for i, li in enumerate(rec["local"]):
                node = inv.get(int(li))
                if node is not None:
                    per_t[q][node] = (rec, i)
    for nodes, nmap, records in silent_rows:
        inv = {nmap[v]: v for v in nodes}
        for rec in records:
            q = rec["t"] - t0
            for i, li in enumerate(rec["local"]):
                node = inv.get(int(li))
                if node is not None:
                    per_t[q][node] = (rec, i)

    rows = []
    for q in range(r):
        if not per_t[q]:
            continue
        t = t0 + q
        nodes = np.array(sorted(per_t[q]), dtype=np.int32)
        m = len(nodes)
        dhat = np.zeros(m, dtype=np.int64)
        p_exp = np.zeros(m, dtype=np.int16)
        marked = np.zeros(m, dtype=bool)
        stalled = np.zeros(m, dtype=bool)
        status_col = np.zeros(m, dtype=np.int8)
        bits_cols = None
        for j, node in enumerate(nodes):
            rec, i = per_t[q][int(node)]
            dhat[j] = rec["dhat"][i]
            p_exp[j] = rec["p_exp"][i]
            marked[j] = rec["marked"][i]
            stalled[j] = rec["stalled"][i]
            res = results[int(node)]
            if res["joined_at"] == t:
                status_col[j] = IN_MIS
            elif res["removed_at"] == t:
                status_col[j] = REMOVED
            else:
                status_col[j] = ACTIVE
            if bits_cols is None:
                bits_cols = np.zeros((m, rec["bits"].shape[1]), dtype=np.uint8)
            bits_cols[j] = rec["bits"][i]
        rows.append(
            {
                "t": t,
                "node": nodes,
                "dhat": dhat,
                "p_exp": p_exp,
                "marked": marked,
                "stalled": stalled,
                "status": status_col,
                "bits": bits_cols,
            }
        )
    return rows


def _post_shatter_mpc(g, status, machine_of, ledger, trace) -> int:
    """Gather surviving components to machines and finish greedily."""
    survivors = np.nonzero((status == ACTIVE) | (status == DEFERRED))[0]
    if len(survivors) == 0:
        trace.post_mis = np.zeros(0, dtype=np.int64)
        return 0
    rounds = 0
    ledger.barrier("post_shatter")  # survivor flags + InMIS-neighbor bits
    rounds += 1
    comps = connected_components(g, survivors)
    diam = 0
    for comp in comps:
        diam = max(diam, _component_diameter(g, comp))
    d_rounds = 0 if diam <= 1 else math.ceil(math.log2(diam))
    for _ in range(d_rounds):
        ledger.barrier("post_shatter")
    rounds += d_rounds
    fixed = status == IN_MIS
    added: list[int] = []
    for comp in comps:
        words = 0
        for v in comp:
            words += 2 + g.degree(v)
        host = int(machine_of[comp[0]])
        if words > ledger.capacity:
            raise ComponentExceedsMachine(
                f"component of {len(comp)} nodes needs {words} words > {ledger.capacity}"
            )
        ledger.store(host, words)
        added.extend(greedy_component_mis(g, comp, fixed))
        ledger.free(host, words)
    ledger.barrier("post_shatter")  # gather
    ledger.barrier("post_shatter")  # commit chosen
    rounds += 2
    trace.post_mis = np.array(sorted(added), dtype=np.int64)
    return rounds


def _component_diameter(g: Graph, comp: list[int]) -> int:
    comp_set = set(comp)
    best = 0
    src = comp[0]
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for w in g.neighbors(u):
                w = int(w)
                if w in comp_set and w not in dist:
                    dist[w] = dist[u] + 1
                    nxt.append(w)
        frontier = nxt
    return max(dist.values()) if dist else 0
