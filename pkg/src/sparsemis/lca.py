"""Query-model harness.

The only access to the graph is probe(v), which returns v's full neighbor
list and costs one query; the shared randomness tape is free.  Oracles
answer "what is the state of node v at the end of phase / window i" by
recursively evaluating the previous phase on v's neighborhood, classifying
the phase's sparse graph around v, collecting a small simulation ball in it,
and replaying the phase with the same kernel the engines use, so every
answer equals the centralized trace value exactly.

Two accounting modes: `counted` re-probes on every recursive visit (the
faithful worst-case cost; usable on small inputs only) and `memoized`, which
caches probes and oracle states within one answer, so each distinct node
costs one query per answer.  The mode is recorded with every result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .engine import (
    ACTIVE,
    DEFERRED,
    IN_MIS,
    REMOVED,
    MisParams,
    StallCheck,
    WindowProblem,
    good_threshold_exp,
    light_threshold_exp,
    lower_median,
    run_window,
    stall_threshold_exp,
    window_tree_leaves,
)
from .graphs import Graph, CheckResult
from .mpc import simulation_radius
from .tape import TapeSpec, bulk_below, bulk_node_values

__all__ = [
    "QueryLedger",
    "GraphAccess",
    "LcaAnswer",
    "LcaHarness",
    "parnas_ron_baseline",
    "consistency_audit",
]


@dataclass
class QueryLedger:
    total: int = 0
    by_level: dict[str, int] = field(default_factory=dict)
    by_node: dict[int, int] = field(default_factory=dict)

    def charge(self, level: str, node: int | None = None) -> None:
        self.total += 1
        self.by_level[level] = self.by_level.get(level, 0) + 1
        if node is not None:
            self.by_node[node] = self.by_node.get(node, 0) + 1

    def conserved(self) -> bool:
        return self.total == sum(self.by_level.values())


class GraphAccess:
    """probe(v) -> neighbor ids; every call costs one query."""

    def __init__(self, g: Graph, ledger: QueryLedger | None = None):
        self._g = g
        self.ledger = ledger or QueryLedger()
        self._level_stack: list[str] = ["root"]
        self.n = g.n

    def push_level(self, label: str) -> None:
        self._level_stack.append(label)

    def pop_level(self) -> None:
        self._level_stack.pop()

    def probe(self, v: int) -> np.ndarray:
        self.ledger.charge(self._level_stack[-1], v)
        return self._g.neighbors(v)


class MemoizedGraphAccess(GraphAccess):
    """Caches probes: repeated probes of a node are free after the first."""

    def __init__(self, g: Graph, ledger: QueryLedger | None = None):
        super().__init__(g, ledger)
        self._cache: dict[int, np.ndarray] = {}

    def probe(self, v: int) -> np.ndarray:
        if v not in self._cache:
            self._cache[v] = super().probe(v)
        return self._cache[v]


@dataclass(frozen=True)
class NodeState:
    status: int
    p_exp: int
    stall_until: int = 0


@dataclass(frozen=True)
class LcaAnswer:
    node: int
    in_mis: bool
    probes_used: int
    path: str                  # main_run | post_shatter
    variant: str
    mode: str
    probes_by_level: dict[str, int] = field(default_factory=dict)


_INITIAL = NodeState(ACTIVE, 1, 0)


class _OracleCore:
    """Shared machinery: per-window classification, ball collection, kernel."""

    def __init__(self, access: GraphAccess, tape: TapeSpec, params: MisParams, delta: int):
        self.access = access
        self.tape = tape
        self.params = params
        self.delta = delta
        self.bits = tape.precision_bits
        self.k = params.repetitions(delta)
        if self.k > tape.repetitions_k:
            raise ValueError(f"oracle needs k={self.k}, tape has {tape.repetitions_k}")

    # -- scalar helpers -----------------------------------------------------

    def _first_iteration(self, v: int, state, neighbor_states, t0: int, checks):
        """Exact (dhat0, stalled0, marked0, p0_after) for v at iteration t0."""
        alive_ids, alive_exps = [], []
        for u, st in neighbor_states:
            if st.status == ACTIVE:
                alive_ids.append(u)
                alive_exps.append(st.p_exp)
        if alive_ids:
            nums = bulk_node_values(
                self.tape, np.array(alive_ids, dtype=np.uint64), t0,
                np.arange(1, self.k + 1, dtype=np.uint64),
            )
            sbits = bulk_below(np.array(alive_exps, dtype=np.int64), nums, self.bits)
            dhat0 = int(lower_median(sbits.sum(axis=0, dtype=np.int64)[None, :])[0])
        else:
            dhat0 = 0
        stalled = state.stall_until >= t0
        for chk in checks:
            if chk.offset == 0:
                thr_ok = dhat0 > (1 << chk.thr_exp) if chk.strict else dhat0 >= (1 << chk.thr_exp)
                if chk.thr_exp < 62 and thr_ok:
                    stalled = True
        halve = dhat0 >= 2 or stalled
        p0 = min(self.bits, state.p_exp + 1) if halve else max(1, state.p_exp - 1)
        from .tape import tape_value, below

        marked = (not stalled) and below(p0, tape_value(self.tape, v, t0, 0))
        return dhat0, stalled, marked, p0

    def _relevant(self, v: int, p_exp: int, window) -> bool:
        t0, t1 = window
        r = t1 - t0 + 1
        sample_exp = max(p_exp - r, 0)
        mark_exp = max(p_exp - r - 1, 0)
        for t in range(t0, t1 + 1):
            vals = bulk_node_values(
                self.tape, np.array([v], dtype=np.uint64), t,
                np.arange(0, self.k + 1, dtype=np.uint64),
            )[0]
            if vals[0] < (1 << (self.bits - mark_exp)):
                return True
            if sample_exp == 0 or (vals[1:] < (1 << (self.bits - sample_exp))).any():
                return True
        return False

    # -- ball simulation ----------------------------------------------------

    def simulate_window_for(
        self,
        v: int,
        window: tuple[int, int],
        checks: list[StallCheck],
        state_of,
        classify,
        level: str,
    ) -> NodeState:
        """Collect v's simulation ball in the window's sparse graph and replay.

        state_of(u) gives u's state at window start; classify(u) returns
        (member, heavy, state) using window-start information.  Returns v's
        state at window end.
        """
        t0, t1 = window
        r = t1 - t0 + 1
        radius = simulation_radius(r) + 1
        st_v = state_of(v)
        if st_v.status != ACTIVE:
            return st_v

        member_v, heavy_v, _ = classify(v)
        members: dict[int, int] = {}
        dist: dict[int, int] = {}
        order: list[int] = []

        def admit(x: int, d: int) -> None:
            if x not in members:
                members[x] = len(order)
                dist[x] = d
                order.append(x)

        frontier: list[int] = []
        if member_v:
            admit(v, 0)
            frontier = [v]
        else:
            for u in self._member_neighbors(v, classify):
                admit(u, 1)
                frontier.append(u)
        while frontier:
            nxt: list[int] = []
            for x in frontier:
                base = dist[x]
                if base >= radius:
                    continue
                for u in self._member_neighbors(x, classify):
                    if u not in members:
                        admit(u, base + 1)
                        if base + 1 < radius:
                            nxt.append(u)
            frontier = nxt

        # vertex table: members, then v if silent/heavy, then copies
        origins: list[int] = list(order)
        predicted: list[bool] = [False] * len(order)
        emission: list[bool] = [False] * len(order)
        edges: list[tuple[int, int]] = []
        v_idx: int
        if member_v:
            v_idx = members[v]
        else:
            v_idx = len(origins)
            origins.append(v)
            predicted.append(bool(heavy_v))
            emission.append(bool(heavy_v))
            for u in self._member_neighbors(v, classify):
                edges.append((v_idx, members[u]))

        for x in order:
            xi = members[x]
            for u in self._neighbor_ids(x):
                u = int(u)
                if u in members and members[u] > xi:
                    edges.append((xi, members[u]))
                elif u not in members and u != v:
                    m, hv, stu = classify(u)
                    if hv and stu.status == ACTIVE and self._relevant(u, stu.p_exp, window):
                        ci = len(origins)
                        origins.append(u)
                        predicted.append(True)
                        emission.append(True)
                        edges.append((xi, ci))
        if not member_v and not heavy_v:
            # silent light center also hears its heavy relevant neighbors
            for u in self._neighbor_ids(v):
                u = int(u)
                if u in members:
                    continue
                m, hv, stu = classify(u)
                if hv and stu.status == ACTIVE and self._relevant(u, stu.p_exp, window):
                    ci = len(origins)
                    origins.append(u)
                    predicted.append(True)
                    emission.append(True)
                    edges.append((v_idx, ci))

        nn = len(origins)
        origins_arr = np.array(origins, dtype=np.int64)
        states = [state_of(x) for x in origins]
        e0 = np.array([s.p_exp for s in states], dtype=np.int64)
        stall0 = np.array([s.stall_until for s in states], dtype=np.int64)
        first_dhat = np.zeros(nn, dtype=np.int64)
        first_marked = np.zeros(nn, dtype=bool)
        pred_arr = np.array(predicted, dtype=bool)
        for i, x in enumerate(origins):
            if pred_arr[i]:
                continue
            nb_states = [(int(u), state_of(int(u))) for u in self._neighbor_ids(x)]
            dh, _stall, mk, _p0 = self._first_iteration(x, states[i], nb_states, t0, checks)
            first_dhat[i] = dh
            first_marked[i] = mk
        if edges:
            arr = np.array(edges, dtype=np.int64)
            rows = np.concatenate([arr[:, 0], arr[:, 1]])
            cols = np.concatenate([arr[:, 1], arr[:, 0]])
            adj = sp.csr_matrix(
                (np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(nn, nn)
            )
        else:
            adj = sp.csr_matrix((nn, nn), dtype=np.int32)

        prob = WindowProblem(
            adj=adj,
            origins=origins_arr,
            e0=e0,
            alive0=np.ones(nn, dtype=bool),
            emission_heavy=np.array(emission, dtype=bool),
            predicted=pred_arr,
            stall_until0=stall0,
            first_dhat=first_dhat,
            first_marked=first_marked,
        )
        res = run_window(
            prob, t0, r, self.k, self.bits, tape=self.tape,
            stall_checks=checks, classify_estimate=False,
            good_exp=good_threshold_exp(r), record=False,
        )
        i = v_idx
        if res.joined_at[i] >= 0:
            return NodeState(IN_MIS, int(res.e_end[i]), int(res.stall_until[i]))
        if res.removed_at[i] >= 0:
            return NodeState(REMOVED, int(res.e_end[i]), int(res.stall_until[i]))
        if bool(res.bad[i]) and res.light[i]:
            return NodeState(DEFERRED, int(res.e_end[i]), int(res.stall_until[i]))
        return NodeState(ACTIVE, int(res.e_end[i]), int(res.stall_until[i]))

    def _neighbor_ids(self, x: int) -> np.ndarray:
        return self.access.probe(x)

    def _member_neighbors(self, x: int, classify) -> list[int]:
        out = []
        for u in self._neighbor_ids(x):
            m, _hv, _st = classify(int(u))
            if m:
                out.append(int(u))
        return out


class ChainedOracle(_OracleCore):
    """Phase-chained oracle: O_i answers states at the end of phase i by
    recursing through O_{i-1} on 1-hop neighborhoods."""

    def __init__(self, access, tape, params, delta):
        super().__init__(access, tape, params, delta)
        self.r = params.phase_length(delta)
        self.total = params.iterations(delta)
        self.phases = self.total // self.r
        self._memo: dict[tuple[int, int], NodeState] = {}
        self._cls_memo: dict[tuple[int, int], tuple[bool, bool, NodeState]] = {}

    def window(self, i: int) -> tuple[int, int]:
        return (1 + i * self.r, (i + 1) * self.r)

    def state(self, i: int, v: int) -> NodeState:
        """State of v at the end of phase i (i = -1: initial)."""
        if i < 0:
            return _INITIAL
        key = (i, v)
        if key in self._memo:
            return self._memo[key]
        self.access.push_level(f"phase{i}")
        try:
            prev = self.state(i - 1, v)
            if prev.status != ACTIVE:
                out = prev
            else:
                window = self.window(i)
                checks = [StallCheck(0, stall_threshold_exp(self.r), window[1], strict=False)]
                out = self.simulate_window_for(
                    v, window, checks,
                    state_of=lambda u: self.state(i - 1, u),
                    classify=lambda u: self._classify(i, u),
                    level=f"phase{i}",
                )
        finally:
            self.access.pop_level()
        self._memo[key] = out
        return out

    def _classify(self, i: int, u: int) -> tuple[bool, bool, NodeState]:
        """(member, heavy, state) of u for phase i: true weighted degree."""
        key = (i, u)
        if key in self._cls_memo:
            return self._cls_memo[key]
        st = self.state(i - 1, u)
        if st.status != ACTIVE:
            out = (False, False, st)
            self._cls_memo[key] = out
            return out
        num = 0
        for w in self._neighbor_ids(u):
            sw = self.state(i - 1, int(w))
            if sw.status == ACTIVE:
                num += 1 << (self.bits - sw.p_exp)
        thr = 1 << (self.bits + light_threshold_exp(self.r))
        heavy = num >= thr
        member = (not heavy) and self._relevant(u, st.p_exp, self.window(i))
        out = (member, heavy, st)
        self._cls_memo[key] = out
        return out

    def final_state(self, v: int) -> NodeState:
        return self.state(self.phases - 1, v)


class RecursiveOracle(_OracleCore):
    """Nested-window oracle: leaf windows are simulated on their sparse
    graphs; states at inner boundaries come from recursing into the earlier
    sibling, bottoming out at graph probes."""

    def __init__(self, access, tape, params, delta):
        super().__init__(access, tape, params, delta)
        self.total = params.base_iterations(delta)
        base = params.recursion_base(delta, self.total)
        self.leaves, self.starts = window_tree_leaves(self.total, base)
        self._memo: dict[tuple[int, int], NodeState] = {}
        self._cls_memo: dict[tuple[int, int], tuple[bool, bool, NodeState]] = {}

    def state(self, j: int, v: int) -> NodeState:
        """State of v after leaf window j (j = -1: initial)."""
        if j < 0:
            return _INITIAL
        key = (j, v)
        if key in self._memo:
            return self._memo[key]
        a, b = self.leaves[j]
        self.access.push_level(f"window{j}")
        try:
            prev = self.state(j - 1, v)
            if prev.status != ACTIVE:
                out = prev
            else:
                checks = [
                    StallCheck(0, stall_threshold_exp(wb - wa + 1), wb, strict=True)
                    for (wa, wb) in self.starts.get(a, [])
                ]
                out = self.simulate_window_for(
                    v, (a, b), checks,
                    state_of=lambda u: self.state(j - 1, u),
                    classify=lambda u: self._classify(j, u),
                    level=f"window{j}",
                )
        finally:
            self.access.pop_level()
        self._memo[key] = out
        return out

    def _classify(self, j: int, u: int) -> tuple[bool, bool, NodeState]:
        """(member, heavy, state) for leaf j: estimate-based lightness."""
        key = (j, u)
        if key in self._cls_memo:
            return self._cls_memo[key]
        st = self.state(j - 1, u)
        if st.status != ACTIVE:
            out = (False, False, st)
            self._cls_memo[key] = out
            return out
        a, b = self.leaves[j]
        r = b - a + 1
        nb_states = [(int(w), self.state(j - 1, int(w))) for w in self._neighbor_ids(u)]
        dh0, _, _, _ = self._first_iteration(u, st, nb_states, a, [])
        heavy = dh0 >= (1 << light_threshold_exp(r))
        member = (not heavy) and self._relevant(u, st.p_exp, (a, b))
        out = (member, heavy, st)
        self._cls_memo[key] = out
        return out

    def final_state(self, v: int) -> NodeState:
        return self.state(len(self.leaves) - 1, v)


class LcaHarness:
    """Answers per-node MIS membership queries through an oracle chain plus
    deterministic component completion for survivors."""

    def __init__(
        self,
        g: Graph,
        tape: TapeSpec,
        params: MisParams,
        delta: int | None = None,
        variant: str = "chained",
        mode: str = "memoized",
    ):
        """mode: `counted` re-probes every visit (worst-case accounting, small
        inputs only); `memoized` caches probes and states within one answer;
        `shared` keeps one oracle across answers (per-answer probe counts are
        then marginal new probes and depend on query order)."""
        if mode not in ("counted", "memoized", "shared"):
            raise ValueError(f"unknown mode {mode!r}")
        self._graph = g
        self._delta = delta if delta is not None else g.max_degree
        self.tape = tape
        self.params = params
        self.variant = variant
        self.mode = mode
        self._shared: tuple[GraphAccess, object] | None = None

    def _oracle(self, access: GraphAccess):
        if self.variant == "chained":
            return ChainedOracle(access, self.tape, self.params, self._delta)
        if self.variant == "recursive":
            return RecursiveOracle(access, self.tape, self.params, self._delta)
        raise ValueError(f"unknown variant {self.variant!r}")

    def _session(self) -> tuple[GraphAccess, object, int]:
        if self.mode == "shared":
            if self._shared is None:
                access = MemoizedGraphAccess(self._graph)
                self._shared = (access, self._oracle(access))
            access, oracle = self._shared
            return access, oracle, access.ledger.total
        cls = MemoizedGraphAccess if self.mode == "memoized" else GraphAccess
        access = cls(self._graph)
        return access, self._oracle(access), 0

    def answer(self, v: int) -> LcaAnswer:
        access, oracle, base = self._session()
        st = oracle.final_state(v)
        if st.status == IN_MIS:
            return self._mk(v, True, "main_run", access, base)
        if st.status == REMOVED:
            return self._mk(v, False, "main_run", access, base)
        # survivor: explore the surviving component and finish greedily
        access.push_level("post_shatter")
        try:
            comp, fixed_neighbors = self._explore_component(v, oracle, access)
            chosen = _greedy_with_flags(comp, fixed_neighbors)
            return self._mk(v, v in chosen, "post_shatter", access, base)
        finally:
            access.pop_level()

    def _explore_component(self, v, oracle, access):
        comp_adj: dict[int, list[int]] = {}
        fixed: dict[int, bool] = {}
        seen = {v}
        stack = [v]
        while stack:
            x = stack.pop()
            nbrs = access.probe(x)
            comp_adj[x] = []
            has_fixed = False
            for u in nbrs:
                u = int(u)
                stu = oracle.final_state(u)
                if stu.status in (ACTIVE, DEFERRED):
                    comp_adj[x].append(u)
                    if u not in seen:
                        seen.add(u)
                        stack.append(u)
                elif stu.status == IN_MIS:
                    has_fixed = True
            fixed[x] = has_fixed
        return comp_adj, fixed

    def _mk(self, v, in_mis, path, access, base=0) -> LcaAnswer:
        return LcaAnswer(
            node=v,
            in_mis=in_mis,
            probes_used=access.ledger.total - base,
            path=path,
            variant=self.variant,
            mode=self.mode,
            probes_by_level=dict(access.ledger.by_level),
        )


def oracle_phase(
    i: int,
    v: int,
    access: GraphAccess,
    tape: TapeSpec,
    params: MisParams,
    delta: int,
) -> tuple[int, bool, bool]:
    """State of v at the end of phase i via the chained oracle.

    Returns (p exponent, joined flag, deferred flag); probes are charged to
    the supplied access object.
    """
    oracle = ChainedOracle(access, tape, params, delta)
    st = oracle.state(i, v)
    return st.p_exp, st.status == IN_MIS, st.status == DEFERRED


def recursive_oracle(
    v: int,
    window_index: int,
    access: GraphAccess,
    tape: TapeSpec,
    params: MisParams,
    delta: int,
) -> tuple[int, bool, bool]:
    """State of v at the end of leaf window `window_index` (the recursion
    bottoms out at graph probes through the enclosing windows)."""
    oracle = RecursiveOracle(access, tape, params, delta)
    st = oracle.state(window_index, v)
    return st.p_exp, st.status == IN_MIS, st.status == DEFERRED


def lca_answer(
    v: int,
    g: Graph,
    tape: TapeSpec,
    params: MisParams,
    variant: str = "chained",
    mode: str = "memoized",
) -> LcaAnswer:
    """One-shot membership query (constructs a fresh harness)."""
    return LcaHarness(g, tape, params, variant=variant, mode=mode).answer(v)


def _greedy_with_flags(comp_adj: dict[int, list[int]], fixed: dict[int, bool]) -> set[int]:
    chosen: set[int] = set()
    for x in sorted(comp_adj):
        if fixed[x]:
            continue
        if any(u in chosen for u in comp_adj[x]):
            continue
        chosen.add(x)
    return chosen


def parnas_ron_baseline(
    v: int, g: Graph, tape: TapeSpec, iterations: int, mode: str = "counted"
) -> LcaAnswer:
    """Full-ball emulation baseline: probe the whole radius-T ball of v and
    run the exact-degree dynamic on it, completing survivors greedily.

    Probe count is exactly the ball size.
    """
    access = GraphAccess(g)
    access.push_level("ball")
    dist = {v: 0}
    adj: dict[int, list[int]] = {}
    frontier = [v]
    for d in range(iterations + 1):
        nxt = []
        for u in frontier:
            adj[u] = [int(w) for w in access.probe(u)]
            for w in adj[u]:
                if w not in dist and d < iterations:
                    dist[w] = d + 1
                    nxt.append(w)
        frontier = nxt
        if not frontier:
            break
    access.pop_level()

    ball = sorted(dist)
    index = {x: i for i, x in enumerate(ball)}
    edges = []
    for x in ball:
        for w in adj[x]:
            if w in index and index[x] < index[w]:
                edges.append((index[x], index[w]))
    out = _base_mis_on_ball(np.array(ball, dtype=np.int64), edges, tape, iterations)
    status = out[index[v]]
    if status == IN_MIS:
        in_mis = True
    elif status == REMOVED:
        in_mis = False
    else:
        survivors = [ball[i] for i in range(len(ball)) if out[i] in (ACTIVE, DEFERRED)]
        surv = set(survivors)
        comp_adj = {
            x: [w for w in adj[x] if w in surv] for x in survivors
        }
        fixed = {
            x: any(w in index and out[index[w]] == IN_MIS for w in adj[x]) for x in survivors
        }
        comp = _component_of(v, comp_adj)
        chosen = _greedy_with_flags({x: comp_adj[x] for x in comp}, {x: fixed[x] for x in comp})
        in_mis = v in chosen
    return LcaAnswer(
        node=v,
        in_mis=in_mis,
        probes_used=access.ledger.total,
        path="main_run" if status in (IN_MIS, REMOVED) else "post_shatter",
        variant="parnas_ron",
        mode=mode,
        probes_by_level=dict(access.ledger.by_level),
    )


def _component_of(v: int, comp_adj: dict[int, list[int]]) -> list[int]:
    seen = {v}
    stack = [v]
    while stack:
        x = stack.pop()
        for u in comp_adj.get(x, []):
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return sorted(seen)


def _base_mis_on_ball(origins: np.ndarray, edges, tape: TapeSpec, iterations: int) -> np.ndarray:
    """The exact-degree dynamic restricted to a collected ball."""
    from .engine import dyadic_degree_ge

    n = len(origins)
    if edges:
        arr = np.array(edges, dtype=np.int64)
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(n, n))
    else:
        adj = sp.csr_matrix((n, n), dtype=np.int32)
    bits = tape.precision_bits
    status = np.zeros(n, dtype=np.int8)
    e = np.ones(n, dtype=np.int64)
    nodes = origins.astype(np.uint64)
    for t in range(1, iterations + 1):
        alive = status == ACTIVE
        if not alive.any():
            break
        halve = dyadic_degree_ge(adj, e, alive, 1)
        e_new = np.where(alive, np.where(halve, np.minimum(bits, e + 1), np.maximum(1, e - 1)), e)
        mark_nums = bulk_node_values(tape, nodes, t, np.array([0], dtype=np.uint64))[:, 0]
        mark_exp = np.where(alive, e_new, np.int64(-1))
        marked = bulk_below(mark_exp, mark_nums[:, None], bits)[:, 0]
        blocked = (adj @ marked.astype(np.int32)) > 0
        joined = marked & ~blocked
        removed = alive & ~joined & ((adj @ joined.astype(np.int32)) > 0)
        e = e_new
        status[joined] = IN_MIS
        status[removed] = REMOVED
    return status


def consistency_audit(answers: list[LcaAnswer], g: Graph) -> CheckResult:
    """All answers must be consistent with one MIS: no adjacent members, and
    any fully-surrounded non-member must have a member neighbor."""
    got: dict[int, bool] = {a.node: a.in_mis for a in answers}
    for v, flag in got.items():
        if not flag:
            continue
        for u in g.neighbors(v):
            if got.get(int(u)):
                return CheckResult("conflict", (v, int(u)))
    for v, flag in got.items():
        if flag:
            continue
        nbrs = [int(u) for u in g.neighbors(v)]
        if all(u in got for u in nbrs) and not any(got[u] for u in nbrs):
            return CheckResult("conflict", v)
    return CheckResult("consistent")
