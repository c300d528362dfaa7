"""Constant-approximation matching dynamics and the line-graph route.

The basic algorithm runs ceil(log2 D) iterations on a graph with maximum
degree D.  Iteration i marks every surviving edge touching a node of degree
at least d_i = D/2**(i+1) with probability p_i = 2**i/(4D), keeps the
isolated marked edges, and then deletes every node of degree at least d_i.

The sparse variant draws, per iteration, a subgraph H_i containing each edge
with probability p'_i = min(K*p_i, 1) and simulates the iteration inside H_i:
an edge is marked iff its tape value is below p_i (the same tape value that
decided inclusion, so marked edges are always included), and the degree
deletion happens at the oversampled threshold d_i*p'_i inside H_i, with one
true-degree cleanup pass on the base graph at the end of each phase.

Edge probabilities are general rationals; every comparison against a tape
value is an exact integer cross-multiplication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction as Rational

import numpy as np

from .engine import MisParams, post_shatter, run_sparsified_mis
from .graphs import Graph, canonical_edges, line_graph, verify_matching
from .tape import TapeSpec, below_fraction, edge_tape_value

__all__ = [
    "MatchParams",
    "run_base_matching",
    "run_sparse_matching",
    "maximal_matching_via_line_mis",
    "vertex_cover_2approx",
    "exact_max_matching_small",
]


@dataclass(frozen=True)
class MatchParams:
    kappa: float = 8.0
    greedy_finish: bool = False

    def amplification(self, delta: int) -> int:
        return max(1, math.ceil(self.kappa * math.log2(max(2, delta))))

    def iteration_count(self, delta: int) -> int:
        return math.ceil(math.log2(delta)) if delta >= 2 else 0

    def phase_length(self, delta: int) -> int:
        return max(1, math.ceil(math.sqrt(math.log2(max(2, delta))) / 2.0))


def _thresh(delta: int, i: int) -> Rational:
    return Rational(delta, 2 ** (i + 1))


def _mark_p(delta: int, i: int) -> Rational:
    return Rational(2**i, 4 * delta)


def _degree_ge(deg: int, thr: Rational) -> bool:
    return deg * thr.denominator >= thr.numerator


@dataclass
class MatchLog:
    iterations: list[dict] = field(default_factory=list)

    def add(self, **kw) -> None:
        self.iterations.append(kw)


def _greedy_fill(g: Graph, matched: set[int], out: list[tuple[int, int]]) -> None:
    for u, v in g.edges():
        if u not in matched and v not in matched:
            out.append((u, v))
            matched.add(u)
            matched.add(v)


def run_base_matching(
    g: Graph, tape: TapeSpec, params: MatchParams
) -> tuple[list[tuple[int, int]], MatchLog]:
    """The basic dynamic with exact degrees.  Snapshot-synchronous: edge
    eligibility and the deletion threshold both read start-of-iteration
    degrees."""
    delta = g.max_degree
    alive = np.ones(g.n, dtype=bool)
    matching: list[tuple[int, int]] = []
    matched: set[int] = set()
    log = MatchLog()
    for i in range(params.iteration_count(delta)):
        d_i = _thresh(delta, i)
        p_i = _mark_p(delta, i)
        deg = _surviving_degrees(g, alive)
        marked: list[tuple[int, int]] = []
        for u, v in g.edges():
            if not (alive[u] and alive[v]):
                continue
            if not (_degree_ge(int(deg[u]), d_i) or _degree_ge(int(deg[v]), d_i)):
                continue
            r = edge_tape_value(tape, u, v, i + 1)
            if below_fraction(p_i.numerator, p_i.denominator, r):
                marked.append((u, v))
        isolated = _isolated(marked)
        for u, v in isolated:
            matching.append((u, v))
            matched.update((u, v))
            alive[u] = alive[v] = False
        dropped = 0
        for v in range(g.n):
            if alive[v] and _degree_ge(int(deg[v]), d_i):
                alive[v] = False
                dropped += 1
        log.add(i=i, marked=len(marked), matched=len(isolated), dropped=dropped)
    if params.greedy_finish:
        _greedy_fill(g, matched, matching)
    return canonical_edges(matching), log


def _surviving_degrees(g: Graph, alive: np.ndarray) -> np.ndarray:
    deg = np.zeros(g.n, dtype=np.int64)
    for u, v in g.edges():
        if alive[u] and alive[v]:
            deg[u] += 1
            deg[v] += 1
    return deg


def _isolated(marked: list[tuple[int, int]]) -> list[tuple[int, int]]:
    count: dict[int, int] = {}
    for u, v in marked:
        count[u] = count.get(u, 0) + 1
        count[v] = count.get(v, 0) + 1
    return [(u, v) for u, v in marked if count[u] == 1 and count[v] == 1]


def run_sparse_matching(
    g: Graph, tape: TapeSpec, params: MatchParams
) -> tuple[list[tuple[int, int]], list[dict], MatchLog]:
    """The subsampled variant; returns (matching, per-phase sparse-degree
    stats, log).  One tape value per (edge, iteration) drives both inclusion
    (below p'_i) and marking (below p_i), so marked edges are included by
    construction."""
    delta = g.max_degree
    K = params.amplification(delta)
    alive = np.ones(g.n, dtype=bool)
    matching: list[tuple[int, int]] = []
    matched: set[int] = set()
    log = MatchLog()
    phase_stats: list[dict] = []
    total = params.iteration_count(delta)
    r_m = params.phase_length(delta)
    all_edges = list(g.edges())

    i = 0
    while i < total:
        phase_end = min(i + r_m, total) - 1
        h_degree_max = 0
        for j in range(i, phase_end + 1):
            p_j = _mark_p(delta, j)
            pp_num = min(K * p_j.numerator, p_j.denominator)
            pp_den = p_j.denominator
            d_j = _thresh(delta, j)
            included: list[tuple[int, int]] = []
            marked: list[tuple[int, int]] = []
            for u, v in all_edges:
                if not (alive[u] and alive[v]):
                    continue
                r = edge_tape_value(tape, u, v, j + 1)
                if below_fraction(pp_num, pp_den, r):
                    included.append((u, v))
                    if below_fraction(p_j.numerator, p_j.denominator, r):
                        marked.append((u, v))
            isolated = _isolated(marked)
            for u, v in isolated:
                matching.append((u, v))
                matched.update((u, v))
                alive[u] = alive[v] = False
            h_deg: dict[int, int] = {}
            for u, v in included:
                if alive[u] and alive[v]:
                    h_deg[u] = h_deg.get(u, 0) + 1
                    h_deg[v] = h_deg.get(v, 0) + 1
            if h_deg:
                h_degree_max = max(h_degree_max, max(h_deg.values()))
            dropped = 0
            # remaining H_j degree exceeding d_j * p'_j : deg * 2**(j+3) > min(K*2**j, 4*delta)
            bound_num = min(K * (2**j), 4 * delta)
            for v, dv in h_deg.items():
                if alive[v] and dv * (2 ** (j + 3)) > bound_num:
                    alive[v] = False
                    dropped += 1
            deg_after = _surviving_degrees(g, alive)
            surv = int(alive.sum())
            over = int(((deg_after * 2 ** (j + 1)) > 2 * delta)[alive].sum()) if surv else 0
            log.add(i=j, included=len(included), marked=len(marked),
                    matched=len(isolated), dropped=dropped,
                    survivors=surv, over_twice_threshold=over)
        # end of phase: one true-degree pass on the base graph
        d_end = _thresh(delta, phase_end)
        deg = _surviving_degrees(g, alive)
        swept = 0
        for v in range(g.n):
            if alive[v] and _degree_ge(int(deg[v]), d_end):
                alive[v] = False
                swept += 1
        phase_stats.append(
            {"first": i, "last": phase_end, "max_h_degree": h_degree_max, "swept": swept}
        )
        i = phase_end + 1
    if params.greedy_finish:
        _greedy_fill(g, matched, matching)
    return canonical_edges(matching), phase_stats, log


def maximal_matching_via_line_mis(
    g: Graph, tape: TapeSpec, params: MisParams
) -> list[tuple[int, int]]:
    """Maximal matching = MIS on the line graph (line-graph node ids are the
    canonical edge indices, which key the tape)."""
    if g.m == 0:
        return []
    lg, edge_map = line_graph(g)
    trace = run_sparsified_mis(lg, tape, params)
    post_shatter(lg, trace)
    return canonical_edges(edge_map[i] for i in trace.mis_nodes)


def vertex_cover_2approx(g: Graph, m: list[tuple[int, int]]) -> list[int]:
    """All endpoints of a maximal matching: covers every edge at ratio 2."""
    check = verify_matching(g, m, require_maximal=True)
    if not check.ok:
        raise ValueError(f"input is not a maximal matching: {check.kind} {check.witness}")
    cover: set[int] = set()
    for u, v in m:
        cover.add(u)
        cover.add(v)
    return sorted(cover)


def exact_max_matching_small(g: Graph, edge_limit: int = 64) -> list[tuple[int, int]]:
    """Maximum-cardinality matching by branch and bound (vertex branching
    with a greedy warm start)."""
    edges = list(g.edges())
    if len(edges) > edge_limit:
        raise ValueError(f"instance has {len(edges)} edges > limit {edge_limit}")
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    verts = sorted(adj)

    best: list[tuple[int, int]] = []
    greedy_used: set[int] = set()
    for u, v in edges:
        if u not in greedy_used and v not in greedy_used:
            best.append((u, v))
            greedy_used.update((u, v))
    best_size = len(best)

    used: set[int] = set()
    current: list[tuple[int, int]] = []

    def rec(pos: int) -> None:
        nonlocal best, best_size
        while pos < len(verts) and (
            verts[pos] in used or all(u in used for u in adj[verts[pos]])
        ):
            pos += 1
        if pos == len(verts):
            if len(current) > best_size:
                best = list(current)
                best_size = len(best)
            return
        free = sum(
            1 for w in verts[pos:] if w not in used and any(u not in used for u in adj[w])
        )
        if len(current) + free // 2 <= best_size:
            return
        v = verts[pos]
        for u in adj[v]:
            if u not in used:
                used.update((v, u))
                current.append((v, u) if v < u else (u, v))
                rec(pos + 1)
                current.pop()
                used.discard(v)
                used.discard(u)
        used.add(v)
        rec(pos + 1)
        used.discard(v)

    rec(0)
    return canonical_edges(best)
