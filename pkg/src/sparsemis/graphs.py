"""Graph representation, generators, derived graphs and output verifiers.

Graphs are simple, undirected and immutable after construction, stored in CSR
form (indptr/indices) with sorted neighbor lists so that every traversal and
every serialization is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed edge-list input; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class Graph:
    """Immutable simple undirected graph over ids 0..n-1."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    max_degree: int = field(default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "indptr", np.ascontiguousarray(self.indptr, dtype=np.int64))
        object.__setattr__(self, "indices", np.ascontiguousarray(self.indices, dtype=np.int32))
        degs = np.diff(self.indptr)
        object.__setattr__(self, "max_degree", int(degs.max()) if self.n else 0)

    @property
    def m(self) -> int:
        return int(self.indices.shape[0]) // 2

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def edges(self) -> Iterator[tuple[int, int]]:
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    yield (u, int(v))

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return i < len(row) and row[i] == v

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> Graph:
    """Build a Graph from an (unordered, possibly duplicated) edge iterable."""
    canon = set()
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise GraphFormatError(f"self-loop at node {u} rejected")
        canon.add((u, v) if u < v else (v, u))
    deg = np.zeros(n + 1, dtype=np.int64)
    for u, v in canon:
        deg[u + 1] += 1
        deg[v + 1] += 1
    indptr = np.cumsum(deg)
    indices = np.zeros(int(indptr[-1]), dtype=np.int32)
    cursor = indptr[:-1].copy()
    for u, v in sorted(canon):
        indices[cursor[u]] = v
        cursor[u] += 1
        indices[cursor[v]] = u
        cursor[v] += 1
    for u in range(n):
        indices[indptr[u] : indptr[u + 1]].sort()
    return Graph(n=n, indptr=indptr, indices=indices)


def load_graph(path: str | Path, format: str = "edge-list") -> Graph:
    """Read the edge-list format: header "n m", then m lines "u v"."""
    if format != "edge-list":
        raise ValueError(f"unknown graph format {format!r}")
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise GraphFormatError("empty file", line=1)
    head = lines[0].split()
    if len(head) != 2:
        raise GraphFormatError(f"expected header 'n m', got {lines[0]!r}", line=1)
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError as exc:
        raise GraphFormatError(str(exc), line=1) from None
    if n < 0 or m < 0:
        raise GraphFormatError("negative counts in header", line=1)
    edges = []
    for k in range(m):
        if k + 1 >= len(lines):
            raise GraphFormatError(f"expected {m} edge lines, found {k}", line=k + 2)
        parts = lines[k + 1].split()
        if len(parts) != 2:
            raise GraphFormatError(f"expected 'u v', got {lines[k + 1]!r}", line=k + 2)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphFormatError(str(exc), line=k + 2) from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"edge ({u}, {v}) out of range for n={n}", line=k + 2)
        if u == v:
            raise GraphFormatError(f"self-loop at node {u} rejected", line=k + 2)
        edges.append((u, v))
    return graph_from_edges(n, edges)


def save_graph(g: Graph, path: str | Path) -> None:
    """Write the canonical edge-list: sorted, min id first, '\\n' separated."""
    out = [f"{g.n} {g.m}"]
    out.extend(f"{u} {v}" for u, v in g.edges())
    Path(path).write_text("\n".join(out) + "\n")


def generate_graph(model: str, params: dict, seed: int) -> Graph:
    """Deterministic graph generators: gnp, d_regular, star, path, complete."""
    if model == "star":
        n = int(params["n"])
        return graph_from_edges(n, [(0, i) for i in range(1, n)])
    if model == "path":
        n = int(params["n"])
        return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])
    if model == "complete":
        n = int(params["n"])
        return graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    if model == "gnp":
        n, p = int(params["n"]), float(params["p"])
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"gnp probability {p} outside [0, 1]")
        rng = np.random.Generator(np.random.PCG64(seed))
        edges: list[tuple[int, int]] = []
        for u in range(n - 1):
            row = rng.random(n - u - 1)
            hits = np.nonzero(row < p)[0]
            edges.extend((u, u + 1 + int(v)) for v in hits)
        return graph_from_edges(n, edges)
    if model == "d_regular":
        n, d = int(params["n"]), int(params["d"])
        if d < 0 or d >= n or (n * d) % 2 != 0:
            raise ValueError(f"no {d}-regular graph on {n} nodes")
        return _pairing_model(n, d, seed)
    raise ValueError(f"unknown graph model {model!r}")


def _pairing_model(n: int, d: int, seed: int) -> Graph:
    """Configuration-model d-regular graph, made simple by edge switches."""
    rng = np.random.Generator(np.random.PCG64(seed))
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    rng.shuffle(stubs)
    pairs: list[tuple[int, int]] = [(int(a), int(b)) for a, b in stubs.reshape(-1, 2)]
    m = len(pairs)

    def key(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    buckets: dict[tuple[int, int], set[int]] = {}
    for i, (u, v) in enumerate(pairs):
        buckets.setdefault(key(u, v), set()).add(i)

    def is_bad(i: int) -> bool:
        u, v = pairs[i]
        return u == v or len(buckets[key(u, v)]) > 1

    bad = sorted(i for i in range(m) if is_bad(i))
    for _switch in range(200 * m + 1000):
        if not bad:
            break
        i = bad[int(rng.integers(len(bad)))]
        j = int(rng.integers(m))
        if i == j:
            continue
        u, v = pairs[i]
        x, y = pairs[j]
        touched_keys = {key(u, v), key(x, y), key(u, y), key(x, v)}
        buckets[key(u, v)].discard(i)
        buckets[key(x, y)].discard(j)
        pairs[i], pairs[j] = (u, y), (x, v)
        buckets.setdefault(key(u, y), set()).add(i)
        buckets.setdefault(key(x, v), set()).add(j)
        touched = {i, j}
        for kk in touched_keys:
            touched.update(buckets.get(kk, ()))
        bad_set = set(bad)
        for t in touched:
            if is_bad(t):
                bad_set.add(t)
            else:
                bad_set.discard(t)
        bad = sorted(bad_set)
    if bad:
        raise ValueError(f"failed to draw a simple {d}-regular graph on {n} nodes")
    return graph_from_edges(n, [key(u, v) for u, v in pairs])


def line_graph(g: Graph) -> tuple[Graph, list[tuple[int, int]]]:
    """Line graph of g plus the index -> original-edge map."""
    edge_list = list(g.edges())
    edge_id = {e: i for i, e in enumerate(edge_list)}
    adj_edges: set[tuple[int, int]] = set()
    for u in range(g.n):
        incident = []
        for v in g.neighbors(u):
            e = (u, int(v)) if u < v else (int(v), u)
            incident.append(edge_id[e])
        for i in range(len(incident)):
            for j in range(i + 1, len(incident)):
                a, b = incident[i], incident[j]
                adj_edges.add((a, b) if a < b else (b, a))
    return graph_from_edges(len(edge_list), adj_edges), edge_list


def connected_components(g: Graph, restrict: Iterable[int] | None = None) -> list[list[int]]:
    """Components of the subgraph induced by `restrict` (default: all nodes).

    Returned as lists sorted internally and by smallest member.
    """
    if restrict is None:
        members = np.ones(g.n, dtype=bool)
    else:
        members = np.zeros(g.n, dtype=bool)
        for v in restrict:
            if not (0 <= v < g.n):
                raise ValueError(f"restrict node {v} out of range")
            members[v] = True
    seen = np.zeros(g.n, dtype=bool)
    out: list[list[int]] = []
    for s in range(g.n):
        if not members[s] or seen[s]:
            continue
        comp = [s]
        seen[s] = True
        stack = [s]
        while stack:
            u = stack.pop()
            for v in g.neighbors(u):
                v = int(v)
                if members[v] and not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    stack.append(v)
        out.append(sorted(comp))
    out.sort(key=lambda c: c[0])
    return out


def k_hop_ball(g: Graph, v: int, r: int) -> tuple[list[int], dict[int, int]]:
    """Nodes within distance r of v, with exact distances (BFS)."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    dist = {v: 0}
    frontier = [v]
    for d in range(1, r + 1):
        nxt = []
        for u in frontier:
            for w in g.neighbors(u):
                w = int(w)
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
        if not frontier:
            break
    return sorted(dist), dist


@dataclass(frozen=True)
class CheckResult:
    kind: str
    witness: object = None

    @property
    def ok(self) -> bool:
        return self.kind == "valid"


def verify_mis(g: Graph, s: Iterable[int]) -> CheckResult:
    """valid | not_independent(edge) | not_maximal(node)."""
    member = np.zeros(g.n, dtype=bool)
    for v in s:
        member[v] = True
    for u in range(g.n):
        if member[u]:
            for v in g.neighbors(u):
                if u < v and member[v]:
                    return CheckResult("not_independent", (u, int(v)))
    for u in range(g.n):
        if not member[u] and not any(member[v] for v in g.neighbors(u)):
            return CheckResult("not_maximal", u)
    return CheckResult("valid")


def verify_matching(
    g: Graph, m: Sequence[tuple[int, int]], require_maximal: bool = False
) -> CheckResult:
    """valid | overlapping(node) | not_maximal(edge)."""
    used = np.zeros(g.n, dtype=bool)
    for u, v in m:
        if not g.has_edge(u, v):
            raise ValueError(f"({u}, {v}) is not an edge of the graph")
        if used[u]:
            return CheckResult("overlapping", u)
        if used[v]:
            return CheckResult("overlapping", v)
        used[u] = True
        used[v] = True
    if require_maximal:
        for u in range(g.n):
            if not used[u]:
                for v in g.neighbors(u):
                    if u < v and not used[v]:
                        return CheckResult("not_maximal", (u, int(v)))
    return CheckResult("valid")


def canonical_edges(edges: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Dedupe and sort with min id first; the on-disk matching format."""
    return sorted({(u, v) if u < v else (v, u) for u, v in edges})
