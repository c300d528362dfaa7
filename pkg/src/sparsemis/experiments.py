"""Experiment driver: sweep orchestration, audits, and metrics emission.

Every (variant, seed) point is independent and reproducible: graphs come
from the seeded generators (or a file), the randomness tape is keyed by the
run seed, and all output rows are emitted in a fixed order so identical
configs produce byte-identical metrics files, with any worker count.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from .config import ExperimentConfig, GraphSpec
from .engine import MisParams, post_shatter, run_base_mis, run_recursive_mis, run_sparsified_mis
from .graphs import Graph, generate_graph, load_graph, verify_matching, verify_mis
from .lca import LcaHarness, consistency_audit, parnas_ron_baseline
from .matching import (
    exact_max_matching_small,
    maximal_matching_via_line_mis,
    run_base_matching,
    run_sparse_matching,
    vertex_cover_2approx,
)
from .mpc import plan_degree_steps, run_mpc
from .sparsify import run_sparsified_on_h
from .tape import TapeSpec

TAPE_HEADROOM = 4  # tape iteration budget = headroom * engine need


@dataclass
class PointResult:
    variant: str
    seed: int
    rows: list[dict] = field(default_factory=list)
    query_rows: list[dict] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


def build_graph(spec: GraphSpec, seed: int) -> Graph:
    if spec.path:
        return load_graph(spec.path)
    return generate_graph(spec.model, spec.params, seed)


def _tape(seed: int, params: MisParams, delta: int, bits: int, steps: bool = False) -> TapeSpec:
    k = params.repetitions(max(2, delta))
    need = params.iterations(max(2, delta))
    return TapeSpec(
        seed=seed,
        precision_bits=bits,
        repetitions_k=k,
        max_iterations=max(8, TAPE_HEADROOM * need * (4 if steps else 1)),
    )


def _sample_nodes(n: int, count: int, seed: int) -> list[int]:
    rng = np.random.Generator(np.random.PCG64(seed ^ 0x5A17))
    count = min(n, count)
    return sorted(int(x) for x in rng.choice(n, size=count, replace=False))


def run_point(config: ExperimentConfig, variant: str, seed: int) -> PointResult:
    g = build_graph(config.graph, seed)
    out = PointResult(variant, seed)
    base = {
        "variant": variant,
        "seed": seed,
        "graph": config.graph.describe(),
        "n": g.n,
        "m": g.m,
        "max_degree": g.max_degree,
    }
    try:
        _DISPATCH[variant](config, g, seed, base, out)
    except Exception as exc:  # noqa: BLE001 - runtime failures become records
        out.failures.append(f"{variant}/seed={seed}: {type(exc).__name__}: {exc}")
        out.rows.append(dict(base, valid=0, error=str(exc)))
    return out


def _mis_common(out, base, g, trace, extra=None):
    check = verify_mis(g, trace.mis_nodes)
    row = dict(
        base,
        mis_size=len(trace.mis_nodes),
        survivors=int(len(trace.survivors)),
        deferred=int((trace.final_status == engine.DEFERRED).sum()),
        iterations=trace.iterations,
        valid=int(check.ok),
    )
    if extra:
        row.update(extra)
    out.rows.append(row)
    if not check.ok:
        out.failures.append(f"verify_mis failed: {check.kind} {check.witness}")


def _run_base_mis(config, g, seed, base, out):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits)
    trace = run_base_mis(g, tape, config.mis.iterations(g.max_degree))
    post_shatter(g, trace)
    _mis_common(out, base, g, trace)


def _run_sparsified(config, g, seed, base, out):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits)
    trace = run_sparsified_mis(g, tape, config.mis)
    post_shatter(g, trace)
    _mis_common(out, base, g, trace)


def _run_recursive(config, g, seed, base, out):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits)
    trace = run_recursive_mis(g, tape, config.mis)
    post_shatter(g, trace)
    _mis_common(out, base, g, trace)


def _run_on_h(config, g, seed, base, out):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits)
    trace, audit = run_sparsified_on_h(g, tape, config.mis)
    post_shatter(g, trace)
    extra = {
        "h_checked": audit["checked"],
        "h_mismatches": len(audit["mismatches"]),
        "relevance_violations": len(audit["relevance_violations"]),
    }
    _mis_common(out, base, g, trace, extra)
    if audit["mismatches"]:
        out.failures.append(f"sparse-graph replay mismatches: {audit['mismatches'][:3]}")
    if audit["relevance_violations"]:
        out.failures.append(f"relevance violations: {audit['relevance_violations'][:3]}")


def _run_mpc(config, g, seed, base, out):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits, steps=True)
    plan = plan_degree_steps(max(1, g.max_degree))
    ref = run_sparsified_mis(g, tape, config.mis, step_plan=plan.thresholds)
    post_shatter(g, ref)
    mis_mask, trace, ledger = run_mpc(g, tape, config.mis, config.mpc, seed=seed, step_plan=plan)
    agree = bool(np.array_equal(mis_mask, ref.mis_mask))
    check = verify_mis(g, np.nonzero(mis_mask)[0].tolist())
    out.rows.append(
        dict(
            base,
            alpha=config.mpc.alpha,
            mis_size=int(mis_mask.sum()),
            survivors=int(len(trace.survivors)),
            deferred=int((trace.final_status == engine.DEFERRED).sum()),
            rounds_total=ledger.rounds_total,
            rounds_by_step=json.dumps(ledger.rounds_by_step, sort_keys=True),
            peak_memory_words=ledger.peak_words,
            machines=ledger.machines,
            capacity_words=ledger.capacity,
            step_thresholds=json.dumps(list(plan.thresholds)),
            agree_with_centralized=int(agree),
            valid=int(check.ok),
        )
    )
    if not agree:
        out.failures.append("mpc output differs from the step-scheduled centralized run")
    if not check.ok:
        out.failures.append(f"mpc verify_mis failed: {check.kind} {check.witness}")


def _run_lca(config, g, seed, base, out, variant_name, engine_runner):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits)
    ref = engine_runner(g, tape, config.mis)
    post_shatter(g, ref)
    mis_mask = ref.mis_mask
    harness = LcaHarness(
        g, tape, config.mis, variant=variant_name.removeprefix("lca-"), mode=config.lca_mode
    )
    nodes = _sample_nodes(g.n, config.lca_sample_nodes, seed)
    answers = []
    mismatches = 0
    for v in nodes:
        a = harness.answer(v)
        answers.append(a)
        if a.in_mis != bool(mis_mask[v]):
            mismatches += 1
        out.query_rows.append(
            {
                "variant": variant_name,
                "seed": seed,
                "node": v,
                "in_mis": int(a.in_mis),
                "path": a.path,
                "mode": a.mode,
                "probes_total": a.probes_used,
                "probes_by_level": json.dumps(a.probes_by_level, sort_keys=True),
            }
        )
    audit = consistency_audit(answers, g)
    out.rows.append(
        dict(
            base,
            sampled=len(nodes),
            mismatches=mismatches,
            consistent=int(audit.ok if audit.kind != "conflict" else 0),
            mode=config.lca_mode,
            probes_median=int(np.median([a.probes_used for a in answers])) if answers else 0,
        )
    )
    if mismatches:
        out.failures.append(f"{variant_name}: {mismatches} oracle answers differ from centralized")
    if audit.kind == "conflict":
        out.failures.append(f"{variant_name}: consistency audit conflict {audit.witness}")


def _run_lca_chained(config, g, seed, base, out):
    _run_lca(config, g, seed, base, out, "lca-chained", run_sparsified_mis)


def _run_lca_recursive(config, g, seed, base, out):
    _run_lca(config, g, seed, base, out, "lca-recursive", run_recursive_mis)


def _run_parnas(config, g, seed, base, out):
    tape = _tape(seed, config.mis, g.max_degree, config.tape_bits)
    iterations = config.mis.iterations(g.max_degree)
    ref = run_base_mis(g, tape, iterations)
    post_shatter(g, ref)
    mis_mask = ref.mis_mask
    nodes = _sample_nodes(g.n, config.lca_sample_nodes, seed)
    mismatches = 0
    probes = []
    for v in nodes:
        a = parnas_ron_baseline(v, g, tape, iterations)
        probes.append(a.probes_used)
        if a.in_mis != bool(mis_mask[v]):
            mismatches += 1
        out.query_rows.append(
            {
                "variant": "parnas-ron",
                "seed": seed,
                "node": v,
                "in_mis": int(a.in_mis),
                "path": a.path,
                "mode": a.mode,
                "probes_total": a.probes_used,
                "probes_by_level": json.dumps(a.probes_by_level, sort_keys=True),
            }
        )
    out.rows.append(
        dict(base, sampled=len(nodes), mismatches=mismatches,
             probes_median=int(np.median(probes)) if probes else 0)
    )
    if mismatches:
        out.failures.append(f"parnas-ron: {mismatches} answers differ from the base engine")


def _run_base_matching(config, g, seed, base, out):
    tape = TapeSpec(seed=seed, precision_bits=config.tape_bits, repetitions_k=4,
                    max_iterations=max(8, 4 * max(1, g.max_degree).bit_length() * 4))
    m, log = run_base_matching(g, tape, config.match)
    _matching_row(out, base, g, m, require_maximal=config.match.greedy_finish)


def _run_sparse_matching(config, g, seed, base, out):
    tape = TapeSpec(seed=seed, precision_bits=config.tape_bits, repetitions_k=4,
                    max_iterations=max(8, 4 * max(1, g.max_degree).bit_length() * 4))
    m, stats, log = run_sparse_matching(g, tape, config.match)
    extra = {"max_h_degree": max((s["max_h_degree"] for s in stats), default=0)}
    _matching_row(out, base, g, m, require_maximal=config.match.greedy_finish, extra=extra)


def _run_line_mis_matching(config, g, seed, base, out):
    delta_line = max(2, 2 * g.max_degree - 2) if g.m else 2
    tape = _tape(seed, config.mis, delta_line, config.tape_bits)
    m = maximal_matching_via_line_mis(g, tape, config.mis)
    _matching_row(out, base, g, m, require_maximal=True, cover=True)


def _matching_row(out, base, g, m, require_maximal=False, extra=None, cover=False):
    check = verify_matching(g, m, require_maximal=require_maximal)
    row = dict(base, alg_size=len(m), valid=int(check.ok))
    if g.m <= 64:
        opt = exact_max_matching_small(g)
        row["opt_size"] = len(opt)
        row["ratio"] = round(len(m) / len(opt), 6) if opt else 1.0
    if cover and check.ok:
        vc = vertex_cover_2approx(g, m)
        row["cover_size"] = len(vc)
        row["cover_ok"] = int(all(u in set(vc) or v in set(vc) for u, v in g.edges()))
    if extra:
        row.update(extra)
    out.rows.append(row)
    if not check.ok:
        out.failures.append(f"verify_matching failed: {check.kind} {check.witness}")


_DISPATCH = {
    "base-mis": _run_base_mis,
    "sparsified-mis": _run_sparsified,
    "recursive-mis": _run_recursive,
    "sparsified-on-h": _run_on_h,
    "mpc": _run_mpc,
    "lca-chained": _run_lca_chained,
    "lca-recursive": _run_lca_recursive,
    "parnas-ron": _run_parnas,
    "base-matching": _run_base_matching,
    "sparse-matching": _run_sparse_matching,
    "line-mis-matching": _run_line_mis_matching,
}


def _point_worker(args) -> PointResult:
    config, variant, seed = args
    return run_point(config, variant, seed)


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> tuple[int, dict]:
    """Run every (variant, seed) point, write metrics, return (exit, summary)."""
    points = [(config, v, s) for v in config.variants for s in config.seeds]
    nworkers = workers if workers is not None else config.workers
    if nworkers > 1:
        with multiprocessing.Pool(nworkers) as pool:
            results = pool.map(_point_worker, points)
    else:
        results = [_point_worker(p) for p in points]

    rows = [r for res in results for r in res.rows]
    query_rows = [r for res in results for r in res.query_rows]
    failures = [f for res in results for f in res.failures]

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if "json" in config.formats:
        _write_jsonl(out_dir / "metrics.jsonl", rows)
        if query_rows:
            _write_jsonl(out_dir / "lca_queries.jsonl", query_rows)
    if "csv" in config.formats:
        _write_csv(out_dir / "metrics.csv", rows)
        if query_rows:
            _write_csv(out_dir / "lca_queries.csv", query_rows)
    if failures:
        _write_jsonl(out_dir / "failures.jsonl", [{"failure": f} for f in failures])
    summary = {
        "points": len(points),
        "rows": len(rows),
        "failures": failures,
    }
    return (1 if failures else 0), summary


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def _write_csv(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    keys = sorted(keys)
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row.get(k)) for k in keys) + "\n")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    s = str(value)
    if "," in s or '"' in s or "\n" in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


# ---------------------------------------------------------------------------
# Cross-model check
# ---------------------------------------------------------------------------

def cross_check(config: ExperimentConfig) -> tuple[int, dict]:
    """Run the configured models on identical (graph, tape, params) and
    compare per-node outputs against their centralized references; deferred
    nodes are excluded from the disagreement count."""
    models = config.cross_models
    if len(models) < 2:
        raise ValueError("cross-check needs at least two models")
    report: dict = {"models": list(models), "seeds": {}}
    worst = 0
    for seed in config.seeds:
        g = build_graph(config.graph, seed)
        tape = _tape(seed, config.mis, g.max_degree, config.tape_bits, steps=True)
        entry: dict = {}
        central = run_sparsified_mis(g, tape, config.mis)
        post_shatter(g, central)
        deferred_plain = set(np.nonzero(central.final_status == engine.DEFERRED)[0].tolist())

        if "sparsified-on-h" in models:
            _, audit = run_sparsified_on_h(g, tape, config.mis)
            entry["sparsified-on-h"] = {
                "compared": audit["checked"],
                "disagreements": len(audit["mismatches"]),
            }
            worst += len(audit["mismatches"])
        if "mpc" in models:
            plan = plan_degree_steps(max(1, g.max_degree))
            ref = run_sparsified_mis(g, tape, config.mis, step_plan=plan.thresholds)
            post_shatter(g, ref)
            mis_mask, trace, ledger = run_mpc(
                g, tape, config.mis, config.mpc, seed=seed, step_plan=plan
            )
            deferred = set(np.nonzero(trace.final_status == engine.DEFERRED)[0].tolist())
            deferred |= set(np.nonzero(ref.final_status == engine.DEFERRED)[0].tolist())
            diff = [
                int(v)
                for v in np.nonzero(mis_mask != ref.mis_mask)[0]
                if int(v) not in deferred
            ]
            entry["mpc"] = {
                "compared": g.n - len(deferred),
                "disagreements": len(diff),
                "rounds_total": ledger.rounds_total,
                "peak_memory_words": ledger.peak_words,
            }
            worst += len(diff)
        for name, runner in (
            ("lca-chained", run_sparsified_mis),
            ("lca-recursive", run_recursive_mis),
        ):
            if name not in models:
                continue
            ref = central if name == "lca-chained" else None
            if ref is None:
                ref = run_recursive_mis(g, tape, config.mis)
                post_shatter(g, ref)
            harness = LcaHarness(
                g, tape, config.mis, variant=name.removeprefix("lca-"), mode=config.lca_mode
            )
            nodes = _sample_nodes(g.n, config.lca_sample_nodes, seed)
            deferred = set(np.nonzero(ref.final_status == engine.DEFERRED)[0].tolist())
            answers = [harness.answer(v) for v in nodes]
            diff = [
                a.node
                for a in answers
                if a.node not in deferred and a.in_mis != bool(ref.mis_mask[a.node])
            ]
            audit = consistency_audit(answers, g)
            entry[name] = {
                "compared": len([v for v in nodes if v not in deferred]),
                "disagreements": len(diff),
                "consistent": int(audit.kind != "conflict"),
            }
            worst += len(diff) + (0 if audit.kind != "conflict" else 1)
        report["seeds"][seed] = entry
    return (1 if worst else 0), report
