"""Acceptance criteria.

One test per criterion, each printing a PASS line with its measured numbers
(run with -s to see them).  Tolerances and counts are pinned here, straight
from the package contract; nothing is deferred to later calibration.
"""

import time

import numpy as np
import pytest

from sparsemis.engine import (
    DEFERRED,
    MisParams,
    estimate_dhat,
    post_shatter,
    run_base_mis,
    run_recursive_mis,
    run_sparsified_mis,
)
from sparsemis.graphs import connected_components, generate_graph, verify_matching, verify_mis
from sparsemis.lca import LcaHarness, consistency_audit, parnas_ron_baseline
from sparsemis.matching import (
    MatchParams,
    exact_max_matching_small,
    maximal_matching_via_line_mis,
    run_base_matching,
    run_sparse_matching,
    vertex_cover_2approx,
)
from sparsemis.mpc import MpcConfig, plan_degree_steps, run_mpc
from sparsemis.sparsify import (
    PhaseWindow,
    build_sparse_graph,
    check_degree_bound,
    classify_nodes,
    run_sparsified_on_h,
)
from sparsemis.tape import TapeSpec


def _tape(seed, params, delta, T_mult=4):
    k = params.repetitions(max(2, delta))
    need = params.iterations(max(2, delta))
    return TapeSpec(seed=seed, repetitions_k=k, max_iterations=max(16, T_mult * need))


def _report(num, text):
    print(f"\nACCEPTANCE {num}: PASS — {text}")


def test_criterion_01_mis_correctness_200_runs():
    """200 engine runs + post_shatter all pass verify_mis; <= 2 min."""
    t0 = time.time()
    sizes = [(60, 8), (150, 16), (400, 32), (900, 48), (2000, 64)]
    runs = 0
    failures = 0
    seed = 0
    engines = [run_base_mis, run_sparsified_mis, run_recursive_mis]
    while runs < 200:
        n, dtarget = sizes[runs % len(sizes)]
        if runs % 3 == 2:
            d = min(dtarget, n - 1)
            d -= (n * d) % 2
            g = generate_graph("d_regular", {"n": n, "d": max(2, d // 4)}, seed)
        else:
            g = generate_graph("gnp", {"n": n, "p": min(0.9, dtarget / 2 / n)}, seed)
        params = MisParams(c_iterations=4.0)
        tape = _tape(seed + 9000, params, g.max_degree)
        fn = engines[runs % 3]
        if fn is run_base_mis:
            tr = fn(g, tape, params.iterations(g.max_degree))
        else:
            tr = fn(g, tape, params)
        post_shatter(g, tr)
        if not verify_mis(g, tr.mis_nodes).ok:
            failures += 1
        runs += 1
        seed += 1
    dt = time.time() - t0
    assert failures == 0
    assert dt <= 120
    _report(1, f"200 engine runs valid, 0 failures, {dt:.0f}s")


_AUDITS = None


def _criterion2_audits():
    global _AUDITS
    if _AUDITS is None:
        out = []
        seed = 0
        sizes = [80, 160, 240, 320, 480]
        for i in range(50):
            n = sizes[i % len(sizes)]
            r = (i % 3) + 1
            g = generate_graph("gnp", {"n": n, "p": min(0.5, 24 / n)}, seed=seed)
            params = MisParams(c_iterations=4.0, phase_length_r=r)
            tape = _tape(seed + 400, params, g.max_degree)
            _, audit = run_sparsified_on_h(g, tape, params, mode="oracle_goodness")
            out.append(audit)
            seed += 1
        _AUDITS = out
    return _AUDITS


def test_criterion_02_trace_equivalence():
    """Sparse-graph replay matches the engine bit-exactly on every good
    light node in every phase of 50 runs; <= 1 min."""
    t0 = time.time()
    audits = _criterion2_audits()
    checked = sum(a["checked"] for a in audits)
    mism = sum(len(a["mismatches"]) for a in audits)
    dt = time.time() - t0
    assert checked > 10_000
    assert mism == 0
    assert dt <= 60
    _report(2, f"{checked} good-light phase outcomes bit-equal across 50 runs, {dt:.0f}s")


def test_criterion_03_superset_soundness():
    """No non-relevant node samples or marks inside its phase (exhaustive)."""
    audits = _criterion2_audits()
    violations = sum(len(a["relevance_violations"]) for a in audits)
    assert violations == 0
    _report(3, f"0 relevance violations across {sum(a['phases'] for a in audits)} phases")


def test_criterion_04_sparse_degree_bound():
    """Light degrees within k*R*2^(3R+2); heavy copies degree exactly 1."""
    light_viol = 0
    copy_viol = 0
    phases = 0
    seed = 0
    for i in range(100):
        delta_t = 32 if i % 2 == 0 else 64
        r = (i % 3) + 1
        n = 400
        g = generate_graph("gnp", {"n": n, "p": delta_t / 2 / n}, seed=seed)
        params = MisParams(c_iterations=2.0, phase_length_r=r)
        tape = _tape(seed + 600, params, g.max_degree)
        tr = run_sparsified_mis(g, tape, params)
        for ph in tr.phases:
            window = PhaseWindow(ph.t0, ph.t0 + ph.length - 1)
            cls = classify_nodes(g, ph.status0, ph.p_exp0, tape, window, ph.k)
            h = build_sparse_graph(g, cls, ph.p_exp0, tape, window, ph.k)
            rep = check_degree_bound(h)
            light_viol += len(rep.light_violations)
            copy_viol += len(rep.copy_violations)
            phases += 1
        seed += 1
    assert light_viol == 0
    assert copy_viol == 0
    _report(4, f"0 light-degree and 0 copy-degree violations over {phases} phases, 100 runs")


def test_criterion_05_estimator_concentration():
    """k = 12*C*log2(D), C = 2, D = 1024: 1e4 trials per side; <= 30 s."""
    t0 = time.time()
    delta = 1024
    params = MisParams(c_sampling=2.0)
    k = params.repetitions(delta)
    assert k == 240
    tape = TapeSpec(seed=777, repetitions_k=k, max_iterations=10_001)
    # d = 21 > 20: 42 neighbors at p = 1/2
    high = [(i + 1, 1) for i in range(42)]
    # d = 0.375 < 0.4: 12 neighbors at p = 1/32
    low = [(i + 1, 5) for i in range(12)]
    trials = 10_000
    high_fail = sum(estimate_dhat(0, high, tape, t + 1, k) < 2 for t in range(trials))
    low_fail = sum(estimate_dhat(0, low, tape, t + 1, k) >= 2 for t in range(trials))
    dt = time.time() - t0
    assert high_fail / trials <= 0.01
    assert low_fail / trials <= 0.01
    assert dt <= 30
    _report(
        5,
        f"Pr[dhat<2 | d=21] = {high_fail/trials:.4f}, "
        f"Pr[dhat>=2 | d=0.375] = {low_fail/trials:.4f}, {dt:.0f}s",
    )


def test_criterion_06_shattering():
    """50 runs at n = 1e4, max degree ~32, T = 50*log2(D): survivors <= n/D^2
    and components <= D^4*log2(n) in >= 95% of runs; <= 5 min."""
    t0 = time.time()
    n = 10_000
    ok = 0
    runs = 50
    worst_frac = 0.0
    worst_comp = 0
    for seed in range(runs):
        g = generate_graph("gnp", {"n": n, "p": 16 / n}, seed=seed)
        delta = g.max_degree
        params = MisParams(c_iterations=50.0)
        tape = _tape(seed + 4242, params, delta, T_mult=2)
        tr = run_sparsified_mis(g, tape, params)
        survivors = tr.survivors
        frac = len(survivors) / n
        comp = max((len(c) for c in connected_components(g, survivors)), default=0)
        worst_frac = max(worst_frac, frac)
        worst_comp = max(worst_comp, comp)
        if frac <= 1.0 / delta**2 and comp <= delta**4 * np.log2(n):
            ok += 1
    dt = time.time() - t0
    assert ok >= 0.95 * runs
    assert dt <= 300
    _report(
        6,
        f"{ok}/{runs} runs shattered (worst survivor fraction {worst_frac:.2e}, "
        f"worst component {worst_comp}), {dt:.0f}s",
    )


def test_criterion_07_mpc_fidelity_and_trend():
    """30 runs: MPC output equals the step-scheduled centralized run, peak
    memory within capacity; rounds tabulated across D in {16, 64, 256}."""
    t0 = time.time()
    table = {16: [], 64: [], 256: []}
    agree_all = True
    peak_ok = True
    seed = 0
    for dtarget, n, p in ((16, 600, 8 / 600), (64, 600, 45 / 600), (256, 520, 0.42)):
        for _ in range(10):
            g = generate_graph("gnp", {"n": n, "p": p}, seed=seed)
            params = MisParams(c_iterations=3.0)
            tape = _tape(seed + 31, params, g.max_degree, T_mult=8)
            plan = plan_degree_steps(g.max_degree)
            ref = run_sparsified_mis(g, tape, params, step_plan=plan.thresholds)
            post_shatter(g, ref)
            cfg = MpcConfig(alpha=0.9, capacity_words=4_000_000, machine_count=6)
            mask, trace, ledger = run_mpc(g, tape, params, cfg, seed=seed, step_plan=plan)
            agree_all &= bool(np.array_equal(mask, ref.mis_mask))
            peak_ok &= ledger.peak_words <= ledger.capacity
            table[dtarget].append(ledger.rounds_total)
            seed += 1
    means = {d: float(np.mean(v)) for d, v in table.items()}
    dt = time.time() - t0
    assert agree_all
    assert peak_ok
    assert means[16] <= means[64] <= means[256]
    print("\n  MPC rounds by max-degree class:")
    for d in (16, 64, 256):
        print(f"    degree~{d}: rounds {sorted(table[d])} mean {means[d]:.1f}")
    _report(7, f"30/30 runs identical to centralized, peaks within capacity, {dt:.0f}s; "
               f"round trend {means[16]:.1f} <= {means[64]:.1f} <= {means[256]:.1f}")


def test_criterion_08_lca_fidelity_and_consistency():
    """Chained and recursive oracles agree with the centralized runs on 30
    runs x 50 sampled nodes; the answer sets audit consistent."""
    t0 = time.time()
    rng = np.random.Generator(np.random.PCG64(7))
    total = {"chained": 0, "recursive": 0}
    mism = {"chained": 0, "recursive": 0}
    audits_ok = True
    seed = 0
    for variant, engine_fn in (("chained", run_sparsified_mis), ("recursive", run_recursive_mis)):
        for i in range(15):
            n = (100, 130, 160)[i % 3]
            g = generate_graph("gnp", {"n": n, "p": min(0.4, 16 / n)}, seed=seed)
            params = MisParams(c_iterations=3.5, phase_length_r=1 + (i % 2))
            tape = _tape(seed + 5150, params, g.max_degree)
            ref = engine_fn(g, tape, params)
            post_shatter(g, ref)
            harness = LcaHarness(g, tape, params, variant=variant, mode="shared")
            nodes = sorted(int(x) for x in rng.choice(n, size=min(50, n), replace=False))
            answers = [harness.answer(v) for v in nodes]
            for a in answers:
                total[variant] += 1
                if a.in_mis != bool(ref.mis_mask[a.node]):
                    mism[variant] += 1
            audits_ok &= consistency_audit(answers, g).kind != "conflict"
            seed += 1
    dt = time.time() - t0
    assert mism["chained"] == 0 and mism["recursive"] == 0
    assert audits_ok
    _report(8, f"chained {total['chained']}/{total['chained']} and recursive "
               f"{total['recursive']}/{total['recursive']} answers agree; audits consistent, {dt:.0f}s")


def test_criterion_09_lca_query_dominance():
    """probes(recursive, per-answer memo) <= probes(full-ball baseline) for
    every sampled node across D in {8, 16, 32, 64}; ratio table emitted."""
    t0 = time.time()
    rows = []
    violations = 0
    seed = 11
    for dtarget in (8, 16, 32, 64):
        n = 240
        g = generate_graph("gnp", {"n": n, "p": dtarget / 2 / n}, seed=seed)
        params = MisParams(c_iterations=6.0)
        tape = _tape(seed + 660, params, g.max_degree)
        iterations = params.iterations(g.max_degree)
        harness = LcaHarness(g, tape, params, variant="recursive", mode="memoized")
        rng = np.random.Generator(np.random.PCG64(seed))
        nodes = sorted(int(x) for x in rng.choice(n, size=12, replace=False))
        ratios = []
        for v in nodes:
            rec = harness.answer(v)
            base = parnas_ron_baseline(v, g, tape, iterations)
            if rec.probes_used > base.probes_used:
                violations += 1
            ratios.append(base.probes_used / max(1, rec.probes_used))
        rows.append((dtarget, g.max_degree, float(np.mean(ratios)), float(np.min(ratios))))
        seed += 1
    dt = time.time() - t0
    assert violations == 0
    print("\n  probe ratio (baseline / recursive), higher = cheaper oracle:")
    for dtarget, dmeas, mean_r, min_r in rows:
        print(f"    degree~{dtarget} (measured {dmeas}): mean {mean_r:.2f} min {min_r:.2f}")
    _report(9, f"0 dominance violations over {4*12} sampled nodes, {dt:.0f}s")


def test_criterion_10_matching():
    """All matchings valid; line-route maximal (100 runs); sparse-variant
    mean ratio >= 1/8 over 200 seeds; covers within twice optimal; <= 2 min."""
    t0 = time.time()
    # line-route maximality + vertex cover, 100 runs
    maximal_fail = 0
    cover_fail = 0
    for seed in range(100):
        g = generate_graph("gnp", {"n": 30, "p": 0.12}, seed=seed)
        params = MisParams(c_iterations=5.0)
        delta_line = max(2, 2 * g.max_degree - 2) if g.m else 2
        tape = TapeSpec(
            seed=seed + 80,
            repetitions_k=params.repetitions(delta_line),
            max_iterations=8 * max(4, params.iterations(delta_line)),
        )
        m = maximal_matching_via_line_mis(g, tape, params)
        if not verify_matching(g, m, require_maximal=True).ok:
            maximal_fail += 1
            continue
        if g.m:
            cover = set(vertex_cover_2approx(g, m))
            if not all(u in cover or v in cover for u, v in g.edges()):
                cover_fail += 1
            if g.m <= 64:
                opt = exact_max_matching_small(g)
                if len(cover) > 2 * len(opt):
                    cover_fail += 1
    assert maximal_fail == 0 and cover_fail == 0

    # approximation sweep, 200 seeds on <= 64-edge graphs
    base_ratios = []
    sparse_ratios = []
    seed = 0
    families = [("gnp", {"n": 16, "p": 0.5}), ("complete", {"n": 10}), ("gnp", {"n": 12, "p": 0.7})]
    while len(sparse_ratios) < 200:
        model, args = families[seed % len(families)]
        g = generate_graph(model, args, seed=seed)
        seed += 1
        if g.m == 0 or g.m > 64:
            continue
        tape = TapeSpec(seed=seed * 31 + 7, repetitions_k=4, max_iterations=64)
        mb, _ = run_base_matching(g, tape, MatchParams())
        ms, _, _ = run_sparse_matching(g, tape, MatchParams())
        assert verify_matching(g, mb).ok and verify_matching(g, ms).ok
        opt = exact_max_matching_small(g)
        if opt:
            base_ratios.append(len(mb) / len(opt))
            sparse_ratios.append(len(ms) / len(opt))
    mean_sparse = float(np.mean(sparse_ratios))
    mean_base = float(np.mean(base_ratios))
    dt = time.time() - t0
    assert mean_sparse >= 1 / 8
    assert dt <= 120
    _report(
        10,
        f"line-route 100/100 maximal, covers valid; sparse mean ratio "
        f"{mean_sparse:.3f} >= 0.125 over {len(sparse_ratios)} seeds "
        f"(base variant {mean_base:.3f}, reported), {dt:.0f}s",
    )


def test_criterion_11_determinism_byte_identical(tmp_path):
    """Identical configs -> byte-identical metrics, also with 2 workers."""
    from sparsemis.config import load_config
    from sparsemis.experiments import run_experiment

    body = """
[graph]
model = "gnp"
n = 80
p = 0.08

[mis]
c_iterations = 3.0

[mpc]
capacity_words = 500000
machine_count = 4

[lca]
sample_nodes = 8

[run]
variants = ["sparsified-mis", "recursive-mis", "mpc", "lca-chained", "sparse-matching"]
seeds = [1, 2]
out = "%s"
"""
    outs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
        out = tmp_path / tag
        conf = tmp_path / f"{tag}.toml"
        conf.write_text(body % out)
        code, _ = run_experiment(load_config(conf), workers=workers)
        assert code == 0
        outs.append(out)
    for name in ("metrics.jsonl", "metrics.csv", "lca_queries.jsonl", "lca_queries.csv"):
        blobs = [(o / name).read_bytes() for o in outs]
        assert blobs[0] == blobs[1] == blobs[2], name
    _report(11, "re-runs and 2-worker runs byte-identical across 4 metrics files")
