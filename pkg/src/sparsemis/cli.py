"""Command line driver.

Subcommands: generate-graph, run-mis, run-matching, run-mpc, run-lca,
cross-check, verify.  Runs are configured by a TOML document (see README for
the schema); --seed, --out, --format and --workers override it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import cross_check, run_experiment
from .graphs import generate_graph, load_graph, save_graph, verify_matching, verify_mis

_FAMILY = {
    "run-mis": ("base-mis", "sparsified-mis", "recursive-mis", "sparsified-on-h"),
    "run-matching": ("base-matching", "sparse-matching", "line-mis-matching"),
    "run-mpc": ("mpc",),
    "run-lca": ("lca-chained", "lca-recursive", "parnas-ron"),
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sparsemis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate-graph", help="write a generated graph as an edge list")
    p_gen.add_argument("--model", required=True,
                       choices=["gnp", "d_regular", "star", "path", "complete"])
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--p", type=float, default=None)
    p_gen.add_argument("--d", type=int, default=None)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    for name in ("run-mis", "run-matching", "run-mpc", "run-lca"):
        p = sub.add_parser(name, help=f"run the {name.removeprefix('run-')} variants of a config")
        _run_flags(p)

    p_cross = sub.add_parser("cross-check", help="run configured models and compare per node")
    p_cross.add_argument("--config", required=True)
    p_cross.add_argument("--seed", type=int, default=None)
    p_cross.add_argument("--out", default=None)

    p_ver = sub.add_parser("verify", help="verify an MIS or matching output file")
    p_ver.add_argument("--graph", required=True)
    p_ver.add_argument("--mis", default=None)
    p_ver.add_argument("--matching", default=None)
    p_ver.add_argument("--maximal", action="store_true")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed list")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["json", "csv", "both"], default=None)
    p.add_argument("--workers", type=int, default=None)


def _dispatch(args) -> int:
    if args.command == "generate-graph":
        params = {"n": args.n}
        if args.p is not None:
            params["p"] = args.p
        if args.d is not None:
            params["d"] = args.d
        g = generate_graph(args.model, params, args.seed)
        save_graph(g, args.out)
        print(f"wrote {args.out}: n={g.n} m={g.m} max_degree={g.max_degree}")
        return 0

    if args.command == "verify":
        g = load_graph(args.graph)
        if (args.mis is None) == (args.matching is None):
            print("verify: pass exactly one of --mis / --matching", file=sys.stderr)
            return 2
        if args.mis:
            nodes = [int(x) for x in Path(args.mis).read_text().split()]
            res = verify_mis(g, nodes)
        else:
            lines = Path(args.matching).read_text().splitlines()
            edges = [tuple(int(x) for x in ln.split()) for ln in lines if ln.strip()]
            res = verify_matching(g, edges, require_maximal=args.maximal)
        print(res.kind if res.witness is None else f"{res.kind} witness={res.witness}")
        return 0 if res.ok else 1

    config = load_config(args.config)
    if args.command == "cross-check":
        if args.seed is not None:
            config = dataclasses.replace(config, seeds=(args.seed,))
        code, report = cross_check(config)
        text = json.dumps(report, indent=2, sort_keys=True, default=str)
        print(text)
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(text + "\n")
        return code

    wanted = _FAMILY[args.command]
    variants = tuple(v for v in config.variants if v in wanted)
    if not variants:
        print(f"{args.command}: config lists no matching variants {wanted}", file=sys.stderr)
        return 2
    config = dataclasses.replace(config, variants=variants)
    if args.seed is not None:
        config = dataclasses.replace(config, seeds=(args.seed,))
    if args.out is not None:
        config = dataclasses.replace(config, out_dir=args.out)
    if args.format is not None:
        fmts = ("json", "csv") if args.format == "both" else (args.format,)
        config = dataclasses.replace(config, formats=fmts)
    code, summary = run_experiment(config, workers=args.workers)
    print(json.dumps({"exit": code, **summary}, sort_keys=True, default=str))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
