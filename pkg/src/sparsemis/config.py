"""Experiment configuration: one TOML document per experiment.

Sections: [graph] (model/params or file), [tape], [mis], [mpc], [match],
[lca], [run] (variants, seeds, out, formats).  Validation reports the field
path of every problem before any run starts.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from pathlib import Path

from .engine import MisParams
from .matching import MatchParams
from .mpc import MpcConfig

KNOWN_VARIANTS = (
    "base-mis",
    "sparsified-mis",
    "recursive-mis",
    "sparsified-on-h",
    "mpc",
    "lca-chained",
    "lca-recursive",
    "parnas-ron",
    "base-matching",
    "sparse-matching",
    "line-mis-matching",
)

CROSS_MODELS = ("centralized", "sparsified-on-h", "mpc", "lca-chained", "lca-recursive")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    model: str | None = None
    params: dict = field(default_factory=dict)
    path: str | None = None

    def describe(self) -> str:
        if self.path:
            return f"file:{self.path}"
        items = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.model}({items})"


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphSpec
    mis: MisParams
    mpc: MpcConfig
    match: MatchParams
    variants: tuple[str, ...]
    seeds: tuple[int, ...]
    out_dir: str
    formats: tuple[str, ...]
    tape_bits: int = 64
    lca_sample_nodes: int = 25
    lca_mode: str = "shared"
    cross_models: tuple[str, ...] = ()
    workers: int = 1


def _need(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}.{key}: missing required field")
    return section[key]


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return parse_config(doc, base_dir=path.parent)


def parse_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    gsec = doc.get("graph", {})
    if "file" in gsec:
        gpath = str(gsec["file"])
        if base_dir is not None and not Path(gpath).is_absolute():
            gpath = str(base_dir / gpath)
        if not Path(gpath).exists():
            raise ConfigError(f"graph.file: {gpath} does not exist")
        graph = GraphSpec(path=gpath)
    else:
        model = _need(gsec, "model", "graph")
        params = {k: v for k, v in gsec.items() if k not in ("model", "file")}
        graph = GraphSpec(model=model, params=params)

    msec = doc.get("mis", {})
    mis = MisParams(
        alpha=float(msec.get("alpha", 0.5)),
        c_iterations=float(msec.get("c_iterations", 6.0)),
        c_sampling=float(msec.get("c_sampling", 1.0)),
        phase_length_r=msec.get("phase_length_r"),
        recursion_base_r0=msec.get("recursion_base_r0"),
    )
    psec = doc.get("mpc", {})
    mpc = MpcConfig(
        alpha=float(psec.get("alpha", 0.5)),
        capacity_words=psec.get("capacity_words"),
        machine_count=psec.get("machine_count"),
    )
    tsec = doc.get("match", {})
    match = MatchParams(
        kappa=float(tsec.get("kappa", 8.0)),
        greedy_finish=bool(tsec.get("greedy_finish", False)),
    )
    rsec = doc.get("run", {})
    variants = tuple(rsec.get("variants", ()))
    if not variants:
        raise ConfigError("run.variants: at least one variant required")
    for v in variants:
        if v not in KNOWN_VARIANTS:
            raise ConfigError(f"run.variants: unknown variant {v!r}")
    seeds = tuple(int(s) for s in rsec.get("seeds", ()))
    if not seeds:
        raise ConfigError("run.seeds: non-empty seed list required")
    formats = tuple(rsec.get("formats", ("json", "csv")))
    for f in formats:
        if f not in ("json", "csv"):
            raise ConfigError(f"run.formats: unknown format {f!r}")
    lsec = doc.get("lca", {})
    cross = tuple(doc.get("cross", {}).get("models", ()))
    for c in cross:
        if c not in CROSS_MODELS:
            raise ConfigError(f"cross.models: unknown model {c!r}")
    tape_bits = int(doc.get("tape", {}).get("precision_bits", 64))
    return ExperimentConfig(
        graph=graph,
        mis=mis,
        mpc=mpc,
        match=match,
        variants=variants,
        seeds=seeds,
        out_dir=str(rsec.get("out", "results")),
        formats=formats,
        tape_bits=tape_bits,
        lca_sample_nodes=int(lsec.get("sample_nodes", 25)),
        lca_mode=str(lsec.get("mode", "shared")),
        cross_models=cross,
        workers=int(rsec.get("workers", 1)),
    )
