"""Command line: ``neigad eig``, ``neigad run`` and ``neigad bench``.

Exit codes: 0 success, 2 configuration/parameter error, 3 numeric divergence
or solver non-convergence, 4 I/O or input-format error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import seeding
from .alloc import pin_allocator
from .graph import (
    AttributedGraph,
    GraphFormatError,
    ParameterError,
    generate_synthetic,
    inject_contextual_anomalies,
    inject_structural_anomalies,
    load_features_csv,
    load_graph,
    load_labels,
)
from .metrics import BATCH_HEADER, evaluate
from .models import KINDS, DivergenceError, TrainConfig, run_comparison, train
from .spectral import (
    DEFAULT_TOL,
    ConvergenceError,
    neighbor_average_residual,
    top_eigenpairs,
    write_eigenpairs_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

BENCH_HEADER = [
    "method", "dataset", "seed", "t", "vanilla_auc", "neigad_auc", "delta",
    "vanilla_gap", "neigad_gap", "vanilla_train_s", "neigad_train_s", "eigen_s", "status",
]


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    # synthetic source
    n: Optional[int] = None
    blocks: int = 4
    p_in: float = 0.015
    p_out: float = 0.0005
    d: int = 32
    # file source
    graph: Optional[str] = None
    features: Optional[str] = None
    labels: Optional[str] = None
    num_nodes: Optional[int] = None
    dataset: Optional[str] = None
    # injection
    p: int = 5
    m: int = 5
    q: int = 25
    k: int = 50
    # training
    model: str = "dominant"
    alpha: float = 0.8
    lr: float = 0.005
    epochs: int = 100
    hidden: int = 64
    embed: int = 32
    t: int = 0
    eigen_scale: object = 1.0
    eigen_tol: float = DEFAULT_TOL
    seed: int = 0
    # bench
    models: List[str] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    out_dir: str = "out"

    def train_config(self, model=None, seed=None, t=None) -> TrainConfig:
        return TrainConfig(
            model=model or self.model,
            alpha=self.alpha,
            lr=self.lr,
            epochs=self.epochs,
            hidden=self.hidden,
            embed=self.embed,
            t=self.t if t is None else t,
            eigen_scale=self.eigen_scale,
            eigen_tol=self.eigen_tol,
            seed=self.seed if seed is None else seed,
        )

    @property
    def dataset_name(self) -> str:
        if self.dataset:
            return self.dataset
        return Path(self.graph).stem if self.graph else "synthetic"


_INT_FIELDS = {"n", "blocks", "d", "num_nodes", "p", "m", "q", "k", "epochs", "hidden", "embed", "t", "seed"}
_FLOAT_FIELDS = {"p_in", "p_out", "alpha", "lr", "eigen_tol"}
_STR_FIELDS = {"graph", "features", "labels", "dataset", "model", "out_dir"}


def parse_run_config(doc: dict, base: Path = Path(".")) -> RunConfig:
    """Validate a flat JSON config; unknown keys and out-of-range values raise ConfigError."""
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown key")
    for key, value in doc.items():
        if value is None:
            continue
        if key in _INT_FIELDS and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        if key in _FLOAT_FIELDS and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(key, f"expected a number, got {value!r}")
        if key in _STR_FIELDS and not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
    cfg = RunConfig(**doc)
    for key in ("graph", "features", "labels"):
        value = getattr(cfg, key)
        if value is not None:
            path = Path(value)
            if not path.is_absolute():
                path = base / path
            if not path.exists():
                raise ConfigError(key, f"path does not exist: {path}")
            setattr(cfg, key, str(path))
    if (cfg.n is None) == (cfg.graph is None):
        raise ConfigError("dataset", "exactly one of 'n' (synthetic) or 'graph' (file) is required")
    if cfg.graph is not None and cfg.features is None:
        raise ConfigError("features", "required with 'graph'")
    if not isinstance(cfg.models, list) or any(mdl not in KINDS for mdl in cfg.models):
        raise ConfigError("models", f"must be a list drawn from {KINDS}")
    if not isinstance(cfg.seeds, list) or any(isinstance(s, bool) or not isinstance(s, int) for s in cfg.seeds):
        raise ConfigError("seeds", "must be a list of integers")
    try:
        cfg.train_config().validate()
    except ValueError as exc:
        name = str(exc).split(":", 1)[0]
        raise ConfigError(name, str(exc).split(":", 1)[-1].strip()) from None
    for key in ("p", "q"):
        if getattr(cfg, key) < 0:
            raise ConfigError(key, "must be >= 0")
    if cfg.m < 2:
        raise ConfigError("m", "clique size must be >= 2")
    if cfg.k < 1:
        raise ConfigError("k", "must be >= 1")
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_run_config(doc, path.parent)


def build_dataset(cfg: RunConfig, seed: int) -> AttributedGraph:
    """Load or generate the graph, then inject anomalies from the seed's injection stream."""
    if cfg.graph is not None:
        graph = load_graph(cfg.graph, cfg.num_nodes)
        x = load_features_csv(Path(cfg.features).read_text(encoding="utf-8"))
        base_labels = None
        if cfg.labels is not None:
            base_labels = load_labels(Path(cfg.labels).read_text(encoding="utf-8"))
            if base_labels.size != graph.n:
                raise GraphFormatError(f"labels file has {base_labels.size} entries, graph has {graph.n} nodes")
        base = AttributedGraph(graph, x, base_labels)
    else:
        base = generate_synthetic(cfg.n, cfg.blocks, cfg.p_in, cfg.p_out, cfg.d, rng=seeding.stream(seed, seeding.DATA))
    inj = seeding.stream(seed, seeding.INJECTION)
    graph, structural = inject_structural_anomalies(base.graph, cfg.p, cfg.m, rng=inj)
    x, contextual = inject_contextual_anomalies(graph, base.features, cfg.q, cfg.k, rng=inj, exclude=structural.astype(bool))
    labels = structural | contextual
    if cfg.graph is not None and base.labels is not None:
        labels = labels | base.labels
    return AttributedGraph(graph, x, labels)


# ---------------------------------------------------------------- commands


def cmd_eig(args) -> int:
    if args.t < 1:
        raise ParameterError(f"t must be >= 1, got {args.t}")
    g = load_graph(args.graph, args.num_nodes)
    pairs = top_eigenpairs(g, args.t, args.tol, max_t=max(10, args.t))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        write_eigenpairs_csv(pairs, fh)
    check = neighbor_average_residual(g, pairs)
    print(f"eigenvalues: {' '.join(f'{v:.10g}' for v in pairs.eigenvalues)}")
    print(f"max solver residual: {pairs.residuals.max():.3e}")
    print(f"max neighbor-average residual: {check.max:.3e} ({int(check.skipped.sum())} pairs skipped)")
    return EXIT_OK


def _write_scores(path: Path, scores, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_id", "score", "label"])
        for i, s in enumerate(scores):
            writer.writerow([i, repr(float(s)), "" if labels is None else int(labels[i])])


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    data = build_dataset(cfg, cfg.seed)
    tc = cfg.train_config()
    result = train(data, tc)
    out = Path(cfg.out_dir)
    if not out.is_absolute():
        out = Path(args.config).parent / out
    out.mkdir(parents=True, exist_ok=True)
    _write_scores(out / "scores.csv", result.scores.scores, data.labels)
    (out / "params.json").write_text(result.params.to_json(), encoding="utf-8")
    method = tc.model if tc.t == 0 else f"{tc.model}+neigad"
    if data.labels is not None and 0 < data.labels.sum() < data.n:
        report = evaluate(
            result.scores.scores, data.labels,
            train_seconds=result.scores.train_seconds, eigen_seconds=result.scores.eigen_seconds,
            seed=tc.seed, t=tc.t, method=method, dataset=cfg.dataset_name,
        ).to_dict()
    else:
        report = {"method": method, "dataset": cfg.dataset_name, "seed": tc.seed, "t": tc.t,
                  "train_seconds": result.scores.train_seconds}
        if result.scores.eigen_seconds is not None:
            report["eigen_seconds"] = result.scores.eigen_seconds
    report["final_loss"] = result.history[-1]
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _bench_task(cfg: RunConfig, model: str, seed: int) -> list:
    t = cfg.t if cfg.t > 0 else 4
    try:
        data = build_dataset(cfg, seed)
        comp = run_comparison(
            data, cfg.train_config(model, seed, 0), cfg.train_config(model, seed, t), cfg.dataset_name
        )
    except (DivergenceError, ConvergenceError, ValueError) as exc:
        row = [model, cfg.dataset_name, seed, t] + [""] * 8 + [f"error: {exc}".replace("\n", " ")]
        return [row, None, None]
    v, a = comp.vanilla, comp.neigad
    row = [
        model, cfg.dataset_name, seed, t, repr(v.roc_auc), repr(a.roc_auc), repr(comp.delta),
        repr(v.normalized_gap), repr(a.normalized_gap),
        f"{v.train_seconds:.6f}", f"{a.train_seconds:.6f}", f"{a.eigen_seconds or 0.0:.6f}", "ok",
    ]
    return [row, v.csv_row(), a.csv_row()]


def _aggregate(model: str, dataset: str, t: int, rows: list) -> list:
    ok = [r for r in rows if r[-1] == "ok"]
    status = "ok" if len(ok) == len(rows) else f"partial {len(ok)}/{len(rows)}"
    if not ok:
        return [model, dataset, "mean", t] + [""] * 8 + ["failed"]

    def mean(col):
        return repr(float(np.mean([float(r[col]) for r in ok])))

    return [model, dataset, "mean", t] + [mean(c) for c in range(4, 12)] + [status]


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config)
    models = cfg.models or [cfg.model]
    seeds = cfg.seeds or [cfg.seed]
    tasks = [(m, s) for m in models for s in seeds]
    workers = max(1, int(os.environ.get("NEIGAD_THREADS", "1")))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_bench_task, [cfg] * len(tasks), *zip(*tasks)))
    else:
        results = [_bench_task(cfg, m, s) for m, s in tasks]
    out = Path(cfg.out_dir)
    if not out.is_absolute():
        out = Path(args.config).parent / out
    out.mkdir(parents=True, exist_ok=True)
    t = cfg.t if cfg.t > 0 else 4
    with open(out / "bench.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for model in models:
            rows = [r[0] for (m, _), r in zip(tasks, results) if m == model]
            for row in rows:
                writer.writerow(row)
            agg = _aggregate(model, cfg.dataset_name, t, rows)
            writer.writerow(agg)
            print(f"{model}: mean delta {agg[6] or 'n/a'} ({agg[-1]})")
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BATCH_HEADER)
        for r in results:
            for run_row in r[1:]:
                if run_row is not None:
                    writer.writerow(run_row)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neigad", description="Spectral eigenvector augmentation for graph anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    eig = sub.add_parser("eig", help="top-t adjacency eigenpairs to CSV")
    eig.add_argument("--graph", required=True, help="edge list or MatrixMarket file")
    eig.add_argument("--t", type=int, default=4)
    eig.add_argument("--tol", type=float, default=DEFAULT_TOL)
    eig.add_argument("--out", required=True)
    eig.add_argument("--num-nodes", type=int, default=None, help="node count for edge lists without an n= header")
    eig.set_defaults(func=cmd_eig)

    run = sub.add_parser("run", help="train one detector and score nodes")
    run.add_argument("--config", required=True)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="vanilla vs augmented comparison table")
    bench.add_argument("--config", required=True)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    pin_allocator()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ConvergenceError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, GraphFormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
