"""Command-line pipeline: dataset -> surrogate -> search, plus evaluate and describe.

Exit codes: 0 success, 2 config/input error, 3 training error, 4 infeasible search.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from driftnas import __version__
from driftnas.config import EngineConfig, load_config
from driftnas.dataset import Dataset, build_dataset
from driftnas.errors import (
    BudgetUnreachable,
    ConfigError,
    InfeasibleSearch,
    InvalidArchitecture,
    InvalidGenome,
    SchemaError,
    ShapeError,
    TrainError,
)
from driftnas.evaluation import drift_curve, evaluate, make_backend
from driftnas.formatters import (
    format_arch_detailed,
    format_record_concise,
    format_search_summary,
    write_csv,
)
from driftnas.models import SCHEMA_VERSION
from driftnas.search import SearchResult, run
from driftnas.space import Architecture, from_json
from driftnas.surrogate import OracleSurrogate, Surrogate, SurrogateEnsemble, evaluate_model, train_ranker
from driftnas.zoo import ZOO, Task

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAIN = 3
EXIT_INFEASIBLE = 4

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _write_json(path: Path, payload: dict[str, Any] | list[Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def _out_path(args: argparse.Namespace, cfg: EngineConfig, default_name: str) -> Path:
    return Path(args.out) if args.out else Path(cfg.output_dir) / default_name


def resolve_architecture(ref: str, default_task: Task) -> tuple[str, Architecture, Task]:
    """A zoo name or a path to an architecture JSON file."""
    if ref in ZOO:
        entry = ZOO[ref]
        return ref, entry.arch, entry.task
    path = Path(ref)
    if not path.is_file():
        raise InvalidArchitecture(f"{ref!r} is neither a reference architecture nor a file")
    return path.stem, from_json(path.read_text()), default_task


def _load_surrogate(args: argparse.Namespace, cfg: EngineConfig) -> Surrogate:
    if args.oracle:
        task = cfg.task.to_task()
        backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
        return OracleSurrogate(backend, cfg.rpu, cfg.backend.n_trials, cfg.search_seed(), workers=cfg.workers)
    if not args.model:
        raise ConfigError("model", "search needs a trained model path or --oracle")
    return SurrogateEnsemble.load(args.model)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_dataset(args: argparse.Namespace, cfg: EngineConfig) -> int:
    task = cfg.task.to_task()
    backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
    ds = build_dataset(
        cfg.dataset.n_lhs,
        backend,
        cfg.dataset.grid(cfg.rpu),
        cfg.seed,
        n_trials=cfg.backend.n_trials,
        space=cfg.space,
        input_shape=task.input_shape,
        num_classes=task.num_classes,
        t_p=cfg.dataset.t_p,
        workers=cfg.workers,
        config=cfg.echo(),
    )
    path = ds.save(_out_path(args, cfg, "dataset.ndjson"))
    acc, avm = ds.acc_1day(), ds.avm()
    print(
        f"Wrote {len(ds)} rows to {path} | acc_1day mean {acc.mean():.4f} std {acc.std():.4f}"
        f" | avm mean {avm.mean():+.4f} max {avm.max():+.4f}"
    )
    return EXIT_OK


def cmd_train_surrogate(args: argparse.Namespace, cfg: EngineConfig) -> int:
    ds = Dataset.load(args.dataset)
    hyper = cfg.surrogate
    if len(ds) < 2:
        raise TrainError(f"need at least 2 rows to train, dataset has {len(ds)}")
    train, test = ds.split(hyper.holdout, cfg.seed)
    if len(test) < 2:
        train, test = ds, ds
        logger.warning("Dataset too small for a held-out split; metrics are in-sample")
    model = train_ranker(train, hyper=hyper)
    model_path = model.save(_out_path(args, cfg, "surrogate.json"))
    metrics = evaluate_model(model, test)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "dataset": str(args.dataset),
        "n_train": len(train),
        "metrics": metrics.model_dump(mode="json"),
        "config": cfg.echo(),
    }
    metrics_path = _write_json(model_path.with_name(model_path.stem + ".metrics.json"), payload)
    print(
        f"Saved {model_path} | held-out n={metrics.n} kendall_tau {metrics.kendall_tau:.4f}"
        f" | avm_rmse {metrics.avm_rmse:.4f} | std_rmse {metrics.std_rmse:.4f} | metrics: {metrics_path}"
    )
    return EXIT_OK


def _search_once(args: argparse.Namespace, cfg: EngineConfig, out: Path) -> SearchResult:
    task = cfg.task.to_task()
    model = _load_surrogate(args, cfg)
    backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
    result = run(cfg.search, model, backend, cfg.search_context(), seed=cfg.search_seed())
    harvested_path = out.with_name(out.stem + ".harvested.ndjson")
    Dataset(result.harvested, input_shape=task.input_shape, num_classes=task.num_classes, config=cfg.echo()).save(
        harvested_path
    )
    result = result.model_copy(update={"harvested_path": harvested_path.name, "engine_config": cfg.echo()})
    _write_json(out, result.model_dump(mode="json"))
    print(format_search_summary(result, task.input_shape, task.num_classes))
    print(f"Result: {out}")
    return result


def cmd_search(args: argparse.Namespace, cfg: EngineConfig) -> int:
    out = _out_path(args, cfg, "search_result.json")
    if not args.sweep_t_avm:
        _search_once(args, cfg, out)
        return EXIT_OK

    rows = []
    infeasible = 0
    for t_avm in args.sweep_t_avm:
        swept = cfg.model_copy(update={"search": cfg.search.model_copy(update={"t_avm": t_avm})})
        target = out.with_name(f"{out.stem}.t_avm_{t_avm:g}.json")
        try:
            result = _search_once(args, swept, target)
        except InfeasibleSearch as e:
            infeasible += 1
            logger.warning("t_avm=%g: %s", t_avm, e)
            rows.append({"t_avm": t_avm, "status": "infeasible"})
            continue
        rec = result.best_record
        rows.append({
            "t_avm": t_avm,
            "status": "verified" if result.verified else "unverified",
            "best_id": result.best_id,
            "params": result.best_prediction.params,
            "predicted_avm": round(result.best_prediction.avm, 6),
            "avm": round(rec.avm, 6) if rec else "",
            "acc_1day": round(rec.acc_1day_mean, 6) if rec else "",
            "generations": result.generations,
            "wall_time_s": round(result.wall_time, 3),
        })
    fields = [
        "t_avm", "status", "best_id", "params", "predicted_avm", "avm", "acc_1day", "generations", "wall_time_s",
    ]
    sweep_path = write_csv(out.with_name("sweep.csv"), rows, fields)
    print(f"Sweep over {len(rows)} thresholds: {sweep_path}")
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: EngineConfig) -> int:
    out_dir = Path(args.out) if args.out else Path(cfg.output_dir)
    records = []
    for ref in args.archs:
        name, arch, task = resolve_architecture(ref, cfg.task.to_task())
        backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
        rec = evaluate(arch, cfg.rpu, backend, cfg.backend.n_trials, cfg.seed)
        print(f"{name}: {format_record_concise(rec)}")
        records.append({"name": name, "arch": arch.to_dict(), "record": rec})

    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.echo(),
        "records": [{**r, "record": r["record"].model_dump(mode="json")} for r in records],
    }
    _write_json(out_dir / "records.json", payload)
    curve = drift_curve([r["record"] for r in records])
    write_csv(out_dir / "drift_curve.csv", curve, ["arch_id", "time_s", "read_time_s", "acc_mean", "acc_std"])
    print(f"Wrote {len(records)} record(s) and drift_curve.csv to {out_dir}")
    return EXIT_OK


def cmd_describe(args: argparse.Namespace, cfg: EngineConfig) -> int:
    name, arch, task = resolve_architecture(args.arch, cfg.task.to_task())
    print(format_arch_detailed(arch, name, cfg.rpu, task.input_shape, task.num_classes))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("thresholds must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML engine config")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                        help="Override a dotted config key, e.g. search.t_avm=0.05 (repeatable)")
    common.add_argument("--seed", type=int, help="Root seed (config key: seed)")
    common.add_argument("--workers", type=int, help="Worker processes for evaluations")
    common.add_argument("--out", help="Output path (file or directory, per command)")
    common.add_argument("--log-level", default=os.environ.get("DRIFTNAS_LOG_LEVEL", "INFO"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="driftnas", description="Drift-aware architecture search for analog IMC.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", parents=[common], help="Evaluate LHS architectures into an NDJSON dataset")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-surrogate", parents=[common], help="Train the ranking surrogate on a dataset")
    p.add_argument("dataset", help="Dataset NDJSON from gen-dataset")
    p.set_defaults(func=cmd_train_surrogate)

    p = sub.add_parser("search", parents=[common], help="Run the constrained evolutionary search")
    p.add_argument("model", nargs="?", help="Trained surrogate JSON")
    p.add_argument("--oracle", action="store_true", help="Score with the ground-truth backend instead of a model")
    p.add_argument("--sweep-t-avm", type=_float_list, metavar="T1,T2,...",
                   help="Run once per AVM threshold and write sweep.csv")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", parents=[common], help="Evaluate architectures with the ground-truth backend")
    p.add_argument("archs", nargs="+", help="Architecture JSON files or reference names")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("describe", parents=[common], help="Print counts, depth and tiles of an architecture")
    p.add_argument("arch", help="Architecture JSON file or reference name")
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    try:
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except (BudgetUnreachable, ConfigError, InvalidGenome, InvalidArchitecture, SchemaError, ShapeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except TrainError as e:
        print(f"training error: {e}", file=sys.stderr)
        return EXIT_TRAIN
    except InfeasibleSearch as e:
        print(f"infeasible search: {json.dumps(e.diagnostics, sort_keys=True)}", file=sys.stderr)
        return EXIT_INFEASIBLE
