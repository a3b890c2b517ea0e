"""Human-readable and tabular renderings of architectures, records and results.

Two modes, as for every text output of the CLI and the tool server:
  - concise (default): one line per item.
  - detailed: multi-line with counts, tiles and per-time accuracies.

CSV rows are plain dicts; :func:`write_csv` writes them with a header row.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING, Any

from driftnas.evaluation import EvalRecord
from driftnas.imc import RpuConfig
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES, SHORT_ID_LEN
from driftnas.space import (
    Architecture,
    Counting,
    InputShape,
    arch_id,
    conv_count,
    depth,
    layer_matrices,
    param_count,
    tile_count,
    tile_utilization,
)

if TYPE_CHECKING:
    from driftnas.search import SearchResult

# ---------------------------------------------------------------------------
# Genome table rows: OC0, KS0, M, then one value per main block
# ---------------------------------------------------------------------------


def _joined(values: Sequence[Any]) -> str:
    return ",".join(str(v) for v in values)


def genome_row(arch: Architecture) -> dict[str, Any]:
    """Architecture as a table row: OC0 KS0 M R* B* CT* WF* ST*."""
    return {
        "OC0": arch.oc0,
        "KS0": arch.ks0,
        "M": arch.m,
        "R*": _joined(b.r for b in arch.blocks),
        "B*": _joined(b.b for b in arch.blocks),
        "CT*": _joined(b.ct for b in arch.blocks),
        "WF*": _joined(b.wf for b in arch.blocks),
        "ST*": _joined(int(b.st) for b in arch.blocks),
    }


def architecture_row(
    arch: Architecture,
    name: str = "",
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> dict[str, Any]:
    """Genome row plus identity and size columns, for CSV export."""
    return {
        "name": name,
        "arch_id": arch_id(arch),
        **genome_row(arch),
        "depth": depth(arch),
        "params": param_count(arch, input_shape, num_classes),
        "weights": param_count(arch, input_shape, num_classes, counting=Counting.CROSSBAR),
    }


# ---------------------------------------------------------------------------
# Concise formatters: one line per item
# ---------------------------------------------------------------------------


def format_arch_concise(
    arch: Architecture,
    name: str = "",
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> str:
    """Single line: name [short_id] | OC0=.. KS0=.. M=.. | R=.. B=.. CT=.. WF=.. | params:N depth:D."""
    row = genome_row(arch)
    head = f"{name} [{arch_id(arch)[:SHORT_ID_LEN]}]" if name else f"[{arch_id(arch)[:SHORT_ID_LEN]}]"
    parts = [
        head,
        f"OC0={row['OC0']} KS0={row['KS0']} M={row['M']}",
        f"R={row['R*']} B={row['B*']} CT={row['CT*']} WF={row['WF*']}",
    ]
    if any(b.st for b in arch.blocks):
        parts.append(f"ST={row['ST*']}")
    parts.append(f"params:{param_count(arch, input_shape, num_classes):,} depth:{depth(arch)}")
    return " | ".join(parts)


def format_record_concise(record: EvalRecord) -> str:
    """Single line: [short_id] acc@1d mean±std | avm | trials."""
    return (
        f"[{record.arch_id[:SHORT_ID_LEN]}] acc@1d {record.acc_1day_mean:.4f}±{record.acc_1day_std:.4f}"
        f" | avm {record.avm:+.4f} | trials:{record.n_trials} | {record.backend}"
    )


# ---------------------------------------------------------------------------
# Detailed formatters: multi-line
# ---------------------------------------------------------------------------


def format_arch_detailed(
    arch: Architecture,
    name: str = "",
    rpu: RpuConfig | None = None,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> str:
    rpu = rpu or RpuConfig()
    layers = layer_matrices(arch, input_shape, num_classes)
    lines = []
    if name:
        lines.append(f"Name: {name}")
    lines.append(f"ID: {arch_id(arch)}")
    lines.append("Genome: " + " ".join(f"{k}={v}" for k, v in genome_row(arch).items()))
    lines.append(f"Input: {'x'.join(str(d) for d in input_shape)}, {num_classes} classes")
    lines.append(f"Depth: {depth(arch)} ({conv_count(arch, input_shape)} convolutions incl. projections)")
    lines.append(f"Parameters: {param_count(arch, input_shape, num_classes):,} trainable")
    lines.append(f"Crossbar weights: {param_count(arch, input_shape, num_classes, counting=Counting.CROSSBAR):,}")
    lines.append(
        f"Tiles ({rpu.tile_size}x{rpu.tile_size}, {rpu.mapping}): {tile_count(layers, rpu.tile_size, rpu.mapping)}"
        f", utilization {tile_utilization(layers, rpu.tile_size, rpu.mapping):.1%}"
    )
    return "\n".join(lines)


def format_record_detailed(record: EvalRecord) -> str:
    lines = [
        f"Architecture: {record.arch_id}",
        f"Backend: {record.backend} (seed {record.seed}, {record.n_trials} trials, rpu {record.rpu_id})",
        f"1-day accuracy: {record.acc_1day_mean:.4f} ± {record.acc_1day_std:.4f}",
        f"AVM (1 s - 1 month): {record.avm:+.4f}",
        "Accuracy by time:",
    ]
    for k, t in enumerate(record.times):
        column = [trial[k] for trial in record.acc]
        read = max(t, record.t0)
        note = f" (read at t0={record.t0:g}s)" if read != t else ""
        lines.append(f"  t={t:>10g}s  mean {sum(column) / len(column):.4f}{note}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# List formatters
# ---------------------------------------------------------------------------


def format_arch_list(
    archs: Sequence[Architecture],
    concise: bool = True,
    limit: int = 10,
    names: Sequence[str] | None = None,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> str:
    """Format a list of architectures with a count header when truncated."""
    total = len(archs)
    shown = list(archs[:limit])
    if not shown:
        return "No architectures."
    labels = list(names or [""] * total)
    if concise:
        result = "\n".join(
            format_arch_concise(a, n, input_shape, num_classes) for a, n in zip(shown, labels, strict=False)
        )
    else:
        blocks = [
            format_arch_detailed(a, n, None, input_shape, num_classes) for a, n in zip(shown, labels, strict=False)
        ]
        return f"Showing {len(shown)}/{total} architectures\n\n" + "\n---\n".join(blocks)
    if total > len(shown):
        result += f"\n… {total - len(shown)} more (use limit= to see more)"
    return result


def format_search_summary(
    result: SearchResult,
    input_shape: InputShape = DEFAULT_INPUT_SHAPE,
    num_classes: int = DEFAULT_NUM_CLASSES,
) -> str:
    """Best architecture row, feasibility check, generations and wall time of a SearchResult."""
    best = result.best_architecture
    pred = result.best_prediction
    cfg = result.config
    lines = [
        "Best architecture:",
        "  " + format_arch_concise(best, "", input_shape, num_classes),
        f"  predicted score {pred.score:.4f}, AVM {pred.avm:+.4f}, std {pred.std:.4f}",
    ]
    t_p, t_avm = cfg.get("t_p"), cfg.get("t_avm")
    lines.append(
        f"Constraints: params {pred.params:,} < {t_p if t_p is not None else 'inf'}"
        f" | predicted AVM {pred.avm:+.4f} < {t_avm if t_avm is not None else 'inf'}"
        f" | feasible: {'yes' if pred.feasible else 'no'}"
    )
    if result.best_record is not None:
        rec = result.best_record
        status = "verified" if result.verified else "NOT verified"
        lines.append(
            f"Ground truth ({status}): acc@1d {rec.acc_1day_mean:.4f}±{rec.acc_1day_std:.4f}, AVM {rec.avm:+.4f}"
        )
    lines.append(
        f"Generations: {result.generations} (stopped by {result.stopped_by}), wall time {result.wall_time:.1f}s"
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_csv(path: str | Path, rows: Sequence[dict[str, Any]], fieldnames: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(fieldnames or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path
