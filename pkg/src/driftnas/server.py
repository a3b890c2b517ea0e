"""driftnas MCP server: architecture counting, sampling, evaluation and search as tools.

Output is concise by default (one line per architecture); list tools take a
`limit`. Tools never raise to the client: bad input comes back as a short
error string.
"""

from __future__ import annotations

import functools
import json
import logging
import os
from pathlib import Path
from typing import Annotated

from fastmcp import FastMCP
from pydantic import Field

from driftnas.config import EngineConfig, load_config
from driftnas.errors import ConfigError, DriftNasError, InvalidArchitecture
from driftnas.evaluation import evaluate, make_backend
from driftnas.formatters import (
    format_arch_concise,
    format_arch_detailed,
    format_arch_list,
    format_record_concise,
    format_record_detailed,
    format_search_summary,
)
from driftnas.models import DEFAULT_LIMIT, SHORT_ID_LEN
from driftnas.mutation import mutate_traced
from driftnas.sampling import sample_lhs
from driftnas.search import run
from driftnas.seeding import derive_rng
from driftnas.space import Architecture, arch_id, decode, from_dict, param_count
from driftnas.surrogate import OracleSurrogate, Surrogate, SurrogateEnsemble
from driftnas.zoo import ZOO, Task

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Transport configuration
# ---------------------------------------------------------------------------

TRANSPORT = os.environ.get("DRIFTNAS_MCP_TRANSPORT", "stdio")
HTTP_HOST = os.environ.get("DRIFTNAS_MCP_HOST", "127.0.0.1")
HTTP_PORT = int(os.environ.get("DRIFTNAS_MCP_PORT", "8765"))

# Upper bounds for tool-driven searches; larger runs belong to the CLI
MAX_TOOL_POPULATION = 100
MAX_TOOL_GENERATIONS = 100
MAX_TOOL_SAMPLES = 200

# ---------------------------------------------------------------------------
# FastMCP server
# ---------------------------------------------------------------------------

mcp = FastMCP(
    "driftnas",
    instructions=(
        "Drift-aware architecture search for analog in-memory computing. Architectures are passed as a "
        "reference name (see list_reference_architectures) or a JSON object string. Start with "
        "search_space_summary and describe_architecture; evaluate_architecture and run_search are slower."
    ),
)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


@functools.cache
def _engine() -> EngineConfig:
    """Engine config from $DRIFTNAS_CONFIG (if set) plus DRIFTNAS_* env overrides."""
    return load_config(os.environ.get("DRIFTNAS_CONFIG") or None)


def _parse_arch(ref: str) -> tuple[str, Architecture, Task]:
    """Reference name or JSON object string."""
    ref = ref.strip()
    if ref in ZOO:
        entry = ZOO[ref]
        return ref, entry.arch, entry.task
    try:
        data = json.loads(ref)
    except json.JSONDecodeError:
        raise InvalidArchitecture(f"{ref[:40]!r} is neither a reference name nor JSON") from None
    if not isinstance(data, dict):
        raise InvalidArchitecture("architecture JSON must be an object")
    return "", from_dict(data, _engine().space), _engine().task.to_task()


def _model_file(model_path: str, cfg: EngineConfig) -> Path:
    """Surrogate path, which must lie inside the engine's output_dir."""
    root = Path(cfg.output_dir).resolve()
    path = Path(model_path).resolve()
    if not path.is_relative_to(root):
        raise ConfigError("model_path", f"{model_path} is outside output_dir {root}")
    return path


def _surrogate(model_path: str, cfg: EngineConfig) -> Surrogate:
    if model_path:
        return SurrogateEnsemble.load(_model_file(model_path, cfg))
    task = cfg.task.to_task()
    backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
    return OracleSurrogate(backend, cfg.rpu, cfg.backend.n_trials, cfg.search_seed())


# ---------------------------------------------------------------------------
# Architecture tools
# ---------------------------------------------------------------------------


@mcp.tool
def describe_architecture(
    arch: Annotated[str, Field(description="Reference name or architecture JSON object")],
    concise: Annotated[bool, Field(description="One-line output (default: true)")] = True,
) -> str:
    """Parameter count, depth, crossbar weights and tile usage of one architecture."""
    try:
        name, a, task = _parse_arch(arch)
    except DriftNasError as e:
        return f"Invalid architecture: {e}"
    if concise:
        return format_arch_concise(a, name, task.input_shape, task.num_classes)
    return format_arch_detailed(a, name, _engine().rpu, task.input_shape, task.num_classes)


@mcp.tool
def decode_genome(
    genome: Annotated[list[float], Field(description="28 numbers: OC0 KS0 M, then R B CT WF ST per main block")],
) -> str:
    """Decode a numeric genome (unused block slots are -1; CT is 0..3 for A..D)."""
    try:
        a = decode(genome, _engine().space)
    except (DriftNasError, ValueError) as e:
        return f"Invalid genome: {e}"
    return a.to_json()


@mcp.tool
def list_reference_architectures(
    concise: Annotated[bool, Field(description="One-line-per-item output (default: true)")] = True,
) -> str:
    """Published final architectures per task plus the 16-channel ResNet-32 fixture."""
    lines = []
    for name, entry in ZOO.items():
        shape, classes = entry.task.input_shape, entry.task.num_classes
        if concise:
            lines.append(f"{entry.task.name}: " + format_arch_concise(entry.arch, name, shape, classes))
        else:
            text = format_arch_detailed(entry.arch, name, _engine().rpu, shape, classes)
            lines.append(text + (f"\nNote: {entry.note}" if entry.note else ""))
    return ("\n" if concise else "\n---\n").join(lines)


@mcp.tool
def search_space_summary() -> str:
    """Ranges of every searchable dimension and the number of distinct architectures."""
    space = _engine().space
    dims = [f"{name}: {list(space.values(name))}" for name in ("ks0", "ct", "st")]
    ranges = [f"{name}: {getattr(space, name)[0]}..{getattr(space, name)[1]}" for name in ("oc0", "m", "r", "b", "wf")]
    return "\n".join([*ranges, *dims, f"cardinality: {space.cardinality():,}"])


@mcp.tool
def sample_architectures(
    n: Annotated[int, Field(description="Number of Latin-hypercube samples", ge=1, le=MAX_TOOL_SAMPLES)] = 5,
    seed: Annotated[int, Field(description="Sampling seed")] = 0,
    t_p: Annotated[float | None, Field(description="Keep parameter count below this (optional)")] = None,
    concise: Annotated[bool, Field(description="One-line-per-item output (default: true)")] = True,
    limit: Annotated[int, Field(description="Max items to return (default: 10)")] = DEFAULT_LIMIT,
) -> str:
    """Stratified random architectures covering every dimension evenly."""
    cfg = _engine()
    task = cfg.task.to_task()
    try:
        archs = sample_lhs(n, seed, t_p, cfg.space, task.input_shape, task.num_classes)
    except (DriftNasError, ValueError) as e:
        return f"Sampling failed: {e}"
    return format_arch_list(archs, concise, limit, None, task.input_shape, task.num_classes)


@mcp.tool
def mutate_architecture(
    arch: Annotated[str, Field(description="Reference name or architecture JSON object")],
    seed: Annotated[int, Field(description="Mutation seed")] = 0,
    t_p: Annotated[float | None, Field(description="Parameter budget for the child (optional)")] = None,
) -> str:
    """One search mutation of an architecture; returns the mutations applied and the child JSON."""
    try:
        _, a, task = _parse_arch(arch)
    except DriftNasError as e:
        return f"Invalid architecture: {e}"
    cfg = _engine()
    try:
        outcome = mutate_traced(
            a, cfg.search.mutation_probs, t_p, derive_rng(seed, "mutate"), cfg.space, task.input_shape, task.num_classes
        )
    except DriftNasError as e:
        return f"Mutation failed: {e}"
    applied = ",".join(outcome.applied) or "none"
    params = param_count(outcome.child, task.input_shape, task.num_classes)
    return f"Applied: {applied} | params:{params:,}\n{outcome.child.to_json()}"


# ---------------------------------------------------------------------------
# Evaluation and search tools
# ---------------------------------------------------------------------------


@mcp.tool
def evaluate_architecture(
    arch: Annotated[str, Field(description="Reference name or architecture JSON object")],
    n_trials: Annotated[int, Field(description="Independent programming trials", ge=1, le=50)] = 5,
    seed: Annotated[int, Field(description="Evaluation seed")] = 0,
    concise: Annotated[bool, Field(description="One-line output (default: true)")] = True,
) -> str:
    """Accuracy at 1 s, 1 day and 1 month under PCM drift, with 1-day mean/std and AVM."""
    try:
        name, a, task = _parse_arch(arch)
    except DriftNasError as e:
        return f"Invalid architecture: {e}"
    cfg = _engine()
    backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
    try:
        rec = evaluate(a, cfg.rpu, backend, n_trials, seed)
    except DriftNasError as e:
        return f"Evaluation failed: {e}"
    prefix = f"{name}: " if name else ""
    return prefix + (format_record_concise(rec) if concise else format_record_detailed(rec))


@mcp.tool
def predict_architectures(
    model_path: Annotated[str, Field(description="Trained surrogate JSON inside the engine output_dir")],
    archs: Annotated[list[str], Field(description="Reference names or architecture JSON objects")],
    limit: Annotated[int, Field(description="Max items to return (default: 10)")] = DEFAULT_LIMIT,
) -> str:
    """Surrogate score, predicted AVM and std per architecture, best score first."""
    try:
        model = SurrogateEnsemble.load(_model_file(model_path, _engine()))
        parsed = [_parse_arch(ref)[1] for ref in archs]
    except (DriftNasError, OSError) as e:
        return f"Prediction failed: {e}"
    if not parsed:
        return "No architectures."
    pred = model.predict(parsed, _engine().rpu)
    rows = sorted(
        zip(parsed, pred.scores, pred.avm, pred.std, strict=True), key=lambda r: (-r[1], arch_id(r[0]))
    )
    lines = [
        f"[{arch_id(a)[:SHORT_ID_LEN]}] score {s:.4f} | avm {v:+.4f} | std {d:.4f}" for a, s, v, d in rows[:limit]
    ]
    if len(rows) > limit:
        lines.append(f"… {len(rows) - limit} more (use limit= to see more)")
    return "\n".join(lines)


@mcp.tool
def run_search(
    model_path: Annotated[str, Field(description="Surrogate JSON in output_dir; empty = use the ground truth")] = "",
    population_size: Annotated[int, Field(description="Even population size", ge=2, le=MAX_TOOL_POPULATION)] = 20,
    n_iterations: Annotated[int, Field(description="Generations", ge=0, le=MAX_TOOL_GENERATIONS)] = 20,
    t_p: Annotated[float | None, Field(description="Parameter threshold (optional)")] = None,
    t_avm: Annotated[float | None, Field(description="AVM threshold (default: 0.10)")] = 0.10,
    seed: Annotated[int, Field(description="Search seed")] = 0,
) -> str:
    """Small constrained evolutionary search; returns the best architecture and its feasibility."""
    cfg = _engine()
    try:
        search_cfg = cfg.search.model_copy(update={
            "population_size": population_size + population_size % 2,
            "n_iterations": n_iterations,
            "t_p": t_p,
            "t_avm": t_avm,
            "seed": seed,
            "verify_top_k": min(cfg.search.verify_top_k, 3),
        })
        model = _surrogate(model_path, cfg)
        task = cfg.task.to_task()
        backend = make_backend(cfg.backend, task.input_shape, task.num_classes)
        result = run(search_cfg, model, backend, cfg.search_context(), seed=seed)
    except (DriftNasError, OSError) as e:
        return f"Search failed: {e}"
    return format_search_summary(result, task.input_shape, task.num_classes) + "\n" + result.best_architecture.to_json()


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main():
    """Main entry point for the driftnas MCP server."""
    logging.basicConfig(level=os.environ.get("DRIFTNAS_LOG_LEVEL", "INFO"))
    if TRANSPORT == "http":
        logger.info("Starting HTTP transport on %s:%s", HTTP_HOST, HTTP_PORT)
        mcp.run(transport="http", host=HTTP_HOST, port=HTTP_PORT)
    else:
        mcp.run()

