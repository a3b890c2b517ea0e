"""Engine configuration: defaults < YAML file < DRIFTNAS_* env vars < --set flags.

Environment variables use ``__`` between path segments, e.g.
``DRIFTNAS_SEARCH__T_AVM=0.05`` or ``DRIFTNAS_SEED=3``. Values are parsed as
YAML scalars, so ``null``, ``true`` and ``[256, 512]`` work as expected.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from driftnas.dataset import DatasetConfig
from driftnas.errors import ConfigError
from driftnas.evaluation import BackendConfig
from driftnas.imc import RpuConfig
from driftnas.models import DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES
from driftnas.search import SearchConfig, SearchContext
from driftnas.space import SearchSpace
from driftnas.surrogate import SurrogateHyper
from driftnas.zoo import Task

logger = logging.getLogger(__name__)

ENV_PREFIX = "DRIFTNAS_"


class TaskConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "cifar10"
    input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE
    num_classes: int = Field(default=DEFAULT_NUM_CLASSES, ge=2)

    def to_task(self) -> Task:
        return Task(self.name, self.input_shape, self.num_classes)


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    space: SearchSpace = SearchSpace()
    task: TaskConfig = TaskConfig()
    rpu: RpuConfig = RpuConfig()
    backend: BackendConfig = BackendConfig()
    dataset: DatasetConfig = DatasetConfig()
    surrogate: SurrogateHyper = SurrogateHyper()
    search: SearchConfig = SearchConfig()
    output_dir: str = "runs"
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    def search_seed(self) -> int:
        return self.search.seed if self.search.seed is not None else self.seed

    def search_context(self) -> SearchContext:
        return SearchContext(
            space=self.space,
            task=self.task.to_task(),
            rpu=self.rpu,
            n_trials=self.backend.n_trials,
            workers=self.workers,
        )

    def echo(self) -> dict[str, Any]:
        """Config as written to output files, without the worker count."""
        return self.model_dump(mode="json", exclude={"workers"})


def _assign(data: dict[str, Any], dotted: str, value: Any) -> None:
    keys = [k for k in dotted.split(".") if k]
    if not keys:
        raise ConfigError(dotted, "empty key")
    node = data
    for i, key in enumerate(keys[:-1]):
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(".".join(keys[: i + 1]), "is a value, not a section")
        node = child
    node[keys[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    """Split ``section.key=value``; the value is parsed as YAML."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(item, "override must look like section.key=value")
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(key.strip(), f"unparseable value {raw!r}") from e


def env_overrides(environ: Mapping[str, str]) -> list[tuple[str, Any]]:
    """DRIFTNAS_* variables whose first segment names a config field."""
    out = []
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if dotted.split(".", 1)[0] not in EngineConfig.model_fields:
            continue
        try:
            out.append((dotted, yaml.safe_load(environ[name])))
        except yaml.YAMLError as e:
            raise ConfigError(dotted, f"unparseable value in ${name}") from e
    return out


def read_yaml(path: str | Path) -> dict[str, Any]:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config file: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"invalid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(str(path), "config file must hold a mapping")
    return data


def build_config(data: dict[str, Any]) -> EngineConfig:
    try:
        return EngineConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(loc, err["msg"]) from e


def load_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    environ: Mapping[str, str] | None = None,
) -> EngineConfig:
    """Merge file, environment and flag overrides into a validated EngineConfig."""
    data = read_yaml(path) if path else {}
    for dotted, value in env_overrides(os.environ if environ is None else environ):
        _assign(data, dotted, value)
    for item in overrides:
        _assign(data, *parse_override(item))
    cfg = build_config(data)
    logger.debug("Loaded config (file=%s, seed=%d, workers=%d)", path, cfg.seed, cfg.workers)
    return cfg
