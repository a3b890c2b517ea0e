"""Exception hierarchy for driftnas.

Every error carries the offending datum as an attribute so callers (the CLI,
the MCP tools) can report it without parsing messages.
"""

from __future__ import annotations

from typing import Any


class DriftNasError(Exception):
    """Base class for all driftnas errors."""


class InvalidGenome(DriftNasError):
    """A genome slot holds a value outside its range."""

    def __init__(self, slot: int, value: float | None, reason: str) -> None:
        self.slot = slot
        self.value = value
        self.reason = reason
        super().__init__(f"slot {slot} (value={value}): {reason}")


class InvalidArchitecture(DriftNasError):
    """An architecture object violates the search-space ranges."""


class InvalidTime(DriftNasError):
    """Drift was requested for a time before the reference read time."""

    def __init__(self, t: float, t0: float) -> None:
        self.t = t
        self.t0 = t0
        super().__init__(f"t={t} s is before t0={t0} s")


class ShapeError(DriftNasError, ValueError):
    """Operand dimensions do not match."""


class EvalError(DriftNasError):
    """A backend failed to evaluate an architecture."""

    def __init__(self, arch_id: str, message: str) -> None:
        self.arch_id = arch_id
        super().__init__(f"{arch_id}: {message}")


class TrainError(DriftNasError):
    """Surrogate training cannot proceed on the given data."""


class SchemaError(DriftNasError):
    """Feature schema of a model does not match the caller's."""

    def __init__(self, expected: Any, got: Any) -> None:
        self.expected = expected
        self.got = got
        super().__init__(f"feature schema mismatch: expected {expected}, got {got}")


class InfeasibleSearch(DriftNasError):
    """No individual ever satisfied both search constraints."""

    def __init__(self, diagnostics: dict[str, Any]) -> None:
        self.diagnostics = diagnostics
        super().__init__(f"no feasible architecture found: {diagnostics}")


class SubspaceTooLarge(DriftNasError):
    def __init__(self, cardinality: int, cap: int) -> None:
        self.cardinality = cardinality
        self.cap = cap
        super().__init__(f"subspace holds {cardinality} architectures, cap is {cap}")


class ConfigError(DriftNasError):
    """Bad engine configuration; `key` is the dotted path of the culprit."""

    def __init__(self, key: str, message: str) -> None:
        self.key = key
        super().__init__(f"{key}: {message}")


class BudgetUnreachable(DriftNasError):
    """Even the smallest reachable architecture has at least t_p parameters."""

    def __init__(self, t_p: float, smallest: int) -> None:
        self.t_p = t_p
        self.smallest = smallest
        super().__init__(f"t_p={t_p} is below the smallest reachable architecture ({smallest} params)")
