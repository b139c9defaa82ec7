"""Exception hierarchy for the KAM toolkit.

Each failure class maps to one CLI exit status:
- ConfigValidationError: 2
- ExcisionError: 3 (the frequency was excluded, this is data, not a bug)
- NumericalFailureError: 4
"""

from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple


@dataclass
class ResonantWitness:
    """A small divisor that fell below its non-resonance bound."""
    l: Tuple[int, ...]
    j: int
    k: int
    divisor: float
    bound: float
    a_jk: Optional[complex] = None
    b_ljk: Optional[Tuple[complex, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["l"] = list(self.l)
        if self.a_jk is not None:
            data["a_jk"] = [self.a_jk.real, self.a_jk.imag]
        if self.b_ljk is not None:
            data["b_ljk"] = [[b.real, b.imag] for b in self.b_ljk]
        return data


class KamError(Exception):
    """Base class for all toolkit errors."""


class ConfigValidationError(KamError):
    """Raised when a run configuration fails validation."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        self.message = message
        super().__init__(f"{field_path}: {message}")


class DomainError(KamError, ValueError):
    """Raised when an argument lies outside the domain of an operation."""

    def __init__(self, message: str, index: Any = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (index {index})")


class LipschitzUndefinedError(KamError, ValueError):
    """Raised when a Lipschitz quotient is requested from fewer than two samples."""


class ExcisionError(KamError):
    """Raised when a frequency vector violates a diophantine or Melnikov bound."""

    def __init__(self, message: str, witnesses: Optional[List[ResonantWitness]] = None, stage: str = ""):
        self.witnesses = list(witnesses or [])
        self.stage = stage
        super().__init__(f"{message} ({len(self.witnesses)} witness(es))")


class NumericalFailureError(KamError):
    """Raised when an integrator, a linear solve or an iteration breaks down."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class RunStatus(Enum):
    """Outcome of a pipeline run or a Nash-Moser iteration."""
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    CONVERGED = "CONVERGED"
    MAX_STEPS = "MAX_STEPS"
    EXCLUDED = "EXCLUDED"
    DIVERGED = "DIVERGED"
    FAILED = "FAILED"


class StageStatus(Enum):
    """Outcome of a single stage (reduction step, KAM step, Newton step)."""
    SUCCESS = "SUCCESS"
    WARNING = "WARNING"
    SKIPPED = "SKIPPED"
    FAILED = "FAILED"
