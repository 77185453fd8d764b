"""
PhaseGen - Error types

Every error raised on purpose by the library derives from PhaseGenError and
carries a machine-readable category plus the process exit code the CLI uses.
"""

from typing import Any, Dict, Optional


class PhaseGenError(Exception):
    """Base class for all library errors."""
    category = "runtime"
    exit_code = 1

    def to_dict(self) -> Dict[str, Any]:
        return {"category": self.category, "message": str(self)}


class StructuralError(PhaseGenError):
    """Shape, joint count or channel count mismatch."""
    category = "structural"
    exit_code = 3


class ValidationError(PhaseGenError, ValueError):
    """A value violates a documented precondition."""
    category = "validation"
    exit_code = 3


class ConfigError(PhaseGenError, ValueError):
    """Bad configuration: unknown family, impossible hyperparameters, unknown keys."""
    category = "config"
    exit_code = 3


class MotionParseError(PhaseGenError):
    """Malformed Motion JSON or manifest."""
    category = "parse"
    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None,
                 field: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.field = field
        self.line = line
        context = []
        if path:
            context.append(f"file={path}")
        if line is not None:
            context.append(f"line={line}")
        if field:
            context.append(f"field={field}")
        suffix = f" ({', '.join(context)})" if context else ""
        super().__init__(f"{message}{suffix}")

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update({"path": self.path, "field": self.field, "line": self.line})
        return data


class CheckpointError(PhaseGenError):
    """Checkpoint directory is missing files or disagrees with its meta.json."""
    category = "checkpoint"
    exit_code = 3


class DivergenceError(PhaseGenError):
    """Training produced a non-finite loss."""
    category = "divergence"
    exit_code = 1

    def __init__(self, message: str, epoch: int = -1, batch: int = -1,
                 last_finite_loss: Optional[float] = None):
        self.epoch = epoch
        self.batch = batch
        self.last_finite_loss = last_finite_loss
        super().__init__(f"{message} (epoch={epoch}, batch={batch}, "
                         f"last finite loss={last_finite_loss})")


class ExportError(PhaseGenError, OSError):
    """An output path could not be written."""
    category = "io"
    exit_code = 1
