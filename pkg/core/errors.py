"""
Exception hierarchy shared by every cgc-lab submodule.

The CLI maps these onto exit codes (see core.cli.main).
"""

from dataclasses import MISSING, fields, is_dataclass
from enum import Enum
from typing import List, Optional


class CGCLabError(Exception):
    """Base class for all cgc-lab errors"""


class ShapeMismatchError(CGCLabError, ValueError):
    """An operation received tensors with incompatible shapes"""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        shape_str = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shape_str}")


class GraphError(CGCLabError, RuntimeError):
    """Misuse of the recorded computation graph (stale graph, non-scalar loss)"""


class NonFiniteError(CGCLabError, FloatingPointError):
    """NaN or Inf appeared in a forward or backward pass"""

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"non-finite values produced by {where}")


class DivergenceError(CGCLabError, RuntimeError):
    """Training produced a non-finite loss"""

    def __init__(self, step: int, loss_name: str, detail: str = ""):
        self.step = step
        self.loss_name = loss_name
        message = f"training diverged at step {step}: {loss_name} is not finite"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class CheckpointError(CGCLabError, ValueError):
    """A checkpoint file is corrupt or does not match the model"""

    def __init__(self, message: str, entry: Optional[str] = None):
        self.entry = entry
        if entry is not None:
            message = f"{message} [entry: {entry}]"
        super().__init__(message)


class ConfigError(CGCLabError, ValueError):
    """Configuration failed validation; carries per-field diagnostics"""

    def __init__(self, diagnostics: List[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid configuration: " + "; ".join(self.diagnostics))


def reject_unknown_keys(cls, data, section: str) -> None:
    """Raise ConfigError if `data` has keys that are not fields of dataclass `cls`"""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError([f"{section}: unknown key '{key}'" for key in unknown])


def _fits(value, default) -> bool:
    """Whether a decoded JSON value can fill a field whose default is `default`"""
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int) and not isinstance(default, Enum):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, Enum):
        return isinstance(value, (str, Enum))
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, (list, tuple)):
        if not isinstance(value, (list, tuple)):
            return False
        return not default or all(_fits(item, default[0]) for item in value)
    if is_dataclass(default):
        return isinstance(value, (dict, type(default)))
    return True


def _kind(default) -> str:
    if isinstance(default, Enum):
        return "a string"
    if isinstance(default, (list, tuple)):
        return "a list" + (f" of {_kind(default[0])}" if default else "")
    if is_dataclass(default):
        return "an object"
    names = {bool: "a boolean", int: "an integer", float: "a number", str: "a string"}
    return names.get(type(default), type(default).__name__)


def reject_wrong_types(cls, data, section: str) -> None:
    """
    Raise ConfigError for values whose JSON type cannot fill the field.

    The field default decides the expected kind; integers are accepted
    where numbers are expected, booleans are never taken for numbers.
    """
    if not isinstance(data, dict):
        raise ConfigError([f"{section} must be a JSON object, got {type(data).__name__}"])
    problems = []
    for f in fields(cls):
        if f.name not in data:
            continue
        if f.default is not MISSING:
            default = f.default
        elif f.default_factory is not MISSING:
            default = f.default_factory()
        else:
            continue
        value = data[f.name]
        if not _fits(value, default):
            problems.append(f"{section}.{f.name} must be {_kind(default)}, got {type(value).__name__} {value!r}")
    if problems:
        raise ConfigError(problems)
