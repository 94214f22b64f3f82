"""Exception types and the diagnostic record shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    path: str = ""
    line: int = 0

    def __str__(self) -> str:
        where = f"{self.path}:{self.line}: " if self.path else ""
        return f"{where}[{self.kind}] {self.message}"


class DefectLabError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DefectLabError):
    def __init__(self, path: str, line: int, message: str = "unrecoverable syntax error"):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class ModelCycle(DefectLabError):
    def __init__(self, cycle: list[str]):
        super().__init__("inheritance cycle: " + " -> ".join(cycle))
        self.cycle = cycle


class EmptyRepository(DefectLabError):
    pass


class DiffUnavailable(DefectLabError):
    def __init__(self, commit: str, reason: str = ""):
        super().__init__(f"diff unavailable for {commit}: {reason}".rstrip(": "))
        self.commit = commit


class SnapshotCheckoutFailed(DefectLabError):
    def __init__(self, commit: str, reason: str = ""):
        super().__init__(f"cannot materialize snapshot {commit}: {reason}".rstrip(": "))
        self.commit = commit


class ArityMismatch(DefectLabError):
    pass


class MalformedCsv(DefectLabError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class DegenerateResponse(DefectLabError):
    """The regression response has zero variance, so R^2 is undefined."""


class InsufficientData(DefectLabError):
    pass


class TooFewSamples(DefectLabError):
    pass


class ConfigError(DefectLabError):
    pass
