"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can print a
single parseable line (``error: <code>: <message>``).
"""

from __future__ import annotations


class FusionVecError(Exception):
    code = "error"


class InvalidInputError(FusionVecError, ValueError):
    code = "invalid-input"


class ParseError(FusionVecError, ValueError):
    code = "parse-error"

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class IncompleteStoreError(FusionVecError, KeyError):
    code = "incomplete-store"

    def __init__(self, missing: list[tuple[str, str]]):
        self.missing = list(missing)
        shown = ", ".join(f"({r!r},{q!r})" for r, q in self.missing[:20])
        more = f" and {len(self.missing) - 20} more" if len(self.missing) > 20 else ""
        super().__init__(f"missing (ranker, query) ranks: {shown}{more}")

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class UnknownItemError(FusionVecError, KeyError):
    code = "unknown-item"

    def __str__(self) -> str:
        return self.args[0] if self.args else "unknown item"


class IndexLoadError(FusionVecError, OSError):
    code = "index-load"


class ConfigError(FusionVecError, ValueError):
    code = "config"


class ArtifactMismatchError(IndexLoadError):
    code = "artifact-mismatch"


class UsageError(FusionVecError, ValueError):
    code = "usage"
