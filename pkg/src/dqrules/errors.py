"""Exception and diagnostic types shared by all modules."""

from __future__ import annotations

import json
from dataclasses import dataclass


class DQError(Exception):
    """Base class for every error raised by this package."""


class ModelError(DQError):
    """An input document could not be turned into a model.

    ``line``/``column`` locate syntax errors; ``path`` locates semantic errors
    inside a structured document (e.g. ``processes[2].inputs[0]``).
    """

    def __init__(
        self,
        message: str,
        *,
        line: int | None = None,
        column: int | None = None,
        path: str | None = None,
        source: str | None = None,
    ):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.source:
            where.append(self.source)
        if self.line is not None:
            where.append(f"line {self.line}")
            if self.column is not None:
                where.append(f"column {self.column}")
        if self.path:
            where.append(self.path)
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message


class DataError(DQError):
    """Snapshot or change-log content does not match the schema."""


class AnalysisError(DQError):
    """A rule cannot be evaluated against the supplied data."""


@dataclass(frozen=True, order=True)
class Diagnostic:
    code: str
    message: str
    element: str = ""

    def __str__(self) -> str:
        if self.element:
            return f"[{self.code}] {self.element}: {self.message}"
        return f"[{self.code}] {self.message}"


def load_json_document(text: str, what: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{what}: {exc.msg}", line=exc.lineno, column=exc.colno) from None


def check_keys(obj: object, path: str, required: set[str], optional: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path=path)
    unknown = set(obj) - required - set(optional)
    if unknown:
        raise ModelError(f"unknown key(s): {', '.join(sorted(unknown))}", path=path)
    missing = required - set(obj)
    if missing:
        raise ModelError(f"missing key(s): {', '.join(sorted(missing))}", path=path)
    return obj


def expect_str(value: object, path: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ModelError("expected a non-empty string", path=path)
    return value


def expect_str_list(value: object, path: str) -> list[str]:
    if not isinstance(value, list):
        raise ModelError("expected a list of strings", path=path)
    return [expect_str(v, f"{path}[{i}]") for i, v in enumerate(value)]


def expect_pair_list(value: object, path: str) -> list[tuple[str, str]]:
    if not isinstance(value, list):
        raise ModelError("expected a list of pairs", path=path)
    pairs = []
    for i, item in enumerate(value):
        if not isinstance(item, list) or len(item) != 2:
            raise ModelError("expected a two-element list", path=f"{path}[{i}]")
        pairs.append((expect_str(item[0], f"{path}[{i}][0]"), expect_str(item[1], f"{path}[{i}][1]")))
    return pairs
