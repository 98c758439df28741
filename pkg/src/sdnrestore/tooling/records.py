"""Reader/writer for the sectioned key=value record format used by case
and plan files.

A file is a sequence of lines::

    # comment
    [section]            or  [section argument]
    key = value          (settings)
    kind k=v k=v ...     (records)

Values never contain whitespace or ``=``.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field


@dataclass
class Located:
    """A value together with where it was read from."""

    value: str
    line: int
    col: int


@dataclass
class Record:
    kind: str
    fields: dict[str, Located]
    line: int
    col: int


@dataclass
class Section:
    name: str
    arg: str
    line: int
    settings: dict[str, Located] = field(default_factory=dict)
    records: list[Record] = field(default_factory=list)


@dataclass(frozen=True)
class FormatIssue:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class FormatError(ValueError):
    def __init__(self, issues: list[FormatIssue]):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


def read_sections(text: str) -> tuple[list[Section], list[FormatIssue]]:
    sections: list[Section] = []
    issues: list[FormatIssue] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        indent = len(stripped) - len(stripped.lstrip())
        body = stripped.strip()
        if body.startswith("["):
            if not body.endswith("]"):
                issues.append(FormatIssue(lineno, indent + 1, "unterminated section header"))
                continue
            parts = body[1:-1].split()
            if not parts:
                issues.append(FormatIssue(lineno, indent + 1, "empty section header"))
                continue
            current = Section(parts[0], " ".join(parts[1:]), lineno)
            sections.append(current)
            continue
        if current is None:
            issues.append(FormatIssue(lineno, indent + 1, "content before first section"))
            continue
        tokens = _tokens(stripped)
        if len(tokens) >= 2 and tokens[1][0] == "=":
            if len(tokens) != 3:
                issues.append(FormatIssue(lineno, indent + 1, "malformed setting"))
                continue
            key, value, col = tokens[0][0], tokens[2][0], tokens[2][1]
            if key in current.settings:
                issues.append(FormatIssue(lineno, indent + 1, f"duplicate setting {key!r}"))
                continue
            current.settings[key] = Located(value, lineno, col)
            continue
        kind, kcol = tokens[0]
        if "=" in kind:
            issues.append(FormatIssue(lineno, kcol, "record must start with its kind"))
            continue
        fields: dict[str, Located] = {}
        for tok, col in tokens[1:]:
            key, sep, value = tok.partition("=")
            if not sep or not key or not value:
                issues.append(FormatIssue(lineno, col, f"expected key=value, got {tok!r}"))
                continue
            if key in fields:
                issues.append(FormatIssue(lineno, col, f"duplicate field {key!r}"))
                continue
            fields[key] = Located(value, lineno, col + len(key) + 1)
        current.records.append(Record(kind, fields, lineno, kcol))
    return sections, issues


def _tokens(line: str) -> list[tuple[str, int]]:
    out, i = [], 0
    while i < len(line):
        if line[i].isspace():
            i += 1
            continue
        j = i
        while j < len(line) and not line[j].isspace():
            j += 1
        out.append((line[i:j], i + 1))
        i = j
    return out


def fmt_number(x) -> str:
    """Shortest text that reads back to the same float (ints without a point)."""
    if isinstance(x, bool):
        return "1" if x else "0"
    x = float(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_record(kind: str, fields: list[tuple[str, object]]) -> str:
    parts = [kind]
    for key, value in fields:
        if value is None:
            continue
        if isinstance(value, (int, float, bool)):
            text = fmt_number(value)
        else:
            text = str(value)
        parts.append(f"{key}={text}")
    return " ".join(parts)


class FieldReader:
    """Typed access to a record's fields that logs issues instead of raising."""

    def __init__(self, record: Record, issues: list[FormatIssue], allowed: set[str]):
        self.record = record
        self.issues = issues
        for key, loc in record.fields.items():
            if key not in allowed:
                issues.append(FormatIssue(loc.line, loc.col - len(key) - 1,
                                          f"unknown field {key!r} for {record.kind}"))

    def _missing(self, key):
        self.issues.append(FormatIssue(self.record.line, self.record.col,
                                       f"{self.record.kind} record missing field {key!r}"))

    def text(self, key, default=...):
        loc = self.record.fields.get(key)
        if loc is None:
            if default is ...:
                self._missing(key)
                return None
            return default
        return loc.value

    def number(self, key, default=...):
        loc = self.record.fields.get(key)
        if loc is None:
            if default is ...:
                self._missing(key)
                return None
            return default
        try:
            value = float(loc.value)
        except ValueError:
            self.issues.append(FormatIssue(loc.line, loc.col, f"{key}: not a number: {loc.value!r}"))
            return None
        if not math.isfinite(value):
            self.issues.append(FormatIssue(loc.line, loc.col, f"{key}: must be finite"))
            return None
        return value

    def flag(self, key, default=...):
        loc = self.record.fields.get(key)
        if loc is None:
            if default is ...:
                self._missing(key)
                return None
            return default
        if loc.value not in ("0", "1"):
            self.issues.append(FormatIssue(loc.line, loc.col, f"{key}: expected 0 or 1"))
            return None
        return loc.value == "1"

    def items(self, key, default=()):
        loc = self.record.fields.get(key)
        if loc is None:
            return tuple(default)
        if loc.value == "-":
            return ()
        return tuple(loc.value.split(","))


def atomic_write(path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
