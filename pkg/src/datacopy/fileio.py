"""Point files and JSON report documents."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_VERSION = 1


class InputFormatError(ValueError):
    """A point file could not be parsed; the message names the offending line."""


def read_points(path, dim=None):
    """Read a comma-separated point file.

    One point per line; an optional first line starting with ``#`` is a
    header. Blank lines are not allowed.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputFormatError(f"{path}: cannot read file: {exc.strerror or exc}") from exc
    rows = []
    width = dim
    for line_no, line in enumerate(text.splitlines(), start=1):
        if line_no == 1 and line.startswith("#"):
            continue
        fields = line.split(",")
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise InputFormatError(f"{path}:{line_no}: non-numeric field in {line!r}") from None
        if not all(math.isfinite(v) for v in row):
            raise InputFormatError(f"{path}:{line_no}: non-finite value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InputFormatError(f"{path}:{line_no}: expected {width} fields, got {len(row)}")
        rows.append(row)
    if not rows:
        raise InputFormatError(f"{path}: no points")
    return np.asarray(rows, dtype=np.float64)


def format_points(X, header=None):
    X = np.asarray(X, dtype=np.float64)
    lines = [] if header is None else [f"# {header}"]
    lines += [",".join(f"{v:.17g}" for v in row) for row in X]
    return "\n".join(lines) + "\n"


def write_points(path, X, header=None):
    Path(path).write_text(format_points(X, header))


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def array_digest(X):
    return hashlib.sha256(np.ascontiguousarray(X, dtype=np.float64).tobytes()).hexdigest()


@dataclass
class ReportDocument:
    """Structured run record.

    ``timing`` is kept apart from everything else so that two runs with the
    same configuration produce identical :meth:`body` strings.
    """

    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    version: int = REPORT_VERSION
    tool: str = ""

    def __post_init__(self):
        if not self.tool:
            from . import __version__

            self.tool = f"datacopy {__version__}"

    def to_dict(self):
        return {
            "version": self.version,
            "tool": self.tool,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "results": self.results,
            "timing": self.timing,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    def body(self):
        d = self.to_dict()
        d.pop("timing")
        return json.dumps(d, indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            command=d["command"], config=d["config"], seed=d["seed"], inputs=d["inputs"],
            results=d["results"], timing=d["timing"], version=d["version"], tool=d["tool"],
        )

    def write(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.to_json() + "\n")
        tmp.replace(path)
