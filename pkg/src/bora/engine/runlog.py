"""Run logs: a header line, one line per step and a footer, as JSON Lines."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, allow_nan=True)


def atomic_write(path, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


@dataclass
class RunLog:
    header: dict
    steps: list[dict] = field(default_factory=list)
    footer: dict = field(default_factory=lambda: {"status": "running"})

    @property
    def status(self) -> str:
        return self.footer.get("status", "running")

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    @property
    def values(self) -> np.ndarray:
        """Objective values in evaluation order."""
        return np.array([v for s in self.steps for v in s["values"]], dtype=float)

    @property
    def points(self) -> list[list[float]]:
        return [p for s in self.steps for p in s["points"]]

    @property
    def n_samples(self) -> int:
        return sum(len(s["values"]) for s in self.steps)

    @property
    def y_max_per_step(self) -> list[float]:
        return [s["y_max"] for s in self.steps]

    @property
    def report(self) -> dict:
        return self.footer.get("report") or {}

    def to_jsonl(self) -> str:
        lines = [dumps({"type": "header", **self.header})]
        lines += [dumps({"type": "step", **s}) for s in self.steps]
        lines.append(dumps({"type": "footer", **self.footer}))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        atomic_write(path, self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "RunLog":
        header, steps, footer = None, [], None
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type", None)
            if kind == "header":
                header = rec
            elif kind == "step":
                steps.append(rec)
            elif kind == "footer":
                footer = rec
            else:
                raise ValueError(f"unknown record type {kind!r}")
        if header is None:
            raise ValueError("run log has no header")
        return cls(header, steps, footer if footer is not None else {"status": "truncated"})

    @classmethod
    def read(cls, path) -> "RunLog":
        return cls.from_jsonl(Path(path).read_text())

    def report_markdown(self) -> str:
        rep = self.report
        title = self.header.get("objective", "run")
        parts = [f"# Optimization report: {title}", "",
                 f"Method: {self.header.get('method')}. Samples evaluated: {self.n_samples}. "
                 f"Best value: {self.footer.get('y_max')}.", ""]
        for key in ("summary", "conclusion"):
            if key in rep:
                parts += [f"## {key.capitalize()}", "", rep[key].strip(), ""]
        return "\n".join(parts)
