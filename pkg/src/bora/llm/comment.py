"""Comment objects returned by the LLM: parsing and feasibility checks.

Wire format::

    {"comment": str,
     "hypotheses": [{"name": str, "rationale": str,
                     "confidence": "low"|"medium"|"high"|number,
                     "points": [[number, ...]]}]}
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..core import GRID_TOL, Dataset, SearchSpace

CONFIDENCE_LEVELS = {"low": 0.3, "medium": 0.6, "high": 0.9}


class ErrorKind(str, Enum):
    MALFORMED = "MalformedStructure"
    OUT_OF_BOUNDS = "OutOfBounds"
    CONSTRAINT = "ConstraintViolated"
    DUPLICATE = "DuplicatePoint"
    COUNT = "WrongPointCount"
    NOT_CANDIDATE = "NotFromCandidateSet"


@dataclass(frozen=True)
class ValidationError:
    kind: ErrorKind
    detail: str
    hypothesis: int | None = None  # index into Comment.hypotheses, None for comment-level

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "hypothesis": self.hypothesis, "detail": self.detail}


class MalformedCommentError(ValueError):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.error = ValidationError(ErrorKind.MALFORMED, detail)


@dataclass
class Hypothesis:
    name: str
    rationale: str
    confidence: float
    points: list[list[float]]
    confidence_label: str | None = None

    def to_dict(self) -> dict:
        conf = self.confidence_label if self.confidence_label is not None else self.confidence
        return {"name": self.name, "rationale": self.rationale, "confidence": conf, "points": self.points}


@dataclass
class Comment:
    insights: str
    hypotheses: list[Hypothesis]
    raw_text: str = ""
    token_usage: dict = field(default_factory=lambda: {"prompt_tokens": 0, "completion_tokens": 0})

    @property
    def points(self) -> list[list[float]]:
        return [p for h in self.hypotheses for p in h.points]

    def to_wire(self) -> dict:
        return {"comment": self.insights, "hypotheses": [h.to_dict() for h in self.hypotheses]}


_FENCE = re.compile(r"^\s*```(?:json)?\s*\n(.*?)\n\s*```\s*$", re.DOTALL)


def _extract_json(text: str):
    m = _FENCE.match(text)
    body = m.group(1) if m else text
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        first, last = body.find("{"), body.rfind("}")
        if first > 0 and last > first:
            try:
                return json.loads(body[first:last + 1])
            except json.JSONDecodeError:
                pass
        raise MalformedCommentError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_comment(text: str) -> Comment:
    """Strictly parse the wire format. Unknown fields are ignored."""
    doc = _extract_json(text)
    if not isinstance(doc, dict):
        raise MalformedCommentError("top-level value must be an object")
    for key in ("comment", "hypotheses"):
        if key not in doc:
            raise MalformedCommentError(f"missing required field '{key}'")
    if not isinstance(doc["comment"], str):
        raise MalformedCommentError("'comment' must be a string")
    if not isinstance(doc["hypotheses"], list):
        raise MalformedCommentError("'hypotheses' must be a list")
    hyps = []
    for i, h in enumerate(doc["hypotheses"]):
        where = f"hypotheses[{i}]"
        if not isinstance(h, dict):
            raise MalformedCommentError(f"{where} must be an object")
        for key in ("name", "rationale", "confidence", "points"):
            if key not in h:
                raise MalformedCommentError(f"{where}: missing required field '{key}'")
        if not isinstance(h["name"], str) or not isinstance(h["rationale"], str):
            raise MalformedCommentError(f"{where}: 'name' and 'rationale' must be strings")
        conf, label = h["confidence"], None
        if isinstance(conf, str):
            label = conf.strip().lower()
            if label not in CONFIDENCE_LEVELS:
                raise MalformedCommentError(f"{where}: unknown confidence level {conf!r}")
            conf = CONFIDENCE_LEVELS[label]
        elif _is_number(conf) and 0.0 <= conf <= 1.0:
            conf = float(conf)
        else:
            raise MalformedCommentError(f"{where}: confidence must be low/medium/high or in [0, 1]")
        pts = h["points"]
        if not isinstance(pts, list) or not all(isinstance(p, list) for p in pts):
            raise MalformedCommentError(f"{where}: 'points' must be a list of lists")
        for j, p in enumerate(pts):
            if not all(_is_number(v) and math.isfinite(v) for v in p):
                raise MalformedCommentError(f"{where}.points[{j}]: coordinates must be finite numbers")
        hyps.append(Hypothesis(h["name"], h["rationale"], conf, [[float(v) for v in p] for p in pts], label))
    return Comment(doc["comment"], hyps, raw_text=text)


def hypothesis_errors(h: Hypothesis, index: int, space: SearchSpace, dataset: Dataset | None,
                      seen: set, candidate_keys: set | None = None,
                      points_per_hypothesis: int = 1) -> list[ValidationError]:
    """Feasibility errors for one hypothesis. ``seen`` collects keys across the comment."""
    errs = []
    if len(h.points) != points_per_hypothesis:
        errs.append(ValidationError(ErrorKind.COUNT,
                                    f"expected {points_per_hypothesis} point(s), got {len(h.points)}", index))
    for p in h.points:
        if len(p) != space.d:
            errs.append(ValidationError(ErrorKind.MALFORMED,
                                        f"point has {len(p)} coordinates, expected {space.d}", index))
            continue
        x = np.asarray(p, dtype=float)
        bad = [v.name for v, c in zip(space.variables, x) if c < v.lower - GRID_TOL or c > v.upper + GRID_TOL]
        if bad:
            errs.append(ValidationError(ErrorKind.OUT_OF_BOUNDS, f"outside bounds: {', '.join(bad)}", index))
        off = [v.name for v, c in zip(space.variables, x)
               if v.kind == "discrete" and abs(c - (v.lower + round((c - v.lower) / v.step) * v.step)) > GRID_TOL]
        if off:
            errs.append(ValidationError(ErrorKind.CONSTRAINT, f"not on the discretization grid: {', '.join(off)}",
                                        index))
        for c in space.constraints:
            total = sum(x[space.names.index(n)] for n in c.variable_names)
            if total > c.bound + GRID_TOL:
                errs.append(ValidationError(ErrorKind.CONSTRAINT, f"{c.describe()} violated (sum {total:g})", index))
        key = space.canonical_key(x)
        if (dataset is not None and key in dataset.keys) or key in seen:
            errs.append(ValidationError(ErrorKind.DUPLICATE, f"point {p} was already sampled or proposed", index))
        seen.add(key)
        if candidate_keys is not None and key not in candidate_keys:
            errs.append(ValidationError(ErrorKind.NOT_CANDIDATE, f"point {p} is not one of the candidates", index))
    return errs


def validate_comment(comment: Comment, space: SearchSpace, dataset: Dataset | None, mode: str,
                     n_expected: int, candidates=None, points_per_hypothesis: int = 1) -> list[ValidationError]:
    """All feasibility errors of a parsed Comment; an empty list means valid.

    ``mode`` is "suggest" (new points) or "select" (points picked from
    ``candidates``).
    """
    if mode not in ("suggest", "select"):
        raise ValueError(f"unknown validation mode {mode!r}")
    candidate_keys = None
    if mode == "select":
        if candidates is None:
            raise ValueError("select mode needs a candidate set")
        candidate_keys = {space.canonical_key(c) for c in candidates}
    errs: list[ValidationError] = []
    seen: set = set()
    for i, h in enumerate(comment.hypotheses):
        errs.extend(hypothesis_errors(h, i, space, dataset, seen, candidate_keys, points_per_hypothesis))
    if len(comment.hypotheses) != n_expected:
        errs.append(ValidationError(ErrorKind.COUNT,
                                    f"expected {n_expected} hypotheses, got {len(comment.hypotheses)}"))
    return errs
