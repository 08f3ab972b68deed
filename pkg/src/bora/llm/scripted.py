"""Deterministic stand-in for a chat model, used to build replay fixtures.

:class:`GuidedResponder` answers every task tag with well-formed text. Its
hypotheses are Gaussian perturbations of a target point whose scale shrinks
with every generation, so it behaves like a model that knows roughly where
the optimum is and grows more confident over time.
"""

from __future__ import annotations

import json
import re

import numpy as np

from ..core import SearchSpace
from .prompts import parse_tag

_CANDIDATE = re.compile(r"^Candidate (\d+): (\[.*\])$", re.MULTILINE)
_RESPONSE = re.compile(r"Response 1:\n(.*?)(?:\n\nResponse 2:|\n\nReflect on)", re.DOTALL)


def _last_user(messages) -> str:
    for m in reversed(messages):
        if m["role"] == "user":
            return m["content"]
    return ""


def _task_message(messages):
    """Innermost init/a2/a3 request, looking past consolidate and revise turns."""
    for m in reversed(messages):
        if m["role"] == "user":
            tag = parse_tag(m["content"])
            if tag and tag[0] in ("init", "a2", "a3"):
                return tag, m["content"]
    return None, ""


class GuidedResponder:
    def __init__(self, space: SearchSpace, target, seed: int = 0, initial_scale: float = 0.3,
                 decay: float = 0.6, min_scale: float = 1e-3):
        self.space = space
        self.target = np.asarray(target, dtype=float)
        self.rng = np.random.default_rng(seed)
        self.initial_scale = initial_scale
        self.decay = decay
        self.min_scale = min_scale
        self.generations = 0

    @property
    def scale(self) -> float:
        return max(self.initial_scale * self.decay ** self.generations, self.min_scale)

    def _point(self) -> list[float]:
        width = self.space.upper - self.space.lower
        for _ in range(1000):
            x = self.target + self.scale * width * self.rng.standard_normal(self.space.d)
            x = self.space.snap_to_grid(np.clip(x, self.space.lower, self.space.upper))
            if self.space.contains(x):
                return [float(v) for v in x]
        return [float(v) for v in self.space.sample_uniform(self.rng, 1)[0]]

    def _comment(self, points, note: str) -> str:
        hyps = [{"name": f"Region {i + 1} near the promising basin",
                 "rationale": "Values improve as the inputs move toward this region.",
                 "confidence": "high" if i == 0 else "medium",
                 "points": [p]} for i, p in enumerate(points)]
        return json.dumps({"comment": note, "hypotheses": hyps})

    def __call__(self, messages, temperature=0.7) -> str:
        text = _last_user(messages)
        tag = parse_tag(text)
        kind = tag[0] if tag else None
        if kind == "consolidate":
            m = _RESPONSE.search(text)
            return m.group(1) if m else ""
        if kind in ("overview", "conclusion", "summary"):
            return (f"{kind.capitalize()}: the search concentrated around the most promising basin "
                    f"and the best values were found there.\n")
        found, body = _task_message(messages)
        if found is None:
            return ""
        task, n = found
        if kind != "revise":
            self.generations += 1
        if task == "a3":
            cands = [json.loads(c) for _, c in _CANDIDATE.findall(body)]
            dist = [float(np.sum(((np.asarray(c) - self.target) / (self.space.upper - self.space.lower)) ** 2))
                    for c in cands]
            chosen = [cands[i] for i in np.argsort(dist, kind="stable")[:n]]
            return self._comment(chosen, "Selecting the candidates closest to the promising basin.")
        return self._comment([self._point() for _ in range(n)],
                             "Concentrating the search around the promising basin.")
