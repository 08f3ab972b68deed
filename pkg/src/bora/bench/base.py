from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import ExperimentCard, SearchSpace


class InfeasiblePointError(ValueError):
    """An objective was asked to evaluate a point outside its search space."""


@dataclass
class Objective:
    """A black-box function to maximize over ``space``.

    ``fn`` receives a 1-D numpy array ordered like ``space.variables``.
    """

    name: str
    space: SearchSpace
    fn: Callable[[np.ndarray], float]
    card: ExperimentCard
    best_known: float | None = None
    best_point: tuple | None = None  # a known maximizer, when there is one

    def evaluate(self, p) -> float:
        x = np.asarray(p, dtype=float)
        if not self.space.contains(x):
            raise InfeasiblePointError(f"{self.name}: point {x.tolist()} is outside the search space")
        return float(self.fn(x))

    __call__ = evaluate
