"""Benchmark objectives, looked up by name."""

from __future__ import annotations

import importlib
from typing import Callable

from .base import InfeasiblePointError, Objective
from .hydrogen import TableOracle, hydrogen_objective, hydrogen_space, synthetic_her
from .petanque import PetanqueConstants, SimulationError, petanque_objective, petanque_score, petanque_simulate
from .synthetic import ackley, ackley_objective, branin, branin_objective, levy, levy_objective

REGISTRY: dict[str, Callable[[], Objective]] = {
    "branin": branin_objective,
    "levy10": levy_objective,
    "ackley15": ackley_objective,
    "petanque": petanque_objective,
    "hydrogen": hydrogen_objective,
}


def register_objective(name: str, factory: Callable[[], Objective]) -> None:
    REGISTRY[name] = factory


def get_objective(name: str) -> Objective:
    """Build a registered objective, or import one given as ``module:factory``."""
    if name in REGISTRY:
        return REGISTRY[name]()
    if ":" in name:
        module, attr = name.split(":", 1)
        obj = getattr(importlib.import_module(module), attr)()
        if not isinstance(obj, Objective):
            raise TypeError(f"{name} did not return an Objective")
        return obj
    raise KeyError(f"unknown objective {name!r}; known: {', '.join(sorted(REGISTRY))}")


__all__ = [
    "REGISTRY", "InfeasiblePointError", "Objective", "PetanqueConstants", "SimulationError",
    "TableOracle", "ackley", "ackley_objective", "branin", "branin_objective", "get_objective",
    "hydrogen_objective", "hydrogen_space", "levy", "levy_objective", "petanque_objective",
    "petanque_score", "petanque_simulate", "register_objective", "synthetic_her",
]
