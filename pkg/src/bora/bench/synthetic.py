"""Negated textbook test functions, so every benchmark is a maximization.

Best values in this convention: Branin -0.397887 (three maximizers), Levy 0 at
(1, ..., 1), Ackley 0 at the origin.
"""

from __future__ import annotations

import numpy as np

from ..core import ExperimentCard, SearchSpace, Variable
from .base import Objective

BRANIN_BEST = -0.39788735772973816
BRANIN_MAXIMIZERS = ((-np.pi, 12.275), (np.pi, 2.275), (9.42478, 2.475))


def branin(p) -> float:
    x0, x1 = float(p[0]), float(p[1])
    b = 5.1 / (4 * np.pi ** 2)
    c = 5 / np.pi
    t = 1 / (8 * np.pi)
    return -((x1 - b * x0 ** 2 + c * x0 - 6) ** 2 + 10 * (1 - t) * np.cos(x0) + 10)


def levy(p) -> float:
    w = 1 + (np.asarray(p, dtype=float) - 1) / 4
    head = np.sin(np.pi * w[0]) ** 2
    mid = np.sum((w[:-1] - 1) ** 2 * (1 + 10 * np.sin(np.pi * w[:-1] + 1) ** 2))
    tail = (w[-1] - 1) ** 2 * (1 + np.sin(2 * np.pi * w[-1]) ** 2)
    return -float(head + mid + tail)


def ackley(p, a: float = 20.0, b: float = 0.2, c: float = 2 * np.pi) -> float:
    x = np.asarray(p, dtype=float)
    s1 = np.sqrt(np.mean(x ** 2))
    s2 = np.mean(np.cos(c * x))
    return -float(-a * np.exp(-b * s1) - np.exp(s2) + a + np.e)


def _anonymous_card(space: SearchSpace) -> ExperimentCard:
    # the function name is withheld so the LLM cannot recall the optimum
    bounds = ", ".join(f"{v.name} in [{v.lower:g}, {v.upper:g}]" for v in space.variables)
    return ExperimentCard(
        title="Mathematical function",
        description=f"A {space.d}-dimensional mathematical function of continuous inputs. "
                    f"Evaluations are deterministic and noise-free.",
        target_name="f",
        target_description="Value of the mathematical function, to be maximized.",
        space=space,
        context=f"Input bounds: {bounds}.",
    )


def _box(d: int, lo: float, hi: float) -> SearchSpace:
    return SearchSpace([Variable(f"x{i}", lo, hi, description=f"input {i}") for i in range(d)])


def branin_objective() -> Objective:
    space = SearchSpace([Variable("x0", -5.0, 10.0, description="input 0"),
                         Variable("x1", 0.0, 15.0, description="input 1")])
    return Objective("branin", space, branin, _anonymous_card(space), BRANIN_BEST,
                     BRANIN_MAXIMIZERS[1])


def levy_objective(d: int = 10) -> Objective:
    space = _box(d, -10.0, 10.0)
    return Objective(f"levy{d}", space, levy, _anonymous_card(space), 0.0, (1.0,) * d)


def ackley_objective(d: int = 15) -> Objective:
    space = _box(d, -30.0, 20.0)
    return Objective(f"ackley{d}", space, ackley, _anonymous_card(space), 0.0, (0.0,) * d)
