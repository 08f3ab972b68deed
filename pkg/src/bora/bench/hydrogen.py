"""Ten-component photocatalyst mixture: nine liquids in 0.25 mL steps whose
total volume may not exceed 5 mL, plus one solid in 0.2 g steps.

The experimental dataset behind the original oracle is not public, so the
default oracle is a synthetic stand-in (see :func:`synthetic_her`). Any other
oracle can be attached, including a lookup table loaded from JSON Lines.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import ExperimentCard, SearchSpace, SumConstraint, Variable
from .base import Objective

LIQUID_STEP = 0.25
SOLID_STEP = 0.2
VOLUME_LIMIT = 5.0

_VARS = [
    ("acid_red_871", "A dye."),
    ("l_cysteine", "Hole scavenger."),
    ("methylene_blue", "A dye."),
    ("sodium_chloride", "Adjusts ionic strength of the solution."),
    ("sodium_hydroxide", "Controls pH of the reaction."),
    ("p10_mix1", "A conjugated polymer photocatalyst."),
    ("pvp", "Polyvinylpyrrolidone, a surfactant."),
    ("rhodamine_b", "A dye."),
    ("sds", "Sodium dodecyl sulfate, a surfactant."),
    ("sodium_disilicate", "Stabilizes the reaction medium."),
]
SOLID = "p10_mix1"
LIQUIDS = tuple(n for n, _ in _VARS if n != SOLID)


def hydrogen_space() -> SearchSpace:
    variables = []
    for name, desc in _VARS:
        if name == SOLID:
            variables.append(Variable(name, 1.0, 5.0, "discrete", SOLID_STEP, "g", desc))
        else:
            variables.append(Variable(name, 0.0, 5.0, "discrete", LIQUID_STEP, "mL", desc))
    return SearchSpace(variables, [SumConstraint(LIQUIDS, VOLUME_LIMIT)])


# A main and a side Gaussian ridge centred on feasible compositions that lie
# on the 0.5 mL / 1 g coarse grid. The side ridge fades as the main one peaks,
# and a ripple penalty that vanishes on the coarse grid discourages
# quarter-step volumes.
_PEAK_MAIN = np.array([0.0, 2.0, 0.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.0, 0.5])
_WIDTH_MAIN = np.array([0.6, 1.2, 0.6, 0.8, 0.7, 1.5, 2.5, 0.6, 0.9, 1.5])
_PEAK_SIDE = np.array([0.0, 1.0, 0.0, 0.5, 0.5, 2.0, 0.0, 0.5, 1.0, 0.0])
_WIDTH_SIDE = np.array([0.8, 1.0, 0.8, 1.0, 0.8, 1.2, 1.0, 0.8, 1.5, 1.0])
_MAIN_HEIGHT = 25.0
_SIDE_HEIGHT = 15.0
_RIPPLE = 0.1
_LIQ = np.array([n != SOLID for n, _ in _VARS])

SYNTHETIC_PEAK = tuple(float(v) for v in _PEAK_MAIN)
SYNTHETIC_BEST = _MAIN_HEIGHT


def synthetic_her(x) -> float:
    """Synthetic hydrogen evolution rate (umol/h), nonnegative everywhere.

    ``main + side * (1 - main / 25)`` is at most ``15 + 0.4 * main <= 25``,
    with equality only where the main ridge peaks, and the ripple factor is at
    most 1. So the unique global maximum is 25 at :data:`SYNTHETIC_PEAK`
    (2.0 mL L-cysteine, 1.0 mL NaOH, 3.0 g P10-MIX1, 0.5 mL PVP, 0.5 mL sodium
    disilicate).
    """
    x = np.asarray(x, dtype=float)
    main = _MAIN_HEIGHT * np.exp(-0.5 * np.sum(((x - _PEAK_MAIN) / _WIDTH_MAIN) ** 2))
    side = _SIDE_HEIGHT * np.exp(-0.5 * np.sum(((x - _PEAK_SIDE) / _WIDTH_SIDE) ** 2))
    ripple = np.mean(np.sin(2 * np.pi * x[_LIQ]) ** 2)
    return float((main + side * (1.0 - main / _MAIN_HEIGHT)) * (1.0 - _RIPPLE * ripple))


class TableOracle:
    """Nearest-grid lookup over a table of evaluated compositions.

    Queries are snapped to the grid; exact matches return the tabulated value,
    anything else the value of the nearest row in unit-scaled coordinates.
    """

    def __init__(self, space: SearchSpace, X, y):
        self.space = space
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float)
        if len(self.X) != len(self.y) or len(self.y) == 0:
            raise ValueError("table needs matching, nonempty x and y columns")
        self._U = space.to_unit(self.X)
        self._index = {space.canonical_key(row): i for i, row in enumerate(self.X)}

    @classmethod
    def from_jsonl(cls, space: SearchSpace, path) -> "TableOracle":
        X, y = [], []
        for line in Path(path).read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                X.append(rec["x"])
                y.append(rec["y"])
        return cls(space, X, y)

    def __call__(self, x) -> float:
        p = self.space.snap_to_grid(np.asarray(x, dtype=float))
        i = self._index.get(self.space.canonical_key(p))
        if i is None:
            i = int(np.argmin(((self._U - self.space.to_unit(p)) ** 2).sum(1)))
        return float(self.y[i])


def hydrogen_objective(oracle: Callable[[np.ndarray], float] | None = None,
                       best_known: float | None = None) -> Objective:
    space = hydrogen_space()
    best_point = None
    if oracle is None:
        oracle = synthetic_her
        best_known = SYNTHETIC_BEST
        best_point = SYNTHETIC_PEAK
    card = ExperimentCard(
        title="Photocatalytic hydrogen production",
        description="Find the composition of a ten-component aqueous mixture that maximizes the "
                    "hydrogen evolution rate of a conjugated-polymer photocatalyst under illumination.",
        target_name="HER",
        target_description="Hydrogen evolution rate in umol/h, to be maximized.",
        space=space,
        constraints_description="The total volume of the liquid chemicals (all except P10-MIX1, "
                                "which is a solid) must not exceed 5 mL. Liquids are dispensed in "
                                "0.25 mL steps and the solid in 0.2 g steps.",
        context="Experiments are run in a 5 mL reaction vial by an automated robotic platform.",
    )
    return Objective("hydrogen", space, oracle, card, best_known, best_point)
