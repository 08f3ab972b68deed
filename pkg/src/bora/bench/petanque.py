"""Single-throw petanque simulator: gravity, quadratic drag and Magnus lift."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import ExperimentCard, SearchSpace, Variable
from .base import Objective

TARGET = (50.0, 0.0, 0.0)
G = 9.81


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PetanqueConstants:
    air_density: float = 1.225  # kg/m^3
    radius: float = 0.037  # m
    drag_coefficient: float = 0.47
    magnus_coefficient: float = 1e-4  # kg, multiplies omega (rad/s) x v (m/s)
    max_time: float = 600.0  # s


PETANQUE_VARIABLES = (
    Variable("pitch", -30.0, 90.0, unit="deg",
             description="Vertical launch angle relative to the ground; 0 is parallel to the ground."),
    Variable("yaw", -180.0, 180.0, unit="deg",
             description="Horizontal aiming angle relative to the target; 0 aims straight at it."),
    Variable("velocity", 0.0, 50.0, unit="m/s", description="Magnitude of the initial velocity."),
    Variable("spin", 0.0, 3000.0, unit="rpm", description="Rotational speed of the ball."),
    Variable("spin_axis", -180.0, 180.0, unit="deg",
             description="Direction of the spin axis in the xy-plane; 0 aligns with +x."),
    Variable("height", 0.0, 2.0, unit="m", description="Height above the ground at release."),
    Variable("mass", 0.01, 10.0, unit="kg", description="Mass of the ball."),
)


def petanque_simulate(params, dt: float = 0.01, drag_on: bool = True, magnus_on: bool = True,
                      constants: PetanqueConstants = PetanqueConstants()) -> tuple[float, float]:
    """Integrate a throw from (0, 0, height) and return the (x, y) landing point.

    ``params`` is (pitch deg, yaw deg, velocity m/s, spin rpm, spin axis deg,
    height m, mass kg). Each step advances position with the current
    acceleration to second order and velocity to first order; the ground
    crossing is linearly interpolated within the final step.
    """
    pitch, yaw, speed, rpm, axis, height, mass = (float(v) for v in params)
    th, ps, ax = math.radians(pitch), math.radians(yaw), math.radians(axis)
    pos = np.array([0.0, 0.0, height])
    vel = speed * np.array([math.cos(th) * math.cos(ps), math.cos(th) * math.sin(ps), math.sin(th)])
    omega = rpm * 2.0 * math.pi / 60.0 * np.array([math.cos(ax), math.sin(ax), 0.0])
    gravity = np.array([0.0, 0.0, -G])
    k_drag = 0.5 * constants.air_density * constants.drag_coefficient * math.pi * constants.radius ** 2 / mass
    k_magnus = constants.magnus_coefficient / mass
    use_magnus = magnus_on and rpm != 0.0

    for _ in range(int(constants.max_time / dt) + 1):
        acc = gravity.copy()
        if drag_on:
            acc -= k_drag * np.linalg.norm(vel) * vel
        if use_magnus:
            acc += k_magnus * np.cross(omega, vel)
        new_pos = pos + vel * dt + 0.5 * acc * dt * dt
        new_vel = vel + acc * dt
        if not (np.all(np.isfinite(new_pos)) and np.all(np.isfinite(new_vel))):
            raise SimulationError("non-finite state during integration")
        if new_pos[2] <= 0.0:
            drop = pos[2] - new_pos[2]
            frac = pos[2] / drop if drop > 0 else 0.0
            land = pos + frac * (new_pos - pos)
            return float(land[0]), float(land[1])
        pos, vel = new_pos, new_vel
    raise SimulationError(f"ball still airborne after {constants.max_time} s")


def petanque_score(landing) -> float:
    x, y = float(landing[0]), float(landing[1])
    dist = math.sqrt((x - TARGET[0]) ** 2 + (y - TARGET[1]) ** 2 + TARGET[2] ** 2)
    return 100.0 * math.exp(-0.2 * dist)


def petanque_objective(constants: PetanqueConstants = PetanqueConstants()) -> Objective:
    space = SearchSpace(PETANQUE_VARIABLES)
    card = ExperimentCard(
        title="Petanque throw",
        description="A single player throws one ball at a fixed target ball lying on flat ground "
                    "50 m straight ahead of the release point. The trajectory is simulated with "
                    "gravity, air drag and the Magnus effect of the ball's spin.",
        target_name="score",
        target_description="100 * exp(-0.2 * distance between the landing point and the target), "
                           "in (0, 100]; higher is better.",
        space=space,
        context="The ball is released from (0, 0, height). The target sits at (50 m, 0, 0).",
    )

    def score(x):
        return petanque_score(petanque_simulate(x, constants=constants))

    return Objective("petanque", space, score, card, 100.0)
