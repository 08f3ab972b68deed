"""Adaptive heuristic policy deciding when and how the LLM intervenes.

The policy tracks three things: GP uncertainty over fixed monitoring points,
whether the best observed value has stalled over the last ``m`` steps, and a
rolling trust score in past LLM interventions that shrinks or widens ``m``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import expit


class Action(str, Enum):
    A1_VanillaBO = "a1"
    A2_LLMSuggest = "a2"
    A3_LLMSelect = "a3"


def m_init_for(d: int) -> int:
    if d < 1:
        raise ValueError("dimensionality must be >= 1")
    return math.ceil(2.0 * math.sqrt(d))


@dataclass(frozen=True)
class PolicyConfig:
    gamma: float = 0.05
    upper_fraction: float = 0.5
    lower_fraction: float = 0.3
    delta_max: int = 15
    trust_init: float = 0.9
    trust_window: int = 3
    m_init: int = 2
    m_min: int = 0
    m_max: int | None = None
    epsilon: float = 1e-6
    q: int = 5000

    def __post_init__(self):
        if self.m_max is None:
            object.__setattr__(self, "m_max", 3 * self.m_init)
        if not 0 < self.lower_fraction < self.upper_fraction <= 1:
            raise ValueError("need 0 < lower_fraction < upper_fraction <= 1")
        if not self.m_min <= self.m_init <= self.m_max:
            raise ValueError("need m_min <= m_init <= m_max")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.trust_window < 1 or self.q < 1:
            raise ValueError("trust_window and q must be >= 1")

    @classmethod
    def for_dimension(cls, d: int, **overrides) -> "PolicyConfig":
        overrides.setdefault("m_init", m_init_for(d))
        return cls(**overrides)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PolicyState:
    config: PolicyConfig
    sigma_mean: float = 0.0
    sigma_max_running: float = 0.0
    sigma_upper: float = 0.0
    sigma_lower: float = 0.0
    m: int = 0
    H: list[float] = field(default_factory=list)
    T_current: float = 0.0
    T_previous: float = 0.0
    ymax_history: list[float] = field(default_factory=list)

    @classmethod
    def initial(cls, config: PolicyConfig) -> "PolicyState":
        return cls(config, m=config.m_init, H=[config.trust_init],
                   T_current=config.trust_init, T_previous=config.trust_init)

    def snapshot(self) -> dict:
        return {
            "sigma_mean": self.sigma_mean,
            "sigma_max": self.sigma_max_running,
            "sigma_upper": self.sigma_upper,
            "sigma_lower": self.sigma_lower,
            "m": self.m,
            "T": self.T_current,
        }

    def copy(self) -> "PolicyState":
        return replace(self, H=list(self.H), ymax_history=list(self.ymax_history))


def update_uncertainty_from_stds(state: PolicyState, stds) -> PolicyState:
    """Fold point-wise monitor stds into the running uncertainty statistics."""
    stds = np.asarray(stds, dtype=float)
    new = state.copy()
    new.sigma_mean = float(stds.mean())
    new.sigma_max_running = max(state.sigma_max_running, float(stds.max()))
    new.sigma_upper = state.config.upper_fraction * new.sigma_max_running
    new.sigma_lower = state.config.lower_fraction * new.sigma_max_running
    return new


def update_uncertainty(state: PolicyState, model, monitor) -> PolicyState:
    from .surrogate import monitor_stds

    return update_uncertainty_from_stds(state, monitor_stds(model, monitor))


def plateau_detected(ymax_history, m: int, gamma: float) -> bool:
    """True when none of the last ``m`` steps improved y_max by a gamma fraction.

    Needs ``m + 1`` history entries; ``m == 0`` is always a plateau.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return True
    h = list(ymax_history)
    if len(h) < m + 1:
        return False
    for j in range(len(h) - m, len(h)):
        prev = h[j - 1]
        if not h[j] < prev * (1.0 + np.sign(prev) * gamma):
            return False
    return True


def select_action(state: PolicyState, plateau: bool) -> Action:
    if state.sigma_mean < state.sigma_lower or not plateau:
        return Action.A1_VanillaBO
    if state.sigma_mean > state.sigma_upper:
        return Action.A2_LLMSuggest
    return Action.A3_LLMSelect


def intervention_score(r: float, y_prev_max: float, epsilon: float = 1e-6) -> float:
    if r > 0:
        return 1.0
    return float(expit(r / (abs(y_prev_max) + epsilon)))


def record_intervention(state: PolicyState, suggested_values, y_prev_max: float) -> PolicyState:
    """Score one LLM intervention, update rolling trust and the plateau window."""
    values = list(suggested_values)
    if not values:
        raise ValueError("an intervention must evaluate at least one point")
    cfg = state.config
    r = max(values) - y_prev_max
    new = state.copy()
    new.H.append(intervention_score(r, y_prev_max, cfg.epsilon))
    w = min(len(new.H), cfg.trust_window)
    new.T_previous = state.T_current
    new.T_current = float(sum(new.H[-w:]) / w)
    # round before flooring so (0.7 - 0.9) * 15 floors to -3, not -4
    adjustment = math.floor(round((new.T_current - new.T_previous) * cfg.delta_max, 9))
    new.m = int(min(max(state.m - adjustment, cfg.m_min), cfg.m_max))
    return new
