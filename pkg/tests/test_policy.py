import math

import pytest
from hypothesis import given, settings, strategies as st

from bora.policy import (Action, PolicyConfig, PolicyState, intervention_score, m_init_for, plateau_detected,
                         record_intervention, select_action, update_uncertainty_from_stds)


def test_m_init_from_dimension():
    assert [m_init_for(d) for d in (1, 2, 4, 7, 10, 15)] == [2, 3, 4, 6, 7, 8]


def test_config_defaults_and_validation():
    cfg = PolicyConfig.for_dimension(15)
    assert cfg.m_init == 8 and cfg.m_max == 24 and cfg.gamma == 0.05 and cfg.q == 5000
    with pytest.raises(ValueError):
        PolicyConfig(upper_fraction=0.2, lower_fraction=0.3)
    with pytest.raises(ValueError):
        PolicyConfig(gamma=-0.1)


def test_initial_state():
    s = PolicyState.initial(PolicyConfig(m_init=4))
    assert s.H == [0.9] and s.T_current == 0.9 and s.m == 4


def test_uncertainty_thresholds_follow_running_max():
    s = PolicyState.initial(PolicyConfig())
    s = update_uncertainty_from_stds(s, [1.0, 3.0])
    assert (s.sigma_mean, s.sigma_max_running, s.sigma_upper, s.sigma_lower) == (2.0, 3.0, 1.5, pytest.approx(0.9))
    s = update_uncertainty_from_stds(s, [0.5, 0.5])
    assert s.sigma_max_running == 3.0 and s.sigma_mean == 0.5


def test_plateau_detection():
    g = 0.05
    assert plateau_detected([1.0], 0, g)
    assert not plateau_detected([1.0, 1.0], 2, g)  # not enough history
    assert plateau_detected([1.0, 1.0, 1.04], 2, g)
    assert not plateau_detected([1.0, 1.0, 1.06], 2, g)
    # negative values: improvement must beat y * (1 - gamma)
    assert plateau_detected([-10.0, -9.6], 1, g)
    assert not plateau_detected([-10.0, -9.4], 1, g)
    # at zero the threshold is zero and the inequality is strict, so no step plateaus
    assert not plateau_detected([0.0, 1e-9], 1, g)
    assert not plateau_detected([0.0, 0.0], 1, g)
    assert plateau_detected([0.0, -1.0], 1, g)


def test_action_selection_regions():
    s = PolicyState.initial(PolicyConfig())
    s = update_uncertainty_from_stds(s, [1.0])  # max 1: upper 0.5, lower 0.3
    for mean, plateau, want in [(0.2, True, Action.A1_VanillaBO), (0.9, False, Action.A1_VanillaBO),
                                (0.6, True, Action.A2_LLMSuggest), (0.4, True, Action.A3_LLMSelect),
                                (0.5, True, Action.A3_LLMSelect), (0.3, True, Action.A3_LLMSelect)]:
        s.sigma_mean = mean
        assert select_action(s, plateau) is want


def test_intervention_score():
    assert intervention_score(0.5, 1.0) == 1.0
    assert intervention_score(0.0, 1.0) == 0.5
    assert intervention_score(-1.0, 1.0, 0.0) == pytest.approx(1 / (1 + math.e))
    assert intervention_score(-2.0, -4.0, 0.0) == pytest.approx(1 / (1 + math.exp(0.5)))
    assert intervention_score(-1.0, 0.0) == 0.0  # huge negative ratio must not overflow


def test_record_intervention_updates_trust_and_window():
    s = PolicyState.initial(PolicyConfig(m_init=8, m_max=24))
    s = record_intervention(s, [2.0, 0.5], 1.0)  # success: score 1
    assert s.H == [0.9, 1.0] and s.T_current == pytest.approx(0.95)
    assert s.m == 8 - math.floor(0.05 * 15)  # floor(0.75) = 0
    s2 = record_intervention(s, [0.0], 1.0)  # r = -1
    score = 1 / (1 + math.exp(1 / (1 + 1e-6)))
    assert s2.H[-1] == pytest.approx(score)
    t = (0.9 + 1.0 + score) / 3
    assert s2.T_current == pytest.approx(t)
    assert s2.m == 8 - math.floor((t - 0.95) * 15)


def test_trust_floor_is_robust_to_float_noise():
    # (1.0 - 0.8) * 15 evaluates to 2.999999999999999, which a bare floor turns into 2
    cfg = PolicyConfig(m_init=10, trust_init=0.8, trust_window=1)
    new = record_intervention(PolicyState.initial(cfg), [2.0], 1.0)
    assert new.T_current == 1.0
    assert new.m == 10 - 3


def test_record_intervention_needs_values():
    with pytest.raises(ValueError):
        record_intervention(PolicyState.initial(PolicyConfig()), [], 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.lists(st.floats(-100, 100), min_size=1, max_size=3), st.floats(-100, 100)),
                min_size=1, max_size=20),
       st.integers(1, 10))
def test_trust_and_window_stay_in_range(steps, m_init):
    cfg = PolicyConfig(m_init=m_init)
    s = PolicyState.initial(cfg)
    for values, prev in steps:
        s = record_intervention(s, values, prev)
        assert 0.0 <= s.T_current <= 1.0
        assert cfg.m_min <= s.m <= cfg.m_max
        assert all(0.0 <= h <= 1.0 for h in s.H)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.floats(0, 100), min_size=1, max_size=5), min_size=1, max_size=10))
def test_uncertainty_thresholds_are_ordered(batches):
    s = PolicyState.initial(PolicyConfig())
    prev_max = 0.0
    for stds in batches:
        s = update_uncertainty_from_stds(s, stds)
        assert s.sigma_lower <= s.sigma_upper <= s.sigma_max_running
        assert s.sigma_max_running >= prev_max
        prev_max = s.sigma_max_running
