import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bora.bench import (REGISTRY, InfeasiblePointError, PetanqueConstants, SimulationError, TableOracle, ackley, branin,
                        get_objective, hydrogen_objective, hydrogen_space, levy, petanque_objective,
                        petanque_score, petanque_simulate, register_objective, synthetic_her)
from bora.bench.hydrogen import SYNTHETIC_BEST, SYNTHETIC_PEAK
from bora.bench.synthetic import BRANIN_BEST, BRANIN_MAXIMIZERS


def test_branin_maximizers():
    for p in BRANIN_MAXIMIZERS:
        assert branin(p) == pytest.approx(BRANIN_BEST, abs=1e-5)
    assert branin((0.0, 0.0)) == pytest.approx(-55.602113, abs=1e-5)


def test_levy_and_ackley_optima():
    assert levy(np.ones(10)) == pytest.approx(0.0, abs=1e-12)
    assert ackley(np.zeros(15)) == pytest.approx(0.0, abs=1e-12)
    assert levy(np.zeros(10)) < 0 and ackley(np.ones(15)) < 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=10, max_size=10))
def test_levy_nonpositive(x):
    assert levy(x) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-30, 20), min_size=15, max_size=15))
def test_ackley_nonpositive(x):
    assert ackley(x) <= 1e-12


def test_registry_and_plugins():
    assert set(REGISTRY) == {"branin", "levy10", "ackley15", "petanque", "hydrogen"}
    assert get_objective("ackley15").space.d == 15
    assert get_objective("levy10").space.d == 10
    with pytest.raises(KeyError):
        get_objective("nope")
    register_objective("tiny", lambda: get_objective("branin"))
    try:
        assert get_objective("tiny").name == "branin"
    finally:
        REGISTRY.pop("tiny")
    assert get_objective("bora.bench:petanque_objective").name == "petanque"
    with pytest.raises(TypeError):
        get_objective("bora.bench:hydrogen_space")


def test_objective_refuses_infeasible_points():
    obj = get_objective("branin")
    with pytest.raises(InfeasiblePointError):
        obj([11.0, 0.0])


def test_cards_hide_the_function_name():
    for name in ("branin", "levy10", "ackley15"):
        text = json.dumps(get_objective(name).card.to_dict()).lower()
        assert name.rstrip("0123456789") not in text


def test_petanque_score_anchors():
    assert petanque_score((50.0, 0.0)) == 100.0
    assert petanque_score((0.0, 0.0)) == pytest.approx(100 * math.exp(-10), rel=1e-15)


def test_petanque_straight_throw_without_spin_lands_on_axis():
    x, y = petanque_simulate([30, 0, 20, 0, 0, 1, 0.7])
    assert y == pytest.approx(0.0, abs=1e-12) and 0 < x < 50


def test_petanque_drag_shortens_and_spin_deflects():
    base = [35, 0, 25, 0, 0, 1, 0.7]
    vacuum = petanque_simulate(base, drag_on=False)
    assert petanque_simulate(base)[0] < vacuum[0]
    side = petanque_simulate([35, 0, 25, 3000, 0, 1, 0.7])  # spin about +x
    assert abs(side[1]) > 0.01


def test_petanque_symmetric_yaw():
    a = petanque_simulate([30, 20, 20, 0, 0, 1, 1.0])
    b = petanque_simulate([30, -20, 20, 0, 0, 1, 1.0])
    assert a[0] == pytest.approx(b[0]) and a[1] == pytest.approx(-b[1])


def test_petanque_zero_height_zero_speed_lands_at_origin():
    assert petanque_simulate([0, 0, 0, 0, 0, 0, 1]) == (0.0, 0.0)


def test_petanque_reports_ball_still_airborne():
    with pytest.raises(SimulationError):
        petanque_simulate([80, 0, 50, 0, 0, 2, 1.0], constants=PetanqueConstants(max_time=1.0))


def test_petanque_objective_in_range():
    obj = petanque_objective()
    pts = obj.space.sample_uniform(np.random.default_rng(0), 10)
    assert all(0 < obj(p) <= 100 for p in pts)


def test_hydrogen_space_shape():
    s = hydrogen_space()
    assert s.d == 10 and len(s.constraints) == 1 and len(s.constraints[0].variable_names) == 9
    solid = s.variables[s.names.index("p10_mix1")]
    assert (solid.lower, solid.upper, solid.step) == (1.0, 5.0, 0.2)


def test_hydrogen_grid_size():
    """Feasible grid points, counted by dynamic programming over the liquid sum."""
    s = hydrogen_space()
    liquids = [v for v in s.variables if v.name in s.constraints[0].variable_names]
    cap = round(s.constraints[0].bound / liquids[0].step)
    ways = [1] + [0] * cap
    for v in liquids:
        levels = round((v.upper - v.lower) / v.step) + 1
        ways = [sum(ways[t - k] for k in range(min(levels, t + 1))) for t in range(cap + 1)]
    others = [v for v in s.variables if v not in liquids]
    total = sum(ways) * math.prod(round((v.upper - v.lower) / v.step) + 1 for v in others)
    assert total == math.comb(29, 9) * 21 == 210_315_105


def test_synthetic_oracle_peak():
    s = hydrogen_space()
    assert s.contains(SYNTHETIC_PEAK)
    peak = synthetic_her(SYNTHETIC_PEAK)
    assert peak == SYNTHETIC_BEST == 25.0
    obj = hydrogen_objective()
    assert obj.best_known == peak and obj.best_point == SYNTHETIC_PEAK
    # every feasible single-coordinate grid move is worse
    x = np.array(SYNTHETIC_PEAK)
    for i, v in enumerate(s.variables):
        for step in (-v.step, v.step):
            y = x.copy()
            y[i] += step
            if s.contains(y):
                assert synthetic_her(y) < peak
    vals = [synthetic_her(p) for p in s.sample_uniform(np.random.default_rng(1), 2000)]
    assert min(vals) >= 0 and max(vals) < peak


def test_table_oracle(tmp_path):
    s = hydrogen_space()
    pts = s.sample_uniform(np.random.default_rng(2), 20)
    path = tmp_path / "table.jsonl"
    path.write_text("\n".join(json.dumps({"x": list(map(float, p)), "y": float(i)}) for i, p in enumerate(pts)))
    oracle = TableOracle.from_jsonl(s, path)
    assert [oracle(p) for p in pts] == [float(i) for i in range(20)]
    far = s.sample_uniform(np.random.default_rng(3), 1)[0]
    U = s.to_unit(np.array(pts))
    assert oracle(far) == float(np.argmin(((U - s.to_unit(far)) ** 2).sum(1)))
    obj = hydrogen_objective(oracle, best_known=19.0)
    assert obj.best_point is None and obj.best_known == 19.0
    with pytest.raises(ValueError):
        TableOracle(s, [], [])
