import re
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rhcover.errors import ScenarioError
from rhcover.scenario import (
    PlannerCfg,
    Scenario,
    TargetCfg,
    default_scenario,
    dumps_scenario,
    flatten,
    loads_scenario,
    parse_scenario,
    validate,
    with_overrides,
)


def test_empty_file_is_default():
    s = loads_scenario("")
    assert s == default_scenario()
    k = s.kinematics
    assert (k.dt, k.gamma, k.mass, k.v_bound, k.u_bound) == (1.0, 0.2, 1.05, 12.0, 10.0)
    assert (s.camera.length, s.camera.width, s.camera.range) == (10.0, 10.0, 16.0)
    assert s.gimbal.theta_deg == (30.0, 90.0, 150.0)
    assert s.gimbal.phi_deg == (30.0, 105.0, 180.0, 255.0, 330.0)
    assert s.environment.grid == (10, 10, 10)
    assert s.visibility.samples_per_cell == 100 and s.visibility.rays_per_pose == 50
    assert s.planner.horizon == 5
    assert (s.object.amplitude, s.object.variance, s.object.center) == (40.0, (80.0, 80.0), (45.0, 45.0))
    w = validate(s)
    assert len(w.mesh) == 220 and len(w.fovs) == 15 and w.grid.n_cells == 1000


def test_negative_velocity_bound_reports_line():
    with pytest.raises(ScenarioError) as e:
        loads_scenario("[kinematics]\nv_bound = -1\n")
    assert e.value.line == 2
    assert "line 2" in str(e.value)


def test_agent_inside_object():
    with pytest.raises(ScenarioError) as e:
        loads_scenario("[[agents]]\nposition = [45.0, 45.0, 5.0]\n")
    assert e.value.line == 2 and "inside" in str(e.value)


def test_unknown_keys_rejected():
    with pytest.raises(ScenarioError) as e:
        loads_scenario("[planner]\nhorizon = 3\nhorizn = 4\n")
    assert e.value.line == 3
    with pytest.raises(ScenarioError):
        loads_scenario("[plannr]\nhorizon = 3\n")


def test_type_and_syntax_errors():
    with pytest.raises(ScenarioError) as e:
        loads_scenario("[planner]\n\nhorizon = \"five\"\n")
    assert e.value.line == 3
    with pytest.raises(ScenarioError) as e:
        loads_scenario("[planner\nhorizon = 3\n")
    assert e.value.line == 1
    with pytest.raises(ScenarioError):
        loads_scenario("[gimbal]\ntheta_deg = [30, 190]\n")
    with pytest.raises(ScenarioError):
        loads_scenario("[targets]\nindices = [0, 5]\n")


def test_agents_too_close():
    text = "[[agents]]\nposition = [10.0, 10.0, 50.0]\n[[agents]]\nposition = [10.5, 10.0, 50.0]\n"
    with pytest.raises(ScenarioError) as e:
        loads_scenario(text)
    assert e.value.line == 4


def test_target_subset_is_seeded():
    a = validate(loads_scenario("[targets]\ncount = 18\ntarget_subset_seed = 4\n")).targets
    b = validate(loads_scenario("[targets]\ncount = 18\ntarget_subset_seed = 4\n")).targets
    c = validate(loads_scenario("[targets]\ncount = 18\ntarget_subset_seed = 5\n")).targets
    assert len(a) == 18 and np.array_equal(a, b) and not np.array_equal(a, c)


overrides = st.fixed_dictionaries(
    {
        "horizon": st.integers(1, 8),
        "safety_radius": st.floats(0.5, 5.0),
        "time_limit": st.floats(1.0, 100.0),
        "tighten": st.booleans(),
        "count": st.integers(0, 220),
        "seed": st.integers(0, 2**31),
        "steps": st.integers(1, 1000),
    }
)


@settings(max_examples=40, deadline=None)
@given(overrides)
def test_round_trip(o):
    s = with_overrides(
        default_scenario(),
        planner=PlannerCfg(horizon=o["horizon"], safety_radius=o["safety_radius"], time_limit=o["time_limit"],
                           tighten=o["tighten"]),
        targets=TargetCfg(count=o["count"], target_subset_seed=o["seed"]),
        max_steps=o["steps"],
    )
    assert loads_scenario(dumps_scenario(s)) == s


def test_round_trip_of_files(scenarios_dir):
    for path in sorted(scenarios_dir.glob("*.toml")):
        s = parse_scenario(path)
        assert loads_scenario(dumps_scenario(s)) == s


def test_flatten_lists_every_setting():
    keys = flatten(Scenario())
    assert keys["kinematics.gamma"] == 0.2
    assert keys["planner.horizon"] == 5
    assert "agents.3.position" in keys and "visibility.seed" in keys


def test_documented_example_matches_defaults():
    doc = (Path(__file__).parent.parent / "docs" / "scenario.md").read_text()
    block = re.search(r"```toml\n(.*?)```", doc, re.S).group(1)
    s = loads_scenario(block)
    assert len(s.obstacles) == 1
    # apart from the extra obstacle and the single agent, the example spells out the defaults
    assert replace(s, obstacles=(), agents=Scenario().agents) == Scenario()
