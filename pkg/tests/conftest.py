import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from rhcover.mission import run_mission
from rhcover.scenario import build_world, parse_scenario
from rhcover.visibility import learn_visibility

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _mission(name):
    t0 = time.perf_counter()
    s = parse_scenario(SCENARIOS / name)
    w = build_world(s)
    table = learn_visibility(w.grid, w.mesh, w.gimbal, w.cam, s.visibility)
    mlog = run_mission(w, table)
    _timings[name] = time.perf_counter() - t0
    return w, table, mlog


_timings = {}


@pytest.fixture(scope="session")
def mission_timings():
    return SimpleNamespace(get=_timings.get)


@pytest.fixture(scope="session")
def tiny_mission():
    return _mission("tiny.toml")


@pytest.fixture(scope="session")
def desk_mission():
    return _mission("desk.toml")


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, after the normal report."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                rows.append((props["criterion"], outcome, props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(rows):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark} {crit}  {detail}".rstrip())
