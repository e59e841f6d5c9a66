import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(REPO_ROOT, "scenarios", "habitat")


@pytest.fixture(scope="session")
def habitat_dir():
    if not os.path.isdir(SCENARIO_DIR):
        from habvsm.habitat import build_habitat

        build_habitat(SCENARIO_DIR)
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def habitat_scenario(habitat_dir):
    from habvsm.scenario import parse_scenario

    return parse_scenario(os.path.join(habitat_dir, "habitat.cfg"))


@pytest.fixture(scope="session")
def nominal_run(habitat_dir, tmp_path_factory):
    """One full nominal habitat run, shared by the tests that inspect it."""
    import time

    from habvsm.runner import Runner
    from habvsm.scenario import parse_scenario

    scenario = parse_scenario(os.path.join(habitat_dir, "habitat.cfg"))
    out = tmp_path_factory.mktemp("nominal_run")
    runner = Runner(scenario, str(out))
    t0 = time.perf_counter()
    artifacts = runner.run()
    wall = time.perf_counter() - t0
    return runner, artifacts, wall
