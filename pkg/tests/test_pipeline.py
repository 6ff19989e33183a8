import asyncio

import pytest

from src.pipeline import RunPipeline
from src.utils.errors import ConfigError


@pytest.fixture
def pipeline(manager):
    return RunPipeline(manager=manager)


def stage_names(state):
    return [log.stage_name for log in state["execution_log"]]


def test_admissible_run_visits_every_stage(pipeline, config_factory):
    cfg = config_factory("tail", params__lambdas="1,2")
    state = asyncio.run(pipeline.process_run(cfg))
    assert stage_names(state) == ["INTAKE", "ADMIT", "EXECUTE", "EMIT", "COMPLETE"]
    assert state["exit_code"] == 0
    assert (cfg.run_dir / "tail.csv").exists()
    assert (cfg.run_dir / "manifest.json").exists()


def test_inadmissible_run_stops_after_admit(pipeline, config_factory):
    cfg = config_factory("moments", time__kind="fractional", time__alpha0=0.6, space__kind="riesz",
                         space__alpha=0.9)
    state = asyncio.run(pipeline.process_run(cfg))
    assert stage_names(state) == ["INTAKE", "ADMIT"]
    assert state["admissible"] is False
    assert state["final_payload"] is None


def test_unstable_grid_is_a_config_error(pipeline, config_factory):
    cfg = config_factory("simulate", grid__nx=32, grid__dx=0.1, grid__nt=10, grid__dt=0.02,
                         params__realizations=2)
    with pytest.raises(ConfigError, match="stability"):
        asyncio.run(pipeline.process_run(cfg))


def test_finished_run_is_dropped_from_the_manager(pipeline, manager, config_factory):
    state = asyncio.run(pipeline.process_run(config_factory("tail", params__lambdas="1")))
    assert state["exit_code"] == 0
    with pytest.raises(ValueError):
        manager.get_current_state(state["run_id"])
