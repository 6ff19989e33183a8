import pytest

from src.pipeline.run_config import BUILTIN_DEFAULTS, RunConfig, coerce, valid_keys
from src.pipeline.state_manager import RunStateManager


def make_config(subcommand: str, run_dir, **overrides) -> RunConfig:
    """RunConfig from the built-in defaults plus dotted overrides (use __ for dots)"""
    types = valid_keys(subcommand)
    values = {**BUILTIN_DEFAULTS["common"], **BUILTIN_DEFAULTS[subcommand]}
    sources = {k: "builtin" for k in values}
    for key, value in overrides.items():
        dotted = key.replace("__", ".")
        values[dotted] = coerce(dotted, value, types[dotted]) if dotted in types else value
        sources[dotted] = "flag"
    values["out"] = str(run_dir)
    sources["out"] = "flag"
    return RunConfig(subcommand=subcommand, values=values, sources=sources, run_dir=run_dir)


@pytest.fixture
def config_factory(tmp_path):
    def factory(subcommand: str, **overrides) -> RunConfig:
        return make_config(subcommand, tmp_path / f"{subcommand}-run", **overrides)
    return factory


@pytest.fixture
def manager():
    return RunStateManager()
