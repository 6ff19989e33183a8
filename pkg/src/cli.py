"""
Command-line front end

    pamlab <subcommand> [--config PATH] [--seed N] [--out DIR] [--workers N] [flags]

Values are resolved with the precedence built-in defaults < lab_config.yaml
defaults < --config file < flags, and every value keeps its source for the
manifest. Exit codes: 0 ok, 2 config error, 3 numerical failure,
4 admissibility violation.
"""

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from dotenv import load_dotenv

from .pam.covariance import regime_classify
from .pipeline.run_config import (
    BUILTIN_DEFAULTS,
    SUBCOMMANDS,
    RunConfig,
    build_spec,
    coerce,
    flatten,
    load_lab_config,
    read_config_file,
    valid_keys,
)
from .pipeline.run_pipeline import RunPipeline
from .stages.stage_05_complete import write_manifest
from .utils.errors import AdmissibilityError, ConfigError, PamlabError
from .utils.io import format_float
from .utils.logger import setup_logging
from .utils.validators import validate_keys

logger = logging.getLogger(__name__)

OUT_ENV = "PAMLAB_OUT"

_SPEC_FLAGS: List[Tuple[str, str, str]] = [
    ("--time", "time.kind", "time covariance: fractional, white or constant"),
    ("--alpha0", "time.alpha0", "fractional time exponent alpha0"),
    ("--gamma", "space.kind", "space covariance: riesz, product, dirac or smooth"),
    ("--alpha", "space.alpha", "riesz exponent alpha"),
    ("--d", "space.d", "space dimension"),
    ("--hurst", "space.hurst", "comma-separated Hurst exponents of the product kind"),
    ("--amplitude", "space.amplitude", "gamma(0) of the smooth kind"),
    ("--width", "space.width", "width of the smooth kind"),
    ("--theta", "theta", "noise strength theta"),
]

_GRID_FLAGS: List[Tuple[str, str, str]] = [
    ("--nx", "grid.nx", "sites per axis"),
    ("--dx", "grid.dx", "lattice spacing"),
    ("--nt", "grid.nt", "time steps"),
    ("--dt", "grid.dt", "time step"),
]

_PARAM_FLAGS: Dict[str, List[Tuple[str, str, str]]] = {
    "simulate": [
        ("--realizations", "params.realizations", "number of noise realizations"),
        ("--increments", "params.increments", "increment law: two_point or gaussian"),
        ("--kernel-epsilon", "params.kernel_epsilon", "smoothing scale of the noise kernel"),
        ("--initial", "params.initial", "constant initial value"),
        ("--picard-beta", "params.picard_beta", "solve the Picard-localized equation with this beta"),
    ],
    "moments": [
        ("--m", "params.m", "comma-separated moment orders"),
        ("--t", "params.t", "time"),
        ("--n-mc", "params.n_mc", "Monte Carlo samples per moment"),
        ("--n-steps", "params.n_steps", "path time steps"),
        ("--epsilons", "params.epsilons", "comma-separated mollification schedule (white time)"),
        ("--epsilon", "params.epsilon", "mollification scale (pointwise time)"),
    ],
    "variational": [
        ("--problem", "params.problem", "E or M"),
        ("--beta", "params.beta", "beta of the M problem"),
        ("--nx", "params.nx", "interior nodes per axis"),
        ("--half-width", "params.half_width", "box half-width L"),
        ("--ns", "params.ns", "time slices of the time-dependent problem"),
        ("--tol", "params.tol", "projected-gradient tolerance"),
        ("--n-starts", "params.n_starts", "number of starting profiles"),
    ],
    "scan": [
        ("--radii", "params.radii", "comma-separated increasing radii"),
        ("--realizations", "params.realizations", "number of realizations"),
        ("--increments", "params.increments", "increment law: two_point or gaussian"),
    ],
    "tail": [
        ("--theorem", "params.theorem", "tail statement th5.1 .. th5.4"),
        ("--lambda", "params.lambdas", "comma-separated lambda values"),
        ("--t", "params.t", "time"),
        ("--energy", "params.energy", "variational value the statement needs"),
        ("--gamma0", "params.gamma_zero", "gamma(0) for bounded covariances"),
        ("--time-integral", "params.time_integral", "double integral of gamma0 over [0,t]^2"),
    ],
    "constants": [
        ("--theorem", "params.theorem", "statement id, e.g. th1.7"),
        ("--t", "params.t", "time"),
        ("--energy", "params.energy", "variational value the statement needs"),
        ("--gamma0", "params.gamma_zero", "gamma(0) for bounded covariances"),
        ("--time-integral", "params.time_integral", "double integral of gamma0 over [0,t]^2"),
    ],
    "selftest": [],
}

_HELP = {
    "simulate": "finite-difference ensemble of the white-in-time equation",
    "moments": "annealed moments E u(t,0)^m by Feynman-Kac Monte Carlo",
    "variational": "solve the E or M variational problem",
    "scan": "spatial maximum scan and exponent fit",
    "tail": "tail rates, literal and via Legendre transform",
    "constants": "evaluate a limit or moment constant",
    "selftest": "run the property suite at reduced sizes",
}


def _flags_for(subcommand: str) -> List[Tuple[str, str, str]]:
    if subcommand == "selftest":
        return []
    flags = list(_SPEC_FLAGS)
    if subcommand in ("simulate", "scan"):
        flags += _GRID_FLAGS
    return flags + _PARAM_FLAGS[subcommand]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pamlab", description="Parabolic Anderson model numerical lab")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="key = value text file or YAML mapping")
    common.add_argument("--seed", dest="seed", default=None, help="base seed (u64)")
    common.add_argument("--out", dest="out", default=None, help="run directory")
    common.add_argument("--workers", dest="workers", default=None, help="worker threads")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="set any config key")
    common.add_argument("--log-level", dest="log_level", default=None, help="logging level")

    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=_HELP[name])
        for flag, key, text in _flags_for(name):
            p.add_argument(flag, dest=key, default=None, help=text)
        if name in ("simulate", "variational"):
            p.add_argument("--dump-fields", dest="params.dump_fields", action="store_const", const=True,
                           default=None, help="write binary fields")
    return parser


def _layer(values: Dict[str, Any], sources: Dict[str, str], raw: Mapping[str, Any], source: str,
           types: Mapping[str, str]) -> None:
    errors = validate_keys(raw, types)
    if errors:
        raise ConfigError(f"{source}: {'; '.join(errors)}", module="cli")
    for key, value in raw.items():
        values[key] = coerce(key, value, types[key])
        sources[key] = source


def _run_dir(values: Dict[str, Any], sources: Dict[str, str], subcommand: str,
             env: Mapping[str, str]) -> Path:
    if values.get("out"):
        return Path(values["out"])
    name = f"{subcommand}-{values.get('seed', 0)}"
    if env.get(OUT_ENV):
        values["out"], sources["out"] = str(Path(env[OUT_ENV]) / name), f"env:{OUT_ENV}"
    else:
        values["out"], sources["out"] = str(Path("runs") / name), "builtin"
    return Path(values["out"])


def parse_config(argv: Sequence[str], env: Optional[Mapping[str, str]] = None,
                 check_admissibility: bool = True) -> RunConfig:
    """
    Resolve a RunConfig from command-line arguments.

    Raises ConfigError for unknown keys or unreadable values and, unless
    check_admissibility is False, AdmissibilityError for specs that violate
    the regime constraints.
    """
    args = build_parser().parse_args(list(argv))
    subcommand = args.subcommand
    types = valid_keys(subcommand)
    env = os.environ if env is None else env

    values: Dict[str, Any] = {}
    sources: Dict[str, str] = {}
    _layer(values, sources, {**BUILTIN_DEFAULTS["common"], **BUILTIN_DEFAULTS[subcommand]}, "builtin", types)

    lab_defaults = load_lab_config().get("defaults", {}) or {}
    for block in ("common", subcommand):
        _layer(values, sources, flatten(lab_defaults.get(block) or {}), "lab_config", types)

    if args.config is not None:
        _layer(values, sources, read_config_file(args.config), f"file:{args.config}", types)

    flags = {key: vars(args)[key] for key in ("seed", "out", "workers") if vars(args)[key] is not None}
    flags.update({key: vars(args)[key] for _, key, _ in _flags_for(subcommand) if vars(args)[key] is not None})
    if vars(args).get("params.dump_fields") is not None:
        flags["params.dump_fields"] = True
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", module="cli")
        key, value = (s.strip() for s in item.split("=", 1))
        flags[key] = value
    _layer(values, sources, flags, "flag", types)

    run_dir = _run_dir(values, sources, subcommand, env)
    cfg = RunConfig(subcommand=subcommand, values=values, sources=sources, run_dir=run_dir)

    if check_admissibility and subcommand != "selftest":
        report = regime_classify(build_spec(cfg))
        if not report.admissible:
            raise AdmissibilityError(
                f"regime {report.regime.value} inadmissible: {'; '.join(report.violations)}",
                module="covariance", violations=report.violations)
    return cfg


def run(cfg: RunConfig, pipeline: Optional[RunPipeline] = None) -> int:
    """Run the workflow for cfg, print the summary and return the exit code"""
    pipeline = pipeline or RunPipeline()
    try:
        state = asyncio.run(pipeline.process_run(cfg))
    except PamlabError as e:
        print(str(e), file=sys.stderr)
        write_manifest(cfg, e.exit_code, errors=[str(e)])
        return e.exit_code
    except Exception as e:
        logger.exception("Unexpected failure")
        message = f"[pamlab] unexpected failure: {e}"
        print(message, file=sys.stderr)
        write_manifest(cfg, 1, errors=[message])
        return 1

    if not state.get("admissible"):
        classification = state.get("classification") or {}
        message = f"[covariance] inadmissible: {'; '.join(classification.get('violations', []))}"
        print(message, file=sys.stderr)
        write_manifest(cfg, AdmissibilityError.exit_code, classification=classification, errors=[message])
        return AdmissibilityError.exit_code

    payload = state["final_payload"]
    for key, value in (payload.get("summary") or {}).items():
        print(f"{key} = {format_float(value)}")
    print(f"artifacts: {payload['run_dir']}")
    return payload["exit_code"]


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    argv = sys.argv[1:] if argv is None else list(argv)
    lab = load_lab_config()
    level = None
    if "--log-level" in argv:
        i = argv.index("--log-level")
        level = argv[i + 1] if i + 1 < len(argv) else None
    setup_logging(lab.get("logging"), level=level)

    try:
        cfg = parse_config(argv, check_admissibility=False)
    except PamlabError as e:
        print(str(e), file=sys.stderr)
        return e.exit_code

    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
