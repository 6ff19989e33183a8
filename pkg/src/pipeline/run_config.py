"""
Run configuration: the key schema, layered defaults and builders

Values live in one flat mapping of dotted keys (`time.kind`, `grid.nx`,
`params.m`, ...). Every value remembers where it came from so the manifest
can echo the resolved config together with its sources.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from ..pam.asymptotics import TheoremParams
from ..pam.covariance import CovarianceSpec, SpaceCovariance, SpaceKind, TimeCovariance, TimeKind
from ..pam.noise_field import GridSpec
from ..utils.errors import ConfigError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

SUBCOMMANDS = ("simulate", "moments", "variational", "scan", "tail", "constants", "selftest")

# type tag per key
COMMON_KEYS: Dict[str, str] = {
    "time.kind": "str",
    "time.alpha0": "float",
    "space.kind": "str",
    "space.alpha": "float",
    "space.d": "int",
    "space.hurst": "floats",
    "space.amplitude": "float",
    "space.width": "float",
    "theta": "float",
    "grid.nx": "int",
    "grid.dx": "float",
    "grid.nt": "int",
    "grid.dt": "float",
    "seed": "int",
    "out": "str",
    "workers": "int",
}

PARAM_KEYS: Dict[str, Dict[str, str]] = {
    "simulate": {
        "params.realizations": "int",
        "params.increments": "str",
        "params.kernel_epsilon": "float",
        "params.initial": "float",
        "params.dump_fields": "bool",
        "params.picard_beta": "float",
    },
    "moments": {
        "params.m": "ints",
        "params.t": "float",
        "params.n_mc": "int",
        "params.n_steps": "int",
        "params.epsilons": "floats",
        "params.epsilon": "float",
    },
    "variational": {
        "params.problem": "str",
        "params.beta": "float",
        "params.nx": "int",
        "params.half_width": "float",
        "params.ns": "int",
        "params.tol": "float",
        "params.n_starts": "int",
        "params.dump_fields": "bool",
    },
    "scan": {
        "params.radii": "floats",
        "params.realizations": "int",
        "params.increments": "str",
    },
    "tail": {
        "params.theorem": "str",
        "params.lambdas": "floats",
        "params.t": "float",
        "params.energy": "float",
        "params.gamma_zero": "float",
        "params.time_integral": "float",
    },
    "constants": {
        "params.theorem": "str",
        "params.t": "float",
        "params.energy": "float",
        "params.gamma_zero": "float",
        "params.time_integral": "float",
    },
    "selftest": {},
}

BUILTIN_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "common": {"time.kind": "white", "space.kind": "dirac", "space.d": 1, "theta": 1.0, "seed": 0},
    "simulate": {"grid.nx": 128, "grid.dx": 0.05, "grid.nt": 400, "grid.dt": 0.00125,
                 "params.realizations": 64, "params.increments": "two_point", "params.initial": 1.0,
                 "params.dump_fields": False},
    "moments": {"params.m": [2, 3, 4], "params.t": 0.5, "params.n_mc": 4096, "params.n_steps": 128,
                "params.epsilons": [0.0025, 0.005, 0.01, 0.02]},
    "variational": {"params.problem": "E", "params.beta": 1.0, "params.nx": 256, "params.half_width": 10.0,
                    "params.ns": 16, "params.tol": 1e-8, "params.n_starts": 5, "params.dump_fields": False},
    "scan": {"theta": 2.0, "grid.nx": 4096, "grid.dx": 1.0, "grid.nt": 20, "grid.dt": 0.05,
             "params.radii": [16.0, 64.0, 256.0, 1024.0], "params.realizations": 20,
             "params.increments": "two_point"},
    "tail": {"params.theorem": "th5.4", "params.lambdas": [0.5, 1.0, 2.0, 4.0], "params.t": 1.0},
    "constants": {"params.theorem": "th1.7", "params.t": 1.0},
    "selftest": {},
}


def valid_keys(subcommand: str) -> Dict[str, str]:
    return {**COMMON_KEYS, **PARAM_KEYS[subcommand]}


def _split_list(raw: Any) -> List[Any]:
    if isinstance(raw, (list, tuple)):
        return list(raw)
    if isinstance(raw, str):
        return [s for s in raw.replace("[", "").replace("]", "").replace(",", " ").split()]
    return [raw]


def coerce(key: str, raw: Any, kind: str) -> Any:
    """Convert a raw value (string, YAML scalar or list) to the key's type"""
    if raw is None:
        return None
    try:
        if kind == "str":
            return str(raw)
        if kind == "int":
            if isinstance(raw, bool):
                raise ValueError(raw)
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return [float(v) for v in _split_list(raw)]
        if kind == "ints":
            return [int(v) for v in _split_list(raw)]
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read {key}={raw!r} as {kind}", module="cli")
    raise ConfigError(f"unknown type tag {kind} for {key}", module="cli")


def flatten(mapping: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Nested YAML mapping to dotted keys"""
    flat: Dict[str, Any] = {}
    for key, value in mapping.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def read_config_file(path: Path) -> Dict[str, Any]:
    """Raw dotted values from a key = value text file or a YAML mapping"""
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", module="cli")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level", module="cli")
        return flatten(data)

    values: Dict[str, Any] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip() + "."
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}", module="cli")
        key, value = (s.strip() for s in line.split("=", 1))
        values[section + key] = value
    return values


def load_lab_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """lab_config.yaml as a dict; empty when the file is absent"""
    path = path or Path(__file__).resolve().parents[2] / "config" / "lab_config.yaml"
    if not path.exists():
        logger.debug(f"No lab config at {path}")
        return {}
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}


class RunConfig(BaseModel):
    """Resolved values of one run, with the source of each value"""

    model_config = ConfigDict(frozen=True)

    subcommand: str
    values: Dict[str, Any]
    sources: Dict[str, str]
    run_dir: Path
    format_version: int = FORMAT_VERSION

    def get(self, key: str, default: Any = None) -> Any:
        value = self.values.get(key)
        return default if value is None else value

    @property
    def seed(self) -> int:
        return int(self.get("seed", 0))

    @property
    def workers(self) -> Optional[int]:
        return self.values.get("workers")

    def echo(self) -> Dict[str, Dict[str, Any]]:
        return {k: {"value": self.values[k], "source": self.sources[k]} for k in sorted(self.values)}


def _wrap(err: ValidationError, what: str) -> ConfigError:
    details = "; ".join(e["msg"] for e in err.errors())
    return ConfigError(f"invalid {what}: {details}", module="cli")


def build_spec(cfg: RunConfig) -> CovarianceSpec:
    try:
        time_kind = TimeKind(cfg.get("time.kind"))
        space_kind = SpaceKind(cfg.get("space.kind"))
    except ValueError as e:
        raise ConfigError(str(e), module="cli")
    try:
        if time_kind == TimeKind.FRACTIONAL:
            time = TimeCovariance.fractional(cfg.get("time.alpha0", 0.0))
        else:
            time = TimeCovariance(kind=time_kind, alpha0=cfg.get("time.alpha0", 0.0))
        d = cfg.get("space.d", 1)
        if space_kind == SpaceKind.RIESZ:
            if cfg.get("space.alpha") is None:
                raise ConfigError("riesz space needs space.alpha", module="cli")
            space = SpaceCovariance.riesz(cfg.get("space.alpha"), d)
        elif space_kind == SpaceKind.PRODUCT:
            space = SpaceCovariance.product(cfg.get("space.hurst", []))
        elif space_kind == SpaceKind.DIRAC:
            space = SpaceCovariance(kind=SpaceKind.DIRAC, d=d)
        else:
            space = SpaceCovariance.smooth(cfg.get("space.amplitude", 1.0), cfg.get("space.width", 1.0), d)
        return CovarianceSpec(time=time, space=space, theta=cfg.get("theta", 1.0))
    except ValidationError as e:
        raise _wrap(e, "covariance spec")


def build_grid(cfg: RunConfig, d: int) -> GridSpec:
    try:
        return GridSpec(d=d, nx=cfg.get("grid.nx"), dx=cfg.get("grid.dx"), nt=cfg.get("grid.nt", 1),
                        dt=cfg.get("grid.dt", 1.0))
    except ValidationError as e:
        raise _wrap(e, "grid")


def theorem_params(cfg: RunConfig) -> TheoremParams:
    space_kind = cfg.get("space.kind")
    gamma_zero = cfg.get("params.gamma_zero")
    if gamma_zero is None and space_kind == SpaceKind.SMOOTH.value:
        gamma_zero = cfg.get("space.amplitude", 1.0)
    alpha = cfg.get("space.alpha")
    if alpha is None and space_kind == SpaceKind.PRODUCT.value and cfg.get("space.hurst"):
        hurst = cfg.get("space.hurst")
        alpha = 2.0 * len(hurst) - 2.0 * sum(hurst)
    time_integral = cfg.get("params.time_integral")
    if time_integral is None and cfg.get("time.kind") == TimeKind.WHITE.value:
        time_integral = cfg.get("params.t", 1.0)
    try:
        return TheoremParams(
            theta=cfg.get("theta", 1.0),
            t=cfg.get("params.t", 1.0),
            d=cfg.get("space.d", 1),
            alpha0=cfg.get("time.alpha0", 0.0),
            alpha=alpha,
            gamma_zero=gamma_zero,
            time_integral=time_integral,
            energy=cfg.get("params.energy"),
            dirac=space_kind == SpaceKind.DIRAC.value,
        )
    except ValidationError as e:
        raise _wrap(e, "theorem parameters")
