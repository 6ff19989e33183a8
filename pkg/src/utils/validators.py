"""
Validation helpers for run configs.

Each helper returns a list of problems (empty if valid) so callers can
report everything at once.
"""

from typing import Any, Dict, Iterable, List, Mapping


def validate_keys(values: Mapping[str, Any], allowed: Iterable[str]) -> List[str]:
    """Unknown dotted keys, with the valid ones listed"""
    allowed = sorted(set(allowed))
    unknown = sorted(k for k in values if k not in allowed)
    if not unknown:
        return []
    return [f"unknown key '{k}'; valid keys: {', '.join(allowed)}" for k in unknown]


def validate_choice(values: Mapping[str, Any], key: str, choices: Iterable[str]) -> List[str]:
    if key not in values or values[key] is None:
        return []
    choices = list(choices)
    if str(values[key]) not in choices:
        return [f"{key}={values[key]!r} must be one of: {', '.join(choices)}"]
    return []


def validate_positive(values: Mapping[str, Any], keys: Iterable[str]) -> List[str]:
    errors = []
    for key in keys:
        v = values.get(key)
        if v is None:
            continue
        items = v if isinstance(v, (list, tuple)) else [v]
        if any(not x > 0 for x in items):
            errors.append(f"{key} must be positive, got {v}")
    return errors


def validate_increasing(values: Mapping[str, Any], key: str) -> List[str]:
    seq = values.get(key)
    if not seq:
        return []
    if any(b <= a for a, b in zip(seq, seq[1:])):
        return [f"{key} must be strictly increasing, got {list(seq)}"]
    return []


def validate_grid(values: Dict[str, Any]) -> List[str]:
    """Lattice sizes: integers at least 1, spacings positive"""
    errors = []
    for key in ("grid.nx", "grid.nt"):
        v = values.get(key)
        if v is not None and (not isinstance(v, int) or v < 1):
            errors.append(f"{key} must be an integer >= 1, got {v}")
    errors += validate_positive(values, ["grid.dx", "grid.dt"])
    return errors
