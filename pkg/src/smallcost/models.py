"""Parameter records for the market models, preferences and cost specifications.

All records are frozen dataclasses. ``validate`` checks the invariants of any
record and ``from_dict`` / ``to_dict`` map them to flat JSON objects.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Callable


class ValidationError(ValueError):
    """Raised when a parameter record violates one of its invariants."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class BlackScholesParams:
    r: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class KimOmbergParams:
    r: float
    sigma_S: float
    kappa: float
    F_bar: float
    sigma_F: float
    rho: float = 0.0


@dataclass(frozen=True)
class Preferences:
    gamma: float
    horizon_T: float | None = None
    delta: float | None = None


@dataclass(frozen=True)
class CostSpec:
    lambda_p: float
    lambda_f: float = 0.0


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


# (field, predicate, message); checked in order, first failure is reported
_Check = tuple[str, Callable[[Any], bool], str]

_CHECKS: dict[type, list[_Check]] = {
    BlackScholesParams: [
        ("r", _finite, "r must be a finite number"),
        ("mu", _finite, "mu must be a finite number"),
        ("sigma", _finite, "sigma must be a finite number"),
        ("sigma", lambda s: s > 0, "sigma must be positive"),
    ],
    KimOmbergParams: [
        ("r", _finite, "r must be a finite number"),
        ("sigma_S", _finite, "sigma_S must be a finite number"),
        ("sigma_S", lambda s: s > 0, "sigma_S must be positive"),
        ("kappa", _finite, "kappa must be a finite number"),
        ("kappa", lambda k: k > 0, "kappa must be positive"),
        ("F_bar", _finite, "F_bar must be a finite number"),
        ("sigma_F", _finite, "sigma_F must be a finite number"),
        ("sigma_F", lambda s: s > 0, "sigma_F must be positive"),
        ("rho", _finite, "rho must be a finite number"),
        ("rho", lambda p: -1.0 <= p <= 1.0, "rho must lie in [-1, 1]"),
    ],
    Preferences: [
        ("gamma", _finite, "gamma must be a finite number"),
        ("gamma", lambda g: g > 0, "gamma must be positive"),
        ("gamma", lambda g: g != 1, "gamma must differ from 1"),
        ("horizon_T", lambda T: T is None or (_finite(T) and T > 0), "horizon_T must be positive"),
        ("delta", lambda d: d is None or (_finite(d) and d > 0), "delta must be positive"),
    ],
    CostSpec: [
        ("lambda_p", _finite, "lambda_p must be a finite number"),
        ("lambda_p", lambda x: 0 < x < 1, "lambda_p must lie in (0, 1)"),
        ("lambda_f", _finite, "lambda_f must be a finite number"),
        ("lambda_f", lambda x: x >= 0, "lambda_f must be nonnegative"),
    ],
}

RECORD_TYPES = tuple(_CHECKS)


def validate(params):
    """Return ``params`` unchanged if every invariant holds.

    Raises
    ------
    ValidationError
        Naming the first violated field.
    """
    try:
        checks = _CHECKS[type(params)]
    except KeyError:
        raise TypeError(f"not a parameter record: {type(params).__name__}") from None
    for field, ok, message in checks:
        if not ok(getattr(params, field)):
            raise ValidationError(field, message)
    return params


def to_dict(params) -> dict[str, Any]:
    return dataclasses.asdict(validate(params))


def from_dict(cls, data: dict[str, Any]):
    """Build and validate a record of type ``cls`` from a flat mapping.

    Unknown keys and missing required keys are errors.
    """
    if cls not in _CHECKS:
        raise TypeError(f"not a parameter record type: {cls!r}")
    if not isinstance(data, dict):
        raise ValidationError("", f"{cls.__name__} block must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ValidationError(unknown[0], f"unknown key {unknown[0]!r} for {cls.__name__}")
    for name, f in fields.items():
        if name not in data and f.default is dataclasses.MISSING:
            raise ValidationError(name, f"missing required key {name!r} for {cls.__name__}")
    return validate(cls(**data))
