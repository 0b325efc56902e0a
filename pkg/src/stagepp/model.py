"""Stage-structured predator-prey system: parameters, vector field and derivatives.

The dimensionless system reads::

    x'  = x(1 - x) - a1 x y2 - a2 x y3
    y1' = u a2 x y3 - (b + d1) y1
    y2' = b y1 - (c - a3 x) y2 - d2 y2
    y3' = (c - a3 x) y2 - d3 y3

with prey ``x`` and infant, juvenile and adult predators ``y1, y2, y3``.
Juveniles mature at the prey-dependent rate ``c - a3 x`` (injuries from
dangerous prey slow maturation).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from typing import Mapping, NamedTuple

import numpy as np

from .errors import ConfigError

PARAM_NAMES: tuple[str, ...] = ("a1", "a2", "a3", "b", "c", "d1", "d2", "d3", "u")
STATE_NAMES: tuple[str, ...] = ("x", "y1", "y2", "y3")
PRESETS: tuple[str, ...] = ("table1", "table2")


@dataclass(frozen=True)
class Params:
    """The nine dimensionless rates of the model.

    Attributes
    ----------
    a1, a2 : float
        Predation rates of juveniles and adults.
    a3 : float
        Injury rate; reduces juvenile maturation to ``c - a3 x``.
    b, c : float
        Infant-to-juvenile and juvenile-to-adult transition rates.
    d1, d2, d3 : float
        Stage death rates.
    u : float
        Conversion of consumed prey into infants.
    """

    a1: float
    a2: float
    a3: float
    b: float
    c: float
    d1: float
    d2: float
    d3: float
    u: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            try:
                v = float(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"parameter {f.name} is not a number: {v!r}") from exc
            if not math.isfinite(v):
                raise ConfigError(f"parameter {f.name} must be finite, got {v}")
            if v <= 0.0:
                raise ConfigError(f"parameter {f.name} must be strictly positive, got {v}")
            object.__setattr__(self, f.name, v)

    @classmethod
    def from_mapping(cls, m: Mapping[str, float]) -> "Params":
        unknown = set(m) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        missing = set(PARAM_NAMES) - set(m)
        if missing:
            raise ConfigError(f"missing parameter(s): {', '.join(sorted(missing))}")
        return cls(**{k: m[k] for k in PARAM_NAMES})

    def replace(self, **changes: float) -> "Params":
        unknown = set(changes) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return replace(self, **changes)

    def with_value(self, name: str, value: float) -> "Params":
        return self.replace(**{name: value})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PARAM_NAMES])


class State(NamedTuple):
    """One point of the state space (prey and three predator stages)."""

    x: float
    y1: float
    y2: float
    y3: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class DimensionalParams:
    """Rates of the dimensional model before scaling by ``r`` and ``K``."""

    r: float
    K: float
    A1: float
    A2: float
    A3: float
    B: float
    C: float
    D1: float
    D2: float
    D3: float
    u: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v) or v <= 0.0:
                raise ConfigError(f"dimensional parameter {f.name} must be finite and positive, got {v}")
            object.__setattr__(self, f.name, v)


@dataclass(frozen=True)
class Scales:
    """Scales linking dimensional and dimensionless variables (``T = time * t``, ``X = state * x``)."""

    time: float
    state: float


@dataclass(frozen=True)
class AbsorbingRegion:
    """Region ``x <= x_max``, ``y1 + y2 + y3 <= predator_sum_max`` attracting all positive solutions."""

    x_max: float
    predator_sum_max: float
    zeta: float


def load_preset(name: str) -> Params:
    """Load one of the shipped parameter tables (``table1`` or ``table2``)."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("stagepp.presets").joinpath(f"{name}.json").read_text()
    return Params.from_mapping(json.loads(text)["params"])


def table1() -> Params:
    return load_preset("table1")


def table2() -> Params:
    return load_preset("table2")


def rhs(s, p: Params) -> np.ndarray:
    """Vector field at state ``s``. No clamping is applied."""
    x, y1, y2, y3 = s
    m = p.c - p.a3 * x
    return np.array(
        [
            x * (1.0 - x) - p.a1 * x * y2 - p.a2 * x * y3,
            p.u * p.a2 * x * y3 - (p.b + p.d1) * y1,
            p.b * y1 - m * y2 - p.d2 * y2,
            m * y2 - p.d3 * y3,
        ]
    )


def jacobian(s, p: Params) -> np.ndarray:
    """Analytic Jacobian of :func:`rhs` with respect to the state."""
    x, y1, y2, y3 = s
    return np.array(
        [
            [1.0 - 2.0 * x - p.a1 * y2 - p.a2 * y3, 0.0, -p.a1 * x, -p.a2 * x],
            [p.a2 * p.u * y3, -p.b - p.d1, 0.0, p.a2 * p.u * x],
            [p.a3 * y2, p.b, -p.c - p.d2 + p.a3 * x, 0.0],
            [-p.a3 * y2, 0.0, p.c - p.a3 * x, -p.d3],
        ]
    )


def hessian(p: Params) -> np.ndarray:
    """Second derivatives ``H[k, i, j] = d2 f_k / ds_i ds_j``.

    The field is quadratic, so the tensor does not depend on the state and
    all third derivatives vanish.
    """
    H = np.zeros((4, 4, 4))
    H[0, 0, 0] = -2.0
    H[0, 0, 2] = H[0, 2, 0] = -p.a1
    H[0, 0, 3] = H[0, 3, 0] = -p.a2
    H[1, 0, 3] = H[1, 3, 0] = p.u * p.a2
    H[2, 0, 2] = H[2, 2, 0] = p.a3
    H[3, 0, 2] = H[3, 2, 0] = -p.a3
    return H


def bilinear(p: Params, v, w) -> np.ndarray:
    """``B(v, w) = sum_ij H[k,i,j] v_i w_j``; accepts complex vectors."""
    return np.einsum("kij,i,j->k", hessian(p), v, w)


def _check_param(name: str) -> None:
    if name not in PARAM_NAMES:
        raise ConfigError(f"unknown parameter {name!r}")


def param_derivative(s, p: Params, name: str) -> np.ndarray:
    """Exact derivative of :func:`rhs` with respect to one parameter."""
    _check_param(name)
    x, y1, y2, y3 = s
    d = {
        "a1": (-x * y2, 0.0, 0.0, 0.0),
        "a2": (-x * y3, p.u * x * y3, 0.0, 0.0),
        "a3": (0.0, 0.0, x * y2, -x * y2),
        "b": (0.0, -y1, y1, 0.0),
        "c": (0.0, 0.0, -y2, y2),
        "d1": (0.0, -y1, 0.0, 0.0),
        "d2": (0.0, 0.0, -y2, 0.0),
        "d3": (0.0, 0.0, 0.0, -y3),
        "u": (0.0, p.a2 * x * y3, 0.0, 0.0),
    }[name]
    return np.array(d, dtype=float)


def jacobian_param_derivative(s, p: Params, name: str) -> np.ndarray:
    """Exact derivative of the Jacobian with respect to one parameter.

    The Jacobian is affine in each single parameter, so the difference
    between unit-shifted evaluations is exact up to rounding.
    """
    _check_param(name)
    v = getattr(p, name)
    return jacobian(s, p.with_value(name, v + 1.0)) - jacobian(s, p)


def nondimensionalize(d: DimensionalParams) -> tuple[Params, Scales]:
    """Map dimensional rates to the dimensionless model (``t = r T``, ``x = X / K``)."""
    r, K = d.r, d.K
    p = Params(
        a1=d.A1 * K / r,
        a2=d.A2 * K / r,
        a3=d.A3 * K / r,
        b=d.B / r,
        c=d.C / r,
        d1=d.D1 / r,
        d2=d.D2 / r,
        d3=d.D3 / r,
        u=d.u,
    )
    return p, Scales(time=1.0 / r, state=K)


def dimensionalize(p: Params, r: float, K: float) -> DimensionalParams:
    """Inverse of :func:`nondimensionalize` for given ``r`` and ``K``."""
    if not (r > 0 and K > 0):
        raise ConfigError("r and K must be positive")
    return DimensionalParams(
        r=r,
        K=K,
        A1=p.a1 * r / K,
        A2=p.a2 * r / K,
        A3=p.a3 * r / K,
        B=p.b * r,
        C=p.c * r,
        D1=p.d1 * r,
        D2=p.d2 * r,
        D3=p.d3 * r,
        u=p.u,
    )


def absorbing_region(p: Params) -> AbsorbingRegion:
    """Bounds of the absorbing region with ``zeta = min(d1, d2, d3)``."""
    zeta = min(p.d1, p.d2, p.d3)
    if zeta >= 1.0:
        warnings.warn("zeta = min(d1, d2, d3) >= 1; the predator bound is not informative", stacklevel=2)
    return AbsorbingRegion(x_max=1.0, predator_sum_max=p.u * (1.0 - zeta) ** 2 / (4.0 * zeta), zeta=zeta)


def clamp_state(s) -> np.ndarray:
    """Clamp round-off negatives to zero. Used only when emitting results."""
    return np.maximum(np.asarray(s, dtype=float), 0.0)
