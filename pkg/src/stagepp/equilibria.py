"""Equilibria: boundary points, closed-form interior points, existence conditions, Newton refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoConvergence, SingularJacobian
from .model import Params, State, jacobian, rhs

KINDS = ("extinction", "prey_only", "interior_minus", "interior_plus")
LABELS = {"extinction": "E1", "prey_only": "E2", "interior_minus": "E3", "interior_plus": "E4"}

POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class Equilibrium:
    """A refined equilibrium tagged with its kind.

    ``interior_minus`` is E3 (the ``+mu`` root, larger prey density) and
    ``interior_plus`` is E4 (the ``-mu`` root).
    """

    state: State
    kind: str
    residual: float

    @property
    def label(self) -> str:
        return LABELS[self.kind]

    def as_array(self) -> np.ndarray:
        return np.array(self.state, dtype=float)


@dataclass(frozen=True)
class InteriorDerivation:
    """Intermediate quantities of the interior-equilibrium reduction.

    ``x_roots[0]`` is the ``+mu`` root (E3), ``x_roots[1]`` the ``-mu`` root (E4).
    ``closed_form_states`` are the unrefined back-substituted states.
    """

    mu2: float
    mu: float
    delta3: float
    delta4: float
    quadratic: tuple[float, float, float]
    x_roots: tuple[float, ...]
    feasible: tuple[bool, ...]
    closed_form_states: tuple[np.ndarray, ...] = field(repr=False)


@dataclass(frozen=True)
class ExistenceReport:
    d2_bound_holds: bool
    case: str  # case1 | case2 | case3 | none
    details: dict

    @property
    def passes(self) -> bool:
        return self.d2_bound_holds and self.case != "none"


def boundary_equilibria() -> list[Equilibrium]:
    """E1 = (0, 0, 0, 0) and E2 = (1, 0, 0, 0); both exist for every parameter set."""
    return [
        Equilibrium(State(0.0, 0.0, 0.0, 0.0), "extinction", 0.0),
        Equilibrium(State(1.0, 0.0, 0.0, 0.0), "prey_only", 0.0),
    ]


def mu_squared(p: Params) -> float:
    """Discriminant of the interior quadratic in ``x``."""
    a2, a3, b, c, d1, d2, d3, u = p.a2, p.a3, p.b, p.c, p.d1, p.d2, p.d3, p.u
    return (
        a3**2 * (b + d1) ** 2 * d3**2
        - 2 * a2 * a3 * b * (b + d1) * (c + 2 * d2) * d3 * u
        + a2**2 * b**2 * c**2 * u**2
    )


def back_substitute(x: float, p: Params) -> np.ndarray:
    """Interior state with prey density ``x`` from the ``y3``, ``y2`` and ``x`` equations."""
    k3 = (p.c - p.a3 * x) / p.d3
    y2 = (1.0 - x) / (p.a1 + p.a2 * k3)
    y1 = (p.c - p.a3 * x + p.d2) * y2 / p.b
    return np.array([x, y1, y2, k3 * y2])


def _is_feasible(s: np.ndarray, p: Params) -> bool:
    return bool(np.all(s > POSITIVITY_TOL) and p.c - p.a3 * s[0] > 0)


def interior_derivation(p: Params) -> InteriorDerivation:
    a2, a3, b, c, d1, d3, u = p.a2, p.a3, p.b, p.c, p.d1, p.d3, p.u
    delta3 = a3 * (b + d1) * d3 + a2 * b * c * u
    delta4 = a3 * (b + d1) * d3 - a2 * b * c * u
    # a2 a3 b u x^2 - delta3 x + (b + d1)(c + d2) d3 = 0, discriminant mu^2
    quad = (a2 * a3 * b * u, -delta3, (b + d1) * (c + p.d2) * d3)
    m2 = mu_squared(p)
    if m2 < 0:
        return InteriorDerivation(m2, float("nan"), delta3, delta4, quad, (), (), ())
    mu = math.sqrt(m2)
    xs = ((delta3 + mu) / (2 * a2 * a3 * b * u), (delta3 - mu) / (2 * a2 * a3 * b * u))
    states = tuple(back_substitute(x, p) for x in xs)
    feas = tuple(_is_feasible(s, p) for s in states)
    return InteriorDerivation(m2, mu, delta3, delta4, quad, xs, feas, states)


def interior_equilibria(p: Params, refine_points: bool = True) -> tuple[InteriorDerivation, list[Equilibrium]]:
    """Feasible interior equilibria, E3 first (larger ``x``) then E4."""
    der = interior_derivation(p)
    out = []
    for s, ok, kind in zip(der.closed_form_states, der.feasible, ("interior_minus", "interior_plus")):
        if not ok:
            continue
        res = float(np.linalg.norm(rhs(s, p)))
        eq = Equilibrium(State(*s), kind, res)
        if refine_points:
            try:
                eq = refine(eq, p)
            except (NoConvergence, SingularJacobian):
                pass  # keep the closed form, e.g. exactly at a fold
        out.append(eq)
    return der, out


def all_equilibria(p: Params) -> list[Equilibrium]:
    return boundary_equilibria() + interior_equilibria(p)[1]


def find(eqs: list[Equilibrium], label: str) -> Equilibrium | None:
    for e in eqs:
        if e.label == label or e.kind == label:
            return e
    return None


def existence_report(p: Params) -> ExistenceReport:
    """Evaluate the d2 bound and the three existence cases literally."""
    a2, a3, b, c, d1, d2, d3, u = p.a2, p.a3, p.b, p.c, p.d1, p.d2, p.d3, p.u
    bound_rhs = (a3 * (b + d1) * d3 - a2 * b * c * u) ** 2 / (4 * a2 * a3 * b * (b + d1) * d3 * u)
    bound = d2 < bound_rhs
    denom = 2 * a3 * b * u - b * c * u
    details: dict = {"d2_bound": {"lhs": d2, "rhs": bound_rhs, "holds": bound}}
    eq_ac = abs(a3 - c) < 1e-12
    c1 = {
        "a3 = c": eq_ac,
        "a2 > (a3 b d3 + a3 d1 d3)/(2 a3 b u - b c u)": denom != 0 and a2 > (a3 * b * d3 + a3 * d1 * d3) / denom,
    }
    c2 = {"a3 > c": a3 > c and not eq_ac, "a2 b c u > a3 (b + d1) d3": a2 * b * c * u > a3 * (b + d1) * d3}
    c3 = {
        "a3 < c": a3 < c and not eq_ac,
        "2 a3 > c": 2 * a3 > c,
        "a2 > a3 d3 (b + d1)/(2 a3 b u - b c u)": denom != 0 and a2 > a3 * d3 * (b + d1) / denom,
        "(a3 - c)(d1 d3 + b (d3 - a2 u))/((b + d1) d3) < d2": (a3 - c) * (d1 * d3 + b * (d3 - a2 * u)) / ((b + d1) * d3) < d2,
    }
    details.update(case1=c1, case2=c2, case3=c3)
    case = "none"
    for name, conds in (("case1", c1), ("case2", c2), ("case3", c3)):
        if all(conds.values()):
            case = name
            break
    return ExistenceReport(bound, case, details)


def refine(e: Equilibrium, p: Params, tol: float = 1e-12, max_iter: int = 50) -> Equilibrium:
    """Damped Newton iteration on ``rhs = 0`` with the analytic Jacobian."""
    s = e.as_array()
    f = rhs(s, p)
    r = float(np.linalg.norm(f))
    if r >= 0.1:
        raise NoConvergence(f"initial residual {r:.3g} outside the Newton basin")
    for _ in range(max_iter + 1):
        if r < tol:
            return Equilibrium(State(*s), e.kind, r)
        J = jacobian(s, p)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian("Newton step is unsolvable") from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("Newton step is not finite")
        lam = 1.0
        while True:
            s_new = s + lam * step
            f_new = rhs(s_new, p)
            r_new = float(np.linalg.norm(f_new))
            if r_new < r or lam < 1e-4:
                break
            lam *= 0.5
        if r_new >= r and np.linalg.norm(step) < 1e-15 * (1 + np.linalg.norm(s)):
            break
        s, f, r = s_new, f_new, r_new
    if r < tol:
        return Equilibrium(State(*s), e.kind, r)
    raise NoConvergence(f"Newton did not reach residual {tol:g} (last {r:.3g})")


def global_stability_prey_only_predicate(s, p: Params) -> bool:
    """Pointwise sufficient condition for global stability of E2."""
    x, _, y2, y3 = s
    return bool((1 - x) * (p.a1 * y2 + x - 1) + p.a2 * y3 < 0)


def global_stability_interior_predicate(s, e: Equilibrium, p: Params) -> bool:
    """Conjunction of the four pointwise Lyapunov inequalities around ``e``."""
    x, y1, y2, y3 = (float(v) for v in s)
    if min(y1, y2, y3) <= 0:
        raise DomainError("predicate needs strictly positive predator densities")
    X, Y1, _, Y3 = e.state
    c1 = (x - X) * (1 - x - p.a1 * y2) + p.a2 * X * y3 - p.a2 * x * y3 * Y1 / y1 < 0
    c2 = Y1 * (p.d1 + p.b) < p.d1 * y1 + p.d2 * y2
    c3 = p.c + p.d2 < p.a3 * x + p.b * y1 / y2
    c4 = Y3 * (p.d3 - p.c * y2 / y3 + p.a3 * x * y2 / y3) < p.d3 * y3
    return bool(c1 and c2 and c3 and c4)
