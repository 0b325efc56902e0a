"""Two-parameter continuation of fold and Hopf loci with CP, BT and GH detection; region maps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .continuation import ArclengthProblem, ContinuationConfig, SpecialPoint, locate_zero, tangent, trace_curve
from .equilibria import Equilibrium, find, interior_equilibria
from .errors import ConfigError, NumericalError, SeedNotFold, SeedNotHopf, StallAtFold
from .model import PARAM_NAMES, Params, State, bilinear, jacobian, param_derivative, rhs
from .normalform import first_lyapunov
from .simulate import IntegratorConfig, settle
from .stability import char_coeffs, eigenvalues, hopf_discriminant, routh_hurwitz

REGION_LABELS = ("E2_stable_only", "bistable_E2_E4", "E4_stable_only", "E4_unstable_cycle", "neither")


@dataclass(frozen=True)
class Codim2Record:
    p1: float
    p2: float
    state: State
    diag: dict

    @property
    def z(self) -> np.ndarray:
        return np.array([*self.state, self.p1, self.p2])


@dataclass
class Codim2Curve:
    kind: str  # fold_curve | hopf_curve
    p1_name: str
    p2_name: str
    points: list[Codim2Record]


@dataclass(frozen=True)
class Codim2Point:
    kind: str  # CP | BT | GH
    p1: float
    p2: float
    state: State
    residuals: dict = field(default_factory=dict)


@dataclass
class Codim2Result:
    curve: Codim2Curve
    points: list[Codim2Point]
    stop_reasons: tuple[str, ...] = ()

    def of_kind(self, kind: str) -> list[Codim2Point]:
        return [q for q in self.points if q.kind == kind]


class Codim2Problem(ArclengthProblem):
    """``{rhs = 0, g = 0}`` in ``z = (x, y1, y2, y3, p1, p2)`` for a scalar test ``g``."""

    def __init__(self, p: Params, p1: str, p2: str, g: Callable[[np.ndarray, Params], float]):
        for n in (p1, p2):
            if n not in PARAM_NAMES:
                raise ConfigError(f"unknown parameter {n!r}")
        if p1 == p2:
            raise ConfigError("the two free parameters must differ")
        self.p, self.p1, self.p2, self.g = p, p1, p2, g

    def params(self, z) -> Params:
        a, b = float(z[4]), float(z[5])
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            raise ValueError("parameters left the positive range")
        return self.p.replace(**{self.p1: a, self.p2: b})

    def F(self, z):
        q = self.params(z)
        return np.append(rhs(z[:4], q), self.g(z[:4], q))

    def DF(self, z):
        q = self.params(z)
        s = z[:4]
        top = np.column_stack([jacobian(s, q), param_derivative(s, q, self.p1), param_derivative(s, q, self.p2)])
        grad = np.empty(6)
        for i in range(6):
            h = 1e-6 * max(1.0, abs(z[i])) if i < 4 else 1e-6 * max(1e-2, abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            grad[i] = (self.g(zp[:4], self.params(zp)) - self.g(zm[:4], self.params(zm))) / (2 * h)
        return np.vstack([top, grad])


def _fold_test(s, q) -> float:
    return char_coeffs(jacobian(s, q)).eps4


def _hopf_test(s, q) -> float:
    return hopf_discriminant(char_coeffs(jacobian(s, q)))


def fold_null_vectors(J: np.ndarray, q_ref=None, p_ref=None) -> tuple[np.ndarray, np.ndarray]:
    """Unit right and left null vectors of a singular ``J``, oriented to agree with references."""
    q = np.linalg.svd(J)[2][-1]
    pl = np.linalg.svd(J.T)[2][-1]
    if q_ref is not None and q @ q_ref < 0:
        q = -q
    if p_ref is not None and pl @ p_ref < 0:
        pl = -pl
    return q, pl


def fold_quadratic_coefficient(s, p: Params, q_ref=None, p_ref=None) -> tuple[float, np.ndarray, np.ndarray]:
    """``p . B(q, q)`` with continuously oriented unit null vectors; vanishes at a cusp.

    Unit left and right vectors avoid the pole of ``p.B(q,q) / p.q`` at a
    Bogdanov-Takens point, where ``p.q = 0``.
    """
    q, pl = fold_null_vectors(jacobian(s, p), q_ref, p_ref)
    return float(pl @ bilinear(p, q, q)), q, pl


def _seed_z(p: Params, p1: str, p2: str, sp: SpecialPoint | Codim2Point | Equilibrium, base: Params | None):
    q = base if base is not None else p
    if isinstance(sp, SpecialPoint):
        q = q.with_value(sp.free, sp.param)
        state = np.array(sp.state)
    elif isinstance(sp, Codim2Point):
        state = np.array(sp.state)
        q = q.replace(**{p1: sp.p1, p2: sp.p2})
    else:
        state = sp.as_array()
    return q, np.array([*state, getattr(q, p1), getattr(q, p2)])


def _run(prob: Codim2Problem, z0: np.ndarray, cfg: ContinuationConfig, bounds, make_diag, state_floor: float) -> tuple[list[list[Codim2Record]], list[str]]:
    (lo1, hi1), (lo2, hi2) = bounds

    def inside(w):
        return lo1 <= w[4] <= hi1 and lo2 <= w[5] <= hi2 and np.all(w[:4] > state_floor) and np.all(w[:4] < 1e3)

    t_raw = tangent(prob, z0, None)
    runs, reasons = [], []
    for sgn in (-1.0, 1.0):
        recs: list[Codim2Record] = []
        tans: list[np.ndarray] = []

        def on_point(z, t):
            prev = recs[-1] if recs else None
            recs.append(Codim2Record(float(z[4]), float(z[5]), State(*map(float, z[:4])), make_diag(z, prob.params(z), prev)))
            tans.append(t.copy())

        try:
            reasons.append(trace_curve(prob, z0, sgn * t_raw, cfg, inside, on_point))
        except StallAtFold as exc:
            reasons.append(f"stall: {exc}")
        runs.append(list(zip(recs, tans)))
    return runs, reasons


def _merge(runs) -> list[Codim2Record]:
    back = [r for r, _ in runs[0]]
    fwd = [r for r, _ in runs[1]]
    return list(reversed(back)) + fwd[1:]


def _crossings(prob, runs, cfg, key: str, tau_factory, kind: str, accept=lambda z, q: True) -> list[Codim2Point]:
    pts = []
    for run in runs:
        for k in range(len(run) - 1):
            (r0, t0), (r1, _) = run[k], run[k + 1]
            f0, f1 = r0.diag.get(key), r1.diag.get(key)
            if f0 is None or f1 is None or not (np.isfinite(f0) and np.isfinite(f1)):
                continue
            if np.sign(f0) == np.sign(f1) or f0 == 0:
                continue
            z0 = r0.z
            sigma = float(t0 @ (r1.z - z0))
            if sigma <= 0:
                continue
            tau = tau_factory(r0)
            try:
                zl, fv = locate_zero(prob, z0, t0, sigma, tau, cfg, f0, f1)
            except (ValueError, NumericalError):
                continue
            q = prob.params(zl)
            if not accept(zl, q):
                continue
            pts.append(
                Codim2Point(
                    kind,
                    float(zl[4]),
                    float(zl[5]),
                    State(*map(float, zl[:4])),
                    {"test": float(fv), "residual": float(np.linalg.norm(rhs(zl[:4], q))), "defining": float(prob.g(zl[:4], q))},
                )
            )
    return pts


def _default_bounds(p: Params, p1: str, p2: str, bounds):
    if bounds is not None:
        return bounds
    out = []
    for n in (p1, p2):
        v = getattr(p, n)
        out.append((1e-4, max(1.5, 2 * v)))
    return tuple(out)


def continue_fold(
    p: Params,
    p1: str,
    p2: str,
    seed: SpecialPoint | Codim2Point,
    cfg: ContinuationConfig = ContinuationConfig(ds0=1e-3, ds_max=2e-2),
    bounds=None,
    state_floor: float = -0.5,
) -> Codim2Result:
    """Trace ``{rhs = 0, det J = 0}`` in ``(p1, p2)``; detect CP (``p.B(q,q)`` sign change) and BT (``eps3`` sign change).

    Tracing stops at the parameter ``bounds`` or once a state component drops
    below ``state_floor`` (the curve continues through nonphysical states).
    """
    q0, z0 = _seed_z(p, p1, p2, seed, None)
    cc = char_coeffs(jacobian(z0[:4], q0))
    if abs(cc.eps4) > 1e-8:
        raise SeedNotFold(f"det J = {cc.eps4:.3g} at the seed")
    prob = Codim2Problem(q0, p1, p2, _fold_test)

    def diag(z, q, prev):
        cc = char_coeffs(jacobian(z[:4], q))
        refs = (None, None) if prev is None else (prev.diag["_q"], prev.diag["_p"])
        a, qv, pv = fold_quadratic_coefficient(z[:4], q, *refs)
        return {"eps4": cc.eps4, "eps3": cc.eps3, "cusp": a, "_q": qv, "_p": pv}

    runs, reasons = _run(prob, z0, cfg, _default_bounds(q0, p1, p2, bounds), diag, state_floor)

    def cusp_tau(r0):
        qr, pr = r0.diag["_q"], r0.diag["_p"]
        return lambda w: fold_quadratic_coefficient(w[:4], prob.params(w), qr, pr)[0]

    def eps3_tau(r0):
        return lambda w: char_coeffs(jacobian(w[:4], prob.params(w))).eps3

    pts = _crossings(prob, runs, cfg, "cusp", cusp_tau, "CP")
    pts += _crossings(prob, runs, cfg, "eps3", eps3_tau, "BT")
    curve = Codim2Curve("fold_curve", p1, p2, _merge(runs))
    return Codim2Result(curve, pts, tuple(reasons))


def _hopf_diag(z, q, prev) -> dict:
    cc = char_coeffs(jacobian(z[:4], q))
    omega2 = cc.eps3 / cc.eps1 if cc.eps1 != 0 else float("nan")
    d = {"delta": hopf_discriminant(cc), "eps3": cc.eps3, "omega2": omega2, "alpha": math.sqrt(omega2) if omega2 > 0 else 0.0}
    d["l1"] = float("nan")
    if omega2 > 0 and cc.eps1 > 0 and cc.eps1 * cc.eps2 - cc.eps3 > 0:
        try:
            d["l1"] = first_lyapunov(q, z[:4])
        except NumericalError:
            pass
    return d


def continue_hopf(
    p: Params,
    p1: str,
    p2: str,
    seed: SpecialPoint | Codim2Point,
    cfg: ContinuationConfig = ContinuationConfig(ds0=1e-3, ds_max=2e-2),
    bounds=None,
    state_floor: float = -0.5,
) -> Codim2Result:
    """Trace ``{rhs = 0, Delta = 0}`` in ``(p1, p2)``; detect BT (``alpha -> 0``) and GH (``l1`` sign change)."""
    q0, z0 = _seed_z(p, p1, p2, seed, None)
    cc = char_coeffs(jacobian(z0[:4], q0))
    if abs(hopf_discriminant(cc)) > 1e-8 or not cc.eps3 / cc.eps1 > 0:
        raise SeedNotHopf("seed is not a Hopf point")
    prob = Codim2Problem(q0, p1, p2, _hopf_test)
    runs, reasons = _run(prob, z0, cfg, _default_bounds(q0, p1, p2, bounds), _hopf_diag, state_floor)

    def l1_tau(r0):
        return lambda w: first_lyapunov(prob.params(w), w[:4])

    def eps3_tau(r0):
        return lambda w: char_coeffs(jacobian(w[:4], prob.params(w))).eps3

    pts = _crossings(prob, runs, cfg, "l1", l1_tau, "GH")
    bts = _crossings(prob, runs, cfg, "eps3", eps3_tau, "BT")
    for b in bts:
        ev = eigenvalues(jacobian(np.array(b.state), prob.params(np.array([*b.state, b.p1, b.p2]))))
        b.residuals["alpha"] = float(min(abs(z.imag) for z in ev))
    pts += bts
    curve = Codim2Curve("hopf_curve", p1, p2, _merge(runs))
    return Codim2Result(curve, pts, tuple(reasons))


# -- analytic transcritical locus ------------------------------------------------------


def transcritical_residual(p: Params) -> float:
    """``a2 b u (a3 - c) - (b + d1)(a3 - c - d2) d3``; zero on the transcritical surface."""
    return p.a2 * p.b * p.u * (p.a3 - p.c) - (p.b + p.d1) * (p.a3 - p.c - p.d2) * p.d3


def transcritical_curve(p: Params, p1: str, p2: str, p1_values: Sequence[float]) -> np.ndarray:
    """``p2`` on the transcritical surface for each ``p1`` (NaN where no positive solution).

    The residual is affine in every single parameter, so two evaluations fix ``p2``.
    """
    out = []
    for v in p1_values:
        q = p.with_value(p1, float(v))
        r0 = transcritical_residual(q.with_value(p2, 1.0))
        r1 = transcritical_residual(q.with_value(p2, 2.0))
        slope = r1 - r0
        if slope == 0:
            out.append(float("nan"))
            continue
        root = 1.0 - r0 / slope
        out.append(root if root > 0 else float("nan"))
    return np.array(out)


# -- region classification ----------------------------------------------------------------


@dataclass
class RegionMap:
    p1_name: str
    p2_name: str
    p1_values: np.ndarray
    p2_values: np.ndarray
    labels: list[list[str]]  # labels[i][j] for p1_values[i], p2_values[j]
    failures: int = 0

    @property
    def resolution(self) -> tuple[int, int]:
        return len(self.p1_values), len(self.p2_values)


def classify_cell(p: Params, integrate_cycles: bool = True, t_limit: float = 4e4) -> str:
    """Label one parameter point by local stability, integrating only to confirm cycles."""
    e2 = np.array([1.0, 0.0, 0.0, 0.0])
    e2_stable = routh_hurwitz(char_coeffs(jacobian(e2, p))).verdict == "stable"
    _, eqs = interior_equilibria(p)
    e4 = find(eqs, "E4")
    e4_stable = False
    if e4 is not None:
        e4_stable = routh_hurwitz(char_coeffs(jacobian(e4.as_array(), p))).verdict == "stable"
    if e2_stable and e4_stable:
        return "bistable_E2_E4"
    if e2_stable:
        return "E2_stable_only"
    if e4_stable:
        return "E4_stable_only"
    if e4 is not None and integrate_cycles:
        ev = eigenvalues(jacobian(e4.as_array(), p))
        unstable_pair = any(z.real > 0 and z.imag != 0 for z in ev)
        if unstable_pair:
            s0 = e4.as_array() * 1.02
            out, _ = settle(s0, p, IntegratorConfig(rtol=1e-7, atol=1e-9, tmax=4000.0, dense_stride=1.0), t_limit=t_limit)
            if out.attractor == "limit_cycle":
                return "E4_unstable_cycle"
    return "neither"


def _cell(args) -> str:
    p, integrate_cycles = args
    try:
        return classify_cell(p, integrate_cycles)
    except (NumericalError, ValueError, ArithmeticError):
        return "neither!"


def region_classify(
    p: Params,
    p1: str,
    p2: str,
    bounds,
    resolution: tuple[int, int] = (20, 20),
    jobs: int = 1,
    integrate_cycles: bool = True,
) -> RegionMap:
    """Label a grid of parameter points; results are ordered by cell index regardless of ``jobs``."""
    (lo1, hi1), (lo2, hi2) = bounds
    n1, n2 = resolution
    if n1 < 1 or n2 < 1 or n1 > 200 or n2 > 200:
        raise ConfigError("resolution must be between 1 and 200 per axis")
    if lo1 == hi1:
        n1 = 1
    if lo2 == hi2:
        n2 = 1
    v1 = np.linspace(lo1, hi1, n1) if n1 > 1 else np.array([lo1])
    v2 = np.linspace(lo2, hi2, n2) if n2 > 1 else np.array([lo2])
    cells = [(p.replace(**{p1: float(a), p2: float(b)}), integrate_cycles) for a in v1 for b in v2]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            flat = list(ex.map(_cell, cells, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        flat = [_cell(c) for c in cells]
    failures = sum(1 for f in flat if f.endswith("!"))
    flat = [f.rstrip("!") for f in flat]
    labels = [flat[i * n2 : (i + 1) * n2] for i in range(n1)]
    return RegionMap(p1, p2, v1, v2, labels, failures)


# -- output ----------------------------------------------------------------------------------


def write_curve_csv(curve: Codim2Curve, path: str | Path) -> None:
    key = "eps3" if curve.kind == "fold_curve" else "l1"
    with open(path, "w") as fh:
        fh.write("p1,p2,x,y1,y2,y3,diag\n")
        for r in curve.points:
            fh.write(",".join(repr(float(v)) for v in (r.p1, r.p2, *r.state, r.diag.get(key, float("nan")))) + "\n")


def write_points_csv(points: Sequence[Codim2Point], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("kind,p1,p2\n")
        for q in points:
            fh.write(f"{q.kind},{q.p1!r},{q.p2!r}\n")


def write_region_csv(rm: RegionMap, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("p1,p2,label\n")
        for i, a in enumerate(rm.p1_values):
            for j, b in enumerate(rm.p2_values):
                fh.write(f"{float(a)!r},{float(b)!r},{rm.labels[i][j]}\n")
