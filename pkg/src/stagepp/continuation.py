"""Pseudo-arclength continuation of equilibrium branches with LP, BP and H detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .equilibria import Equilibrium, refine
from .errors import ConfigError, NoSecondBranch, SeedNotConverged, StallAtFold
from .model import PARAM_NAMES, Params, State, jacobian, param_derivative, rhs
from .stability import CharCoeffs, char_coeffs, hopf_discriminant, routh_hurwitz

DEFAULT_RANGES = {"b": (0.001, 0.2)}


@dataclass(frozen=True)
class ContinuationConfig:
    ds0: float = 2e-3
    ds_min: float = 1e-9
    ds_max: float = 1e-2
    tol: float = 1e-10
    max_steps: int = 4000
    max_newton: int = 8

    def __post_init__(self) -> None:
        if not (0 < self.ds_min <= self.ds0 <= self.ds_max):
            raise ConfigError("need 0 < ds_min <= ds0 <= ds_max")
        if self.tol <= 0 or self.max_steps < 1 or self.max_newton < 1:
            raise ConfigError("invalid continuation tolerances")


# -- generic engine ------------------------------------------------------------


class ArclengthProblem:
    """``F: R^n -> R^(n-1)`` whose zero set is a curve.

    Subclasses provide :meth:`F` and :meth:`DF`; a :class:`ValueError`
    from either marks the point as inadmissible (e.g. nonpositive parameter).
    """

    def F(self, z: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def DF(self, z: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


def tangent(prob: ArclengthProblem, z: np.ndarray, t_ref: np.ndarray | None) -> np.ndarray:
    """Unit tangent of the curve at ``z``, oriented to agree with ``t_ref``."""
    D = prob.DF(z)
    if t_ref is None:
        t = np.linalg.svd(D)[2][-1]
    else:
        M = np.vstack([D, t_ref])
        rhs_ = np.zeros(len(z))
        rhs_[-1] = 1.0
        try:
            t = np.linalg.solve(M, rhs_)
        except np.linalg.LinAlgError:
            t = np.linalg.svd(D)[2][-1]
    t = t / np.linalg.norm(t)
    if t_ref is not None and t @ t_ref < 0:
        t = -t
    return t


def correct(
    prob: ArclengthProblem,
    z_pred: np.ndarray,
    t: np.ndarray,
    tol: float,
    max_newton: int,
    anchor: np.ndarray | None = None,
    sigma: float = 0.0,
) -> tuple[np.ndarray, int] | None:
    """Newton on ``{F = 0, t . (w - anchor) = sigma}``; returns ``(w, iterations)`` or ``None``."""
    if anchor is None:
        anchor, sigma = z_pred, 0.0
    w = z_pred.copy()
    for it in range(1, max_newton + 1):
        try:
            Fw = prob.F(w)
            M = np.vstack([prob.DF(w), t])
        except ValueError:
            return None
        g = np.append(Fw, t @ (w - anchor) - sigma)
        try:
            dw = np.linalg.solve(M, -g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(dw)):
            return None
        w = w + dw
        if np.linalg.norm(dw) <= 1e-11 * (1 + np.linalg.norm(w)):
            try:
                if np.linalg.norm(prob.F(w)) < tol:
                    return w, it
            except ValueError:
                return None
    try:
        if np.linalg.norm(prob.F(w)) < tol:
            return w, max_newton
    except ValueError:
        pass
    return None


def trace_curve(
    prob: ArclengthProblem,
    z0: np.ndarray,
    t0: np.ndarray,
    cfg: ContinuationConfig,
    inside: Callable[[np.ndarray], bool],
    on_point: Callable[[np.ndarray, np.ndarray], None],
) -> str:
    """Follow the curve from ``(z0, t0)`` until ``inside`` fails; returns the stop reason."""
    z, t = z0, t0
    ds = cfg.ds0
    on_point(z, t)
    for _ in range(cfg.max_steps):
        while True:
            res = correct(prob, z + ds * t, t, cfg.tol, cfg.max_newton)
            if res is not None:
                w, its = res
                try:
                    t_new = tangent(prob, w, t)
                except ValueError:
                    res = None
                else:
                    # reject steps that turn sharply (branch jumping)
                    if t_new @ t < 0.8 and ds > cfg.ds_min * 4:
                        res = None
            if res is not None:
                break
            ds *= 0.5
            if ds < cfg.ds_min:
                raise StallAtFold(f"step underflow near {z}")
        if not inside(w):
            return "boundary"
        z, t = w, t_new
        on_point(z, t)
        if its <= 3:
            ds = min(cfg.ds_max, ds * 1.3)
    return "max_steps"


def point_at(prob: ArclengthProblem, z: np.ndarray, t: np.ndarray, sigma: float, cfg: ContinuationConfig):
    res = correct(prob, z + sigma * t, t, cfg.tol * 1e-2, 30, anchor=z, sigma=sigma)
    if res is None:
        res = correct(prob, z + sigma * t, t, cfg.tol, 30, anchor=z, sigma=sigma)
    return None if res is None else res[0]


def locate_zero(
    prob: ArclengthProblem,
    z: np.ndarray,
    t: np.ndarray,
    sigma_hi: float,
    tau: Callable[[np.ndarray], float],
    cfg: ContinuationConfig,
    f_lo: float | None = None,
    f_hi: float | None = None,
    max_iter: int = 80,
) -> tuple[np.ndarray, float]:
    """Secant iteration (bisection fallback) for ``tau = 0`` between ``z`` and arclength ``sigma_hi``."""
    a, b = 0.0, sigma_hi
    fa = tau(z) if f_lo is None else f_lo
    zb = point_at(prob, z, t, b, cfg)
    fb = tau(zb) if f_hi is None else f_hi
    best = (zb, fb) if abs(fb) < abs(fa) else (z, fa)
    for _ in range(max_iter):
        if fb != fa:
            s = b - fb * (b - a) / (fb - fa)
        else:
            s = 0.5 * (a + b)
        lo, hi = min(a, b), max(a, b)
        if not (lo < s < hi) or abs(s - 0.5 * (a + b)) > 0.45 * (hi - lo):
            s = 0.5 * (a + b)
        zs = point_at(prob, z, t, s, cfg)
        if zs is None:
            s = 0.5 * (a + b)
            zs = point_at(prob, z, t, s, cfg)
            if zs is None:
                break
        fs = tau(zs)
        if abs(fs) < abs(best[1]):
            best = (zs, fs)
        if fs == 0.0 or abs(b - a) < 1e-15 * (1 + abs(sigma_hi)):
            break
        if np.sign(fs) == np.sign(fa):
            a, fa = s, fs
        else:
            b, fb = s, fs
        if abs(b - a) < 1e-14:
            break
    return best


# -- equilibrium branches --------------------------------------------------------


class EquilibriumProblem(ArclengthProblem):
    """Equilibria of the model with one free parameter; ``z = (x, y1, y2, y3, lambda)``."""

    def __init__(self, p: Params, free: str):
        if free not in PARAM_NAMES:
            raise ConfigError(f"unknown free parameter {free!r}")
        self.p = p
        self.free = free

    def params(self, lam: float) -> Params:
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError("free parameter left the positive range")
        return self.p.with_value(self.free, float(lam))

    def F(self, z):
        return rhs(z[:4], self.params(z[4]))

    def DF(self, z):
        q = self.params(z[4])
        return np.column_stack([jacobian(z[:4], q), param_derivative(z[:4], q, self.free)])


@dataclass(frozen=True)
class BranchPointRecord:
    param: float
    state: State
    cc: CharCoeffs
    verdict: str
    fold: float
    hopf: float
    hopf_raw: float
    guards: bool
    branch: float
    residual: float
    tangent: np.ndarray = field(repr=False)

    @property
    def stable(self) -> bool:
        return self.verdict == "stable"


@dataclass
class SpecialPoint:
    kind: str  # H | LP | BP
    param: float
    state: State
    residual: float
    test_value: float
    free: str
    l1: float | None = None
    alpha: float | None = None
    index: int = 0
    tangent: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)


@dataclass
class ContinuationResult:
    free: str
    base: Params
    records: list[BranchPointRecord]
    specials: list[SpecialPoint]
    stop_reasons: tuple[str, ...] = ()

    def params_at(self, sp: SpecialPoint) -> Params:
        return self.base.with_value(self.free, sp.param)

    def of_kind(self, kind: str) -> list[SpecialPoint]:
        return [s for s in self.specials if s.kind == kind]


def test_functions(rec: BranchPointRecord) -> tuple[float, float, float]:
    """``(fold, hopf, branch)`` values of a record; hopf carries the guard sentinel."""
    return rec.fold, rec.hopf, rec.branch


def _bordered_det(prob: EquilibriumProblem, z: np.ndarray, t: np.ndarray) -> float:
    return float(np.linalg.det(np.vstack([prob.DF(z), t])))


def _hopf_guard(cc: CharCoeffs) -> bool:
    return cc.eps1 > 0 and cc.eps1 * cc.eps2 - cc.eps3 > 0


def _make_record(prob: EquilibriumProblem, z, t, prev: BranchPointRecord | None) -> BranchPointRecord:
    q = prob.params(z[4])
    J = jacobian(z[:4], q)
    cc = char_coeffs(J)
    v = routh_hurwitz(cc)
    delta = hopf_discriminant(cc)
    guards = _hopf_guard(cc)
    if guards or prev is None:
        hopf = delta
    else:
        sign = math.copysign(1.0, prev.hopf) if prev.hopf != 0 else 1.0
        hopf = sign * max(abs(delta), 1e-300)
    return BranchPointRecord(
        param=float(z[4]),
        state=State(*map(float, z[:4])),
        cc=cc,
        verdict=v.verdict,
        fold=cc.eps4,
        hopf=hopf,
        hopf_raw=delta,
        guards=guards,
        branch=_bordered_det(prob, z, t),
        residual=float(np.linalg.norm(rhs(z[:4], q))),
        tangent=t.copy(),
    )


def _z(rec: BranchPointRecord) -> np.ndarray:
    return np.array([*rec.state, rec.param])


def _locate_specials(prob, recs: list[BranchPointRecord], cfg: ContinuationConfig) -> list[SpecialPoint]:
    specials = []
    for k in range(len(recs) - 1):
        r0, r1 = recs[k], recs[k + 1]
        z0, t0 = _z(r0), r0.tangent
        sigma = float(t0 @ (_z(r1) - z0))
        if sigma <= 0:
            continue
        if np.sign(r0.fold) != np.sign(r1.fold) and r0.fold != 0:
            kind = "BP" if np.sign(r0.branch) != np.sign(r1.branch) else "LP"
            zl, fv = locate_zero(prob, z0, t0, sigma, lambda w: char_coeffs(jacobian(w[:4], prob.params(w[4]))).eps4, cfg,
                                 r0.fold, r1.fold)
            specials.append(_special(prob, kind, zl, fv, t0, k))
        if r0.guards and r1.guards and np.sign(r0.hopf_raw) != np.sign(r1.hopf_raw):
            def tau(w):
                return hopf_discriminant(char_coeffs(jacobian(w[:4], prob.params(w[4]))))

            zl, fv = locate_zero(prob, z0, t0, sigma, tau, cfg, r0.hopf_raw, r1.hopf_raw)
            cc = char_coeffs(jacobian(zl[:4], prob.params(zl[4])))
            if cc.eps4 > 0 and cc.eps3 / cc.eps1 > 0:  # genuine imaginary pair, not a neutral saddle
                sp = _special(prob, "H", zl, fv, t0, k)
                sp.alpha = math.sqrt(cc.eps3 / cc.eps1)
                specials.append(sp)
    return specials


def _special(prob, kind, z, fv, t, k) -> SpecialPoint:
    q = prob.params(z[4])
    cc = char_coeffs(jacobian(z[:4], q))
    extra = {"fold": cc.eps4, "hopf": hopf_discriminant(cc), "branch": _bordered_det(prob, z, t)}
    return SpecialPoint(
        extra=extra,
        kind=kind,
        param=float(z[4]),
        state=State(*map(float, z[:4])),
        residual=float(np.linalg.norm(rhs(z[:4], q))),
        test_value=float(fv),
        free=prob.free,
        index=k,
        tangent=t.copy(),
    )


def _fill_lyapunov(res: ContinuationResult) -> None:
    from .normalform import first_lyapunov

    for sp in res.specials:
        if sp.kind != "H":
            continue
        try:
            sp.l1 = first_lyapunov(res.params_at(sp), sp.state)
        except Exception as exc:  # report, never hide
            sp.extra["l1_error"] = repr(exc)


def continue_equilibrium(
    p: Params,
    free: str,
    lo: float | None = None,
    hi: float | None = None,
    seed: Equilibrium | None = None,
    cfg: ContinuationConfig = ContinuationConfig(),
    directions: Sequence[int] = (-1, 1),
    lyapunov: bool = True,
) -> ContinuationResult:
    """Trace the equilibrium branch through ``seed`` in the free parameter over ``[lo, hi]``.

    Both directions are traced by default; records are returned ordered along
    the branch. Special points are localized by secant iteration on the test
    functions (fold ``eps4``, Hopf ``Delta``).
    """
    if seed is None:
        raise ConfigError("a seed equilibrium is required")
    prob = EquilibriumProblem(p, free)
    v0 = getattr(p, free)
    if lo is None or hi is None:
        dlo, dhi = DEFAULT_RANGES.get(free, (1e-3, max(2 * v0, v0 + 0.1)))
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    if not (0 < lo < hi):
        raise ConfigError("range must satisfy 0 < lo < hi")
    if not lo <= v0 <= hi:
        raise ConfigError(f"seed parameter {free}={v0} outside range [{lo}, {hi}]")
    try:
        seq = refine(seed, p, tol=cfg.tol * 1e-2)
    except Exception as exc:
        try:
            seq = refine(seed, p, tol=cfg.tol)
        except Exception:
            raise SeedNotConverged(f"seed does not converge: {exc}") from exc
    z0 = np.array([*seq.state, v0])
    t_raw = tangent(prob, z0, None)

    def inside(w):
        return lo <= w[4] <= hi and np.all(np.abs(w[:4]) < 1e3)

    branches = []
    reasons = []
    for direction in directions:
        t0 = t_raw if np.sign(t_raw[4] or 1.0) == direction else -t_raw
        if t_raw[4] == 0:
            t0 = t_raw * direction
        recs: list[BranchPointRecord] = []

        def on_point(z, t):
            recs.append(_make_record(prob, z, t, recs[-1] if recs else None))

        reasons.append(trace_curve(prob, z0, t0, cfg, inside, on_point))
        branches.append((direction, recs))
    # order along the branch: reversed backward run then forward run
    all_specials: list[SpecialPoint] = []
    ordered: list[BranchPointRecord] = []
    for direction, recs in branches:
        all_specials.extend(_locate_specials(prob, recs, cfg))
    if len(branches) == 2:
        back = branches[0][1]
        fwd = branches[1][1]
        ordered = list(reversed(back)) + fwd[1:]
    else:
        ordered = branches[0][1]
    res = ContinuationResult(free, p, ordered, all_specials, tuple(reasons))
    res.specials.sort(key=lambda s: s.param)
    if lyapunov:
        _fill_lyapunov(res)
    return res


def branch_switch(res: ContinuationResult, bp: SpecialPoint, cfg: ContinuationConfig = ContinuationConfig(),
                  eps: float = 1e-3) -> tuple[Equilibrium, Params]:
    """Seed on the branch crossing ``bp``; returns the equilibrium and its parameters."""
    prob = EquilibriumProblem(res.base, bp.free)
    z = np.array([*bp.state, bp.param])
    D = prob.DF(z)
    _, sv, Vt = np.linalg.svd(D)
    scale = max(1.0, sv[0])
    if bp.kind != "BP" or sv[-1] > 1e-6 * scale:
        raise NoSecondBranch(f"{bp.kind} at {bp.param:.6g} has a one-dimensional kernel")
    kernel = Vt[-2:]
    t1 = bp.tangent if bp.tangent is not None else kernel[0]
    t1 = kernel.T @ (kernel @ t1)
    t1 /= np.linalg.norm(t1)
    t2 = kernel[0] - (kernel[0] @ t1) * t1
    if np.linalg.norm(t2) < 1e-8:
        t2 = kernel[1] - (kernel[1] @ t1) * t1
    t2 /= np.linalg.norm(t2)
    found = []
    for sgn in (1.0, -1.0):
        w = point_at(prob, z, sgn * t2, eps, cfg)
        if w is None:
            continue
        d = w - z
        if abs(d @ t1) / np.linalg.norm(d) < 0.5:
            found.append(w)
    if not found:
        raise NoSecondBranch("correction fell back to the original branch")
    # prefer the biologically admissible side of the crossing branch
    w = max(found, key=lambda v: float(np.min(v[:4])))
    q = prob.params(w[4])
    kind = "prey_only" if np.all(np.abs(w[1:4]) < 1e-8) else "interior_minus"
    return Equilibrium(State(*w[:4]), kind, float(np.linalg.norm(rhs(w[:4], q)))), q


@dataclass(frozen=True)
class Segment:
    stable: bool
    param_start: float
    param_end: float
    start: int
    end: int


def stability_profile(res: ContinuationResult | Sequence[BranchPointRecord]) -> list[Segment]:
    """Maximal runs of records sharing the same stable/unstable verdict."""
    recs = res.records if isinstance(res, ContinuationResult) else list(res)
    if not recs:
        raise ConfigError("empty curve")
    segs = []
    start = 0
    for k in range(1, len(recs) + 1):
        if k == len(recs) or recs[k].stable != recs[start].stable:
            segs.append(Segment(recs[start].stable, recs[start].param, recs[k - 1].param, start, k - 1))
            start = k
    return segs


def write_curve_csv(res: ContinuationResult, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("param,x,y1,y2,y3,eps1,eps2,eps3,eps4,stable\n")
        for r in res.records:
            vals = (r.param, *r.state, r.cc.eps1, r.cc.eps2, r.cc.eps3, r.cc.eps4)
            fh.write(",".join(repr(float(v)) for v in vals) + f",{int(r.stable)}\n")


def write_specials_csv(specials: Sequence[SpecialPoint], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("kind,param,x,y1,y2,y3,l1\n")
        for s in specials:
            l1 = "" if s.l1 is None else repr(float(s.l1))
            fh.write(",".join([s.kind, repr(s.param), *(repr(float(v)) for v in s.state), l1]) + "\n")
