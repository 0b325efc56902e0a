"""Time integration (Dormand-Prince 5(4), PI step control) and attractor diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibria import Equilibrium, all_equilibria
from .errors import ConfigError, NonFinite, NoOscillation, StepUnderflow
from .model import Params, rhs

# Dormand-Prince 5(4) tableau
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output: y(t + theta h) = y + h * K^T (P @ [theta, theta^2, theta^3, theta^4])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

# PI controller exponents and safety factor
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_SAFETY = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 10.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``dense_stride`` sets a uniform output grid; ``None`` emits every accepted step.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    h0: float | None = None
    hmax: float = math.inf
    tmax: float = 5000.0
    dense_stride: float | None = 0.5

    def __post_init__(self) -> None:
        if not (0 < self.rtol <= 1e-3):
            raise ConfigError("rtol must lie in (0, 1e-3]")
        if not self.atol > 0:
            raise ConfigError("atol must be positive")
        if not self.tmax > 0:
            raise ConfigError("tmax must be positive")
        if self.hmax <= 0 or (self.h0 is not None and self.h0 <= 0):
            raise ConfigError("step sizes must be positive")
        if self.dense_stride is not None and self.dense_stride <= 0:
            raise ConfigError("dense_stride must be positive")


@dataclass
class Trajectory:
    """Sampled solution. ``states`` are clamped to be nonnegative; ``min_raw`` keeps the pre-clamp minimum."""

    times: np.ndarray
    states: np.ndarray
    min_raw: float = 0.0
    n_steps: int = 0
    n_rejected: int = 0

    def window(self, t_lo: float, t_hi: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
        m = (self.times >= t_lo) & (self.times <= t_hi)
        return self.times[m], self.states[m]

    def append(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a continuation that starts where this trajectory ends."""
        skip = 1 if len(other.times) and len(self.times) and other.times[0] <= self.times[-1] else 0
        return Trajectory(
            np.concatenate([self.times, other.times[skip:]]),
            np.concatenate([self.states, other.states[skip:]]),
            min(self.min_raw, other.min_raw),
            self.n_steps + other.n_steps,
            self.n_rejected + other.n_rejected,
        )


@dataclass(frozen=True)
class SimOutcome:
    """Attractor verdict with final-window metrics.

    ``attractor`` is ``equilibrium``, ``limit_cycle`` or ``undecided``; for an
    equilibrium ``equilibrium`` holds its label (``E1``..``E4``).
    """

    attractor: str
    equilibrium: str | None
    mean: np.ndarray
    amplitude: np.ndarray
    period: float | None
    t_end: float
    distance: float | None = None

    @property
    def verdict(self) -> str:
        if self.attractor == "equilibrium":
            return f"equilibrium {self.equilibrium}"
        return self.attractor


@dataclass(frozen=True)
class CycleMetrics:
    minimum: np.ndarray
    maximum: np.ndarray
    amplitude: np.ndarray
    period: float


@dataclass(frozen=True)
class BloomOutcome:
    outcome: SimOutcome
    min_predator_total: float
    t_min_predator: float
    trajectory: Trajectory


class DormandPrince:
    """Stateful DP5(4) stepper that can be resumed across calls to :meth:`advance`."""

    def __init__(self, p: Params, s0, cfg: IntegratorConfig, t0: float = 0.0):
        self.p = p
        self.cfg = cfg
        self.t = float(t0)
        self.y = np.array(s0, dtype=float)
        if not np.all(np.isfinite(self.y)):
            raise NonFinite("initial state is not finite")
        self.f = rhs(self.y, p)
        self.h = cfg.h0 if cfg.h0 is not None else self._initial_step()
        self.err_prev = 1e-4
        self.n_steps = 0
        self.n_rejected = 0

    def _scale(self, y, y_new):
        return self.cfg.atol + self.cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))

    def _initial_step(self) -> float:
        sc = self.cfg.atol + self.cfg.rtol * np.abs(self.y)
        d0 = np.max(np.abs(self.y) / sc)
        d1 = np.max(np.abs(self.f) / sc)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = self.y + h * self.f
        d2 = np.max(np.abs(rhs(y1, self.p) - self.f) / sc) / h
        big = max(d1, d2)
        h1 = max(1e-6, h * 1e-3) if big <= 1e-15 else (0.01 / big) ** (1 / 5)
        return min(100 * h, h1, self.cfg.hmax)

    def _stages(self, h: float):
        p, y = self.p, self.y
        K = np.empty((7, 4))
        K[0] = self.f
        for i in range(1, 7):
            yi = y + h * (np.dot(_A[i], K[:i]))
            K[i] = rhs(yi, p)
        y_new = y + h * (_B @ K)
        err_vec = h * (_E @ K)
        return K, y_new, err_vec

    def step(self) -> tuple[float, np.ndarray, np.ndarray, float]:
        """Take one accepted step; returns (t_old, y_old, K, h)."""
        while True:
            h = min(self.h, self.cfg.hmax)
            if h < 1e-14 * max(abs(self.t), 1.0):
                raise StepUnderflow(f"step size {h:.3g} underflow at t={self.t:.6g}")
            K, y_new, err_vec = self._stages(h)
            if not np.all(np.isfinite(y_new)):
                if h < 1e-10:
                    raise NonFinite(f"state became non-finite at t={self.t:.6g}")
                self.h = 0.1 * h
                self.n_rejected += 1
                continue
            err = float(np.max(np.abs(err_vec) / self._scale(self.y, y_new)))
            if err <= 1.0:
                err = max(err, 1e-10)
                fac = _SAFETY * err**-_ALPHA * self.err_prev**_BETA
                self.h = h * min(_FAC_MAX, max(_FAC_MIN, fac))
                self.err_prev = err
                t_old, y_old = self.t, self.y
                self.t += h
                self.y = y_new
                self.f = K[6]
                self.n_steps += 1
                return t_old, y_old, K, h
            fac = max(_FAC_MIN, _SAFETY * err**-_ALPHA)
            self.h = h * fac
            self.n_rejected += 1

    def advance(self, t_end: float, stride: float | None) -> Trajectory:
        """Integrate to ``t_end`` and return samples (starting at the current time)."""
        times = [self.t]
        states = [self.y.copy()]
        next_out = self.t + stride if stride else None
        while self.t < t_end - 1e-12 * max(1.0, abs(t_end)):
            if self.t + self.h > t_end:
                self.h = t_end - self.t
            t_old, y_old, K, h = self.step()
            if stride:
                while next_out <= self.t + 1e-12 * max(1.0, self.t):
                    th = (next_out - t_old) / h
                    poly = np.array([th, th**2, th**3, th**4])
                    times.append(next_out)
                    states.append(y_old + h * (K.T @ (_P @ poly)))
                    next_out += stride
            else:
                times.append(self.t)
                states.append(self.y.copy())
        if times[-1] < self.t - 1e-9:
            times.append(self.t)
            states.append(self.y.copy())
        S = np.array(states)
        return Trajectory(np.array(times), np.maximum(S, 0.0), float(S.min()), self.n_steps, self.n_rejected)


def integrate(s0, p: Params, cfg: IntegratorConfig = IntegratorConfig(), t0: float = 0.0) -> Trajectory:
    """Integrate from ``s0`` over ``[t0, t0 + cfg.tmax]``."""
    s0 = np.asarray(s0, dtype=float)
    if np.any(s0 < -1e-12):
        raise ConfigError("initial state must be nonnegative")
    stepper = DormandPrince(p, s0, cfg, t0)
    return stepper.advance(t0 + cfg.tmax, cfg.dense_stride)


def _windows(tr: Trajectory, frac: float = 0.2):
    t0, t1 = tr.times[0], tr.times[-1]
    start = t1 - frac * (t1 - t0)
    mid = 0.5 * (start + t1)
    return tr.window(start, mid)[1], tr.window(mid, t1)[1]


def detect_attractor(
    tr: Trajectory,
    eqs: Sequence[Equilibrium],
    tol: float = 1e-4,
    flat: float = 1e-6,
    stationarity: float = 0.05,
    min_amplitude: float = 1e-5,
) -> SimOutcome:
    """Classify the final 20% of a trajectory, split into two equal windows."""
    w1, w2 = _windows(tr)
    if len(w1) < 2 or len(w2) < 2:
        raise ConfigError("trajectory too short for two attractor windows")
    ptp1 = np.ptp(w1, axis=0)
    ptp2 = np.ptp(w2, axis=0)
    mean = w2.mean(axis=0)
    t_end = float(tr.times[-1])
    if np.all(ptp2 < flat):
        last = tr.states[-1]
        best, dist = None, math.inf
        for e in eqs:
            d = float(np.linalg.norm(last - e.as_array()))
            if d < dist:
                best, dist = e, d
        if best is not None and dist < tol:
            return SimOutcome("equilibrium", best.label, mean, ptp2, None, t_end, dist)
        return SimOutcome("undecided", None, mean, ptp2, None, t_end, dist)
    a1, a2 = float(np.max(ptp1)), float(np.max(ptp2))
    if a2 > min_amplitude and abs(a1 - a2) <= stationarity * a2:
        try:
            period = cycle_metrics(tr).period
        except NoOscillation:
            period = None
        if period is not None:
            return SimOutcome("limit_cycle", None, mean, ptp2, period, t_end)
    return SimOutcome("undecided", None, mean, ptp2, None, t_end)


def _refined_peaks(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.where((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]))[0] + 1
    out = []
    for i in idx:
        y0, y1, y2 = x[i - 1], x[i], x[i + 1]
        den = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        out.append(t[i] + shift * (t[i + 1] - t[i]))
    return np.array(out)


def cycle_metrics(tr: Trajectory, frac: float = 0.2, min_amplitude: float = 1e-6) -> CycleMetrics:
    """Min, max, peak-to-peak amplitude per component and the period from x peaks."""
    t1 = tr.times[-1]
    t, S = tr.window(t1 - frac * (t1 - tr.times[0]))
    if len(t) < 5:
        raise NoOscillation("window too short")
    lo, hi = S.min(axis=0), S.max(axis=0)
    amp = hi - lo
    if amp[0] <= min_amplitude:
        raise NoOscillation("prey density does not oscillate")
    x = S[:, 0]
    # ignore ripples far below the oscillation range
    peaks = _refined_peaks(t, x)
    peak_idx = np.where((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]))[0] + 1
    keep = x[peak_idx] > lo[0] + 0.5 * amp[0]
    peaks = peaks[keep]
    if len(peaks) < 3:
        raise NoOscillation(f"only {len(peaks)} peaks in the final window")
    return CycleMetrics(lo, hi, amp, float(np.mean(np.diff(peaks))))


def settle(
    s0,
    p: Params,
    cfg: IntegratorConfig = IntegratorConfig(),
    eqs: Sequence[Equilibrium] | None = None,
    t_limit: float = 1e5,
) -> tuple[SimOutcome, Trajectory]:
    """Integrate until the attractor is decided, doubling the horizon up to ``t_limit``.

    The run is resumed rather than restarted, so each doubling costs only the
    added time span.
    """
    if eqs is None:
        eqs = all_equilibria(p)
    s0 = np.asarray(s0, dtype=float)
    if np.any(s0 < -1e-12):
        raise ConfigError("initial state must be nonnegative")
    stepper = DormandPrince(p, s0, cfg)
    tr = stepper.advance(cfg.tmax, cfg.dense_stride)
    while True:
        out = detect_attractor(tr, eqs)
        if out.attractor != "undecided" or tr.times[-1] >= t_limit:
            return out, tr
        t_next = min(2 * tr.times[-1], t_limit)
        tr = tr.append(stepper.advance(t_next, cfg.dense_stride))


def bloom_probe(
    p: Params,
    x0: float,
    predators0: Sequence[float],
    cfg: IntegratorConfig = IntegratorConfig(),
    t_limit: float = 1e5,
) -> BloomOutcome:
    """Run from a tiny prey density and report the attractor and the predator-biomass minimum."""
    if not x0 > 0:
        raise ConfigError("x0 must be positive")
    s0 = np.array([x0, *predators0], dtype=float)
    out, tr = settle(s0, p, cfg, t_limit=t_limit)
    total = tr.states[:, 1:].sum(axis=1)
    k = int(np.argmin(total))
    return BloomOutcome(out, float(total[k]), float(tr.times[k]), tr)


def write_trajectory_csv(tr: Trajectory, path: str | Path) -> None:
    """Write ``t,x,y1,y2,y3`` rows in shortest round-trip float form."""
    with open(path, "w") as fh:
        fh.write("t,x,y1,y2,y3\n")
        for t, s in zip(tr.times, tr.states):
            fh.write(",".join(repr(float(v)) for v in (t, *s)) + "\n")


def with_tmax(cfg: IntegratorConfig, tmax: float) -> IntegratorConfig:
    return replace(cfg, tmax=tmax)
