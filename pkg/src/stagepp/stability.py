"""Characteristic polynomial, eigenvalues and Routh-Hurwitz verdicts for 4x4 Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import NoConvergence
from .model import Params, jacobian

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class CharCoeffs:
    """Coefficients of ``w^4 + eps1 w^3 + eps2 w^2 + eps3 w + eps4``."""

    eps1: float
    eps2: float
    eps3: float
    eps4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.eps1, self.eps2, self.eps3, self.eps4])

    @property
    def rh(self) -> tuple[float, float, float, float]:
        """Routh-Hurwitz quantities ``(eps1, eps4, eps1 eps2 - eps3, Delta)``."""
        e1, e2, e3, e4 = self.eps1, self.eps2, self.eps3, self.eps4
        return (e1, e4, e1 * e2 - e3, hopf_discriminant(self))


@dataclass(frozen=True)
class StabilityVerdict:
    verdict: str  # stable | unstable | saddle | center_candidate
    rh: tuple[float, float, float, float]
    eigenvalues: tuple[complex, ...]


@dataclass(frozen=True)
class PreyOnlyClass:
    klass: str  # saddle | unstable | center | stable
    case_id: str  # "1".."4" for stable points, "n/a" otherwise
    det: float
    trace: float
    a2_threshold: float


def _det2(a, b, c, d):
    return a * d - b * c


def _det3(m) -> float:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def _minor(J, rows, cols):
    return [[J[r][c] for c in cols] for r in rows]


def det4(J) -> float:
    """Determinant of a 4x4 matrix by cofactor expansion along the first row."""
    total = 0.0
    for j in range(4):
        cols = [c for c in range(4) if c != j]
        total += (-1) ** j * J[0][j] * _det3(_minor(J, (1, 2, 3), cols))
    return total


def char_coeffs(J) -> CharCoeffs:
    """Coefficients of ``det(w I - J)`` from principal minors (exact 4x4 formulas)."""
    J = np.asarray(J, dtype=float)
    e1 = -float(np.trace(J))
    e2 = sum(_det2(J[i, i], J[i, j], J[j, i], J[j, j]) for i, j in combinations(range(4), 2))
    e3 = -sum(_det3(_minor(J, idx, idx)) for idx in combinations(range(4), 3))
    e4 = det4(J)
    return CharCoeffs(float(e1), float(e2), float(e3), float(e4))


def hopf_discriminant(cc: CharCoeffs) -> float:
    """``Delta = eps1 eps2 eps3 - eps3^2 - eps1^2 eps4``; vanishes at a Hopf candidate."""
    e1, e2, e3, e4 = cc.eps1, cc.eps2, cc.eps3, cc.eps4
    return e1 * e2 * e3 - e3 * e3 - e1 * e1 * e4


def hopf_guards(cc: CharCoeffs) -> bool:
    """Sign conditions ``eps1 > 0``, ``eps4 > 0`` and ``eps1 eps2 - eps3 > 0``."""
    return cc.eps1 > 0 and cc.eps4 > 0 and cc.eps1 * cc.eps2 - cc.eps3 > 0


# -- eigenvalues ---------------------------------------------------------------


def _eig2(a, b, c, d) -> list[complex]:
    half = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0:
        r = np.sqrt(disc)
        # avoid cancellation in the smaller root
        big = half + r if half >= 0 else half - r
        det = a * d - b * c
        small = det / big if big != 0 else half - r
        return [complex(big), complex(small)]
    r = np.sqrt(-disc)
    return [complex(half, r), complex(half, -r)]


def _balance(H: np.ndarray) -> np.ndarray:
    """Diagonal similarity scaling (Parlett-Reinsch) to equalize row and column norms."""
    H = H.copy()
    n = H.shape[0]
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(H[:, i])) - abs(H[i, i])
            r = np.sum(np.abs(H[i, :])) - abs(H[i, i])
            if c == 0 or r == 0:
                continue
            f = 1.0
            s = c + r
            while c < r / 2:
                c *= 2
                r /= 2
                f *= 2
            while c >= r * 2:
                c /= 2
                r *= 2
                f /= 2
            if (c + r) < 0.95 * s:
                done = False
                H[i, :] /= f
                H[:, i] *= f
    return H


def _francis_step(A: np.ndarray, exceptional: bool) -> None:
    """One implicit double-shift QR sweep on an unreduced Hessenberg block, in place."""
    m = A.shape[0]
    if exceptional:
        s = 1.5 * (abs(A[m - 1, m - 2]) + abs(A[m - 2, m - 3]))
        t = s * s / 2.25
    else:
        s = A[m - 2, m - 2] + A[m - 1, m - 1]
        t = A[m - 2, m - 2] * A[m - 1, m - 1] - A[m - 2, m - 1] * A[m - 1, m - 2]
    x = A[0, 0] * A[0, 0] + A[0, 1] * A[1, 0] - s * A[0, 0] + t
    y = A[1, 0] * (A[0, 0] + A[1, 1] - s)
    z = A[1, 0] * A[2, 1] if m > 2 else 0.0
    for k in range(m - 1):
        nr = 3 if k < m - 2 else 2
        v = np.array([x, y, z][:nr])
        alpha = np.linalg.norm(v)
        if alpha == 0:
            pass
        else:
            v[0] += np.copysign(alpha, v[0])
            v /= np.linalg.norm(v)
            lo = max(k - 1, 0)
            rows = slice(k, k + nr)
            A[rows, lo:] -= 2.0 * np.outer(v, v @ A[rows, lo:])
            hi = min(k + nr + 1, m)
            A[:hi, rows] -= 2.0 * np.outer(A[:hi, rows] @ v, v)
        x = A[k + 1, k]
        y = A[k + 2, k] if k + 2 < m else 0.0
        z = A[k + 3, k] if k + 3 < m else 0.0
    # remove round-off fill below the subdiagonal
    A[np.tril_indices(m, -2)] = 0.0


def hessenberg_qr_eigenvalues(H: np.ndarray, max_sweeps: int = 500) -> list[complex]:
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR with deflation."""
    H = np.array(H, dtype=float)
    n = H.shape[0]
    out: list[complex] = []
    hi = n - 1
    its = 0
    total = 0
    while hi >= 0:
        if hi == 0:
            out.append(complex(H[0, 0]))
            hi -= 1
            continue
        lo = hi
        while lo > 0:
            sub = abs(H[lo, lo - 1])
            scale = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if scale == 0.0:
                scale = np.max(np.abs(H[: hi + 1, : hi + 1]))
            if sub <= _EPS * scale:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            out.append(complex(H[hi, hi]))
            hi -= 1
            its = 0
            continue
        if lo == hi - 1:
            out.extend(_eig2(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi]))
            hi -= 2
            its = 0
            continue
        its += 1
        total += 1
        if total > max_sweeps:
            raise NoConvergence("QR iteration did not converge")
        blk = H[lo : hi + 1, lo : hi + 1]
        _francis_step(blk, exceptional=its % 10 == 0)
        H[lo : hi + 1, lo : hi + 1] = blk
    return out


def _sort_key(z: complex):
    return (-z.real, -z.imag)


def quartic_roots(cc: CharCoeffs) -> np.ndarray:
    """Roots of the monic quartic via its companion matrix, polished by one Newton step."""
    coeffs = np.array([1.0, cc.eps1, cc.eps2, cc.eps3, cc.eps4])
    C = np.zeros((4, 4))
    C[0, :] = -coeffs[1:]
    C[1, 0] = C[2, 1] = C[3, 2] = 1.0
    roots = hessenberg_qr_eigenvalues(_balance(C))
    dcoeffs = np.polyder(coeffs)
    polished = []
    for z in roots:
        f = np.polyval(coeffs, z)
        df = np.polyval(dcoeffs, z)
        if df != 0:
            step = f / df
            # keep the polish only when it is a genuine correction
            if abs(step) < 1e-3 * max(1.0, abs(z)):
                z2 = z - step
                if abs(np.polyval(coeffs, z2)) <= abs(f):
                    z = z2
        polished.append(complex(z))
    return _enforce_conjugates(polished)


def _enforce_conjugates(roots: list[complex]) -> np.ndarray:
    scale = max(1.0, max(abs(z) for z in roots))
    remaining = list(roots)
    out: list[complex] = []
    while remaining:
        z = remaining.pop(0)
        if abs(z.imag) <= 1e-14 * scale:
            out.append(complex(z.real, 0.0))
            continue
        j = min(range(len(remaining)), key=lambda k: abs(remaining[k] - z.conjugate()))
        w = remaining.pop(j)
        re = 0.5 * (z.real + w.real)
        im = 0.5 * (abs(z.imag) + abs(w.imag))
        out.extend([complex(re, im), complex(re, -im)])
    out.sort(key=_sort_key)
    return np.array(out, dtype=complex)


def eigenvalues(J) -> np.ndarray:
    """Eigenvalues of a 4x4 matrix, sorted by real part then imaginary part (descending)."""
    return quartic_roots(char_coeffs(J))


def routh_hurwitz(cc: CharCoeffs, neutral_band: float = 1e-9) -> StabilityVerdict:
    """Routh-Hurwitz verdict; non-stable cases are classified by eigenvalue signs."""
    rh = cc.rh
    ev = quartic_roots(cc)
    if all(q > 0 for q in rh):
        return StabilityVerdict("stable", rh, tuple(ev))
    pos = sum(1 for z in ev if z.real > neutral_band)
    neg = sum(1 for z in ev if z.real < -neutral_band)
    if pos == 0:
        verdict = "center_candidate"
    elif neg == 0:
        verdict = "unstable"
    else:
        verdict = "saddle"
    return StabilityVerdict(verdict, rh, tuple(ev))


def analyze_state(s, p: Params) -> StabilityVerdict:
    return routh_hurwitz(char_coeffs(jacobian(s, p)))


def prey_only_threshold(p: Params) -> float:
    """Critical ``a2`` at which ``Det[J1]`` changes sign (also the transcritical value)."""
    return (p.b + p.d1) * (p.a3 - p.c - p.d2) * p.d3 / (p.b * p.u * (p.a3 - p.c))


def classify_prey_only(p: Params, zero_tol: float = 1e-12) -> PreyOnlyClass:
    """Classify E2 = (1, 0, 0, 0) from the determinant and trace of its Jacobian."""
    a2, a3, b, c, d1, d2, d3, u = p.a2, p.a3, p.b, p.c, p.d1, p.d2, p.d3, p.u
    det = d1 * (c + d2) * d3 + b * (c * d3 + d2 * d3 - a2 * c * u) - a3 * (d1 * d3 + b * (d3 - a2 * u))
    tr = a3 - (1 + b + d1 + c + d2 + d3)
    thr = prey_only_threshold(p) if abs(a3 - c) > zero_tol else float("nan")
    case = "n/a"
    if det < 0:
        klass = "saddle"
    elif abs(tr) <= zero_tol:
        klass = "center"
    elif tr > 0:
        klass = "unstable"
    else:
        klass = "stable"
        if abs(a3 - c) <= zero_tol:
            case = "2"
        elif a3 < c:
            case = "1"
        elif a3 < 1 + c:
            case = "3"
        else:
            case = "4"
    return PreyOnlyClass(klass, case, float(det), float(tr), float(thr))
