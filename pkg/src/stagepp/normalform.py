"""Hopf normal form, first Lyapunov coefficient and Sotomayor-type bifurcation checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .equilibria import Equilibrium, refine
from .errors import DegenerateGeometry, NotAFold, NotAHopfPoint, TransformationSingular
from .model import Params, State, bilinear, hessian, jacobian, jacobian_param_derivative, param_derivative
from .stability import char_coeffs, eigenvalues, hopf_discriminant


def _state(eq) -> np.ndarray:
    if isinstance(eq, Equilibrium):
        return eq.as_array()
    return np.asarray(eq, dtype=float)


# -- critical eigenstructure ---------------------------------------------------------


def critical_pair(U: np.ndarray, tol: float = 1e-7) -> tuple[float, complex, complex]:
    """``(alpha, v1, v2)`` for a matrix with eigenvalues ``+-i alpha, v1, v2``."""
    ev = eigenvalues(U)
    cplx = [z for z in ev if z.imag > 0]
    if not cplx:
        raise NotAHopfPoint("no complex eigenvalue pair")
    z = min(cplx, key=lambda w: abs(w.real))
    if abs(z.real) > tol:
        raise NotAHopfPoint(f"critical pair has real part {z.real:.3g}")
    others = []
    taken = 0
    for w in ev:
        if taken < 2 and (abs(w - z) < 1e-12 or abs(w - z.conjugate()) < 1e-12):
            taken += 1
            continue
        others.append(w)
    others.sort(key=lambda w: w.real)
    return z.imag, others[0], others[1]


def hopf_eigenvectors(U: np.ndarray, omega: float, unit: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``q`` with ``U q = i omega q`` and ``p`` with ``U^T p = -i omega p``, ``<p, q> = 1``.

    ``unit=True`` normalizes ``|q| = 1``; otherwise ``q[0] = 1``.
    """
    n = U.shape[0]
    M = U - 1j * omega * np.eye(n)
    q = np.linalg.svd(M)[2][-1].conj()
    q = q / q[0] if not unit else q / np.linalg.norm(q)
    Mt = U.T + 1j * omega * np.eye(n)
    pv = np.linalg.svd(Mt)[2][-1].conj()
    pv = pv / np.conj(np.vdot(pv, q))
    return q, pv


# -- transformation matrix from the closed forms -------------------------------------


def transformation_matrix(U: np.ndarray, alpha: float, v1: float, v2: float) -> np.ndarray:
    """Matrix ``A`` with ``A^-1 U A = blockdiag([[0, alpha], [-alpha, 0]], v1, v2)``.

    Entries follow the closed forms in terms of the Jacobian entries ``u_ij``;
    the first row is ``(1, 0, 1, 1)``. A negative ``alpha`` gives the
    conjugate orientation (second column flips sign).
    """

    def u(i, j):
        return U[i - 1, j - 1]

    u11, u13, u14 = u(1, 1), u(1, 3), u(1, 4)
    u21, u22, u24 = u(2, 1), u(2, 2), u(2, 4)
    u31, u32, u33 = u(3, 1), u(3, 2), u(3, 3)
    al = alpha
    a2 = al * al
    den = (
        u13**2 * u24**2 * u32**2
        + 2 * u13 * u14 * u24 * u32 * (u22 * u33 - a2)
        + u14**2 * (a2 + u22**2) * (a2 + u33**2)
    )
    if abs(den) < 1e-300:
        raise TransformationSingular("closed-form denominator vanishes")
    a21 = (
        -u13 * u24 * (u24 * u32 * (a2 - u11 * u33) + u14 * (u21 * u32 * u33 + u22 * u31 * u33 - a2 * u31))
        + u14 * (a2 + u33**2) * (u24 * (a2 + u11 * u22) - u14 * u21 * u22)
        - u13**2 * u24**2 * u31 * u32
    ) / den
    a22 = (
        -al
        * (
            u13 * u24 * (u24 * u32 * (u11 + u33) + u14 * (-u21 * u32 + u22 * u31 + u31 * u33))
            + u14 * (a2 + u33**2) * (u24 * (u22 - u11) + u14 * u21)
        )
        / den
    )
    a31 = (
        -(
            u13 * u24 * u32 * (u11 * u24 * u32 - u14 * u21 * u32 + u14 * u22 * u31)
            + u14
            * (
                u24 * u32 * (u11 * (u22 * u33 - a2) + a2 * (u22 + u33))
                + u14 * (-u21 * u22 * u32 * u33 + a2 * (u21 * u32 + u31 * u33) + u22**2 * u31 * u33)
            )
        )
        / den
    )
    a32 = (
        -al
        * (
            u14 * u24 * u32 * (a2 + u11 * (u22 + u33) - u13 * u31 - u22 * u33)
            - u13 * u24**2 * u32**2
            + u14**2 * (-u21 * u22 * u32 - u21 * u32 * u33 + u22**2 * u31 + a2 * u31)
        )
        / den
    )
    a41 = (
        u13
        * (
            u24 * u32 * (u11 * (a2 - u22 * u33) + a2 * (u22 + u33))
            + u14 * (-u21 * u22 * u32 * u33 + a2 * (u21 * u32 + u31 * u33) + u22**2 * u31 * u33)
        )
        - u11 * u14 * (a2 + u22**2) * (a2 + u33**2)
        + u13**2 * u24 * u32 * (u22 * u31 - u21 * u32)
    ) / den
    a42 = (
        al
        * (
            u13 * (u24 * u32 * (-a2 + u11 * (u22 + u33) + u22 * u33) + u14 * (-u21 * u22 * u32 - u21 * u32 * u33 + u22**2 * u31 + a2 * u31))
            - u13**2 * u24 * u31 * u32
            + u14 * (a2 + u22**2) * (a2 + u33**2)
        )
        / den
    )

    def col(v):
        dv = u13 * u24 * u32 + u14 * (u22 - v) * (u33 - v)
        if abs(dv) < 1e-300:
            raise TransformationSingular("real eigenvector formula degenerates")
        a2k = -((u33 - v) * (u24 * (v - u11) + u14 * u21) + u13 * u24 * u31) / dv
        a3k = (u24 * u32 * (v - u11) + u14 * (u21 * u32 - u22 * u31 + u31 * v)) / dv
        a4k = (u13 * (-u21 * u32 + u22 * u31 - u31 * v) - (u11 - v) * (v - u22) * (v - u33)) / dv
        return [1.0, a2k, a3k, a4k]

    c3, c4 = col(v1), col(v2)
    return np.array(
        [
            [1.0, 0.0, c3[0], c4[0]],
            [a21, a22, c3[1], c4[1]],
            [a31, a32, c3[2], c4[2]],
            [a41, a42, c3[3], c4[3]],
        ]
    )


# -- Hopf normal form -------------------------------------------------------------------


@dataclass
class HopfNormalForm:
    """Normal-form data at a Hopf point (audit intermediates in ``audit``)."""

    alpha: float
    v1: float
    v2: float
    U: np.ndarray
    A: np.ndarray
    g20: complex
    g11: complex
    g02: complex
    g21: complex
    C1_0: complex
    theta: float
    beta2: float
    l1: float
    l1_kuznetsov: float
    mu_prime: float
    block_error: float
    audit: dict = field(default_factory=dict)

    @property
    def supercritical(self) -> bool:
        return self.l1 < 0

    def to_json(self) -> dict:
        def cx(z):
            return {"re": float(z.real), "im": float(z.imag)}

        return {
            "alpha": float(self.alpha),
            "g20": cx(self.g20),
            "g11": cx(self.g11),
            "g02": cx(self.g02),
            "g21": cx(self.g21),
            "C1_0": cx(self.C1_0),
            "theta": float(self.theta),
            "beta2": float(self.beta2),
            "l1": float(self.l1),
            "l1_kuznetsov": float(self.l1_kuznetsov),
            "mu_prime": float(self.mu_prime),
            "supercritical": bool(self.supercritical),
        }

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_json().items():
            if isinstance(v, dict):
                v = f"{v['re']:.9g}{v['im']:+.9g}i"
            lines.append(f"{k} = {v}")
        return "\n".join(lines)


def _kuznetsov_c1(U: np.ndarray, H: np.ndarray, omega: float) -> tuple[complex, np.ndarray, np.ndarray]:
    """Invariant expression whose real part is ``Re c1`` for a unit critical eigenvector.

    Uses ``2 Re c1 = Re[-2 <p, B(q, U^-1 B(q, q*))> + <p, B(q*, (2i omega - U)^-1 B(q, q))>]``;
    the cubic term is absent because the field is quadratic.
    """
    q, pv = hopf_eigenvectors(U, omega, unit=True)

    def B(a, b):
        return np.einsum("kij,i,j->k", H, a, b)

    h11 = np.linalg.solve(U, B(q, q.conj()))
    h20 = np.linalg.solve(2j * omega * np.eye(4) - U, B(q, q))
    c1 = 0.5 * (-2 * np.vdot(pv, B(q, h11)) + np.vdot(pv, B(q.conj(), h20)))
    return complex(c1), q, pv


def first_lyapunov(p: Params, state) -> float:
    """First Lyapunov coefficient in the unit-eigenvector convention (``Re c1``, not divided by omega)."""
    s = _state(state)
    U = jacobian(s, p)
    alpha, _, _ = critical_pair(U, tol=1e-5)
    c1, _, _ = _kuznetsov_c1(U, hessian(p), alpha)
    return float(c1.real)


def eigenvalue_derivative(p: Params, state, bifparam: str) -> complex:
    """Derivative of the critical eigenvalue along the equilibrium branch."""
    s = _state(state)
    U = jacobian(s, p)
    alpha, _, _ = critical_pair(U, tol=1e-5)
    q, pv = hopf_eigenvectors(U, alpha, unit=True)
    ds = -np.linalg.solve(U, param_derivative(s, p, bifparam))
    dJ = jacobian_param_derivative(s, p, bifparam) + np.einsum("ijk,k->ij", hessian(p), ds)
    return complex(np.vdot(pv, dJ @ q))


def hopf_normal_form(p: Params, eq, bifparam: str, orientation: int = 1, tol: float = 1e-7) -> HopfNormalForm:
    """Normal form at a Hopf point using the closed-form transformation matrix.

    ``orientation=-1`` evaluates with the conjugate critical pair ``-alpha``;
    the resulting ``C1_0`` is the complex conjugate.
    """
    s = _state(eq)
    U = jacobian(s, p)
    cc = char_coeffs(U)
    alpha, v1c, v2c = critical_pair(U, tol)
    if abs(v1c.imag) > 1e-12 or abs(v2c.imag) > 1e-12:
        raise TransformationSingular("non-critical eigenvalues are complex")
    v1, v2 = v1c.real, v2c.real
    alpha_check = math.sqrt(cc.eps3 / cc.eps1) if cc.eps3 / cc.eps1 > 0 else float("nan")
    al = orientation * alpha
    A = transformation_matrix(U, al, v1, v2)
    if np.linalg.cond(A) > 1e12:
        raise TransformationSingular("transformation matrix is ill-conditioned")
    Ainv = np.linalg.inv(A)
    target = np.zeros((4, 4))
    target[0, 1], target[1, 0] = al, -al
    target[2, 2], target[3, 3] = v1, v2
    block_error = float(np.max(np.abs(Ainv @ U @ A - target)))
    if block_error > 1e-8 * max(1.0, np.max(np.abs(U))):
        raise TransformationSingular(f"block form violated by {block_error:.3g}")
    # cross-check: first two columns are Re/Im of the eigenvector with q[0] = 1
    q1, _ = hopf_eigenvectors(U, al, unit=False)
    eig_check = float(np.max(np.abs(A[:, 0] + 1j * A[:, 1] - q1)))

    H = hessian(p)
    Wd = np.einsum("kl,lmn,mi,nj->kij", Ainv, H, A, A)
    F1, F2 = Wd[0], Wd[1]
    g11 = 0.25 * ((F1[0, 0] + F1[1, 1]) + 1j * (F2[0, 0] + F2[1, 1]))
    g02 = 0.25 * ((F1[0, 0] - F1[1, 1] - 2 * F2[0, 1]) + 1j * (F2[0, 0] - F2[1, 1] + 2 * F1[0, 1]))
    g20 = 0.25 * ((F1[0, 0] - F1[1, 1] + 2 * F2[0, 1]) + 1j * (F2[0, 0] - F2[1, 1] - 2 * F1[0, 1]))
    # z1 + i z2 turns with angular velocity -al in this frame
    omega = -al
    g21 = 0j
    audit: dict = {"alpha_sqrt_eps3_eps1": alpha_check, "eigenvector_check": eig_check, "G21": 0j}
    for m, v in ((2, v1), (3, v2)):
        Fm = Wd[m]
        h11 = 0.25 * (Fm[0, 0] + Fm[1, 1])
        h20 = 0.25 * (Fm[0, 0] - Fm[1, 1] - 2j * Fm[0, 1])
        G110 = 0.5 * ((F1[0, m] + F2[1, m]) + 1j * (F2[0, m] - F1[1, m]))
        G101 = 0.5 * ((F1[0, m] - F2[1, m]) + 1j * (F2[0, m] + F1[1, m]))
        w11 = -h11 / v
        w20 = h20 / (2j * omega - v)
        g21 += 2 * G110 * w11 + G101 * w20
        audit[f"h11_{m}"] = h11
        audit[f"h20_{m}"] = h20
        audit[f"w11_{m}"] = w11
        audit[f"w20_{m}"] = w20
        audit[f"G110_{m}"] = G110
        audit[f"G101_{m}"] = G101
    C1 = 1j / (2 * omega) * (g20 * g11 - 2 * abs(g11) ** 2 - abs(g02) ** 2 / 3) + g21 / 2

    c1k, qk, _ = _kuznetsov_c1(U, H, alpha)
    l1 = float(c1k.real)
    # the same quantity from the closed-form frame: x = Re(w q) with q[0] = 1 gives c1 = 4 C1 / |q|^2
    audit["l1_from_C1"] = float(4 * C1.real / np.linalg.norm(q1) ** 2)
    mu_prime = eigenvalue_derivative(p, s, bifparam).real
    theta = -C1.real / mu_prime if mu_prime != 0 else float("nan")
    return HopfNormalForm(
        alpha=alpha,
        v1=v1,
        v2=v2,
        U=U,
        A=A,
        g20=complex(g20),
        g11=complex(g11),
        g02=complex(g02),
        g21=complex(g21),
        C1_0=complex(C1),
        theta=float(theta),
        beta2=float(2 * C1.real),
        l1=l1,
        l1_kuznetsov=l1 / alpha,
        mu_prime=float(mu_prime),
        block_error=block_error,
        audit=audit,
    )


def hopf_transversality(p: Params, eq, bifparam: str, h_rel: float = 1e-6, tol: float = 1e-5) -> float:
    """``dDelta/dparam`` by central differences along the equilibrium branch."""
    s = _state(eq)
    critical_pair(jacobian(s, p), tol=tol)
    v = getattr(p, bifparam)
    h = h_rel * max(abs(v), 1e-3)
    vals = []
    for sgn in (1, -1):
        q = p.with_value(bifparam, v + sgn * h)
        e = refine(Equilibrium(State(*s), "interior_plus", 0.0), q, tol=1e-13)
        vals.append(hopf_discriminant(char_coeffs(jacobian(e.as_array(), q))))
    return (vals[0] - vals[1]) / (2 * h)


# -- transcritical ------------------------------------------------------------------------


@dataclass(frozen=True)
class TranscriticalCheck:
    a2t: float
    a2: float
    eigvec_l: np.ndarray
    eigvec_m: np.ndarray
    q0: float
    q1: float
    q2: float
    q1_closed_form: float
    q2_closed_form: float
    null_residual: float

    @property
    def matches(self) -> bool:
        return abs(self.a2t - self.a2) <= 1e-5 * max(1.0, abs(self.a2))

    @property
    def transversal(self) -> bool:
        return abs(self.q0) < 1e-10 and self.q1 != 0 and self.q2 != 0


def transcritical_a2(p: Params) -> float:
    return (p.b + p.d1) * (p.a3 - p.c - p.d2) * p.d3 / (p.b * (p.a3 - p.c) * p.u)


def verify_transcritical(p: Params, l3: float = 1.0, m2: float = 1.0) -> TranscriticalCheck:
    """Sotomayor conditions for the exchange of stability at E2 with ``a2`` as parameter."""
    a1, a3, b, c, d1, d2, d3, u = p.a1, p.a3, p.b, p.c, p.d1, p.d2, p.d3, p.u
    if abs(a3 - c) < 1e-12:
        raise DegenerateGeometry("a3 = c: the critical a2 is undefined")
    a2t = transcritical_a2(p)
    if not a2t > 0:
        raise DegenerateGeometry(f"critical a2 = {a2t:.6g} is not positive")
    pt = p.replace(a2=a2t)
    e2 = np.array([1.0, 0.0, 0.0, 0.0])
    lv = np.array([-a1 * l3 + (b + d1) * (a3 - c - d2) * l3 / (b * u), (-a3 + c + d2) * l3 / b, l3, (-a3 + c) * l3 / d3])
    mv = np.array([0.0, m2, (b + d1) * m2 / b, (b + d1) * (a3 - c - d2) * m2 / (b * (a3 - c))])
    J = jacobian(e2, pt)
    null_res = float(max(np.max(np.abs(J @ lv)), np.max(np.abs(mv @ J))))
    q0 = float(mv @ param_derivative(e2, pt, "a2"))
    q1 = float(mv @ jacobian_param_derivative(e2, pt, "a2") @ lv)
    q2 = float(mv @ bilinear(pt, lv, lv))
    q1_cf = m2 * u * (-a3 + c) * l3 / d3
    q2_cf = -(
        2 * l3**2 * m2 * ((b + d1) * (a3 - c - d2) - a1 * b * u) * (-a3 * (b + d1) * d2 * d3 + a2t * b * (a3 - c) ** 2 * u)
    ) / (b**2 * (a3 - c) * d3 * u)
    return TranscriticalCheck(a2t, p.a2, lv, mv, q0, q1, q2, float(q1_cf), float(q2_cf), null_res)


# -- saddle node -----------------------------------------------------------------------------


@dataclass(frozen=True)
class SaddleNodeCheck:
    e: tuple[float, ...]
    chi1: np.ndarray
    chi2: np.ndarray
    degeneracy: float
    det: float
    s0_raw: float
    s1_raw: float
    s0: float
    s1: float
    null_residual: float

    @property
    def transversal(self) -> bool:
        return self.s0 != 0 and self.s1 != 0


def saddle_node_degeneracy(s, p: Params) -> float:
    """Polynomial whose zero marks a fold of the interior equilibria (a multiple of ``det J``)."""
    x, _, y2, y3 = s
    a1, a2, a3, b, c, d1, d2, d3, u = (getattr(p, k) for k in ("a1", "a2", "a3", "b", "c", "d1", "d2", "d3", "u"))
    return a2 * b * u * x * (a3 * x * (-1 + 2 * x) - c * (-1 + 2 * x + a1 * y2) + a1 * d3 * y3) + (-b - d1) * (
        a2 * a3 * d2 * x * y2 - d3 * (a1 * a3 * x * y2 + (c + d2 - a3 * x) * (-1 + 2 * x + a1 * y2 + a2 * y3))
    )


def verify_saddle_node(p: Params, eq, bifparam: str, phi: float = 1.0, phi1: float = 1.0) -> SaddleNodeCheck:
    """Sotomayor conditions at a fold, with null vectors from the closed forms.

    ``s0_raw``/``s1_raw`` use the free scalars as given; ``s0``/``s1`` use
    unit-length null vectors.
    """
    s = _state(eq)
    J = jacobian(s, p)
    det = char_coeffs(J).eps4
    if abs(det) > 1e-6:
        raise NotAFold(f"det J = {det:.3g} is not zero")
    e1, e2, e3 = J[0, 0], J[0, 2], J[0, 3]
    e4, e5, e6 = J[1, 0], J[1, 1], J[1, 3]
    e7, e8, e9 = J[2, 0], J[2, 1], J[2, 2]
    e10, e11, e12 = J[3, 0], J[3, 2], J[3, 3]
    D = e12 * e2 * e7 - e11 * e3 * e7 - e1 * e12 * e9 + e10 * e3 * e9
    chi1 = phi * np.array(
        [
            1.0,
            -D / ((e12 * e2 - e11 * e3) * e8),
            -(e1 * e12 - e10 * e3) / (e12 * e2 - e11 * e3),
            -(e1 * e11 - e10 * e2) / (-e12 * e2 + e11 * e3),
        ]
    )
    chi2 = phi1 * np.array(
        [
            -(e11 * e6 * e7 + e12 * e4 * e9 - e10 * e6 * e9) / (-D),
            1.0,
            -(e12 * e2 * e4 - e11 * e3 * e4 + e1 * e11 * e6 - e10 * e2 * e6) / D,
            -(e2 * e6 * e7 + e3 * e4 * e9 - e1 * e6 * e9) / D,
        ]
    )
    null_res = float(max(np.max(np.abs(J @ chi1)) / np.linalg.norm(chi1), np.max(np.abs(chi2 @ J)) / np.linalg.norm(chi2)))
    Bp = param_derivative(s, p, bifparam)
    s0_raw = float(chi2 @ Bp)
    s1_raw = float(chi2 @ bilinear(p, chi1, chi1))
    c1u = chi1 / np.linalg.norm(chi1)
    c2u = chi2 / np.linalg.norm(chi2)
    return SaddleNodeCheck(
        e=(e1, e2, e3, e4, e5, e6, e7, e8, e9, e10, e11, e12),
        chi1=chi1,
        chi2=chi2,
        degeneracy=float(saddle_node_degeneracy(s, p)),
        det=float(det),
        s0_raw=s0_raw,
        s1_raw=s1_raw,
        s0=float(c2u @ Bp),
        s1=float(c2u @ bilinear(p, c1u, c1u)),
        null_residual=null_res,
    )
