import json

import numpy as np
import pytest

from conftest import e4_of
from stagepp.continuation import continue_equilibrium
from stagepp.errors import DegenerateGeometry, NotAFold, NotAHopfPoint
from stagepp.model import jacobian
from stagepp.normalform import (
    first_lyapunov,
    hopf_normal_form,
    hopf_transversality,
    transcritical_a2,
    verify_saddle_node,
    verify_transcritical,
)

C_H = 0.03598345


@pytest.fixture(scope="module")
def nf_c(p2):
    q = p2.replace(c=C_H)
    return hopf_normal_form(q, e4_of(q), "c")


def test_block_diagonalization(nf_c):
    A, U = nf_c.A, nf_c.U
    M = np.linalg.solve(A, U @ A)
    target = np.zeros((4, 4))
    target[0, 1], target[1, 0] = nf_c.alpha, -nf_c.alpha
    target[2, 2], target[3, 3] = nf_c.v1, nf_c.v2
    assert np.max(np.abs(M - target)) < 1e-8
    assert nf_c.block_error < 1e-8


def test_alpha_matches_routh_hurwitz_frequency(nf_c):
    assert nf_c.alpha == pytest.approx(nf_c.audit["alpha_sqrt_eps3_eps1"], rel=1e-6)
    ev = np.linalg.eigvals(nf_c.U)
    assert np.min(np.abs(ev - 1j * nf_c.alpha)) < 1e-6


@pytest.mark.parametrize(
    "name,value",
    [
        ("g11", -0.018595 + 0.0328119j),
        ("g02", 0.0751727 + 0.397665j),
        ("g20", -0.112363 - 0.332041j),
    ],
)
def test_quadratic_coefficients(nf_c, name, value):
    z = getattr(nf_c, name)
    assert abs(z - value) < 0.05 * abs(value)
    assert np.sign(z.real) == np.sign(value.real) and np.sign(z.imag) == np.sign(value.imag)


def test_beta2_is_twice_real_c1(nf_c):
    assert nf_c.beta2 == 2 * nf_c.C1_0.real
    assert nf_c.beta2 < 0 and nf_c.supercritical


def test_l1_agrees_with_invariant_formula(nf_c, p2):
    q = p2.replace(c=C_H)
    assert nf_c.l1 == pytest.approx(first_lyapunov(q, e4_of(q)), rel=1e-6)
    assert nf_c.l1 == pytest.approx(nf_c.audit["l1_from_C1"], rel=1e-6)


def test_conjugate_orientation_conjugates_c1(nf_c, p2):
    q = p2.replace(c=C_H)
    nf = hopf_normal_form(q, e4_of(q), "c", orientation=-1)
    assert nf.C1_0 == pytest.approx(nf_c.C1_0.conjugate(), rel=1e-9)
    assert nf.l1 == pytest.approx(nf_c.l1, rel=1e-9)


def test_json_fields(nf_c):
    d = json.loads(json.dumps(nf_c.to_json()))
    for key in ("alpha", "g20", "g11", "g02", "g21", "C1_0", "theta", "beta2", "l1"):
        assert key in d
    assert "beta2 = " in nf_c.to_text()


def test_a3_hopf_lyapunov(p2):
    q = p2.replace(a3=0.0604877)
    nf = hopf_normal_form(q, e4_of(q), "a3")
    assert nf.l1 < 0
    assert nf.l1 == pytest.approx(-1.461335e-2, rel=0.05)


def test_b_hopf_lyapunov(p2):
    # the printed six-digit values sit 1e-7 off the imaginary axis; use located points
    q0 = p2.replace(b=0.05)
    hs = continue_equilibrium(q0, "b", seed=e4_of(q0), lyapunov=False).of_kind("H")
    for h, ref in zip(sorted(hs, key=lambda s: s.param), (-1.619062e-2, -7.177191e-2)):
        l1 = hopf_normal_form(q0.replace(b=h.param), h.state, "b").l1
        assert np.sign(l1) == np.sign(ref)
        assert l1 == pytest.approx(ref, rel=0.10)


def test_hopf_requires_imaginary_pair(p1):
    with pytest.raises(NotAHopfPoint):
        hopf_normal_form(p1, e4_of(p1), "c")
    with pytest.raises(NotAHopfPoint):
        hopf_transversality(p1, e4_of(p1), "c")


def test_transversality_c(p2):
    q = p2.replace(c=C_H)
    d = hopf_transversality(q, e4_of(q), "c")
    assert abs(d) > 1e-8
    assert d == pytest.approx(-2.5e-5, rel=0.05)


def test_transversality_u(p2):
    q = p2.replace(u=0.833189)
    assert abs(hopf_transversality(q, e4_of(q), "u")) > 1e-8


def test_transcritical_table1(p1):
    tc = verify_transcritical(p1.replace(b=0.114706))
    assert tc.a2t == pytest.approx(0.625, abs=1e-5)
    assert tc.matches
    assert abs(tc.q0) < 1e-10
    assert tc.q1 == pytest.approx(tc.q1_closed_form, rel=1e-12)
    assert tc.q1 == pytest.approx(0.8 * (0.09 - 0.06) / 0.05)
    assert tc.q2 == pytest.approx(tc.q2_closed_form, rel=1e-10)
    assert tc.q2 != 0 and tc.transversal
    assert tc.null_residual < 1e-12


def test_transcritical_closed_form(p1, rng):
    for _ in range(20):
        q = p1.replace(a3=rng.uniform(0.01, 0.08), b=rng.uniform(0.05, 0.3))
        tc = verify_transcritical(q)
        assert tc.a2t == pytest.approx(transcritical_a2(q))
        assert tc.null_residual < 1e-10


def test_transcritical_degenerate(p1):
    with pytest.raises(DegenerateGeometry):
        verify_transcritical(p1.replace(a3=0.09))


def test_transcritical_scale_invariance(p1):
    q = p1.replace(b=0.114706)
    a, b = verify_transcritical(q), verify_transcritical(q, l3=2.0, m2=2.0)
    assert b.q1 == pytest.approx(4 * a.q1) and b.q2 == pytest.approx(8 * a.q2)
    assert (b.q1 != 0, b.q2 != 0) == (a.q1 != 0, a.q2 != 0)


def test_saddle_node_table1(p1):
    q = p1.replace(b=0.108186)
    sn = verify_saddle_node(q, e4_of(q), "b")
    assert abs(sn.degeneracy) < 1e-6
    assert sn.s0 == pytest.approx(0.02745, rel=0.10)
    assert sn.s1 == pytest.approx(-0.00421, rel=0.10)
    assert sn.transversal
    assert sn.null_residual < 1e-3


def test_saddle_node_null_vectors_exact_at_located_fold(branch_t1_b):
    lp = branch_t1_b.of_kind("LP")[0]
    q = branch_t1_b.params_at(lp)
    sn = verify_saddle_node(q, lp.state, "b")
    J = jacobian(np.array(lp.state), q)
    assert np.max(np.abs(J @ sn.chi1)) < 1e-8 * np.linalg.norm(sn.chi1)
    assert np.max(np.abs(sn.chi2 @ J)) < 1e-8 * np.linalg.norm(sn.chi2)
    assert abs(sn.det) < 1e-12


def test_saddle_node_scale_invariance(p1):
    q = p1.replace(b=0.108186)
    a = verify_saddle_node(q, e4_of(q), "b")
    b = verify_saddle_node(q, e4_of(q), "b", phi=2.0, phi1=2.0)
    assert b.s0_raw == pytest.approx(2 * a.s0_raw) and b.s1_raw == pytest.approx(8 * a.s1_raw)
    assert b.s0 == pytest.approx(a.s0) and b.s1 == pytest.approx(a.s1)


def test_saddle_node_table2_u(p2):
    res = continue_equilibrium(p2, "u", seed=e4_of(p2), lyapunov=False)
    lp = res.of_kind("LP")[0]
    sn = verify_saddle_node(res.params_at(lp), lp.state, "u")
    assert sn.s0 != 0 and sn.s1 != 0


def test_saddle_node_rejects_non_fold(p1):
    with pytest.raises(NotAFold):
        verify_saddle_node(p1, e4_of(p1), "b")
