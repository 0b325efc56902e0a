import numpy as np
import pytest

from stagepp.equilibria import (
    Equilibrium,
    all_equilibria,
    back_substitute,
    boundary_equilibria,
    existence_report,
    find,
    global_stability_interior_predicate,
    global_stability_prey_only_predicate,
    interior_derivation,
    interior_equilibria,
    mu_squared,
    refine,
)
from stagepp.errors import DomainError, NoConvergence
from stagepp.model import Params, State, rhs


def random_params(rng):
    return Params(*rng.uniform(0.01, 1.0, 9))


def test_boundary_equilibria(p1):
    e1, e2 = boundary_equilibria()
    assert e1.label == "E1" and e2.label == "E2"
    assert np.all(rhs(e1.as_array(), p1) == 0) and np.all(rhs(e2.as_array(), p1) == 0)


def test_table1_interior_points(p1):
    der, eqs = interior_equilibria(p1)
    assert der.mu2 > 0
    e3, e4 = find(eqs, "E3"), find(eqs, "E4")
    assert e3.kind == "interior_minus" and e4.kind == "interior_plus"
    assert e3.state[0] > e4.state[0]
    assert np.allclose(e4.state, (0.76278529, 0.30158975, 0.23419106, 0.20717892), atol=1e-8)
    assert e3.residual < 1e-12 and e4.residual < 1e-12


def test_quadratic_roots_solve_quadratic(p1):
    der = interior_derivation(p1)
    a, b, c = der.quadratic
    for x in der.x_roots:
        assert abs(a * x * x + b * x + c) < 1e-14
    assert der.mu2 == pytest.approx(b * b - 4 * a * c, rel=1e-12)


def test_closed_form_residual_1000_random_feasible_draws(rng):
    n = 0
    worst = 0.0
    while n < 1000:
        p = random_params(rng)
        der = interior_derivation(p)
        for s, ok in zip(der.closed_form_states, der.feasible):
            if ok:
                worst = max(worst, float(np.linalg.norm(rhs(s, p))))
                n += 1
    assert worst < 1e-8


def test_mu_squared_negative_means_no_interior(p1):
    q = p1.replace(d2=10.0)
    assert mu_squared(q) < 0 or not any(interior_derivation(q).feasible)
    assert interior_equilibria(q)[1] == []
    assert len(all_equilibria(q)) == 2


def test_back_substitution_matches_state(p1):
    e4 = find(interior_equilibria(p1)[1], "E4")
    assert np.allclose(back_substitute(e4.state[0], p1), e4.as_array(), atol=1e-12)


def test_existence_report_table1(p1):
    rep = existence_report(p1)
    assert rep.d2_bound_holds and rep.case == "case3" and rep.passes


def test_existence_report_fails_when_bound_violated(p1):
    assert not existence_report(p1.replace(d2=10.0)).passes


def test_refine_converges_from_perturbation(p2):
    e4 = find(interior_equilibria(p2)[1], "E4")
    bumped = Equilibrium(State(*(e4.as_array() * 1.01)), e4.kind, 1.0)
    r = refine(bumped, p2)
    assert r.residual < 1e-12
    assert np.allclose(r.as_array(), e4.as_array(), atol=1e-10)


def test_refine_rejects_far_start(p2):
    with pytest.raises(NoConvergence):
        refine(Equilibrium(State(5.0, 5.0, 5.0, 5.0), "interior_plus", 0.0), p2)


def test_prey_only_global_predicate(p1):
    # (1 - x)(a1 y2 + x - 1) + a2 y3 < 0
    assert global_stability_prey_only_predicate([0.5, 0.0, 0.0, 0.0], p1)
    assert not global_stability_prey_only_predicate([0.5, 0.0, 0.0, 1.0], p1)
    # at E2 itself the left side is zero, so the strict inequality fails
    assert not global_stability_prey_only_predicate([1.0, 0.0, 0.0, 0.0], p1)


def test_interior_predicate_domain(p1):
    e4 = find(interior_equilibria(p1)[1], "E4")
    with pytest.raises(DomainError):
        global_stability_interior_predicate([0.5, 0.0, 0.1, 0.1], e4, p1)
    assert isinstance(global_stability_interior_predicate([0.7, 0.3, 0.2, 0.2], e4, p1), bool)
