import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagepp.errors import ConfigError
from stagepp.model import (
    PARAM_NAMES,
    DimensionalParams,
    Params,
    absorbing_region,
    bilinear,
    clamp_state,
    dimensionalize,
    hessian,
    jacobian,
    jacobian_param_derivative,
    load_preset,
    nondimensionalize,
    param_derivative,
    rhs,
    table1,
    table2,
)

states = st.lists(st.floats(0.0, 2.0), min_size=4, max_size=4).map(np.array)
params = st.lists(st.floats(0.01, 1.0), min_size=9, max_size=9).map(lambda v: Params(*v))


def fd_jacobian(s, p, h=1e-6):
    J = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        J[:, j] = (rhs(s + e, p) - rhs(s - e, p)) / (2 * h)
    return J


def test_presets_load_with_published_values():
    p = table1()
    assert (p.a1, p.a2, p.a3, p.b, p.c, p.d1, p.d2, p.d3, p.u) == (0.46, 0.625, 0.06, 0.112, 0.09, 0.15, 0.1, 0.05, 0.8)
    q = table2()
    assert (q.a1, q.a2, q.a3, q.b, q.c, q.d1, q.d2, q.d3, q.u) == (0.6, 0.8, 0.075, 0.031, 0.035, 0.026, 0.023, 0.013, 0.82)


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError):
        load_preset("table3")


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf, "x"])
def test_params_validation(bad):
    vals = dict(table1().as_dict())
    vals["c"] = bad
    with pytest.raises(ConfigError):
        Params.from_mapping(vals)


def test_params_unknown_and_missing_names():
    with pytest.raises(ConfigError):
        table1().replace(zz=1.0)
    vals = table1().as_dict()
    del vals["u"]
    with pytest.raises(ConfigError):
        Params.from_mapping(vals)


def test_presets_are_immutable():
    p = table1()
    with pytest.raises(Exception):
        p.a1 = 1.0
    q = p.with_value("a1", 0.5)
    assert p.a1 == 0.46 and q.a1 == 0.5


def test_rhs_vanishes_at_boundary_equilibria(p1):
    assert np.all(rhs([0, 0, 0, 0], p1) == 0)
    assert np.all(rhs([1, 0, 0, 0], p1) == 0)


def test_rhs_by_hand(p1):
    s = np.array([0.5, 0.2, 0.3, 0.4])
    x, y1, y2, y3 = s
    p = p1
    expect = [
        x * (1 - x) - p.a1 * x * y2 - p.a2 * x * y3,
        p.u * p.a2 * x * y3 - (p.b + p.d1) * y1,
        p.b * y1 - (p.c - p.a3 * x) * y2 - p.d2 * y2,
        (p.c - p.a3 * x) * y2 - p.d3 * y3,
    ]
    assert np.allclose(rhs(s, p), expect, rtol=0, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(states, params)
def test_jacobian_matches_finite_differences(s, p):
    assert np.max(np.abs(jacobian(s, p) - fd_jacobian(s, p))) < 1e-6


@settings(max_examples=50, deadline=None)
@given(states, params)
def test_hessian_matches_jacobian_differences(s, p):
    H = hessian(p)
    h = 1e-3
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        dJ = (jacobian(s + e, p) - jacobian(s - e, p)) / (2 * h)
        assert np.allclose(H[:, :, i], dJ, atol=1e-10)


def test_bilinear_is_symmetric_and_matches_second_difference(p2, rng):
    v, w = rng.normal(size=4), rng.normal(size=4)
    assert np.allclose(bilinear(p2, v, w), bilinear(p2, w, v))
    s = rng.uniform(0, 1, 4)
    # exact for a quadratic field
    second = rhs(s + v, p2) - 2 * rhs(s, p2) + rhs(s - v, p2)
    assert np.allclose(second, bilinear(p2, v, v), atol=1e-13)


@pytest.mark.parametrize("name", PARAM_NAMES)
def test_param_derivatives(name, p2, rng):
    s = rng.uniform(0.05, 1.0, 4)
    v = getattr(p2, name)
    h = 1e-6 * v
    fd = (rhs(s, p2.with_value(name, v + h)) - rhs(s, p2.with_value(name, v - h))) / (2 * h)
    assert np.allclose(param_derivative(s, p2, name), fd, atol=1e-8)
    fdJ = (jacobian(s, p2.with_value(name, v + h)) - jacobian(s, p2.with_value(name, v - h))) / (2 * h)
    assert np.allclose(jacobian_param_derivative(s, p2, name), fdJ, atol=1e-8)


def test_nondimensionalize_round_trip(p2):
    d = dimensionalize(p2, r=0.7, K=250.0)
    q, scales = nondimensionalize(d)
    assert np.allclose(q.as_array(), p2.as_array(), rtol=1e-14)
    assert scales.state == 250.0 and scales.time == pytest.approx(1 / 0.7)


def test_dimensional_rhs_consistent_with_scaling(p2):
    r, K = 0.7, 250.0
    d = dimensionalize(p2, r, K)
    X = np.array([100.0, 30.0, 20.0, 10.0])
    x, y1, y2, y3 = X
    dX = np.array(
        [
            d.r * x * (1 - x / d.K) - d.A1 * x * y2 - d.A2 * x * y3,
            d.u * d.A2 * x * y3 - (d.B + d.D1) * y1,
            d.B * y1 - (d.C - d.A3 * x) * y2 - d.D2 * y2,
            (d.C - d.A3 * x) * y2 - d.D3 * y3,
        ]
    )
    assert np.allclose(dX / (r * K), rhs(X / K, p2), rtol=1e-12)


def test_dimensional_validation():
    with pytest.raises(ConfigError):
        DimensionalParams(1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0)
    with pytest.raises(ConfigError):
        dimensionalize(table1(), 0.0, 1.0)


def test_absorbing_region_bound(p1):
    reg = absorbing_region(p1)
    assert reg.zeta == 0.05 and reg.x_max == 1.0
    assert reg.predator_sum_max == pytest.approx(0.8 * 0.95**2 / 0.2)


def test_absorbing_region_warns_for_large_zeta():
    p = table1().replace(d1=1.5, d2=1.2, d3=1.1)
    with pytest.warns(UserWarning):
        absorbing_region(p)


def test_clamp_state():
    assert np.array_equal(clamp_state([-1e-18, 0.5, -0.0, 2.0]), [0.0, 0.5, 0.0, 2.0])
