import csv

import numpy as np
import pytest

from conftest import e4_of
from stagepp import codim2 as c2
from stagepp.continuation import continue_equilibrium
from stagepp.errors import ConfigError, SeedNotFold, SeedNotHopf
from stagepp.model import jacobian, rhs
from stagepp.stability import eigenvalues

CB_BOUNDS = ((0.03, 0.2), (0.02, 0.3))


@pytest.fixture(scope="module")
def fold_cb(p1, branch_t1_b):
    return c2.continue_fold(p1, "c", "b", branch_t1_b.of_kind("LP")[0], bounds=CB_BOUNDS)


@pytest.fixture(scope="module")
def branch_t2_c_lp(branch_t2_c):
    return branch_t2_c.of_kind("LP")[0]


@pytest.fixture(scope="module")
def hopf_a1c(p2, branch_t2_c):
    h = [s for s in branch_t2_c.of_kind("H") if abs(s.param - 0.036) < 1e-3][0]
    return c2.continue_hopf(p2, "a1", "c", h, bounds=((1e-3, 1.0), (1e-3, 0.3)))


@pytest.fixture(scope="module")
def fold_a1c(p2, branch_t2_c_lp):
    return c2.continue_fold(p2, "a1", "c", branch_t2_c_lp, bounds=((1e-3, 1.0), (1e-3, 0.3)))


@pytest.fixture(scope="module")
def a1a2(p2, branch_t2_a2):
    b = ((1e-3, 1.5), (1e-3, 2.0))
    hopf = c2.continue_hopf(p2, "a1", "a2", branch_t2_a2.of_kind("H")[0], bounds=b)
    fold = c2.continue_fold(p2, "a1", "a2", branch_t2_a2.of_kind("LP")[0], bounds=b)
    return hopf, fold


def _point(res, kind):
    pts = res.of_kind(kind)
    assert len(pts) == 1, [(q.kind, q.p1, q.p2) for q in res.points]
    return pts[0]


def test_curves_satisfy_defining_system(fold_cb, hopf_a1c, p1, p2):
    for rec in fold_cb.curve.points:
        q = p1.replace(c=rec.p1, b=rec.p2)
        assert np.linalg.norm(rhs(np.array(rec.state), q)) < 1e-10
        assert abs(rec.diag["eps4"]) < 1e-8
    for rec in hopf_a1c.curve.points:
        q = p2.replace(a1=rec.p1, c=rec.p2)
        assert np.linalg.norm(rhs(np.array(rec.state), q)) < 1e-10
        assert abs(rec.diag["delta"]) < 1e-8


def test_cusp_cb_meets_transcritical_surface(fold_cb, p1):
    cp = _point(fold_cb, "CP")
    assert cp.p1 == pytest.approx(0.1022, abs=2e-3)
    assert cp.p2 == pytest.approx(0.07622, abs=2e-3)
    tc = c2.transcritical_curve(p1, "c", "b", [cp.p1])[0]
    assert tc == pytest.approx(cp.p2, abs=1e-6)


def test_cusp_tangency_is_quadratic(fold_cb, p1):
    cp = _point(fold_cb, "CP")
    c = np.array([r.p1 for r in fold_cb.curve.points])
    b = np.array([r.p2 for r in fold_cb.curve.points])
    gap = np.abs(b - c2.transcritical_curve(p1, "c", "b", c))
    dc = np.abs(c - cp.p1)
    # symmetric window on both sides cancels the cubic asymmetry
    m = (dc > 5e-4) & (dc < 5e-3)
    assert m.sum() >= 6
    k = np.polyfit(np.log(dc[m]), np.log(gap[m]), 1)[0]
    assert 1.7 <= k <= 2.3


def test_fold_slices_reproduce_one_parameter_folds(fold_cb, p1):
    phys = [r for r in fold_cb.curve.points if min(r.state) > 0.01]
    picks = phys[:: max(1, len(phys) // 3)][:3]
    assert len(picks) == 3
    for rec in picks:
        q = p1.replace(c=rec.p1, b=rec.p2 * 1.02)
        res = continue_equilibrium(q, "b", rec.p2 * 0.8, rec.p2 * 1.3, seed=e4_of(q), lyapunov=False)
        lps = [s.param for s in res.of_kind("LP")]
        assert min(abs(v - rec.p2) for v in lps) < 1e-5


def test_bt_on_hopf_curve_a1c(hopf_a1c, p2):
    bt = _point(hopf_a1c, "BT")
    assert bt.p1 == pytest.approx(0.149588, abs=2e-3)
    assert bt.p2 == pytest.approx(0.018589, abs=2e-3)
    ev = eigenvalues(jacobian(np.array(bt.state), p2.replace(a1=bt.p1, c=bt.p2)))
    small = [z for z in ev if abs(z) < 1e-5]
    rest = [z for z in ev if abs(z) >= 1e-5]
    assert len(small) == 2 and len(rest) == 2
    assert all(z.real < -1e-3 for z in rest)


def test_bt_agrees_between_fold_and_hopf_curves(hopf_a1c, fold_a1c):
    a, b = _point(hopf_a1c, "BT"), _point(fold_a1c, "BT")
    assert abs(a.p1 - b.p1) < 1e-5 and abs(a.p2 - b.p2) < 1e-5


def test_a1a2_bt_and_gh(a1a2):
    hopf, _ = a1a2
    bt, gh = _point(hopf, "BT"), _point(hopf, "GH")
    assert (bt.p1, bt.p2) == pytest.approx((0.019133, 0.274931), abs=2e-3)
    assert (gh.p1, gh.p2) == pytest.approx((0.042954, 0.379816), abs=2e-3)


def test_gh_is_transversal_zero_of_l1(a1a2, p2):
    hopf, _ = a1a2
    gh = _point(hopf, "GH")
    assert abs(gh.residuals["test"]) < 1e-6
    pts = [r for r in hopf.curve.points if np.isfinite(r.diag.get("l1", np.nan))]
    k = int(np.argmin([abs(r.p1 - gh.p1) + abs(r.p2 - gh.p2) for r in pts]))
    r0, r1 = pts[k], pts[k + 1]
    ds = np.linalg.norm(r1.z - r0.z)
    assert abs(r1.diag["l1"] - r0.diag["l1"]) / ds > 1e-4


def test_hopf_curve_supercritical_beyond_gh(a1a2):
    hopf, _ = a1a2
    gh = _point(hopf, "GH")
    hi = [r.diag["l1"] for r in hopf.curve.points if r.p1 > gh.p1 + 0.05 and np.isfinite(r.diag.get("l1", np.nan))]
    assert hi and all(v < 0 for v in hi)


def test_a1a2_fold_is_horizontal(a1a2):
    _, fold = a1a2
    a2 = np.array([r.p2 for r in fold.curve.points])
    a1 = np.array([r.p1 for r in fold.curve.points])
    assert np.ptp(a1) > 0.5
    assert np.ptp(a2) < 1e-8
    assert a2.mean() == pytest.approx(0.274931, abs=1e-6)


def test_seed_kind_checked(p1, p2, branch_t1_b, branch_t2_c):
    h = branch_t2_c.of_kind("H")[0]
    with pytest.raises(SeedNotFold):
        c2.continue_fold(p2, "a1", "c", h)
    with pytest.raises(SeedNotHopf):
        c2.continue_hopf(p1, "c", "b", branch_t1_b.of_kind("LP")[0])


def test_transcritical_residual_affine(p1, rng):
    for name in ("b", "c", "a3", "u"):
        v = rng.uniform(0.02, 0.3, 3)
        r = [c2.transcritical_residual(p1.with_value(name, float(x))) for x in v]
        # second divided difference of an affine function vanishes
        s01 = (r[1] - r[0]) / (v[1] - v[0])
        s12 = (r[2] - r[1]) / (v[2] - v[1])
        assert s01 == pytest.approx(s12, rel=1e-9, abs=1e-15)


def test_region_cell_bistable(p1):
    assert c2.classify_cell(p1.replace(c=0.09, b=0.112)) == "bistable_E2_E4"


def test_region_cell_cycle_below_hopf(p2):
    assert c2.classify_cell(p2.replace(a1=0.6, c=0.05)) == "E4_unstable_cycle"


def test_region_degenerate_bounds_single_cell(p1):
    rm = c2.region_classify(p1, "c", "b", ((0.09, 0.09), (0.112, 0.112)), (20, 20))
    assert rm.resolution == (1, 1)
    assert rm.labels == [["bistable_E2_E4"]]


def test_region_resolution_limit(p1):
    with pytest.raises(ConfigError):
        c2.region_classify(p1, "c", "b", ((0.05, 0.15), (0.05, 0.2)), (201, 2))


def test_region_deterministic_across_jobs(p1, tmp_path):
    kw = dict(bounds=((0.05, 0.15), (0.05, 0.2)), resolution=(4, 3), integrate_cycles=False)
    a = c2.region_classify(p1, "c", "b", jobs=1, **kw)
    b = c2.region_classify(p1, "c", "b", jobs=2, **kw)
    assert a.labels == b.labels
    assert {v for row in a.labels for v in row} <= set(c2.REGION_LABELS)
    c2.write_region_csv(a, tmp_path / "a.csv")
    c2.write_region_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["p1", "p2", "label"] and len(rows) == 13


def test_curve_and_points_csv(fold_cb, tmp_path):
    c2.write_curve_csv(fold_cb.curve, tmp_path / "f.csv")
    c2.write_points_csv(fold_cb.points, tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["p1", "p2", "x", "y1", "y2", "y3", "diag"]
    assert len(rows) == len(fold_cb.curve.points) + 1
    pts = list(csv.DictReader(open(tmp_path / "p.csv")))
    assert [r["kind"] for r in pts] == ["CP"]
