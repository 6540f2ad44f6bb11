import math
from dataclasses import replace

import numpy as np
import pytest

from pbcover import config as cfgmod, linkmodel as lm, planner as pl, quartic as qt, simkit as sk
from pbcover.errors import FlatProfile, InvalidConfig


@pytest.fixture(scope="module")
def make(baseline, qos, spec):
    def build(m, s, d=50.0, config=None, **kw):
        return pl.GcdQuery(config or baseline, lm.Placement(m, d, s), qos, spec, **kw)
    return build


def test_d_zero_gives_biquadratic_root(make):
    q = make(6, 1, d=0.0)
    assert pl.gcd_at(0.0, q).r_cov == pytest.approx(q.varsigma() ** 0.25, rel=1e-8)


@pytest.mark.parametrize("s,want", [(1, 63.0), (2, 76.0)])
def test_baseline_gcd_at_50m(make, s, want):
    res = pl.gcd_at(50.0, make(6, s))
    assert res.r_cov == pytest.approx(want, abs=3.0)
    assert not res.gap_detected and not res.truncated


@pytest.mark.parametrize("m", [3, 6, 9, 12, 16])
@pytest.mark.parametrize("s", [1, 2])
def test_edge_scan_matches_quartic(make, m, s):
    q = make(m, s)
    for d in (0.0, 20.0, 55.0, 90.0):
        assert pl.gcd_at(d, q).r_cov == pytest.approx(pl.closed_form_gcd(q, d), abs=1e-6)


def test_m2_optimum_at_origin(make):
    res = pl.optimize_d(make(2, 1))
    assert res.d_star == pytest.approx(0.0, abs=0.1)
    assert res.d_star_closed == 0.0


def test_s2_optimum_uses_doubled_alpha(make, baseline, qos, spec):
    q = make(6, 2)
    res = pl.optimize_d(q)
    th = q.edge_threshold()
    sig = (2 * lm.alpha(baseline) / th) ** (2 / baseline.path_loss_exponent)
    assert res.method is pl.Method.CLOSED_FORM
    assert res.d_star == pytest.approx(qt.theorem1_dstar(sig, 6), abs=1e-3)
    assert res.r_cov == pytest.approx(pl.closed_form_gcd(q, res.d_star), rel=1e-8)


def test_full_service_chi_approx_within_five_percent(make):
    q = make(6, 6)
    approx = pl.chi_approx_dstar(q)
    numeric = pl.optimize_d(q)
    assert approx.method is pl.Method.CHI_APPROX
    assert abs(approx.d_star - numeric.d_star) / numeric.d_star < 0.05


def test_optimum_is_local_max(make):
    for m, s in [(4, 1), (6, 1), (6, 2), (9, 1)]:
        q = make(m, s)
        res = pl.optimize_d(q)
        for delta in (0.05, 0.5, 2.0):
            assert pl.gcd_at(res.d_star + delta, q).r_cov <= res.r_cov + 1e-6
            assert pl.gcd_at(max(res.d_star - delta, 0), q).r_cov <= res.r_cov + 1e-6


@pytest.mark.parametrize("m", [3, 5, 7, 9])
def test_gcd_continuous_in_d_for_small_m(make, m):
    q = make(m, 1)
    d = np.arange(0.0, 120.0, q.grid_step_d)
    r = np.array([res.r_cov for res in pl.gcd_batch(d, q, threads=2)])
    steps = np.abs(np.diff(r))
    i = int(np.argmax(steps))
    if steps[i] <= 5 * q.grid_step_r:
        return
    # steep but continuous past the optimum: a jump would not shrink with the d step
    fine = np.linspace(d[i], d[i + 1], 51)
    rf = np.array([res.r_cov for res in pl.gcd_batch(fine, q)])
    assert np.max(np.abs(np.diff(rf))) <= 5 * q.grid_step_r


def test_batch_matches_single(make):
    q = make(8, 1)
    d = [10.0, 47.3, 90.0]
    assert [x.r_cov for x in pl.gcd_batch(d, q, threads=3)] == pytest.approx([pl.gcd_at(x, q).r_cov for x in d])


def test_monotone_in_resources(make, baseline):
    hot = replace(baseline, transmit_power_watts=2 * baseline.transmit_power_watts)
    for d in (0.0, 30.0, 60.0):
        one = pl.gcd_at(d, make(6, 1)).r_cov
        assert pl.gcd_at(d, make(6, 1, config=hot)).r_cov >= one
        assert pl.gcd_at(d, make(6, 2)).r_cov >= one
    opt = [pl.optimize_d(make(m, 1)).r_cov for m in (3, 4, 6, 8, 12)]
    assert opt == sorted(opt)


def test_circuit_power_zero_is_identity(make):
    q = make(6, 1)
    assert pl.gcd_circuit_power(q, 50.0).r_cov == pl.gcd_at(50.0, q).r_cov


def test_circuit_power_overlap_and_shrink(make):
    run = cfgmod.load()
    out = {}
    for xi in (-30.0, -20.0):
        for m in (5, 6):
            q = make(m, 1, d=0.0, config=run.rf_config(35.0, xi))
            out[xi, m] = pl.gcd_circuit_power(q)
    for xi in (-30.0, -20.0):
        assert out[xi, 5].d_star == pytest.approx(out[xi, 6].d_star, abs=0.05)
    ratio = out[-20.0, 6].r_cov / out[-30.0, 6].r_cov
    assert ratio == pytest.approx(1 / 3, abs=0.1)


def test_circuit_power_zero_coverage(make):
    run = cfgmod.load()
    q = make(6, 1, d=0.0, config=run.rf_config(0.0, 0.0))
    res = pl.gcd_circuit_power(q, 10.0)
    assert res.zero_coverage and res.r_cov == 0.0


def test_truncated_flag(make):
    res = pl.gcd_at(50.0, make(6, 1, r_upper=40.0, grid_step_r=0.1, grid_step_d=0.1))
    assert res.truncated


def test_query_validation(make):
    with pytest.raises(InvalidConfig):
        make(6, 1, r_upper=1.0)
    with pytest.raises(InvalidConfig):
        make(6, 1, grid_step_r=0.0)
    with pytest.raises(InvalidConfig):
        pl.gcd_at(-1.0, make(6, 1))


@pytest.mark.parametrize("m,s", [(3, 1), (6, 1), (7, 1), (6, 6), (5, 5), (9, 3)])
def test_worst_angle_is_edge(make, m, s):
    q = make(m, s)
    for r in (5.0, 40.0, 120.0):
        a = pl.worst_case_angle_check(q, 50.0, r)
        assert abs(abs(a) - math.pi / m) < 1e-9


def test_worst_angle_flat_and_checks(make):
    q = make(6, 1)
    with pytest.raises(FlatProfile):
        pl.worst_case_angle_check(q, 0.0, 30.0)
    with pytest.raises(ValueError):
        pl.worst_case_angle_check(q, 50.0, 30.0, n_angles=16)


@pytest.mark.parametrize("m", [4, 6, 9])
def test_all_angles_equals_edge_for_single_service(make, m):
    q = make(m, 1)
    for d in (20.0, 50.0):
        assert pl.gcd_all_angles(d, q).r_cov == pytest.approx(pl.gcd_at(d, q).r_cov, rel=1e-6)


def test_all_angles_exposes_even_service_gap(make):
    q = make(12, 2)
    res = pl.optimize_d(q)
    assert res.diagnostics["edge_reduction_exact"] is False
    exact = pl.gcd_all_angles(res.d_star, q)
    assert exact.r_cov < 0.6 * res.r_cov
    # baseline M=6 is not affected
    q6 = make(6, 2)
    assert pl.gcd_all_angles(50.0, q6).r_cov == pytest.approx(pl.gcd_at(50.0, q6).r_cov, rel=1e-6)


def test_edge_reduction_flags():
    assert pl.edge_reduction_exact(6, 1)
    assert pl.edge_reduction_exact(6, 3)
    assert pl.edge_reduction_exact(6, 6)
    assert not pl.edge_reduction_exact(6, 2)


@pytest.mark.slow
@pytest.mark.parametrize("s", [1, 2])
def test_guaranteed_coverage_by_simulation(make, baseline, qos, spec, s):
    q = make(6, s)
    r_cov = pl.gcd_at(50.0, q).r_cov
    g = np.random.default_rng(2024)
    plan = sk.SimPlan(trials_per_point=20000, seed=7)
    for i in range(100):
        r = r_cov * math.sqrt(g.uniform(0.0, 1.0))
        th = g.uniform(-math.pi, math.pi)
        est = sk.simulate_outage(lm.PolarPoint(r, th), q.placement, baseline, spec, qos, plan, key=(s, i))
        assert est.probability - est.band < qos.epsilon
