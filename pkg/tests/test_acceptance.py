"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v -m acceptance tests/test_acceptance.py``. Thresholds are
fixed here; statistical outcomes are deterministic given the seeds below.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from zrp.configuration import Configuration
from zrp.coupling import (
    CoupledConfiguration,
    sandwich_run,
    simulate_coupled,
    track_second_classes,
)
from zrp.dynamics import BoundarySpec, RateFunctionSpec, simulate
from zrp.environment import (
    INFINITE,
    EnvSpec,
    build_env,
    critical_density,
    density_slope,
    expected_density,
    fugacity_for_density,
    second_class_velocity,
    sample_iid_env,
)
from zrp.experiments import (
    burke_experiment,
    convergence_experiment,
    convergence_verdict,
    domination_check,
    speed_experiment,
    speed_window,
    stationarity_test,
    stationarity_verdict,
)
from zrp.measures import sample_ordered_pair

pytestmark = pytest.mark.acceptance

# invariance / Burke fixture: 8 sites at rate 0.8 fed at rate 0.4
QUEUE_ENV = build_env(np.full(8, 0.8), 0.8)
QUEUE_V = 0.4
# convergence fixture: env seed frozen after a one-off pilot
TRIANGULAR = EnvSpec.triangular(0.5, 1.0, 2.0)
CONVERGENCE_ENV_SEED = 1
CONVERGENCE_GRID = np.r_[25 * 2 ** (np.arange(8) / 2), np.arange(400, 3601, 200)]


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail, elapsed, budget):
        in_time = elapsed < budget
        status = "PASS" if passed and in_time else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] criterion {number} {title}: {detail} "
                  f"({elapsed:.1f} s, budget {budget:.0f} s)")
        return passed and in_time
    return emit


def test_criterion_1_analytics(report):
    start = time.perf_counter()
    unit = build_env(np.ones(10), 1.0)
    two = build_env([1.0, 0.75], 0.5, -1)
    failures = []

    def check(label, got, want, tol):
        if not abs(got - want) <= tol:
            failures.append(f"{label}={got!r} want {want}")

    check("R(unit,.5)", expected_density(unit, 0.5), 1.0, 1e-12)
    check("R(two,.5)", expected_density(two, 0.5), 1.5, 1e-12)
    check("R(two,0)", expected_density(two, 0.0), 0.0, 0.0)
    check("R'(unit,.5)", density_slope(unit, 0.5), 4.0, 1e-12)
    check("R'(unit,0)", density_slope(unit, 0.0), 1.0, 1e-12)
    check("R'(two,.5)", density_slope(two, 0.5), 8.0, 1e-12)
    h = 1e-6
    for env, v in ((two, 0.5), (unit, 0.5), (unit, 0.2)):
        fd = (expected_density(env, v + h) - expected_density(env, v - h)) / (2 * h)
        check(f"fd-rel({v})", abs(fd / density_slope(env, v) - 1), 0.0, 1e-4)
    check("gamma(unit,.5)", second_class_velocity(unit, 0.5), 0.25, 1e-12)
    check("gamma(unit,0)", second_class_velocity(unit, 0.0), 1.0, 1e-12)
    check("gamma(two,.5)", second_class_velocity(two, 0.5), 0.125, 1e-12)
    check("rho*([.75,1])", critical_density(build_env([0.75, 1.0], 0.5)), 1.5, 1e-12)
    if critical_density(build_env([0.5, 1.0], 0.5)) is not INFINITE:
        failures.append("rho*([.5,1]) not infinite")
    tri = sample_iid_env(TRIANGULAR, (0, 9999), 2024)
    exact = integrate.quad(lambda p: 0.5 / (p - 0.5) * TRIANGULAR.pdf(p), 0.5, 1.0)[0]
    terms = 0.5 / (tri.rates - 0.5)
    check("rho*(triangular)", critical_density(tri), exact, 3 * terms.std(ddof=1) / 100)
    # the inversion examples need the floor at the window minimum so that the
    # target density lies below the critical density
    check("v(unit,1)", fugacity_for_density(unit, 1.0), 0.5, 1e-9)
    check("v(two,0)", fugacity_for_density(two, 0.0), 0.0, 0.0)
    two_floor = build_env([1.0, 0.75], 0.75, -1)
    v = fugacity_for_density(two_floor, 1.5)
    check("v(two,1.5)", v, 0.5, 1e-9)
    check("|R(v)-1.5|", abs(expected_density(two_floor, v) - 1.5), 0.0, 1e-10 * 2.5)
    elapsed = time.perf_counter() - start
    detail = "all values reproduced" if not failures else "; ".join(failures)
    assert report(1, "analytics exactness", not failures, detail, elapsed, 1.0)


def test_criterion_2_invariance(report):
    start = time.perf_counter()
    reports = stationarity_test(QUEUE_ENV, QUEUE_V, 200.0, 500, 20240)
    verdict = stationarity_verdict(reports, 0.9)
    elapsed = time.perf_counter() - start
    detail = (f"{sum(r.passed for r in reports)}/{len(reports)} sites pass chi-square at 1e-3; "
              f"min p = {min(r.p_value for r in reports):.3g}")
    assert report(2, "invariance of the product measure", verdict.passed, detail, elapsed, 60.0)


def test_criterion_3_burke(report):
    start = time.perf_counter()
    rep = burke_experiment(QUEUE_ENV, QUEUE_V, 5000.0, 20, 777, rate_tolerance=0.02,
                           min_pass_fraction=0.95)
    elapsed = time.perf_counter() - start
    passes = sum(p > 0.01 for p in rep.details["p_values"])
    detail = (f"KS p > 0.01 in {passes}/20 seeds; pooled rate {rep.estimate:.4f} "
              f"(+-{rep.std_error:.4f}) vs 0.4, rel. error {abs(rep.estimate / 0.4 - 1):.3%}")
    assert report(3, "Burke departures", rep.passed, detail, elapsed, 120.0)


def test_criterion_4_second_class_speed(report):
    start = time.perf_counter()
    t = 2000.0
    parts, ok = [], True
    for v in (0.2, 0.5, 0.8):
        n = speed_window(t, (1 - v) ** 2)
        env = build_env(np.ones(n), 1.0)
        rep = speed_experiment(env, v, 0, t, 200, 4000 + int(10 * v), tolerance=0.02)
        ok &= rep.passed
        parts.append(f"v={v}: {rep.estimate:.4f}+-{rep.std_error:.4f} vs {(1 - v) ** 2:.2f}")
    # no particle outruns a lone particle at unit rate
    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, speed_window(t, 1.0) - 1), 46)
    rep = speed_experiment(env, 0.3, 0, t, 100, 4003, confidence=0.99)
    ok &= rep.passed
    parts.append(f"iid uniform(0.6,1), v=0.3: {rep.estimate:.4f}+-{rep.std_error:.4f} "
                 f"(lower 99% bound {rep.estimate - 2.326 * rep.std_error:.4f})")
    elapsed = time.perf_counter() - start
    assert report(4, "second-class speed", ok, "; ".join(parts), elapsed, 300.0)


def test_criterion_5_domination(report):
    start = time.perf_counter()
    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, 255), 1)
    init = Configuration.constant(0, 256, 5)
    # quasi-stationary stretch: middle half of the time the window needs to
    # drain its mass through the bottleneck
    drain = init.total / env.min_rate
    times = np.linspace(drain / 4, 3 * drain / 4, 11)
    rep = domination_check(env, init, times, 200, 5150, BoundarySpec(), probe=32)
    elapsed = time.perf_counter() - start
    d = rep.details
    z = (d["means"] - d["bound"]) / d["se"]
    detail = (f"{int(np.sum(d['ok']))}/{len(d['ok'])} probe sites within c/(p-c) + 3 SE; "
              f"max z = {np.max(z):.2f}; observed t in [{times[0]:.0f}, {times[-1]:.0f}]")
    assert report(5, "domination by the maximal measure", rep.passed, detail, elapsed, 300.0)


def test_criterion_6_convergence(report):
    start = time.perf_counter()
    env = sample_iid_env(TRIANGULAR, (0, 511), CONVERGENCE_ENV_SEED)
    rep = convergence_experiment(env, 3.0, CONVERGENCE_GRID, 32, 800, 2024)
    verdict = convergence_verdict(rep, tv_threshold=0.1, trapped_threshold=0.5,
                                  trend_significance=0.05)
    elapsed = time.perf_counter() - start
    d = verdict.details
    detail = (
        f"rho* = {critical_density(env):.3f}; plateau {d.get('plateau_times', [None])[0]}"
        f"..{d.get('time')}; TV {verdict.statistic:.3f} (< 0.1: {d.get('tv_below_threshold')}); "
        f"Spearman rho {d.get('spearman_rho', math.nan):.2f} p {verdict.p_value} "
        f"(decreasing: {d.get('tv_decreasing')}); trapped at slowest decile "
        f"{verdict.estimate:.3f} (>= 0.5: {d.get('mass_trapped')})"
    )
    assert report(6, "convergence and mass loss", verdict.passed, detail, elapsed, 900.0)


def test_criterion_7_pathwise_invariants(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7007)
    boundaries = [BoundarySpec(), BoundarySpec.segment(0.5), BoundarySpec.segment(0.3, "closed"),
                  BoundarySpec.segment(None, "closed"), BoundarySpec.ring()]
    g_bounded = RateFunctionSpec("bounded-monotone", (0, 1, 1.5, 2), 2.0)
    violations = []
    cases = 300
    for case in range(cases):
        n = int(rng.integers(1, 40))
        seed = int(rng.integers(0, 2**63))
        env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, n - 1), case)
        boundary = boundaries[case % len(boundaries)]
        t_max = float(rng.uniform(1, 60))
        eta = Configuration(0, rng.integers(0, 4, n))

        # conservation and bit-identical reruns, both rate functions
        for g in (RateFunctionSpec(), g_bounded):
            a = simulate(env, eta, boundary, g, t_max, seed, [t_max / 2])
            b = simulate(env, eta, boundary, g, t_max, seed, [t_max / 2])
            if not a.same_path(b):
                violations.append(f"case {case}: rerun differs")
            if eta.total + len(a.injections) - len(a.departures) != a.final.total:
                violations.append(f"case {case}: conservation")
            if boundary.topology == "ring" and a.snapshots[0][1].total != eta.total:
                violations.append(f"case {case}: ring total")

        # discrepancy monotonicity on an arbitrary pair
        xi = Configuration(0, rng.integers(0, 4, n))
        res = simulate_coupled(env, CoupledConfiguration(eta, xi), boundary, t_max, seed)
        if np.any(np.diff(res.discrepancy_totals()) > 0):
            violations.append(f"case {case}: discrepancy count increased")

        # order preservation from an ordered start
        u, w = sorted(rng.uniform(0, 0.55, 2))
        lo, hi = sample_ordered_pair(env, u, w, seed)
        snaps = np.linspace(0, t_max, 6)
        res = simulate_coupled(env, CoupledConfiguration(lo, hi), boundary, t_max, seed, snaps)
        if not all(a <= b for (_, a), (_, b) in zip(res.eta.snapshots, res.xi.snapshots)):
            violations.append(f"case {case}: order lost")
        if np.any(res.discrepancy_log[:, 1] > 0):
            violations.append(f"case {case}: wrong-sign discrepancy")

        # ordered second-class particles under a shared seed
        starts = sorted(int(z) for z in rng.integers(0, n, 3))
        paths = track_second_classes(env, eta, starts, boundary, t_max, seed)
        grid = sorted({0.0}.union(*(p.times.tolist() for p in paths)))
        for t in grid:
            pos = [p.position_at(t) for p in paths]
            if pos != sorted(pos):
                violations.append(f"case {case}: tags crossed at {t}")
                break
        if boundary.left == "closed":
            sw = sandwich_run(env, lo, hi, starts[0], boundary, t_max, seed)
            for t in sorted({0.0}.union(sw.upper.times, sw.middle.times, sw.lower.times)):
                if not sw.lower.position_at(t) <= sw.middle.position_at(t) <= sw.upper.position_at(t):
                    violations.append(f"case {case}: sandwich order lost at {t}")
                    break
    elapsed = time.perf_counter() - start
    detail = f"{cases} random cases, {len(violations)} violations" + (
        f" (first: {violations[0]})" if violations else "")
    assert report(7, "pathwise invariants", not violations, detail, elapsed, 300.0)
