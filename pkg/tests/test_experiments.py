import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from zrp.configuration import Configuration
from zrp.environment import EnvSpec, build_env, sample_iid_env
from zrp.errors import (
    BottleneckInProbe,
    ExcessiveExits,
    FugacityTooHigh,
    InfiniteCritical,
    SubcriticalStart,
    TooFewSamples,
    WindowTooSmall,
)
from zrp.experiments import (
    StatReport,
    burke_test,
    chi_square_geometric,
    convergence_experiment,
    default_burn_in,
    domination_check,
    estimate_left_density,
    sandwich_experiment,
    speed_experiment,
    speed_window,
    stationarity_test,
    total_variation,
)
from zrp.measures import ProductGeometric, sample_configuration

ENV8 = build_env(np.full(8, 0.8), 0.5)


# -- simple estimators ------------------------------------------------------------

def test_left_density_examples():
    assert estimate_left_density(Configuration.constant(0, 10, 2), 4) == 2.0
    assert estimate_left_density(Configuration(0, np.arange(20) % 2), 10) == 0.5
    env = build_env(np.ones(10_000), 0.5)
    conf = sample_configuration(ProductGeometric(env, 0.5), 3)
    assert abs(estimate_left_density(conf, 10_000) - 1.0) < 3 * math.sqrt(2 / 10_000)
    with pytest.raises(WindowTooSmall):
        estimate_left_density(Configuration.empty(0, 3), 4)


def test_total_variation_bounds():
    assert total_variation(np.zeros(100, dtype=int), 0.0) == 0.0
    rng = np.random.default_rng(1)
    samples = rng.geometric(0.5, 200_000) - 1
    assert total_variation(samples, 0.5) < 0.01
    assert total_variation(np.full(10, 50), 0.5) == pytest.approx(1.0, abs=1e-12)


def test_chi_square_on_point_mass_and_geometric():
    assert chi_square_geometric(np.zeros(50, dtype=int), 0.0).passed
    assert not chi_square_geometric(np.ones(50, dtype=int), 0.0).passed
    rng = np.random.default_rng(2)
    assert chi_square_geometric(rng.geometric(0.6, 5000) - 1, 0.4).passed
    assert not chi_square_geometric(rng.geometric(0.4, 5000) - 1, 0.4).passed


def test_stat_report_invariants():
    with pytest.raises(ValueError):
        StatReport("x", 0.0, 1.5, 0.0, 0.0, 1, True)
    with pytest.raises(ValueError):
        StatReport("x", 0.0, 0.5, 0.0, -1.0, 1, True)
    r = StatReport("x", np.float64(1.0), 0.5, np.inf, 0.1, 3, np.bool_(True), details={"a": np.arange(2)})
    assert r.to_dict()["estimate"] is None and r.to_dict()["details"]["a"] == [0, 1]


def test_burn_in_default():
    assert default_burn_in(ENV8) == pytest.approx(12.5)


# -- Burke ------------------------------------------------------------------------

def test_burke_null_passes_at_nominal_rate():
    rng = np.random.default_rng(2024)
    passes = 0
    for _ in range(1000):
        d = np.cumsum(rng.exponential(1 / 0.4, 10_000))
        passes += burke_test(d, 0.4).passed
    assert passes >= 980


def test_burke_has_power():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = np.cumsum(rng.exponential(1 / 0.8, 10_000))
        r = burke_test(d, 0.4)
        assert r.p_value < 0.01 and not r.passed


def test_burke_needs_samples():
    with pytest.raises(TooFewSamples):
        burke_test([], 0.4)
    with pytest.raises(TooFewSamples):
        burke_test(np.arange(1, 200, 1.0), 0.4, window_start=150.0)


def test_burke_rate_estimate():
    d = np.arange(1, 1001) * 2.5
    r = burke_test(d, 0.4, window_start=0.0, t_end=2500.0)
    assert r.estimate == pytest.approx(0.4)


# -- stationarity --------------------------------------------------------------------

def test_zero_fugacity_from_empty_is_stationary():
    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, 9), 0)
    reports = stationarity_test(env, 0.0, 20.0, 30, 1)
    assert all(r.passed and r.estimate == 0.0 for r in reports)


def test_stationarity_from_product_measure():
    reports = stationarity_test(ENV8, 0.4, 200.0, 500, 11)
    assert sum(r.passed for r in reports) >= 0.9 * len(reports)
    assert [r.details["site"] for r in reports] == list(range(8))


def test_stationarity_fails_from_deterministic_start():
    reports = stationarity_test(ENV8, 0.4, 1.0, 500, 11, init=Configuration.constant(0, 8, 5))
    assert sum(not r.passed for r in reports) > len(reports) / 2


def test_stationarity_rejects_high_fugacity():
    with pytest.raises(FugacityTooHigh):
        stationarity_test(ENV8, 0.8, 1.0, 2, 0)


def test_parallel_mapper_matches_serial():
    with ProcessPoolExecutor(2) as pool:
        par = stationarity_test(ENV8, 0.4, 20.0, 40, 5, mapper=pool.map)
    ser = stationarity_test(ENV8, 0.4, 20.0, 40, 5)
    assert [r.to_dict() for r in par] == [r.to_dict() for r in ser]


# -- speed ------------------------------------------------------------------------------

def test_lone_walker_speed():
    t = 200.0
    n = speed_window(t, 1.0)
    env = build_env(np.ones(n), 1.0)
    r = speed_experiment(env, 0.0, 0, t, 100, 3)
    assert r.passed and abs(r.estimate - 1.0) < 0.02
    assert r.details["predicted"] == 1.0 and r.details["exits"] == 0


def test_small_window_raises_excessive_exits():
    env = build_env(np.ones(20), 1.0)
    with pytest.raises(ExcessiveExits):
        speed_experiment(env, 0.0, 0, 200.0, 10, 3)


def test_speed_positive_in_random_environment():
    t = 300.0
    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, speed_window(t, 1.0)), 4)
    r = speed_experiment(env, 0.3, 0, t, 40, 5)
    assert r.passed and r.estimate > 0 and not r.details["homogeneous"]


def test_sandwich_experiment_is_ordered():
    t = 200.0
    margin = 150
    env = build_env(np.ones(margin + speed_window(t, 1.0)), 1.0)
    out = sandwich_experiment(env, 0.2, 0.5, margin, t, 30, 9)
    assert out["pathwise_ordered"] and out["exits"] == 0
    assert out["lower"] <= out["middle"] <= out["upper"]
    # chord speed of a homogeneous environment: (1 - u)(1 - w)
    assert out["chord_speed"] == pytest.approx(0.8 * 0.5)


# -- convergence and domination --------------------------------------------------------

def test_convergence_guards():
    env = sample_iid_env(EnvSpec.triangular(0.5, 1.0, 2.0), (0, 63), 1)
    with pytest.raises(SubcriticalStart):
        convergence_experiment(env, 0.0, [10, 20], 8, 2, 0)
    with pytest.raises(InfiniteCritical):
        convergence_experiment(build_env([0.5, 0.9, 1.0], 0.5), 5.0, [10, 20], 1, 2, 0)
    slow_right = build_env([1.0, 0.9, 0.8, 0.6], 0.5)
    with pytest.raises(BottleneckInProbe):
        convergence_experiment(slow_right, 10.0, [10, 20], 2, 2, 0)


def test_small_convergence_report():
    # a long fast stretch feeding one slow site, then a short fast tail
    rates = np.r_[np.full(30, 0.95), 0.6, [0.9, 0.95, 1.0, 0.85, 0.9]]
    env = build_env(rates, 0.5)
    rep = convergence_experiment(env, 4.0, np.arange(10, 201, 10), 3, 60, 2)
    assert rep.c_hat == 0.6
    assert np.all((rep.distances >= 0) & (rep.distances <= 1))
    assert rep.reference_ratios == pytest.approx(list(0.6 / rates[-3:]))
    assert rep.plateau.any()
    last = int(np.flatnonzero(rep.plateau)[-1])
    # the remaining mass queues at the bottleneck
    assert rep.trapped_fraction[last] > 0.5
    assert rep.mean_distance[last] < rep.mean_distance[0]
    assert rep.domination_ok()[-5:].all()
    d = rep.to_dict()
    assert d["plateau_times"] == rep.plateau_times
    assert len(rep.trapped_mass_profile) == env.size


def test_domination_check_from_heavy_start():
    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, 31), 3)
    r = domination_check(env, Configuration.constant(0, 32, 5), [150, 200, 250], 40, 1)
    assert r.passed and len(r.details["sites"]) == 32
