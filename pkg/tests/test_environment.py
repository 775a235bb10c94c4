import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from zrp.environment import (
    INFINITE,
    EnvSpec,
    Environment,
    build_env,
    critical_density,
    density_slope,
    expected_density,
    fugacity_for_density,
    iid_critical_density,
    iid_expected_density,
    is_infinite,
    sample_iid_env,
    second_class_velocity,
)
from zrp.errors import DensityAboveCritical, FugacityTooHigh, RateOutOfRange, SpecMismatch

UNIT10 = build_env(np.ones(10), 1.0)
TWO = build_env([1.0, 0.75], 0.5, -1)


@st.composite
def environments(draw):
    n = draw(st.integers(1, 30))
    floor_c = draw(st.floats(0.05, 0.95))
    rates = draw(st.lists(st.floats(floor_c, 1.0), min_size=n, max_size=n))
    return build_env(rates, floor_c, draw(st.integers(-50, 50)))


# -- construction ----------------------------------------------------------

def test_build_env_window():
    assert (TWO.x_lo, TWO.x_hi) == (-1, 0)
    assert TWO.rate(-1) == 1.0 and TWO.rate(0) == 0.75


def test_rate_equal_to_floor_allowed():
    env = build_env([0.5], 0.5, 0)
    assert env.rate(0) == env.floor_c


@pytest.mark.parametrize("rates,floor_c", [([0.4], 0.5), ([1.2], 0.5), ([], 0.5), ([0.5], 0.0)])
def test_build_env_rejects(rates, floor_c):
    with pytest.raises(RateOutOfRange):
        build_env(rates, floor_c, 0)


def test_env_json_roundtrip():
    text = TWO.to_json()
    assert json.loads(text) == {"x_lo": -1, "floor_c": 0.5, "rates": [1.0, 0.75]}
    assert Environment.from_json(text) == TWO


# -- sampling ----------------------------------------------------------------

def test_point_spec_gives_constant_rates():
    env = sample_iid_env(EnvSpec.point(0.8), (0, 9), 3)
    assert env.size == 10 and np.all(env.rates == 0.8)


def test_sampler_is_deterministic():
    spec = EnvSpec.uniform(0.6, 1.0)
    a = sample_iid_env(spec, (0, 99), 11)
    b = sample_iid_env(spec, (0, 99), 11)
    assert a == b
    assert a != sample_iid_env(spec, (0, 99), 12)


def test_uniform_sampler_mean():
    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, 9999), 5)
    sigma = 0.4 / math.sqrt(12)
    assert abs(env.rates.mean() - 0.8) < 3 * sigma / 100
    assert env.rates.min() >= 0.6 and env.rates.max() <= 1.0


def test_deterministic_spec_rejected_by_sampler():
    with pytest.raises(SpecMismatch):
        sample_iid_env(EnvSpec.deterministic([0.7, 0.9], 0.7), (0, 1), 0)


@pytest.mark.parametrize("spec", [
    EnvSpec.uniform(0.6, 1.0), EnvSpec.point(0.7), EnvSpec.triangular(0.5, 1.0, 2.0),
    EnvSpec.deterministic([0.6, 0.9], 0.6),
])
def test_envspec_json_roundtrip(spec):
    d = json.loads(spec.to_json())
    assert "kind" in d
    assert EnvSpec.from_json(spec.to_json()) == spec


def test_triangular_density_matches_linear_ramp():
    spec = EnvSpec.triangular(0.5, 1.0, 2.0)
    for p in (0.5, 0.6, 0.75, 1.0):
        assert spec.pdf(p) == pytest.approx(8 * (p - 0.5))
    assert integrate.quad(spec.pdf, 0.5, 1.0)[0] == pytest.approx(1.0)


# -- functionals: worked examples ----------------------------------------------

def test_expected_density_examples():
    assert expected_density(UNIT10, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert expected_density(TWO, 0.5) == pytest.approx(1.5, abs=1e-15)
    assert expected_density(TWO, 0.0) == 0.0


def test_density_slope_examples():
    assert density_slope(UNIT10, 0.5) == pytest.approx(4.0)
    assert density_slope(UNIT10, 0.0) == pytest.approx(1.0)
    assert density_slope(TWO, 0.5) == pytest.approx(8.0)
    h = 1e-6
    fd = (expected_density(TWO, 0.5 + h) - expected_density(TWO, 0.5 - h)) / (2 * h)
    assert fd == pytest.approx(8.0, rel=1e-4)


def test_second_class_velocity_examples():
    assert second_class_velocity(UNIT10, 0.5) == pytest.approx(0.25)
    assert second_class_velocity(UNIT10, 0.0) == pytest.approx(1.0)
    assert second_class_velocity(TWO, 0.5) == pytest.approx(0.125)


def test_fugacity_errors():
    with pytest.raises(FugacityTooHigh):
        expected_density(TWO, 0.75)
    with pytest.raises(FugacityTooHigh):
        density_slope(TWO, 0.9)
    with pytest.raises(FugacityTooHigh):
        second_class_velocity(TWO, -0.1)


def test_critical_density_examples():
    assert critical_density(build_env([0.75, 1.0], 0.5)) == pytest.approx(1.5)
    assert critical_density(build_env([0.5, 1.0], 0.5)) is INFINITE
    assert is_infinite(critical_density(build_env([0.5, 1.0], 0.5)))


def test_critical_density_triangular_sample():
    spec = EnvSpec.triangular(0.5, 1.0, 2.0)
    # quadrature oracle for the annealed value
    exact, _ = integrate.quad(lambda p: 0.5 / (p - 0.5) * 8 * (p - 0.5), 0.5, 1.0)
    assert exact == pytest.approx(2.0)
    assert iid_critical_density(spec) == pytest.approx(exact)
    env = sample_iid_env(spec, (0, 9999), 2024)
    terms = 0.5 / (env.rates - 0.5)
    se = terms.std(ddof=1) / math.sqrt(terms.size)
    assert abs(critical_density(env) - exact) < 3 * se


def test_iid_counterparts():
    spec = EnvSpec.uniform(0.6, 1.0)
    assert is_infinite(iid_critical_density(spec))
    want = integrate.quad(lambda p: 0.3 / (p - 0.3) / 0.4, 0.6, 1.0)[0]
    assert iid_expected_density(spec, 0.3) == pytest.approx(want)
    env = sample_iid_env(spec, (0, 19_999), 1)
    assert expected_density(env, 0.3) == pytest.approx(want, rel=0.01)


def test_fugacity_for_density_examples():
    assert fugacity_for_density(UNIT10, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert fugacity_for_density(TWO, 0.0) == 0.0
    # floor at the window minimum, so the critical density is infinite
    two = build_env([1.0, 0.75], 0.75, -1)
    v = fugacity_for_density(two, 1.5)
    assert v == pytest.approx(0.5, abs=1e-9)
    assert abs(expected_density(two, v) - 1.5) <= 1e-10 * 2.5


def test_fugacity_for_density_above_critical():
    env = build_env([0.75, 1.0], 0.5)
    with pytest.raises(DensityAboveCritical):
        fugacity_for_density(env, 1.5)
    with pytest.raises(DensityAboveCritical):
        fugacity_for_density(env, 3.0)
    # infinite critical density: any finite target is reachable
    env = build_env([0.5, 1.0], 0.5)
    v = fugacity_for_density(env, 50.0)
    assert abs(expected_density(env, v) - 50.0) <= 1e-10 * 51


# -- properties -------------------------------------------------------------------

@given(environments(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_monotone_and_convex(env, a, b, c):
    vs = sorted(f * env.min_rate * 0.999 for f in (a, b, c))
    v1, v2, v3 = vs
    r1, r2, r3 = (expected_density(env, v) for v in vs)
    if v1 < v2:
        assert r1 < r2
    if v1 < v2 < v3 and v3 - v1 > 1e-6:
        # second divided difference
        dd = ((r3 - r2) / (v3 - v2) - (r2 - r1) / (v2 - v1)) / (v3 - v1) if v2 - v1 > 1e-9 and v3 - v2 > 1e-9 else 0.0
        assert dd >= -1e-6 * max(1.0, abs(dd))


@given(environments(), st.floats(0.0, 0.98))
@settings(max_examples=200, deadline=None)
def test_slope_matches_finite_difference(env, frac):
    h = 1e-6
    v = frac * (env.min_rate - 3e-3) + 2 * h
    fd = (expected_density(env, v + h) - expected_density(env, v - h)) / (2 * h)
    assert density_slope(env, v) == pytest.approx(fd, rel=1e-4)


@given(environments(), st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_round_trip(env, frac):
    v = frac * (env.min_rate - 1e-3)
    if v < 0:
        return
    rho = expected_density(env, v)
    if not is_infinite(critical_density(env)) and rho >= critical_density(env):
        return
    assert fugacity_for_density(env, rho) == pytest.approx(v, abs=1e-8)


@given(environments(), st.floats(0.0, 0.999))
@settings(max_examples=200, deadline=None)
def test_velocity_times_slope_is_one(env, frac):
    v = frac * env.min_rate
    assert abs(second_class_velocity(env, v) * density_slope(env, v) - 1.0) <= 1e-12
