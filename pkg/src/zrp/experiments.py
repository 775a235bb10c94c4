"""Estimators, hypothesis tests and replica experiments.

Replica fan-out goes through a ``mapper`` argument (``map``-compatible, so a
process pool's ``map`` works); results are reduced in replica order, which
makes every report a deterministic function of the master seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import rng
from .configuration import Configuration
from .coupling import sandwich_run, track_second_class
from .dynamics import BoundarySpec, simulate
from .environment import (
    Environment,
    critical_density,
    expected_density,
    is_infinite,
    second_class_velocity,
)
from .errors import (
    BottleneckInProbe,
    ExcessiveExits,
    FugacityTooHigh,
    InfiniteCritical,
    SubcriticalStart,
    TooFewSamples,
    WindowTooSmall,
    ZRPError,
)
from .measures import ProductGeometric, sample_configuration, sample_ordered_pair

CHI2_SIGNIFICANCE = 1e-3
KS_SIGNIFICANCE = 0.01
TV_THRESHOLD = 0.1
PLATEAU_TOLERANCE = 0.05
TRAPPED_THRESHOLD = 0.5
TREND_SIGNIFICANCE = 0.05


@dataclass
class StatReport:
    name: str
    statistic: float
    p_value: float | None
    estimate: float
    std_error: float
    n: int
    passed: bool
    threshold: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.std_error < 0:
            raise ValueError("negative standard error")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def default_burn_in(env: Environment, service_times: float = 10.0) -> float:
    """Burn-in of ``service_times`` mean service times of the slowest site."""
    return service_times / env.min_rate


def replica_seeds(seed: int, replicas: int) -> list[int]:
    return [rng.derive_seed(seed, r) for r in range(replicas)]


# -- basic estimators -----------------------------------------------------------

def estimate_left_density(config: Configuration, n: int) -> float:
    """Average occupancy of the rightmost ``n`` sites."""
    if n <= 0 or n > config.size:
        raise WindowTooSmall(f"need 1 <= n <= {config.size}, got {n}")
    return float(config.occ[-n:].mean())


def geometric_pmf(ratio: float, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    return (1.0 - ratio) * ratio**k


def total_variation(samples: np.ndarray, ratio: float) -> float:
    """TV distance between the empirical law of ``samples`` and Geometric(ratio)."""
    samples = np.asarray(samples, dtype=np.int64)
    kmax = int(samples.max()) if samples.size else 0
    emp = np.bincount(samples, minlength=kmax + 1) / max(samples.size, 1)
    ref = geometric_pmf(ratio, kmax)
    tail = ratio ** (kmax + 1)
    return float(0.5 * (np.abs(emp - ref).sum() + tail))


def chi_square_geometric(samples, ratio: float, significance: float = CHI2_SIGNIFICANCE,
                         min_expected: float = 5.0) -> StatReport:
    """Pearson chi-square of occupancy counts against Geometric(ratio).

    Cells ``0..K-1`` plus a tail cell ``>= K``, with ``K`` the largest value
    whose cells all keep an expected count of at least ``min_expected``.
    """
    samples = np.asarray(samples, dtype=np.int64)
    n = samples.size
    mean = float(samples.mean()) if n else 0.0
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if ratio == 0.0:
        ok = bool((samples == 0).all())
        return StatReport("chi2-geometric", 0.0, 1.0 if ok else 0.0, mean, se, n, ok,
                          significance, {"cells": 1})
    # cell k has expected n r^k (1 - r); the tail >= K has n r^K
    K = 1
    while n * ratio ** (K + 1) >= min_expected and n * ratio**K * (1 - ratio) >= min_expected:
        K += 1
    expected = np.empty(K + 1)
    expected[:K] = n * geometric_pmf(ratio, K - 1)
    expected[K] = n * ratio**K
    observed = np.bincount(np.minimum(samples, K), minlength=K + 1).astype(float)
    if K + 1 < 2:
        raise TooFewSamples("not enough samples for a chi-square test")
    stat, p = stats.chisquare(observed, expected)
    return StatReport("chi2-geometric", float(stat), float(p), mean, se, n,
                      bool(p > significance), significance, {"cells": K + 1})


# -- Burke ---------------------------------------------------------------------

def burke_test(departures, v: float, window_start: float = 0.0, t_end: float | None = None,
               significance: float = KS_SIGNIFICANCE, min_samples: int = 100) -> StatReport:
    """KS test of post-burn-in inter-departure times against Exponential(v)."""
    d = np.asarray(departures, dtype=np.float64)
    d = d[d >= window_start]
    if d.size < min_samples:
        raise TooFewSamples(f"{d.size} departures after burn-in, need {min_samples}")
    gaps = np.diff(d)
    res = stats.kstest(gaps, "expon", args=(0.0, 1.0 / v))
    end = float(d[-1]) if t_end is None else float(t_end)
    duration = end - window_start
    rate = d.size / duration
    return StatReport(
        "burke-ks",
        float(res.statistic),
        float(res.pvalue),
        rate,
        math.sqrt(d.size) / duration,
        int(gaps.size),
        bool(res.pvalue > significance),
        significance,
        {"v": v, "mean_gap": float(gaps.mean()), "window_start": window_start},
    )


# -- stationarity ----------------------------------------------------------------

def _stationarity_replica(args):
    env, v, t, rseed, init = args
    if init is None:
        init = sample_configuration(ProductGeometric(env, v), rseed)
    boundary = BoundarySpec.segment(v) if v > 0 else BoundarySpec.segment(None)
    res = simulate(env, init, boundary, t_max=t, seed=rseed, snapshot_times=[t])
    return res.snapshots[-1][1].occ, res.departures


def stationarity_test(env: Environment, v: float, t: float, replicas: int, seed: int,
                      init: Configuration | None = None,
                      significance: float = CHI2_SIGNIFICANCE,
                      mapper=map) -> list[StatReport]:
    """Per-site chi-square of occupancies at time ``t`` against Geometric(v / p_x).

    Replicas run an inject(v)/absorb segment started from the product measure
    (or from ``init`` when given).
    """
    if v < 0 or v >= env.min_rate:
        raise FugacityTooHigh(f"fugacity {v} must lie in [0, {env.min_rate})")
    args = [(env, v, t, s, init) for s in replica_seeds(seed, replicas)]
    occ = np.stack([o for o, _ in mapper(_stationarity_replica, args)])
    reports = []
    for i, x in enumerate(env.sites):
        r = chi_square_geometric(occ[:, i], v / env.rates[i], significance)
        r.details["site"] = int(x)
        r.details["histogram"] = (np.bincount(occ[:, i]) / replicas).tolist()
        reports.append(r)
    return reports


def stationarity_departures(env: Environment, v: float, t: float, seed: int) -> np.ndarray:
    """Departure times of one stationary inject(v)/absorb run (for Burke checks)."""
    rseed = replica_seeds(seed, 1)[0]
    return _stationarity_replica((env, v, t, rseed, None))[1]


def _departures_replica(args):
    env, v, t, rseed = args
    return _stationarity_replica((env, v, t, rseed, None))[1]


def burke_experiment(env: Environment, v: float, t: float, replicas: int, seed: int,
                     window_start: float | None = None, significance: float = KS_SIGNIFICANCE,
                     rate_tolerance: float = 0.02, min_pass_fraction: float = 0.95,
                     mapper=map) -> StatReport:
    """Burke checks over independent stationary inject(v)/absorb runs.

    Each replica gets its own KS test; the departure rate is pooled over all
    replicas. Passes when at least ``min_pass_fraction`` of the KS tests pass
    and the pooled rate is within ``rate_tolerance`` (relative) of ``v``.
    """
    if not 0 < v < env.min_rate:
        raise FugacityTooHigh(f"fugacity {v} must lie in (0, {env.min_rate})")
    if window_start is None:
        window_start = default_burn_in(env)
    args = [(env, v, t, s) for s in replica_seeds(seed, replicas)]
    runs = list(mapper(_departures_replica, args))
    reports = [burke_test(d, v, window_start, t, significance) for d in runs]
    count = sum(int(np.count_nonzero(d >= window_start)) for d in runs)
    exposure = replicas * (t - window_start)
    rate = count / exposure
    pass_fraction = sum(r.passed for r in reports) / replicas
    rate_ok = abs(rate - v) < rate_tolerance * v
    return StatReport(
        "burke",
        pass_fraction,
        None,
        rate,
        math.sqrt(count) / exposure,
        replicas,
        bool(pass_fraction >= min_pass_fraction and rate_ok),
        min_pass_fraction,
        {"v": v, "t": t, "window_start": window_start, "rate_ok": bool(rate_ok),
         "rate_tolerance": rate_tolerance, "p_values": [r.p_value for r in reports],
         "departures": [d.tolist() for d in runs]},
    )


def stationarity_verdict(reports: list[StatReport], min_fraction: float = 0.9) -> StatReport:
    """Summary over per-site chi-square reports: pass if enough sites pass."""
    passed = sum(r.passed for r in reports)
    frac = passed / len(reports)
    return StatReport("stationarity", frac, None, frac, 0.0, len(reports),
                      bool(frac >= min_fraction), min_fraction,
                      {"sites": [r.details["site"] for r in reports],
                       "p_values": [r.p_value for r in reports]})


# -- second-class speed ----------------------------------------------------------

def _speed_replica(args):
    env, v, start, t, rseed = args
    base = sample_configuration(ProductGeometric(env, v), rseed)
    boundary = BoundarySpec.segment(v) if v > 0 else BoundarySpec.segment(None)
    path = track_second_class(env, base, start, boundary, t, rseed)
    return path.displacement, path.exited


def speed_window(t: float, speed: float, slack: float = 3.0) -> int:
    """Window length that keeps right exits of a tag rare over time ``t``."""
    return int(math.ceil(speed * t + slack * t ** (2.0 / 3.0) + 20))


def speed_experiment(env: Environment, v: float, start: int, t: float, replicas: int,
                     seed: int, tolerance: float = 0.02, confidence: float = 0.99,
                     max_exit_fraction: float = 0.01, mapper=map) -> StatReport:
    """Mean displacement per unit time of a second-class particle under the
    product measure at fugacity ``v`` (inject(v) on the left keeps it exact).

    Homogeneous environments pass when the estimate is within ``tolerance``
    of the predicted velocity; otherwise the check is one-sided positivity at
    the given confidence.
    """
    if v < 0 or v >= env.min_rate:
        raise FugacityTooHigh(f"fugacity {v} must lie in [0, {env.min_rate})")
    args = [(env, v, start, t, s) for s in replica_seeds(seed, replicas)]
    outcomes = list(mapper(_speed_replica, args))
    disp = np.array([d for d, _ in outcomes], dtype=np.float64)
    exits = int(sum(e for _, e in outcomes))
    if exits > max_exit_fraction * replicas:
        raise ExcessiveExits(f"{exits} of {replicas} tags left the window")
    speeds = disp / t
    est = float(speeds.mean())
    se = float(speeds.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    predicted = second_class_velocity(env, v)
    homogeneous = bool(np.all(env.rates == env.rates[0]))
    z = float(stats.norm.ppf(confidence))
    if homogeneous:
        passed = abs(est - predicted) < tolerance
        stat = est - predicted
        p_value = None
    else:
        passed = est - z * se > 0
        stat = est / se if se > 0 else math.inf
        p_value = float(stats.norm.sf(stat)) if se > 0 else 0.0
    return StatReport(
        "second-class-speed", float(stat), p_value, est, se, replicas, bool(passed),
        tolerance if homogeneous else confidence,
        {"predicted": predicted, "homogeneous": homogeneous, "exits": exits,
         "t": t, "displacements": disp.astype(np.int64).tolist()},
    )


# -- sandwich ----------------------------------------------------------------------

def _sandwich_replica(args):
    env, u, w, start, t, rseed = args
    eta, xi = sample_ordered_pair(env, u, w, rseed)
    # one shared injection clock cannot feed two fugacities, so the left end
    # is closed; callers leave a margin so the depletion front stays behind
    paths = sandwich_run(env, eta, xi, start, BoundarySpec.segment(None), t, rseed)
    return (paths.upper.displacement, paths.middle.displacement, paths.lower.displacement,
            paths.upper.exited or paths.middle.exited or paths.lower.exited)


def sandwich_experiment(env: Environment, u: float, w: float, start: int, t: float,
                        replicas: int, seed: int, mapper=map) -> dict:
    """Speeds of the three ordered tags; the middle one targets
    ``(w - u) / (R(w) - R(u))``."""
    if not 0 <= u < w < env.min_rate:
        raise FugacityTooHigh("need 0 <= u < w < min rate")
    args = [(env, u, w, start, t, s) for s in replica_seeds(seed, replicas)]
    rows = np.array([r for r in mapper(_sandwich_replica, args)], dtype=np.float64)
    speeds = rows[:, :3] / t
    mean = speeds.mean(axis=0)
    se = speeds.std(axis=0, ddof=1) / math.sqrt(replicas)
    ordered = bool(np.all(rows[:, 2] <= rows[:, 1]) and np.all(rows[:, 1] <= rows[:, 0]))
    chord = (w - u) / (expected_density(env, w) - expected_density(env, u))
    return {
        "upper": float(mean[0]), "middle": float(mean[1]), "lower": float(mean[2]),
        "se": se.tolist(),
        "chord_speed": chord,
        "upper_predicted": second_class_velocity(env, u),
        "lower_predicted": second_class_velocity(env, w),
        "pathwise_ordered": ordered,
        "exits": int(rows[:, 3].sum()),
        "within_bounds": bool(mean[2] - 3 * se[2] <= mean[1] <= mean[0] + 3 * se[0]),
    }


# -- convergence to the maximal measure ----------------------------------------------

@dataclass
class ConvergenceReport:
    times: list
    probe_sites: list
    c_hat: float
    reference_ratios: list
    empirical_marginals: dict
    distances: np.ndarray
    mean_distance: np.ndarray
    currents: np.ndarray
    plateau: np.ndarray
    trapped_mass_profile: list
    trapped_fraction: np.ndarray
    total_mass: np.ndarray
    probe_means: np.ndarray
    probe_se: np.ndarray
    spearman_rho: float
    spearman_p: float
    replicas: int
    note: str = (
        "finite-window surrogate: reference marginals use the minimum window rate and "
        "are compared during the plateau of the bond current into the probe block"
    )

    def __post_init__(self):
        d = np.asarray(self.distances)
        if d.size and (d.min() < -1e-12 or d.max() > 1 + 1e-12):
            raise ValueError("total-variation distances must lie in [0, 1]")

    @property
    def plateau_times(self) -> list:
        return [t for t, p in zip(self.times, self.plateau) if p]

    @property
    def last_plateau(self) -> int | None:
        """Grid index of the latest plateau time (closest to the long-time limit)."""
        idx = np.flatnonzero(self.plateau)
        return int(idx[-1]) if idx.size else None

    def domination_ok(self, n_se: float = 3.0) -> np.ndarray:
        """Per (plateau time, probe site): mean <= c/(p - c) + n_se * SE."""
        bound = np.array([r / (1 - r) for r in self.reference_ratios])
        ok = self.probe_means <= bound[None, :] + n_se * self.probe_se
        return ok[np.asarray(self.plateau, dtype=bool)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["empirical_marginals"] = {
            f"{t}:{x}": v for (t, x), v in self.empirical_marginals.items()
        }
        d["plateau_times"] = self.plateau_times
        return _jsonable(d)


def _convergence_replica(args):
    env, init, times, rseed = args
    res = simulate(env, init, BoundarySpec.segment(None), t_max=times[-1], seed=rseed,
                   snapshot_times=times)
    occ = np.stack([c.occ for _, c in res.snapshots])
    return occ, res.snapshot_bonds


def convergence_experiment(env: Environment, rho0: float, t_grid, probe: int, replicas: int,
                           seed: int, init: Configuration | None = None,
                           plateau_tolerance: float = PLATEAU_TOLERANCE,
                           trapped_quantile: float = 0.1, mapper=map) -> ConvergenceReport:
    """Supercritical start on a closed-left/absorbing-right segment.

    Tracks, at each grid time, the occupancy laws of the rightmost ``probe``
    sites against Geometric(c_hat / p_x) with ``c_hat`` the minimum window
    rate, the bond current entering the probe block, and how the remaining
    mass spreads over sites ranked by rate.
    """
    crit = critical_density(env)
    if is_infinite(crit):
        raise InfiniteCritical("critical density of the environment is infinite")
    if rho0 <= crit:
        raise SubcriticalStart(f"start density {rho0} <= critical density {crit}")
    if not 0 < probe < env.size:
        raise WindowTooSmall(f"probe block of {probe} sites needs a larger window")
    times = np.asarray(sorted(t_grid), dtype=np.float64)
    if times.size < 2 or times[0] <= 0:
        raise ZRPError("t_grid needs at least two positive times")
    c_hat = env.min_rate
    if int(np.argmin(env.rates)) >= env.size - probe:
        raise BottleneckInProbe("the slowest site lies inside the probe block")
    if init is None:
        init = Configuration.constant(env.x_lo, env.size, int(round(rho0)))

    args = [(env, init, times, s) for s in replica_seeds(seed, replicas)]
    occ_sum = np.zeros((times.size, env.size))
    probe_occ = np.empty((replicas, times.size, probe), dtype=np.int64)
    bond_in = np.empty((replicas, times.size), dtype=np.int64)
    in_bond = env.size - probe  # bond index entering the first probe site
    for r, (occ, bonds) in enumerate(mapper(_convergence_replica, args)):
        occ_sum += occ
        probe_occ[r] = occ[:, -probe:]
        bond_in[r] = bonds[:, in_bond]

    ratios = c_hat / env.rates[-probe:]
    probe_sites = env.sites[-probe:].tolist()
    distances = np.empty((times.size, probe))
    marginals = {}
    for ti, t in enumerate(times):
        for j in range(probe):
            s = probe_occ[:, ti, j]
            distances[ti, j] = total_variation(s, ratios[j])
            marginals[(float(t), probe_sites[j])] = np.bincount(s) / replicas
    mean_tv = distances.mean(axis=1)

    flux = bond_in.mean(axis=0)
    dt = np.diff(np.concatenate([[0.0], times]))
    currents = np.diff(np.concatenate([[0.0], flux])) / dt
    plateau = np.abs(currents - c_hat) <= plateau_tolerance * c_hat

    mean_occ = occ_sum / replicas
    total_mass = mean_occ.sum(axis=1)
    order = np.argsort(env.rates, kind="stable")
    n_slow = max(1, int(round(trapped_quantile * env.size)))
    with np.errstate(invalid="ignore", divide="ignore"):
        trapped = mean_occ[:, order[:n_slow]].sum(axis=1) / total_mass
    # evaluated at the latest plateau time; without a plateau, at the end
    last = int(np.flatnonzero(plateau)[-1]) if plateau.any() else times.size - 1
    profile_mass = mean_occ[last, order]
    profile = (profile_mass / profile_mass.sum()).tolist() if profile_mass.sum() > 0 else []

    probe_means = probe_occ.mean(axis=0)
    probe_se = probe_occ.std(axis=0, ddof=1) / math.sqrt(replicas)

    upto = last + 1
    if upto >= 3:
        rho, p = stats.spearmanr(times[:upto], mean_tv[:upto])
    else:
        rho, p = math.nan, math.nan

    return ConvergenceReport(
        times=times.tolist(),
        probe_sites=probe_sites,
        c_hat=c_hat,
        reference_ratios=ratios.tolist(),
        empirical_marginals=marginals,
        distances=distances,
        mean_distance=mean_tv,
        currents=currents,
        plateau=plateau,
        trapped_mass_profile=profile,
        trapped_fraction=trapped,
        total_mass=total_mass,
        probe_means=probe_means,
        probe_se=probe_se,
        spearman_rho=float(rho),
        spearman_p=float(p),
        replicas=replicas,
    )


def convergence_verdict(report: ConvergenceReport, tv_threshold: float = TV_THRESHOLD,
                        trapped_threshold: float = TRAPPED_THRESHOLD,
                        trend_significance: float = TREND_SIGNIFICANCE) -> StatReport:
    """Pass/fail of a convergence run, judged at the last plateau time.

    Needs a plateau, mean probe TV below ``tv_threshold``, a decreasing
    Spearman trend of the TV up to that time, and at least
    ``trapped_threshold`` of the remaining mass at the slowest sites.
    """
    i = report.last_plateau
    if i is None:
        return StatReport("convergence", math.nan, None, math.nan, 0.0, report.replicas, False,
                          tv_threshold, {"plateau": False})
    tv = float(report.mean_distance[i])
    trapped = float(report.trapped_fraction[i])
    p = report.spearman_p
    checks = {
        "plateau": True,
        "tv_below_threshold": tv < tv_threshold,
        "tv_decreasing": bool(report.spearman_rho < 0 and p < trend_significance),
        "mass_trapped": trapped >= trapped_threshold,
    }
    return StatReport(
        "convergence",
        tv,
        None if math.isnan(p) else float(p),
        trapped,
        0.0,
        report.replicas,
        all(checks.values()),
        tv_threshold,
        {**checks, "time": report.times[i], "spearman_rho": report.spearman_rho,
         "trapped_threshold": trapped_threshold, "trend_significance": trend_significance,
         "plateau_times": report.plateau_times},
    )


# -- domination ----------------------------------------------------------------------

def _domination_replica(args):
    env, init, boundary, times, rseed = args
    res = simulate(env, init, boundary, t_max=times[-1], seed=rseed, snapshot_times=times)
    return np.stack([c.occ for _, c in res.snapshots])


def domination_check(env: Environment, init: Configuration, times, replicas: int, seed: int,
                     boundary: BoundarySpec = BoundarySpec(), probe: int | None = None,
                     n_se: float = 3.0, mapper=map) -> StatReport:
    """Per-site occupancy means after burn-in against ``c_hat / (p_x - c_hat)``.

    ``times`` are the post-burn-in observation times; the per-site mean pools
    replicas and times, and its standard error is taken across replicas (the
    time-average of each replica is one sample). Sites whose rate equals
    ``c_hat`` have an infinite bound and always pass.
    """
    times = np.asarray(sorted(times), dtype=np.float64)
    if probe is not None:
        if not 0 < probe < env.size:
            raise WindowTooSmall(f"probe block of {probe} sites needs a larger window")
        # upstream of the bottleneck, slow sites queue at inflow rates above c_hat
        if int(np.argmin(env.rates)) >= env.size - probe:
            raise BottleneckInProbe("the slowest site lies inside the probe block")
    args = [(env, init, boundary, times, s) for s in replica_seeds(seed, replicas)]
    per_rep = np.stack([occ.mean(axis=0) for occ in mapper(_domination_replica, args)])
    sites = np.arange(env.size) if probe is None else np.arange(env.size - probe, env.size)
    c_hat = env.min_rate
    means = per_rep[:, sites].mean(axis=0)
    se = per_rep[:, sites].std(axis=0, ddof=1) / math.sqrt(replicas)
    gaps = env.rates[sites] - c_hat
    with np.errstate(divide="ignore"):
        bound = np.where(gaps > 0, c_hat / np.where(gaps > 0, gaps, 1.0), np.inf)
    ok = means <= bound + n_se * se
    excess = means - bound
    return StatReport(
        "domination",
        float(np.max(excess / np.where(se > 0, se, 1.0))),
        None,
        float(means.mean()),
        float(se.mean()),
        replicas,
        bool(ok.all()),
        n_se,
        {"sites": (env.x_lo + sites).tolist(), "means": means, "se": se,
         "bound": bound, "ok": ok, "c_hat": c_hat, "times": times},
    )
