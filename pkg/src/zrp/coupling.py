"""Basic (shared-clock) coupling and second-class particles.

Two configurations driven by the same attempt clocks and the same thinning
uniforms. Discrepancies are kept as per-site counts of ``(eta - xi)^+`` and
``(eta - xi)^-``; coalescence of opposite discrepancies happens implicitly in
the occupancy arithmetic.

A second-class particle relative to ``eta`` is a *virtual* tag: it jumps
from its site exactly when ``eta`` would not move there but ``eta`` plus one
particle would. It never feeds back on ``eta``, so several tags (or a tag and
the coupled pair ``(eta, eta + 1_z)``) share a single run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .configuration import Configuration
from .dynamics import (
    INDICATOR,
    BoundarySpec,
    RateFunctionSpec,
    SimResult,
    build_result,
    run_kernel,
    validate_run,
)
from .environment import Environment
from .errors import SiteOutOfWindow, WindowMismatch, ZRPError

TAG_SECOND_CLASS = 0
TAG_DIFFERENCE = 1


@dataclass(frozen=True)
class CoupledConfiguration:
    eta: Configuration
    xi: Configuration

    def __post_init__(self):
        if self.eta.window != self.xi.window:
            raise WindowMismatch("coupled configurations need identical windows")

    @property
    def ordered(self) -> bool:
        return self.eta <= self.xi


@dataclass(frozen=True)
class DiscrepancyProfile:
    """Sparse maps site -> count of ``(eta - xi)^+`` and ``(eta - xi)^-``."""

    eta_over_xi: dict = field(default_factory=dict)
    xi_over_eta: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.eta_over_xi.values()) + sum(self.xi_over_eta.values())

    def sites(self) -> list[int]:
        return sorted(set(self.eta_over_xi) | set(self.xi_over_eta))


def discrepancy_profile(pair: CoupledConfiguration) -> DiscrepancyProfile:
    diff = pair.eta.occ - pair.xi.occ
    x_lo = pair.eta.x_lo
    pos = {x_lo + int(i): int(diff[i]) for i in np.flatnonzero(diff > 0)}
    neg = {x_lo + int(i): int(-diff[i]) for i in np.flatnonzero(diff < 0)}
    return DiscrepancyProfile(pos, neg)


@dataclass(frozen=True, eq=False)
class CoupledResult:
    eta: SimResult
    xi: SimResult
    profiles: list
    # rows (time, total (eta-xi)^+, total (eta-xi)^-), starting at time 0
    discrepancy_log: np.ndarray

    def discrepancy_totals(self) -> np.ndarray:
        return self.discrepancy_log[:, 1] + self.discrepancy_log[:, 2]


def simulate_coupled(env: Environment, pair: CoupledConfiguration,
                     boundary: BoundarySpec = BoundarySpec(), t_max: float = 1.0,
                     seed: int = 0, snapshot_times=(), g: RateFunctionSpec = INDICATOR,
                     backend: str | None = None) -> CoupledResult:
    snaps = validate_run(env, [pair.eta, pair.xi], t_max, snapshot_times)
    out = run_kernel(env, [pair.eta, pair.xi], boundary, g, t_max, seed, snaps,
                     record_disc=True, backend=backend)
    eta = build_result(env, pair.eta, out, 0, boundary, t_max, snaps)
    xi = build_result(env, pair.xi, out, 1, boundary, t_max, snaps)
    profiles = [
        (t, discrepancy_profile(CoupledConfiguration(ce, cx)))
        for (t, ce), (_, cx) in zip(eta.snapshots, xi.snapshots)
    ]
    start = discrepancy_profile(pair)
    log = [(0.0, sum(start.eta_over_xi.values()), sum(start.xi_over_eta.values()))]
    log.extend(out["disc_log"])
    return CoupledResult(eta, xi, profiles, np.array(log, dtype=np.float64).reshape(-1, 3))


@dataclass(frozen=True, eq=False)
class TaggedPath:
    """Trajectory of a tagged particle; jump times and the sites reached.

    ``exit_time`` is set when the tag left through the right boundary; its
    position then stays frozen at the last window site.
    """

    start: int
    times: np.ndarray
    positions: np.ndarray
    t_end: float
    exit_time: float | None = None
    window_size: int | None = None
    x_lo: int = 0
    ring: bool = False

    @property
    def exited(self) -> bool:
        return self.exit_time is not None

    @property
    def path(self) -> list[tuple[float, int]]:
        return [(0.0, self.start)] + [(float(t), int(x)) for t, x in zip(self.times, self.positions)]

    @property
    def final(self) -> int:
        """Final (unwrapped, on a ring) position."""
        return int(self.positions[-1]) if len(self.positions) else self.start

    @property
    def displacement(self) -> int:
        return self.final - self.start

    def position_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right"))
        return int(self.positions[i - 1]) if i else self.start

    def site_at(self, t: float) -> int:
        """Lattice site at time ``t`` (wrapped back into the window on a ring)."""
        x = self.position_at(t)
        if self.ring:
            return self.x_lo + (x - self.x_lo) % self.window_size
        return x


def _paths(env, out, starts, t_max, ring) -> list[TaggedPath]:
    paths = []
    for ti, z in enumerate(starts):
        raw = out["tag_paths"][ti]
        times = np.array([t for t, _ in raw], dtype=np.float64)
        positions = np.array([p for _, p in raw], dtype=np.int64) + env.x_lo
        exit_time = out["tag_exit"][ti]
        paths.append(TaggedPath(
            start=z,
            times=times,
            positions=positions,
            t_end=float(t_max),
            exit_time=None if math.isnan(exit_time) else float(exit_time),
            window_size=env.size,
            x_lo=env.x_lo,
            ring=ring,
        ))
    return paths


def track_second_classes(env: Environment, base: Configuration, sites,
                         boundary: BoundarySpec = BoundarySpec(), t_max: float = 1.0,
                         seed: int = 0, g: RateFunctionSpec = INDICATOR,
                         backend: str | None = None) -> list[TaggedPath]:
    """Second-class particles started at each of ``sites`` over the same ``base`` run."""
    validate_run(env, [base], t_max, ())
    sites = [int(z) for z in sites]
    for z in sites:
        if not env.x_lo <= z <= env.x_hi:
            raise SiteOutOfWindow(f"site {z} outside window [{env.x_lo}, {env.x_hi}]")
    tags = np.array([[TAG_SECOND_CLASS, 0, z - env.x_lo, 0] for z in sites], dtype=np.int64)
    out = run_kernel(env, [base], boundary, g, t_max, seed, np.zeros(0), tags=tags,
                     backend=backend)
    return _paths(env, out, sites, t_max, boundary.topology == "ring")


def track_second_class(env: Environment, base: Configuration, z: int,
                       boundary: BoundarySpec = BoundarySpec(), t_max: float = 1.0,
                       seed: int = 0, g: RateFunctionSpec = INDICATOR,
                       backend: str | None = None) -> TaggedPath:
    """Path of the single discrepancy of the coupled pair ``(base, base + 1_z)``."""
    return track_second_classes(env, base, [z], boundary, t_max, seed, g, backend)[0]


@dataclass(frozen=True, eq=False)
class SandwichPaths:
    """Second-class particle of ``eta`` (fast), labeled difference particle,
    and second-class particle of ``xi`` (slow), all started at one site."""

    upper: TaggedPath
    middle: TaggedPath
    lower: TaggedPath


def sandwich_run(env: Environment, eta: Configuration, xi: Configuration, z: int,
                 boundary: BoundarySpec = BoundarySpec(), t_max: float = 1.0,
                 seed: int = 0, backend: str | None = None) -> SandwichPaths:
    """Three-way shared-clock run behind the ordering ``X^w <= Y <= X^u``.

    ``eta <= xi`` is required. If ``xi - eta`` has no particle at ``z`` one is
    added to ``xi`` there; the middle tag is the lowest-labeled difference
    particle at ``z`` and yields to higher labels sharing its site.
    """
    pair = CoupledConfiguration(eta, xi)
    if not pair.ordered:
        raise ZRPError("sandwich run needs eta <= xi")
    if not env.x_lo <= z <= env.x_hi:
        raise SiteOutOfWindow(f"site {z} outside window [{env.x_lo}, {env.x_hi}]")
    validate_run(env, [eta, xi], t_max, ())
    if xi[z] == eta[z]:
        xi = xi.add_particle(z)
    i = z - env.x_lo
    higher = xi[z] - eta[z] - 1
    tags = np.array([
        [TAG_SECOND_CLASS, 0, i, 0],
        [TAG_DIFFERENCE, 0, i, higher],
        [TAG_SECOND_CLASS, 1, i, 0],
    ], dtype=np.int64)
    out = run_kernel(env, [eta, xi], boundary, INDICATOR, t_max, seed, np.zeros(0),
                     tags=tags, backend=backend)
    upper, middle, lower = _paths(env, out, [z, z, z], t_max, boundary.topology == "ring")
    return SandwichPaths(upper, middle, lower)
