"""Continuous-time zero-range dynamics on a finite window.

Each site ``x`` carries an attempt clock of rate ``p_x * g_max``. When it
rings, the top particle at ``x`` moves to ``x + 1`` with probability
``g(occ(x)) / g_max`` (for the default indicator rate function: iff the
site is occupied). The left end may inject particles at rate ``a`` into the
leftmost site; the right end either absorbs departing particles or is
closed; a ring wraps ``x_hi -> x_lo``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel, rng
from .configuration import Configuration, check_occupancy
from .environment import Environment
from .errors import (
    InvalidSnapshotTimes,
    NoAbsorbingBoundary,
    UnknownBond,
    WindowMismatch,
    ZRPError,
)


@dataclass(frozen=True)
class BoundarySpec:
    """``left`` is ``"closed"`` or ``"inject"`` (with ``inject_rate``)."""

    left: str = "closed"
    right: str = "absorb"
    topology: str = "segment"
    inject_rate: float | None = None

    def __post_init__(self):
        if self.topology not in ("segment", "ring"):
            raise ZRPError(f"unknown topology {self.topology!r}")
        if self.left not in ("closed", "inject"):
            raise ZRPError(f"unknown left boundary {self.left!r}")
        if self.right not in ("absorb", "closed"):
            raise ZRPError(f"unknown right boundary {self.right!r}")
        if self.topology == "ring" and (self.left == "inject" or self.right == "absorb"):
            raise ZRPError("ring topology forbids inject/absorb boundaries")
        if self.left == "inject":
            a = self.inject_rate
            if a is None or not 0 < a <= 1:
                raise ZRPError(f"inject rate must lie in (0, 1], got {a}")
        elif self.inject_rate is not None:
            raise ZRPError("inject_rate given for a closed left boundary")

    @classmethod
    def segment(cls, inject: float | None = None, right: str = "absorb") -> "BoundarySpec":
        if inject is None:
            return cls("closed", right)
        return cls("inject", right, inject_rate=float(inject))

    @classmethod
    def ring(cls) -> "BoundarySpec":
        return cls("closed", "closed", "ring")

    @property
    def right_mode(self) -> int:
        if self.topology == "ring":
            return kernel.RIGHT_RING
        return kernel.RIGHT_ABSORB if self.right == "absorb" else kernel.RIGHT_CLOSED

    def to_dict(self) -> dict:
        d = {"left": self.left, "right": self.right, "topology": self.topology}
        if self.inject_rate is not None:
            d["inject_rate"] = self.inject_rate
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoundarySpec":
        return cls(
            d.get("left", "closed"),
            d.get("right", "absorb"),
            d.get("topology", "segment"),
            d.get("inject_rate"),
        )


@dataclass(frozen=True)
class RateFunctionSpec:
    """Jump-rate multiplier ``g``: the indicator ``1{k > 0}`` or a bounded table.

    For ``kind="bounded-monotone"``, ``table[k] = g(k)`` for ``k <= K_max`` and
    ``g(k) = table[-1]`` beyond; ``g_max`` caps the table.
    """

    kind: str = "indicator"
    table: tuple = ()
    g_max: float = 1.0

    def __post_init__(self):
        if self.kind == "indicator":
            return
        if self.kind != "bounded-monotone":
            raise ZRPError(f"unknown rate function kind {self.kind!r}")
        table = tuple(float(x) for x in self.table)
        object.__setattr__(self, "table", table)
        if len(table) < 2 or table[0] != 0.0:
            raise ZRPError("rate table needs g(0) = 0 and at least one more entry")
        if any(b < a for a, b in zip(table, table[1:])):
            raise ZRPError("rate table must be non-decreasing")
        if self.g_max <= 0 or table[-1] > self.g_max:
            raise ZRPError("rate table exceeds g_max")

    @property
    def clock_multiplier(self) -> float:
        return 1.0 if self.kind == "indicator" else float(self.g_max)

    @property
    def thresholds(self) -> np.ndarray:
        if self.kind == "indicator":
            return np.zeros(0, dtype=np.float64)
        return np.asarray(self.table, dtype=np.float64) / self.g_max

    def g(self, k: int) -> float:
        if self.kind == "indicator":
            return 1.0 if k > 0 else 0.0
        return self.table[min(k, len(self.table) - 1)]

    def to_dict(self) -> dict:
        if self.kind == "indicator":
            return {"kind": "indicator"}
        return {"kind": self.kind, "table": list(self.table), "g_max": self.g_max}

    @classmethod
    def from_dict(cls, d: dict) -> "RateFunctionSpec":
        if d.get("kind", "indicator") == "indicator":
            return cls()
        return cls(d["kind"], tuple(d["table"]), float(d.get("g_max", max(d["table"]))))


INDICATOR = RateFunctionSpec()


@dataclass(frozen=True, eq=False)
class SimResult:
    """Outcome of one run.

    ``bond_counts[i]`` counts jumps across bond ``x_lo - 1 + i`` (bond ``b``
    joins ``b`` and ``b + 1``); index 0 is the injection bond and the last
    index the exit (or ring wrap) bond.
    """

    final: Configuration
    t_end: float
    bond_counts: np.ndarray
    departures: np.ndarray
    injections: np.ndarray
    initial_total: int
    boundary: BoundarySpec
    snapshots: list = field(default_factory=list)
    snapshot_bonds: np.ndarray | None = None
    n_events: int = 0

    @property
    def x_lo(self) -> int:
        return self.final.x_lo

    def same_path(self, other: "SimResult") -> bool:
        """Bit-level equality of everything the run recorded."""
        return (
            self.final == other.final
            and self.t_end == other.t_end
            and np.array_equal(self.bond_counts, other.bond_counts)
            and np.array_equal(self.departures, other.departures)
            and np.array_equal(self.injections, other.injections)
            and len(self.snapshots) == len(other.snapshots)
            and all(t1 == t2 and c1 == c2 for (t1, c1), (t2, c2) in zip(self.snapshots, other.snapshots))
        )


def validate_run(env: Environment, inits, t_max: float, snapshot_times) -> np.ndarray:
    for init in inits:
        if init.window != (env.x_lo, env.x_hi):
            raise WindowMismatch(
                f"configuration window {init.window} != environment window {(env.x_lo, env.x_hi)}"
            )
    if not t_max > 0:
        raise ZRPError(f"t_max must be positive, got {t_max}")
    snaps = np.asarray(list(snapshot_times), dtype=np.float64)
    if snaps.size:
        if np.any(np.diff(snaps) < 0):
            raise InvalidSnapshotTimes("snapshot times must be sorted")
        if snaps[0] < 0 or snaps[-1] > t_max:
            raise InvalidSnapshotTimes("snapshot times must lie in [0, t_max]")
    return snaps


def run_kernel(env, occs, boundary, g, t_max, seed, snaps, tags=None,
               record_disc=False, backend=None) -> dict:
    """Low-level entry shared by the single and coupled simulators."""
    occ = np.ascontiguousarray(np.stack([c.occ for c in occs]), dtype=np.int64)
    keys = rng.site_keys(seed, rng.DOMAIN_DYNAMICS, env.sites)
    inject_key = rng.stream_key(seed, rng.DOMAIN_DYNAMICS, rng.INJECT_STREAM)
    clock_rates = np.ascontiguousarray(env.rates * g.clock_multiplier)
    inject_rate = float(boundary.inject_rate) if boundary.left == "inject" else 0.0
    if tags is None:
        tags = np.zeros((0, 4), dtype=np.int64)
    tags = np.ascontiguousarray(tags, dtype=np.int64).reshape(-1, 4)
    out = kernel.run(
        clock_rates,
        occ,
        np.ascontiguousarray(keys, dtype=np.uint64),
        inject_rate,
        inject_key,
        boundary.right_mode,
        np.ascontiguousarray(g.thresholds),
        float(t_max),
        np.ascontiguousarray(snaps, dtype=np.float64),
        tags,
        bool(record_disc),
        backend=backend,
    )
    check_occupancy(out["occ"])
    return out


def build_result(env, init, out, c, boundary, t_max, snaps) -> SimResult:
    x_lo = env.x_lo
    snapshots = [
        (float(t), Configuration(x_lo, out["snap_occ"][i, c])) for i, t in enumerate(snaps)
    ]
    return SimResult(
        final=Configuration(x_lo, out["occ"][c]),
        t_end=float(t_max),
        bond_counts=out["bonds"][c].copy(),
        departures=out["departures"][c],
        injections=out["injections"],
        initial_total=init.total,
        boundary=boundary,
        snapshots=snapshots,
        snapshot_bonds=out["snap_bonds"][:, c, :].copy(),
        n_events=int(out["n_events"]),
    )


def simulate(env: Environment, init: Configuration, boundary: BoundarySpec = BoundarySpec(),
             g: RateFunctionSpec = INDICATOR, t_max: float = 1.0, seed: int = 0,
             snapshot_times=(), backend: str | None = None) -> SimResult:
    """Run the process from ``init`` up to ``t_max``; deterministic in ``seed``.

    Clock ties (probability zero) are broken by site index, with the
    injection clock ordered before the leftmost site.
    """
    snaps = validate_run(env, [init], t_max, snapshot_times)
    out = run_kernel(env, [init], boundary, g, t_max, seed, snaps, backend=backend)
    return build_result(env, init, out, 0, boundary, t_max, snaps)


def bond_current(result: SimResult, bond: int) -> int:
    """Number of jumps across bond ``bond -> bond + 1`` during the run."""
    i = bond - result.x_lo + 1
    if not 0 <= i < len(result.bond_counts):
        raise UnknownBond(f"bond {bond} outside [{result.x_lo - 1}, {result.final.x_hi}]")
    if i == 0 and result.boundary.topology == "ring":
        raise UnknownBond("a ring has no injection bond; the wrap bond is x_hi")
    return int(result.bond_counts[i])


def departure_times(result: SimResult) -> np.ndarray:
    b = result.boundary
    if b.topology != "segment" or b.right != "absorb":
        raise NoAbsorbingBoundary("departures need a segment with an absorbing right end")
    return result.departures
