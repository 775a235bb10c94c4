"""Particle configurations on a finite window of sites."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import OccupancyOverflow, WindowMismatch


@dataclass(frozen=True)
class Configuration:
    """Non-negative occupancies ``occ[x - x_lo]`` for ``x`` in the window."""

    x_lo: int
    occ: np.ndarray

    def __post_init__(self):
        occ = np.array(self.occ, dtype=np.int64)
        if occ.ndim != 1 or occ.size == 0:
            raise WindowMismatch("configuration needs a non-empty 1-d occupancy array")
        if (occ < 0).any():
            raise ValueError("occupancies must be non-negative")
        occ.setflags(write=False)
        object.__setattr__(self, "occ", occ)

    @classmethod
    def empty(cls, x_lo: int, size: int) -> "Configuration":
        return cls(x_lo, np.zeros(size, dtype=np.int64))

    @classmethod
    def constant(cls, x_lo: int, size: int, value: int) -> "Configuration":
        return cls(x_lo, np.full(size, value, dtype=np.int64))

    @property
    def x_hi(self) -> int:
        return self.x_lo + len(self.occ) - 1

    @property
    def size(self) -> int:
        return len(self.occ)

    @property
    def window(self) -> tuple[int, int]:
        return self.x_lo, self.x_hi

    @property
    def total(self) -> int:
        return int(self.occ.sum())

    def __getitem__(self, x: int) -> int:
        if not self.x_lo <= x <= self.x_hi:
            raise KeyError(x)
        return int(self.occ[x - self.x_lo])

    def add_particle(self, x: int, count: int = 1) -> "Configuration":
        """Return the configuration with ``count`` extra particles at ``x``."""
        if not self.x_lo <= x <= self.x_hi:
            raise KeyError(x)
        occ = self.occ.copy()
        occ[x - self.x_lo] += count
        return Configuration(self.x_lo, occ)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.x_lo == other.x_lo and np.array_equal(self.occ, other.occ)

    def __le__(self, other: "Configuration") -> bool:
        if self.window != other.window:
            raise WindowMismatch("cannot compare configurations on different windows")
        return bool((self.occ <= other.occ).all())

    __hash__ = None

    def to_dict(self) -> dict:
        return {"x_lo": self.x_lo, "occ": self.occ.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Configuration":
        return cls(int(d["x_lo"]), d["occ"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site", "occupancy"])
        for i, k in enumerate(self.occ):
            w.writerow([self.x_lo + i, int(k)])
        return buf.getvalue()


def check_occupancy(occ: np.ndarray) -> None:
    # int64 counters; desk-scale runs never get near this
    if occ.size and int(occ.max()) >= (1 << 62):
        raise OccupancyOverflow("occupancy counter overflow")
