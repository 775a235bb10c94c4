"""Rate environments and their analytic functionals.

An :class:`Environment` is a finite window of service rates ``p_x`` together
with the declared rate floor ``c`` of the (unobserved) infinite environment.
The functionals below are window averages:

* ``expected_density(env, v)  = mean_x v / (p_x - v)``
* ``density_slope(env, v)     = mean_x p_x / (p_x - v)**2``
* ``second_class_velocity     = 1 / density_slope``
* ``critical_density(env)     = expected_density(env, floor_c)`` (or infinite)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import rng
from .errors import (
    DensityAboveCritical,
    FugacityTooHigh,
    RateOutOfRange,
    SpecMismatch,
)


class _Infinite:
    """Marker for a divergent critical density."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def is_infinite(value) -> bool:
    return value is INFINITE


@dataclass(frozen=True)
class Environment:
    x_lo: int
    rates: np.ndarray
    floor_c: float

    def __post_init__(self):
        rates = np.array(self.rates, dtype=np.float64)
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def x_hi(self) -> int:
        return self.x_lo + len(self.rates) - 1

    @property
    def size(self) -> int:
        return len(self.rates)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.x_lo, self.x_hi + 1)

    @property
    def min_rate(self) -> float:
        return float(self.rates.min())

    def rate(self, x: int) -> float:
        if not self.x_lo <= x <= self.x_hi:
            raise KeyError(x)
        return float(self.rates[x - self.x_lo])

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (
            self.x_lo == other.x_lo
            and self.floor_c == other.floor_c
            and np.array_equal(self.rates, other.rates)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {"x_lo": self.x_lo, "floor_c": self.floor_c, "rates": self.rates.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        return build_env(d["rates"], d["floor_c"], d.get("x_lo", 0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Environment":
        return cls.from_dict(json.loads(text))


def build_env(rates, floor_c: float, x_lo: int = 0) -> Environment:
    """Validate rates against ``floor_c`` and build an environment."""
    rates = np.asarray(rates, dtype=np.float64)
    if rates.ndim != 1 or rates.size == 0:
        raise RateOutOfRange("rates must be a non-empty list")
    floor_c = float(floor_c)
    if not 0.0 < floor_c <= 1.0:
        raise RateOutOfRange(f"floor_c={floor_c} outside (0, 1]")
    bad = (rates < floor_c) | (rates > 1.0) | (rates <= 0.0) | ~np.isfinite(rates)
    if bad.any():
        i = int(np.argmax(bad))
        raise RateOutOfRange(
            f"rate {rates[i]} at site {x_lo + i} outside [{floor_c}, 1]"
        )
    return Environment(int(x_lo), rates, floor_c)


# -- environment specifications ----------------------------------------------

@dataclass(frozen=True)
class EnvSpec:
    """Deterministic rate list or an i.i.d. marginal on ``[floor_c, 1]``.

    ``kind`` is one of ``"deterministic"``, ``"uniform"``, ``"point"`` or
    ``"triangular"`` (density proportional to ``(p - c)**(alpha - 1)`` on
    ``[c, hi]``; ``alpha = 2`` gives the linear ramp ``8 (p - 0.5)`` for
    ``c = 0.5, hi = 1``).
    """

    kind: str
    floor_c: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = self.kind
        p = self.params
        c = self.floor_c
        if kind == "deterministic":
            build_env(p["rates"], c)
            return
        if kind == "uniform":
            lo, hi = p["lo"], p["hi"]
            if not (0 < lo < hi <= 1) or lo != c:
                raise RateOutOfRange(f"uniform({lo}, {hi}) needs 0 < lo = floor_c < hi <= 1")
        elif kind == "point":
            if not (0 < p["p"] <= 1) or p["p"] != c:
                raise RateOutOfRange("point(p) needs 0 < p = floor_c <= 1")
        elif kind == "triangular":
            hi, alpha = p["hi"], p["alpha"]
            if not (0 < c < hi <= 1) or alpha <= 0:
                raise RateOutOfRange("triangular needs 0 < floor_c < hi <= 1, alpha > 0")
        else:
            raise SpecMismatch(f"unknown environment kind {kind!r}")

    @property
    def is_iid(self) -> bool:
        return self.kind != "deterministic"

    @classmethod
    def deterministic(cls, rates, floor_c: float) -> "EnvSpec":
        return cls("deterministic", float(floor_c), {"rates": [float(r) for r in rates]})

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "EnvSpec":
        return cls("uniform", float(lo), {"lo": float(lo), "hi": float(hi)})

    @classmethod
    def point(cls, p: float) -> "EnvSpec":
        return cls("point", float(p), {"p": float(p)})

    @classmethod
    def triangular(cls, c: float, hi: float, alpha: float) -> "EnvSpec":
        return cls("triangular", float(c), {"hi": float(hi), "alpha": float(alpha)})

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        p = self.params
        if self.kind == "uniform":
            return p["lo"] + (p["hi"] - p["lo"]) * u
        if self.kind == "point":
            return np.full_like(u, p["p"])
        if self.kind == "triangular":
            c = self.floor_c
            return c + (p["hi"] - c) * u ** (1.0 / p["alpha"])
        raise SpecMismatch("deterministic spec has no inverse CDF")

    def pdf(self, x: float) -> float:
        p = self.params
        if self.kind == "uniform":
            return 1.0 / (p["hi"] - p["lo"]) if p["lo"] <= x <= p["hi"] else 0.0
        if self.kind == "triangular":
            c, hi, a = self.floor_c, p["hi"], p["alpha"]
            if not c <= x <= hi:
                return 0.0
            return a * (x - c) ** (a - 1) / (hi - c) ** a
        raise SpecMismatch(f"{self.kind} spec has no density")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "floor_c": self.floor_c, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "EnvSpec":
        d = dict(d)
        kind = d.pop("kind")
        if kind == "deterministic":
            return cls.deterministic(d["rates"], d["floor_c"])
        if kind == "uniform":
            return cls.uniform(d["lo"], d["hi"])
        if kind == "point":
            return cls.point(d["p"])
        if kind == "triangular":
            return cls.triangular(d.get("floor_c", d.get("c")), d["hi"], d["alpha"])
        raise SpecMismatch(f"unknown environment kind {kind!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EnvSpec":
        return cls.from_dict(json.loads(text))


def sample_iid_env(spec: EnvSpec, window: tuple[int, int], seed: int) -> Environment:
    """Draw one rate per site of ``window = (x_lo, x_hi)`` by inverse CDF.

    Site ``x`` uses its own counter-based stream, so the rate at ``x`` does
    not depend on the window extent.
    """
    if not spec.is_iid:
        raise SpecMismatch("sample_iid_env needs an i.i.d. spec")
    x_lo, x_hi = window
    if x_hi < x_lo:
        raise RateOutOfRange(f"empty window {window}")
    u = rng.site_uniforms(seed, rng.DOMAIN_ENV, np.arange(x_lo, x_hi + 1))
    rates = np.clip(spec.inverse_cdf(u), spec.floor_c, 1.0)
    return build_env(rates, spec.floor_c, x_lo)


# -- analytic functionals ---------------------------------------------------

def _check_fugacity(env: Environment, v: float) -> None:
    if v < 0:
        raise FugacityTooHigh(f"fugacity {v} is negative")
    if v >= env.min_rate:
        raise FugacityTooHigh(f"fugacity {v} >= min window rate {env.min_rate}")


def expected_density(env: Environment, v: float) -> float:
    _check_fugacity(env, v)
    return float(np.mean(v / (env.rates - v)))


def density_slope(env: Environment, v: float) -> float:
    """Exact derivative of :func:`expected_density` in ``v``."""
    _check_fugacity(env, v)
    return float(np.mean(env.rates / (env.rates - v) ** 2))


def second_class_velocity(env: Environment, v: float) -> float:
    return 1.0 / density_slope(env, v)


def critical_density(env: Environment):
    """Window average of ``c / (p_x - c)``; :data:`INFINITE` if some ``p_x = c``."""
    c = env.floor_c
    gaps = env.rates - c
    if (gaps <= 0).any():
        return INFINITE
    return float(np.mean(c / gaps))


def fugacity_for_density(env: Environment, rho: float, tol: float = 1e-10) -> float:
    """Invert :func:`expected_density` by bisection on ``[0, min rate)``."""
    if rho < 0 or not math.isfinite(rho):
        raise DensityAboveCritical(f"density {rho} must be finite and >= 0")
    if rho == 0:
        return 0.0
    crit = critical_density(env)
    if not is_infinite(crit) and rho >= crit:
        raise DensityAboveCritical(f"density {rho} >= critical density {crit}")
    pmin = env.min_rate
    lo, hi = 0.0, pmin
    target = tol * (1.0 + rho)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        r = float(np.mean(mid / (env.rates - mid)))
        if abs(r - rho) <= target:
            return mid
        if r < rho:
            lo = mid
        else:
            hi = mid


# -- i.i.d. (annealed) counterparts, by quadrature ---------------------------

def iid_expected_density(spec: EnvSpec, v: float) -> float:
    """``E[v / (p - v)]`` under the spec's marginal (requires ``v < floor_c``)."""
    return _iid_integral(spec, lambda p: v / (p - v), v)


def iid_critical_density(spec: EnvSpec) -> float:
    """``E[c / (p - c)]``; may be ``inf`` (returned as :data:`INFINITE`)."""
    c = spec.floor_c
    if spec.kind == "point":
        return INFINITE
    if spec.kind == "triangular" and spec.params["alpha"] <= 1:
        return INFINITE
    if spec.kind == "uniform":
        return INFINITE
    return _iid_integral(spec, lambda p: c / (p - c), None)


def _iid_integral(spec: EnvSpec, fn, v) -> float:
    if spec.kind == "point":
        p = spec.params["p"]
        return fn(p)
    if spec.kind == "deterministic":
        raise SpecMismatch("quadrature needs an i.i.d. spec")
    if v is not None and v >= spec.floor_c:
        raise FugacityTooHigh(f"fugacity {v} >= floor {spec.floor_c}")
    lo = spec.floor_c
    hi = spec.params["hi"]
    value, _ = integrate.quad(lambda p: fn(p) * spec.pdf(p), lo, hi, limit=200)
    return float(value)
