"""Product-geometric invariant measures and their samplers.

The site-``x`` marginal of the product measure with fugacity ``v`` is
geometric with ratio ``r = v / p_x``: ``P(k) = r**k (1 - r)``. Sampling uses
one uniform per site and the inverse CDF ``floor(log(U) / log(r))``, which
is monotone in ``r``; feeding the same uniform to two fugacities therefore
yields an ordered pair of configurations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .configuration import Configuration
from .environment import Environment
from .errors import FugacityTooHigh


@dataclass(frozen=True)
class ProductGeometric:
    env: Environment
    v: float

    def __post_init__(self):
        v = float(self.v)
        object.__setattr__(self, "v", v)
        if v < 0:
            raise FugacityTooHigh(f"fugacity {v} is negative")
        pmin = self.env.min_rate
        if v < pmin:
            return
        # closed range [0, c] only when every window rate exceeds the floor
        maximal = v == self.env.floor_c and pmin > self.env.floor_c
        if not maximal:
            raise FugacityTooHigh(f"fugacity {v} >= min window rate {pmin}")

    @property
    def ratios(self) -> np.ndarray:
        return self.v / self.env.rates

    def pmf(self, x: int, k: int) -> float:
        return marginal_pmf(self.env.rate(x), self.v, k)

    def means(self) -> np.ndarray:
        r = self.ratios
        return r / (1.0 - r)


def _check(p: float, v: float) -> None:
    if v < 0 or v >= p:
        raise FugacityTooHigh(f"need 0 <= v < p, got v={v}, p={p}")


def marginal_pmf(p: float, v: float, k: int) -> float:
    _check(p, v)
    if k < 0:
        return 0.0
    r = v / p
    return r**k * (1.0 - r)


def marginal_mean(p: float, v: float) -> float:
    _check(p, v)
    return v / (p - v)


def marginal_variance(p: float, v: float) -> float:
    _check(p, v)
    return v * p / (p - v) ** 2


def geometric_from_uniform(u: np.ndarray, ratios: np.ndarray) -> np.ndarray:
    """Inverse-CDF geometric draws; ``u`` in [0, 1), ratio 0 gives 0."""
    u = np.asarray(u, dtype=np.float64)
    ratios = np.broadcast_to(np.asarray(ratios, dtype=np.float64), u.shape)
    # 1 - u lies in (0, 1], so the log is finite
    log_u = np.log1p(-u)
    out = np.zeros(u.shape, dtype=np.int64)
    pos = ratios > 0
    with np.errstate(divide="ignore"):
        k = np.floor(log_u[pos] / np.log(ratios[pos]))
    out[pos] = k.astype(np.int64)
    return out


def _site_uniforms(env: Environment, seed: int) -> np.ndarray:
    return rng.site_uniforms(seed, rng.DOMAIN_CONFIG, env.sites)


def sample_configuration(measure: ProductGeometric, seed: int) -> Configuration:
    u = _site_uniforms(measure.env, seed)
    return Configuration(measure.env.x_lo, geometric_from_uniform(u, measure.ratios))


def sample_ordered_pair(env: Environment, u: float, w: float, seed: int):
    """Sample ``(eta, xi)`` with marginals at fugacities ``u <= w`` and ``eta <= xi``."""
    if not 0 <= u <= w:
        raise FugacityTooHigh(f"need 0 <= u <= w, got u={u}, w={w}")
    if w >= env.min_rate:
        raise FugacityTooHigh(f"fugacity {w} >= min window rate {env.min_rate}")
    unif = _site_uniforms(env, seed)
    eta = geometric_from_uniform(unif, u / env.rates)
    xi = geometric_from_uniform(unif, w / env.rates)
    return Configuration(env.x_lo, eta), Configuration(env.x_lo, xi)
