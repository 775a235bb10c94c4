"""Counter-based random streams.

Every random number in the package is a pure function of
``(master seed, domain, stream id, draw index)``. A stream is identified by
a 64-bit key; draw ``n`` of the stream is ``mix64(key + (n + 1) * GAMMA)``
mapped to ``[0, 1)`` with 53 bits. This is SplitMix64 evaluated at an
explicit counter, so the compiled kernel and the Python fallback produce
bit-identical draws, and the stream of a site depends only on the seed and
the site coordinate (adding sites to a window never perturbs existing ones).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_STREAM_MULT = 0xD6E8FEB86659FD93
_DOMAIN_MULT = 0xA0761D6478BD642F
TWO_M53 = 1.0 / (1 << 53)

# Domains keep the samplers, the dynamics and the replica seeding apart.
DOMAIN_DYNAMICS = 1
DOMAIN_CONFIG = 2
DOMAIN_ENV = 3
DOMAIN_REPLICA = 4

# Stream id of the left injection clock; site streams use even ids.
INJECT_STREAM = 1


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def normalize_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed) & MASK64


def site_stream(x: int) -> int:
    """Stream id of lattice site ``x`` (zigzag-encoded, always even)."""
    z = 2 * x if x >= 0 else -2 * x - 1
    return 2 * z + 2


def stream_key(seed: int, domain: int, stream: int) -> int:
    base = mix64((normalize_seed(seed) + domain * _DOMAIN_MULT) & MASK64)
    return mix64(base ^ ((stream * _STREAM_MULT) & MASK64))


def uniform(key: int, n: int) -> float:
    """Draw ``n`` (0-based) of the stream with the given key, in [0, 1)."""
    return (mix64((key + (n + 1) * GAMMA) & MASK64) >> 11) * TWO_M53


def derive_seed(master: int, index: int) -> int:
    """Seed of replica ``index`` under ``master``."""
    return stream_key(master, DOMAIN_REPLICA, index)


# -- vectorized variants -------------------------------------------------------

def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


def site_keys(seed: int, domain: int, sites) -> np.ndarray:
    """Stream keys for an array of site coordinates, as uint64."""
    sites = np.asarray(sites, dtype=np.int64)
    zig = np.where(sites >= 0, 2 * sites, -2 * sites - 1).astype(np.uint64)
    streams = zig * np.uint64(2) + np.uint64(2)
    base = np.uint64(mix64((normalize_seed(seed) + domain * _DOMAIN_MULT) & MASK64))
    with np.errstate(over="ignore"):
        mixed = base ^ (streams * np.uint64(_STREAM_MULT))
    return _mix64_array(mixed)


def site_uniforms(seed: int, domain: int, sites, n: int = 0) -> np.ndarray:
    """Draw ``n`` of every site stream, vectorized; matches :func:`uniform`."""
    keys = site_keys(seed, domain, sites)
    with np.errstate(over="ignore"):
        z = keys + np.uint64(((n + 1) * GAMMA) & MASK64)
    return (_mix64_array(z) >> np.uint64(11)).astype(np.float64) * TWO_M53
