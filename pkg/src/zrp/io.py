"""JSON run/experiment descriptors and CSV/JSON artifact writers.

Schema problems raise :class:`ConfigError` carrying a JSON pointer to the
offending node, e.g. ``/boundary/inject_rate``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configuration import Configuration
from .dynamics import BoundarySpec, RateFunctionSpec
from .environment import EnvSpec, Environment, sample_iid_env
from .errors import ConfigError, ZRPError
from .measures import ProductGeometric, sample_configuration

_MISSING = object()


def load_json(path) -> dict:
    """Read a JSON object from ``path``. ``OSError`` propagates unchanged."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError("", f"{path}: top level must be a JSON object")
    return doc


def _ptr(base: str, key) -> str:
    token = str(key).replace("~", "~0").replace("/", "~1")
    return f"{base}/{token}"


def _field(node: dict, key: str, ptr: str, kind, default=_MISSING):
    """Fetch ``node[key]`` and check its type; ``kind`` is ``"number"``,
    ``"int"``, ``"str"``, ``"list"``, ``"dict"`` or ``"bool"``."""
    if key not in node:
        if default is _MISSING:
            raise ConfigError(_ptr(ptr, key), "required field missing")
        return default
    value = node[key]
    here = _ptr(ptr, key)
    ok = {
        "number": isinstance(value, (int, float)) and not isinstance(value, bool),
        "int": isinstance(value, int) and not isinstance(value, bool),
        "str": isinstance(value, str),
        "list": isinstance(value, list),
        "dict": isinstance(value, dict),
        "bool": isinstance(value, bool),
    }[kind]
    if not ok:
        raise ConfigError(here, f"expected {kind}, got {type(value).__name__}")
    if kind == "number" and not math.isfinite(value):
        raise ConfigError(here, "must be finite")
    return value


def _wrap(ptr: str, fn, *args):
    """Re-raise validation errors of ``fn`` under ``ptr``."""
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (ZRPError, KeyError, TypeError, ValueError) as exc:
        msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ConfigError(ptr, msg) from None


# -- pieces ---------------------------------------------------------------------------

def parse_env(node, ptr: str = "/env", base_dir=".") -> Environment:
    """Inline environment (``x_lo``/``rates``/``floor_c``), a file reference
    (``{"file": path}``) or an i.i.d. spec with ``window`` and ``seed``."""
    if isinstance(node, str):
        node = {"file": node}
    if not isinstance(node, dict):
        raise ConfigError(ptr, "environment must be an object or a file path")
    if "file" in node:
        path = Path(base_dir) / _field(node, "file", ptr, "str")
        return parse_env(load_json(path), ptr, path.parent)
    if "rates" in node:
        return _wrap(ptr, Environment.from_dict, {
            "x_lo": _field(node, "x_lo", ptr, "int", 0),
            "rates": _field(node, "rates", ptr, "list"),
            "floor_c": _field(node, "floor_c", ptr, "number"),
        })
    if "kind" in node:
        spec_dict = {k: v for k, v in node.items() if k not in ("window", "seed")}
        spec = _wrap(ptr, EnvSpec.from_dict, spec_dict)
        window = _field(node, "window", ptr, "list")
        if len(window) != 2 or not all(isinstance(w, int) for w in window) or window[0] > window[1]:
            raise ConfigError(_ptr(ptr, "window"), "expected [x_lo, x_hi] integers with x_lo <= x_hi")
        seed = _field(node, "seed", ptr, "int", 0)
        return _wrap(ptr, sample_iid_env, spec, tuple(window), seed)
    raise ConfigError(ptr, "environment needs 'rates', 'kind' or 'file'")


def parse_initial(node, ptr: str, env: Environment, seed: int) -> Configuration:
    if not isinstance(node, dict):
        raise ConfigError(ptr, "initial condition must be an object")
    kind = _field(node, "kind", ptr, "str")
    if kind == "empty":
        return Configuration.empty(env.x_lo, env.size)
    if kind == "constant":
        value = _field(node, "value", ptr, "int")
        if value < 0:
            raise ConfigError(_ptr(ptr, "value"), "occupancy must be non-negative")
        return Configuration.constant(env.x_lo, env.size, value)
    if kind == "product":
        v = _field(node, "v", ptr, "number")
        return _wrap(_ptr(ptr, "v"), lambda: sample_configuration(ProductGeometric(env, v), seed))
    if kind == "explicit":
        occ = _field(node, "occ", ptr, "list")
        if len(occ) != env.size:
            raise ConfigError(_ptr(ptr, "occ"), f"expected {env.size} entries, got {len(occ)}")
        for i, k in enumerate(occ):
            if not isinstance(k, int) or isinstance(k, bool) or k < 0:
                raise ConfigError(_ptr(_ptr(ptr, "occ"), i), "occupancy must be a non-negative integer")
        return Configuration(env.x_lo, occ)
    raise ConfigError(_ptr(ptr, "kind"), f"unknown initial condition {kind!r}")


def parse_boundary(node, ptr: str = "/boundary") -> BoundarySpec:
    if not isinstance(node, dict):
        raise ConfigError(ptr, "boundary must be an object")
    for key in node:
        if key not in ("left", "right", "topology", "inject_rate"):
            raise ConfigError(_ptr(ptr, key), "unknown field")
    if "inject_rate" in node:
        _field(node, "inject_rate", ptr, "number")
    return _wrap(ptr, BoundarySpec.from_dict, node)


def parse_rate_function(node, ptr: str = "/g") -> RateFunctionSpec:
    if not isinstance(node, dict):
        raise ConfigError(ptr, "rate function must be an object")
    return _wrap(ptr, RateFunctionSpec.from_dict, node)


def _times(node: dict, key: str, ptr: str, default=_MISSING) -> list[float]:
    values = _field(node, key, ptr, "list", default)
    for i, t in enumerate(values):
        if not isinstance(t, (int, float)) or isinstance(t, bool) or not math.isfinite(t):
            raise ConfigError(_ptr(_ptr(ptr, key), i), "expected a finite number")
    return [float(t) for t in values]


# -- run descriptor ------------------------------------------------------------------------

@dataclass
class RunConfig:
    env: Environment
    initial: Configuration
    boundary: BoundarySpec
    g: RateFunctionSpec
    t_max: float
    snapshot_times: list
    seed: int
    second: Configuration | None = None
    tag_site: int | None = None
    raw: dict = field(default_factory=dict)


def resolve_env(doc: dict, base_dir=".", env_path=None) -> Environment:
    """``--env`` wins over the descriptor's ``env`` field."""
    if env_path is not None:
        return parse_env({"file": os.fspath(env_path)}, "/env", ".")
    if "env" not in doc:
        raise ConfigError("/env", "required field missing (or pass --env)")
    return parse_env(doc["env"], "/env", base_dir)


def resolve_seed(doc: dict, seed=None) -> int:
    if seed is not None:
        return int(seed)
    return _field(doc, "seed", "", "int", 0)


def parse_run_config(doc: dict, base_dir=".", seed=None, env_path=None) -> RunConfig:
    env = resolve_env(doc, base_dir, env_path)
    seed = resolve_seed(doc, seed)
    initial = parse_initial(_field(doc, "initial", "", "dict", {"kind": "empty"}), "/initial", env, seed)
    boundary = parse_boundary(_field(doc, "boundary", "", "dict", {}))
    g = parse_rate_function(_field(doc, "g", "", "dict", {"kind": "indicator"}))
    t_max = _field(doc, "t_max", "", "number")
    if t_max <= 0:
        raise ConfigError("/t_max", "must be positive")
    snaps = _times(doc, "snapshot_times", "", [])
    if snaps != sorted(snaps) or (snaps and (snaps[0] < 0 or snaps[-1] > t_max)):
        raise ConfigError("/snapshot_times", "must be sorted and lie in [0, t_max]")
    second = None
    if "coupled" in doc:
        coupled = _field(doc, "coupled", "", "dict")
        # the second marginal draws its product sample from a derived seed
        second = parse_initial(_field(coupled, "second", "/coupled", "dict"), "/coupled/second",
                               env, seed + 1)
    tag_site = None
    if "tag" in doc:
        tag = _field(doc, "tag", "", "dict")
        tag_site = _field(tag, "site", "/tag", "int")
        if not env.x_lo <= tag_site <= env.x_hi:
            raise ConfigError("/tag/site", f"site {tag_site} outside window [{env.x_lo}, {env.x_hi}]")
    return RunConfig(env, initial, boundary, g, float(t_max), snaps, seed, second, tag_site, doc)


def number(doc: dict, key: str, default=_MISSING, low=None, high=None) -> float:
    value = _field(doc, key, "", "number", default)
    if value is not None and ((low is not None and value < low) or (high is not None and value > high)):
        raise ConfigError(_ptr("", key), f"must lie in [{low}, {high}]")
    return value


def integer(doc: dict, key: str, default=_MISSING, low=None) -> int:
    value = _field(doc, key, "", "int", default)
    if value is not None and low is not None and value < low:
        raise ConfigError(_ptr("", key), f"must be at least {low}")
    return value


def times(doc: dict, key: str, default=_MISSING) -> list[float]:
    return _times(doc, key, "", default)


# -- writers ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(int(x)) if isinstance(x, (np.integer, bool, np.bool_)) else str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def snapshot_rows(snapshots, label=None):
    for t, conf in snapshots:
        for i, k in enumerate(conf.occ):
            row = (t, conf.x_lo + i, k)
            yield row if label is None else (label,) + row


def write_snapshots(path, snapshots) -> None:
    write_csv(path, ["time", "site", "occupancy"], snapshot_rows(snapshots))


def write_departures(path, departures) -> None:
    write_csv(path, ["index", "time"], enumerate(departures))


def write_currents(path, bond_counts, x_lo: int) -> None:
    write_csv(path, ["bond", "count"], ((x_lo - 1 + i, c) for i, c in enumerate(bond_counts)))


def write_discrepancies(path, profiles) -> None:
    def rows():
        for t, prof in profiles:
            for x in prof.sites():
                yield t, x, prof.eta_over_xi.get(x, 0), prof.xi_over_eta.get(x, 0)
    write_csv(path, ["time", "site", "pos_count", "neg_count"], rows())


def write_tag_path(path, tagged) -> None:
    write_csv(path, ["time", "position"], tagged.path)


def write_speed(path, displacements, t: float) -> None:
    write_csv(path, ["replica", "X_t", "t"], ((r, x, t) for r, x in enumerate(displacements)))
