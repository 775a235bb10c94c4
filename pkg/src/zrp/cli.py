"""Command-line front end.

    zrp <command> [--config PATH] [--env PATH] [--seed INT] [--replicas INT]
                  [--parallelism INT] [--out DIR] [--force] [--v FLOAT]

Exit status: 0 success, 1 validation error, 2 statistical test failed,
3 I/O error. Every invocation prints one line of JSON to stdout.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .coupling import CoupledConfiguration, simulate_coupled, track_second_class
from .dynamics import simulate
from .environment import (
    critical_density,
    density_slope,
    expected_density,
    is_infinite,
    second_class_velocity,
)
from .errors import ConfigError, ZRPError
from .experiments import (
    CHI2_SIGNIFICANCE,
    KS_SIGNIFICANCE,
    TRAPPED_THRESHOLD,
    TREND_SIGNIFICANCE,
    TV_THRESHOLD,
    _jsonable,
    burke_experiment,
    convergence_experiment,
    convergence_verdict,
    geometric_pmf,
    speed_experiment,
    stationarity_test,
    stationarity_verdict,
)

COMMANDS = ("simulate", "couple", "tag", "burke", "stationarity", "speed", "converge", "analytics")
EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3
DEFAULT_OUT = "zrp-out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class OutputExists(OSError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zrp", description="Zero-range process simulator and experiment runner.",
                allow_abbrev=False)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run or experiment descriptor")
    p.add_argument("--env", help="JSON environment file (overrides the descriptor)")
    p.add_argument("--seed", type=int, help="master seed (overrides the descriptor)")
    p.add_argument("--replicas", type=int, help="number of replicas (overrides the descriptor)")
    p.add_argument("--parallelism", type=int, default=1, help="worker processes for replicas")
    p.add_argument("--out", help=f"output directory (default $ZRP_OUT_DIR or {DEFAULT_OUT})")
    p.add_argument("--force", action="store_true", help="overwrite an existing report.json")
    p.add_argument("--v", type=float, help="fugacity (overrides the descriptor)")
    return p


@contextlib.contextmanager
def replica_mapper(parallelism: int):
    if parallelism <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        yield lambda fn, items: pool.map(fn, items, chunksize=4)


def prepare_out(args) -> Path:
    out = Path(args.out or os.environ.get("ZRP_OUT_DIR") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    if (out / "report.json").exists() and not args.force:
        raise OutputExists(f"{out / 'report.json'} exists; pass --force to overwrite")
    return out


def _descriptor(args) -> tuple[dict, Path]:
    if args.config is None:
        return {}, Path(".")
    path = Path(args.config)
    return io.load_json(path), path.parent


def _replicas(args, doc, default):
    if args.replicas is not None:
        if args.replicas < 1:
            raise ConfigError("/replicas", "--replicas must be at least 1")
        return args.replicas
    return io.integer(doc, "replicas", default, low=1)


def _fugacity(args, doc, default=None):
    if args.v is not None:
        return args.v
    return io.number(doc, "v", default)


# -- commands ---------------------------------------------------------------------------

def cmd_simulate(args, doc, base):
    cfg = io.parse_run_config(doc, base, args.seed, args.env)
    res = simulate(cfg.env, cfg.initial, cfg.boundary, cfg.g, cfg.t_max, cfg.seed, cfg.snapshot_times)
    out = args.out_dir
    io.write_snapshots(out / "snapshots.csv", res.snapshots)
    io.write_currents(out / "currents.csv", res.bond_counts, res.x_lo)
    if cfg.boundary.topology == "segment" and cfg.boundary.right == "absorb":
        io.write_departures(out / "departures.csv", res.departures)
    report = {
        "command": "simulate", "seed": cfg.seed, "t_end": res.t_end,
        "initial_total": res.initial_total, "final_total": res.final.total,
        "injections": len(res.injections), "departures": len(res.departures),
        "events": res.n_events, "boundary": cfg.boundary.to_dict(), "g": cfg.g.to_dict(),
        "final": res.final.to_dict(),
    }
    io.write_json(out / "report.json", report)
    return EXIT_OK, {"out": str(out), "final_total": res.final.total,
                     "departures": len(res.departures), "events": res.n_events}


def cmd_couple(args, doc, base):
    cfg = io.parse_run_config(doc, base, args.seed, args.env)
    if cfg.second is None:
        raise ConfigError("/coupled", "required field missing")
    if cfg.g.kind != "indicator":
        raise ConfigError("/g", "coupled runs use the indicator rate function")
    pair = CoupledConfiguration(cfg.initial, cfg.second)
    res = simulate_coupled(cfg.env, pair, cfg.boundary, cfg.t_max, cfg.seed, cfg.snapshot_times)
    out = args.out_dir
    io.write_csv(out / "snapshots.csv", ["marginal", "time", "site", "occupancy"],
                 [*io.snapshot_rows(res.eta.snapshots, "eta"), *io.snapshot_rows(res.xi.snapshots, "xi")])
    io.write_discrepancies(out / "discrepancies.csv", res.profiles)
    totals = res.discrepancy_totals()
    report = {
        "command": "couple", "seed": cfg.seed, "t_end": cfg.t_max,
        "ordered_start": pair.ordered,
        "discrepancies_start": int(totals[0]), "discrepancies_end": int(totals[-1]),
        "discrepancy_log": res.discrepancy_log.tolist(),
        "eta_final": res.eta.final.to_dict(), "xi_final": res.xi.final.to_dict(),
    }
    io.write_json(out / "report.json", report)
    return EXIT_OK, {"out": str(out), "discrepancies_start": int(totals[0]),
                     "discrepancies_end": int(totals[-1])}


def cmd_tag(args, doc, base):
    cfg = io.parse_run_config(doc, base, args.seed, args.env)
    if cfg.tag_site is None:
        raise ConfigError("/tag", "required field missing")
    path = track_second_class(cfg.env, cfg.initial, cfg.tag_site, cfg.boundary, cfg.t_max,
                              cfg.seed, cfg.g)
    out = args.out_dir
    io.write_tag_path(out / "tag_path.csv", path)
    report = {
        "command": "tag", "seed": cfg.seed, "start": path.start, "final": path.final,
        "displacement": path.displacement, "t_end": path.t_end,
        "exit_time": path.exit_time, "speed": path.displacement / path.t_end,
    }
    io.write_json(out / "report.json", report)
    return EXIT_OK, {"out": str(out), "displacement": path.displacement, "exited": path.exited}


def cmd_burke(args, doc, base, mapper):
    env = io.resolve_env(doc, base, args.env)
    seed = io.resolve_seed(doc, args.seed)
    v = _fugacity(args, doc)
    rep = burke_experiment(
        env, v, io.number(doc, "t", 5000.0, low=0), _replicas(args, doc, 20), seed,
        io.number(doc, "window_start", None, low=0),
        io.number(doc, "significance", KS_SIGNIFICANCE, 0, 1),
        io.number(doc, "rate_tolerance", 0.02, low=0),
        io.number(doc, "min_pass_fraction", 0.95, 0, 1),
        mapper,
    )
    out = args.out_dir
    departures = rep.details.pop("departures")
    io.write_csv(out / "departures.csv", ["replica", "index", "time"],
                 ((r, i, t) for r, d in enumerate(departures) for i, t in enumerate(d)))
    io.write_json(out / "report.json", {"command": "burke", "seed": seed, "reports": [rep.to_dict()]})
    return (EXIT_OK if rep.passed else EXIT_FAILED), {
        "out": str(out), "passed": rep.passed, "ks_pass_fraction": rep.statistic, "rate": rep.estimate,
    }


def cmd_stationarity(args, doc, base, mapper):
    env = io.resolve_env(doc, base, args.env)
    seed = io.resolve_seed(doc, args.seed)
    v = _fugacity(args, doc)
    t = io.number(doc, "t", low=0)
    init = None
    if "initial" in doc:
        init = io.parse_initial(doc["initial"], "/initial", env, seed)
    reports = stationarity_test(env, v, t, _replicas(args, doc, 500), seed, init,
                                io.number(doc, "significance", CHI2_SIGNIFICANCE, 0, 1), mapper)
    verdict = stationarity_verdict(reports, io.number(doc, "min_pass_fraction", 0.9, 0, 1))
    out = args.out_dir
    rows = []
    for r, p in zip(reports, env.rates):
        hist = r.details.pop("histogram")
        ref = geometric_pmf(v / p, len(hist) - 1)
        rows.extend((t, r.details["site"], k, h, q) for k, (h, q) in enumerate(zip(hist, ref)))
    io.write_csv(out / "marginals.csv", ["time", "site", "k", "empirical_prob", "reference_prob"], rows)
    io.write_json(out / "report.json", {"command": "stationarity", "seed": seed,
                                        "summary": verdict.to_dict(),
                                        "reports": [r.to_dict() for r in reports]})
    return (EXIT_OK if verdict.passed else EXIT_FAILED), {
        "out": str(out), "passed": verdict.passed, "site_pass_fraction": verdict.estimate,
    }


def cmd_speed(args, doc, base, mapper):
    env = io.resolve_env(doc, base, args.env)
    seed = io.resolve_seed(doc, args.seed)
    v = _fugacity(args, doc)
    t = io.number(doc, "t", low=0)
    start = io.integer(doc, "start", env.x_lo)
    rep = speed_experiment(env, v, start, t, _replicas(args, doc, 200), seed,
                           io.number(doc, "tolerance", 0.02, low=0),
                           io.number(doc, "confidence", 0.99, 0, 1),
                           io.number(doc, "max_exit_fraction", 0.01, 0, 1), mapper)
    out = args.out_dir
    io.write_speed(out / "speed.csv", rep.details.pop("displacements"), t)
    io.write_json(out / "report.json", {"command": "speed", "seed": seed, "reports": [rep.to_dict()]})
    return (EXIT_OK if rep.passed else EXIT_FAILED), {
        "out": str(out), "passed": rep.passed, "estimate": rep.estimate, "std_error": rep.std_error,
        "predicted": rep.details["predicted"],
    }


def cmd_converge(args, doc, base, mapper):
    env = io.resolve_env(doc, base, args.env)
    seed = io.resolve_seed(doc, args.seed)
    rep = convergence_experiment(
        env, io.number(doc, "rho0"), io.times(doc, "t_grid"), io.integer(doc, "probe", low=1),
        _replicas(args, doc, 400), seed,
        plateau_tolerance=io.number(doc, "plateau_tolerance", 0.05, low=0),
        trapped_quantile=io.number(doc, "trapped_quantile", 0.1, 0, 1), mapper=mapper,
    )
    verdict = convergence_verdict(
        rep, io.number(doc, "tv_threshold", TV_THRESHOLD, 0, 1),
        io.number(doc, "trapped_threshold", TRAPPED_THRESHOLD, 0, 1),
        io.number(doc, "trend_significance", TREND_SIGNIFICANCE, 0, 1),
    )
    out = args.out_dir
    rows = []
    for (t, x), hist in rep.empirical_marginals.items():
        j = rep.probe_sites.index(x)
        ref = geometric_pmf(rep.reference_ratios[j], len(hist) - 1)
        rows.extend((t, x, k, h, q) for k, (h, q) in enumerate(zip(hist, ref)))
    io.write_csv(out / "marginals.csv", ["time", "site", "k", "empirical_prob", "reference_prob"], rows)
    io.write_csv(out / "tv.csv", ["time", "site", "distance"],
                 ((t, x, rep.distances[i, j]) for i, t in enumerate(rep.times)
                  for j, x in enumerate(rep.probe_sites)))
    io.write_csv(out / "trapped.csv", ["rate_rank", "mass_fraction"], enumerate(rep.trapped_mass_profile))
    body = rep.to_dict()
    body.pop("empirical_marginals")
    io.write_json(out / "report.json", {"command": "converge", "seed": seed,
                                        "summary": verdict.to_dict(), "experiment": body})
    return (EXIT_OK if verdict.passed else EXIT_FAILED), {
        "out": str(out), "passed": verdict.passed, "tv": verdict.statistic,
        "trapped_fraction": verdict.estimate, "spearman_p": verdict.p_value,
    }


def cmd_analytics(args, doc, base):
    env = io.resolve_env(doc, base, args.env)
    v = _fugacity(args, doc)
    if v is None:
        raise ConfigError("/v", "required field missing (or pass --v)")
    rho_star = critical_density(env)
    return EXIT_OK, {
        "R": expected_density(env, v),
        "Rprime": density_slope(env, v),
        "gamma": second_class_velocity(env, v),
        "rho_star": "infinite" if is_infinite(rho_star) else rho_star,
    }


# -- entry point ---------------------------------------------------------------------------

def run_cli(argv=None) -> tuple[int, dict]:
    """Execute one command; returns ``(exit status, summary dict)``."""
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        if args.parallelism < 1:
            raise UsageError("argument --parallelism: must be at least 1")
        doc, base = _descriptor(args)
        # refuse an overwrite before any work is done
        args.out_dir = None if command == "analytics" else prepare_out(args)
        if command in ("simulate", "couple", "tag", "analytics"):
            fn = globals()[f"cmd_{command}"]
            code, info = fn(args, doc, base)
        else:
            with replica_mapper(args.parallelism) as mapper:
                code, info = globals()[f"cmd_{command}"](args, doc, base, mapper)
        status = {EXIT_OK: "ok", EXIT_FAILED: "failed"}[code]
        return code, {"command": command, "status": status, **info}
    except UsageError as exc:
        return EXIT_INVALID, {"command": command, "status": "error", "error": f"usage: {exc}"}
    except ConfigError as exc:
        return EXIT_INVALID, {"command": command, "status": "error", "error": str(exc),
                              "pointer": exc.pointer}
    except ZRPError as exc:
        return EXIT_INVALID, {"command": command, "status": "error",
                              "error": f"{type(exc).__name__}: {exc}"}
    except OSError as exc:
        return EXIT_IO, {"command": command, "status": "error", "error": f"I/O: {exc}"}


def main(argv=None) -> int:
    code, summary = run_cli(argv)
    print(json.dumps(_jsonable(summary), sort_keys=True, allow_nan=False))
    return code


if __name__ == "__main__":
    sys.exit(main())
