"""Command line: run, analyze, validate and sweep.

Exit codes: 0 success, 1 a check or invariant failed, 2 usage or
configuration error, 3 input/output error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import _backend
from . import blocks as blk
from . import drivers
from .config import ConfigError, RunConfig, dump_config, parse_config
from .experiments import (
    check_b_count_bound,
    format_number,
    poisson_stationarity_test,
    read_timeseries_csv,
    shape_snapshot,
    speed_estimate,
    write_json,
    write_timeseries_csv,
)
from .path import martingale_test
from .rng import RngStream
from .sim import epoch_grid, init_simulation, run_until
from .walk import Box

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class InputError(Exception):
    pass


def _epochs(cfg: RunConfig) -> list[float]:
    grid = set(epoch_grid(cfg.t_max, cfg.epochs_linear, cfg.epochs_geometric))
    if "bounds" in cfg.experiment_set:
        grid.update(t for t in cfg.floats("bound_times") if 0 <= t <= cfg.t_max)
    return sorted(grid)


def _speed_entry(records, cfg: RunConfig) -> Optional[dict]:
    try:
        sp = speed_estimate(records, cfg.speed_window)
    except ValueError:
        return None
    return {"slope": sp.slope, "intercept": sp.intercept, "ci": list(sp.ci), "half_width": sp.half_width,
            "window": list(sp.window), "n_points": sp.n_points}


def _bound_checks(records, cfg: RunConfig) -> list[dict]:
    out = []
    epochs = set(records[0].epochs) if records else set()
    for t in cfg.floats("bound_times"):
        if t not in epochs:
            continue
        if len(records) < 100:
            out.append({"t": t, "skipped": "fewer than 100 replicas"})
            continue
        n_b = len(cfg.seed_sites) if cfg.empty_seed_sites else None
        out.append(check_b_count_bound(records, cfg.params, t, n_b))
    return out


def _martingale_rows(cfg: RunConfig) -> list[dict]:
    target = cfg.target_site
    times = cfg.floats("martingale_times")
    items = [(cfg.params, target, times, cfg.seed, i, cfg.martingale_kappa, cfg.window_margin,
              cfg.backend or None) for i in range(cfg.replicas)]
    return drivers.parallel_map(drivers.martingale_replica, items, cfg.threads)


def _martingale_tests(rows_by_t: dict, m0: list, worst: float, bound: float) -> list[dict]:
    tests = []
    for t in sorted(rows_by_t):
        res = martingale_test(rows_by_t[t], m0)
        tests.append({"name": f"martingale_mean_t={format_number(t)}", "statistic": res["z"],
                      "p": _two_sided_p(res["z"]), "pass": res["pass"]})
    tests.append({"name": "martingale_increment_bound", "statistic": worst, "p": None,
                  "pass": bool(worst <= bound + 1e-12)})
    return tests


def _two_sided_p(z: float) -> float:
    return float(math.erfc(abs(z) / math.sqrt(2)))


def write_martingale_csv(rows: list[dict], times: Sequence[float], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "t", "M", "M0", "max_increment", "bound"])
        for i, row in enumerate(rows):
            for t, v in zip(times, row["values"]):
                w.writerow([i, format_number(t), format_number(v), format_number(row["m0"]),
                            format_number(row["max_increment"]), format_number(row["bound"])])


def cmd_run(cfg: RunConfig, out: Optional[Path] = None) -> int:
    out = Path(out or cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    chosen = cfg.experiment_set
    sim_cfg = cfg.sim_config()
    epochs = _epochs(cfg)
    backend = cfg.backend or None
    items = [(sim_cfg, cfg.seed, i, epochs, cfg.half_region_speed, cfg.debug_checks, backend)
             for i in range(cfg.replicas)]
    results = drivers.parallel_map(drivers.front_replica, items, cfg.threads)
    records = [rec for rec, _ in results]
    problems = [f"replica {rec.replica}, {p}" for rec, probs in results for p in probs]
    tests: list[dict] = []
    failed = bool(problems)
    tests.append({"name": "state_invariants", "statistic": len(problems), "p": None, "pass": not problems})

    write_timeseries_csv(records, out / "timeseries.csv")
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")

    speed = _speed_entry(records, cfg) if "front" in chosen and records else None
    bounds = _bound_checks(records, cfg) if "bounds" in chosen else []
    for b in bounds:
        if "pass" in b:
            tests.append({"name": f"genealogical_bound_t={format_number(b['t'])}",
                          "statistic": b["mean"] + 3 * b["stderr"], "p": None, "pass": b["pass"]})

    if "martingale" in chosen and cfg.replicas > 0:
        rows = _martingale_rows(cfg)
        times = cfg.floats("martingale_times")
        write_martingale_csv(rows, times, out / "martingale.csv")
        by_t = {t: [r["values"][j] for r in rows] for j, t in enumerate(times)}
        worst = max(r["max_increment"] for r in rows)
        mtests = _martingale_tests(by_t, [r["m0"] for r in rows], worst, rows[0]["bound"])
        tests.extend(mtests)
        failed |= not mtests[-1]["pass"]

    if "coupling" in chosen and cfg.replicas > 0:
        cep = [cfg.t_max * j / cfg.coupling_epochs for j in range(cfg.coupling_epochs + 1)]
        pairs = drivers.parallel_map(drivers.coupling_pair,
                                     [(sim_cfg, cfg.seed, i, cep, 10, backend) for i in range(cfg.replicas)],
                                     cfg.threads)
        bad = sum(not p["dominated"] for p in pairs)
        tests.append({"name": "coupling_domination", "statistic": bad, "p": None, "pass": bad == 0})
        failed |= bad > 0

    if "blocks" in chosen:
        runs = drivers.parallel_map(
            drivers.blocks_configuration,
            [(cfg.params.__class__(cfg.d, cfg.blocks_rate, cfg.blocks_rate, cfg.mu_A), cfg.blocks_C0,
              cfg.blocks_gamma0, cfg.seed, i, cfg.blocks_paths, cfg.blocks_path_rate, backend,
              str(out / "block_labels.csv") if i == 0 else None)
             for i in range(cfg.blocks_configs)], cfg.threads)
        ok = all(r["pass"] for r in runs)
        tests.append({"name": "block_identities", "statistic": sum(not r["pass"] for r in runs), "p": None,
                      "pass": ok})
        write_json(runs, out / "blocks.json")
        failed |= not ok

    if "shape" in chosen and cfg.replicas > 0 and cfg.t_max > 0:
        state = init_simulation(sim_cfg, RngStream(cfg.seed, 0), backend=backend)
        run_until(state, cfg.t_max)
        pts = shape_snapshot(state, cfg.t_max)
        with open(out / "shape.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{a + 1}" for a in range(cfg.d)])
            for row in pts:
                w.writerow([format_number(v) for v in row])

    summary = {
        "config": cfg.as_dict(),
        "n_replicas": cfg.replicas,
        "backend": _backend.BACKEND if not cfg.backend else cfg.backend,
        "speed": speed,
        "bound_checks": bounds,
        "tests": tests,
        "invariant_violations": problems[:50],
    }
    write_json(summary, out / "summary.json")
    return EXIT_FAIL if failed else EXIT_OK


def _load_summary(d: Path) -> dict:
    p = d / "summary.json"
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"missing {p}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"corrupt {p}: {exc}") from None


def cmd_analyze(directory: Path, checks: Sequence[str]) -> int:
    directory = Path(directory)
    summary = _load_summary(directory)
    try:
        cfg = RunConfig(**summary["config"]).validate()
    except (KeyError, TypeError) as exc:
        raise InputError(f"corrupt config in {directory / 'summary.json'}: {exc}") from None
    ts = directory / "timeseries.csv"
    if not ts.exists():
        raise InputError(f"missing {ts}")
    try:
        records = read_timeseries_csv(ts, cfg.d)
    except (ValueError, KeyError) as exc:
        raise InputError(f"corrupt {ts}: {exc}") from None
    result: dict = {"directory": directory.name, "checks": list(checks), "tests": []}
    tests = result["tests"]
    if "speed" in checks:
        speed = _speed_entry(records, cfg)
        result["speed"] = speed
        if speed is not None:
            tests.append({"name": "speed_positive", "statistic": speed["slope"], "p": None,
                          "pass": speed["ci"][0] > 0})
    if "bounds" in checks:
        for b in _bound_checks(records, cfg):
            if "pass" in b:
                tests.append({"name": f"genealogical_bound_t={format_number(b['t'])}",
                              "statistic": b["mean"] + 3 * b["stderr"], "p": None, "pass": b["pass"]})
    if "martingale" in checks:
        mp = directory / "martingale.csv"
        if not mp.exists():
            raise InputError(f"missing {mp}")
        by_t: dict = {}
        m0: dict = {}
        worst, bound = 0.0, math.inf
        with open(mp, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                t = float(row["t"])
                by_t.setdefault(t, []).append(float(row["M"]))
                m0.setdefault(t, []).append(float(row["M0"]))
                worst = max(worst, float(row["max_increment"]))
                bound = min(bound, float(row["bound"]))
        if not by_t:
            raise InputError(f"no rows in {mp}")
        first = sorted(by_t)[0]
        tests.extend(_martingale_tests(by_t, m0[first], worst, bound))
    if "stationarity" in checks:
        fields, streams = [], []
        for i in range(max(cfg.replicas, 1)):
            f, s = drivers.stationarity_field(cfg.params, cfg.stationarity_t, cfg.stationarity_half_width,
                                              cfg.stationarity_k, cfg.seed, i)
            fields.append(f)
            streams.append(s)
        res = poisson_stationarity_test(fields, cfg.stationarity_t, Box.cube(cfg.stationarity_half_width, cfg.d),
                                        cfg.stationarity_k, streams)
        tests.append({"name": "poisson_stationarity", "statistic": res["statistic"], "p": res["p"],
                      "pass": res["p"] > 0.001})
    write_json(result, directory / "analysis.json")
    return EXIT_OK if all(t["pass"] for t in tests) else EXIT_FAIL


def cmd_validate(cfg: RunConfig, r_max: int = 4, stream=None) -> int:
    stream = stream or sys.stdout
    rep = blk.validate_constants(cfg.blocks_gamma0, cfg.blocks_C0, cfg.mu_A, cfg.d, r_max, cfg.C4)
    dens = rep["density"]
    print(f"gamma0 = {cfg.blocks_gamma0!r}  C0 = {cfg.blocks_C0}  mu_A = {cfg.mu_A!r}  d = {cfg.d}  C4 = {cfg.C4!r}",
          file=stream)
    print(f"density constraint: gamma0 * prod <= {dens['value_upper']:.6g} vs 1/2 -> "
          f"{'pass' if dens['pass'] else 'FAIL'}", file=stream)
    for f, c in zip(rep["fluctuation"], rep["block_count"]):
        print(f"r = {f['r']}: fluctuation lhs {f['lhs']:.6g} <= {f['rhs']:.6g} -> {'pass' if f['pass'] else 'FAIL'};"
              f" block count log-lhs {c['log_lhs']:.6g} <= 0 -> {'pass' if c['pass'] else 'FAIL'}", file=stream)
    print("gamma_r:", file=stream)
    for r, g in enumerate(rep["gamma"], start=1):
        print(f"  gamma_{r} = {g!r}", file=stream)
    lim = rep["gamma_limit"]
    if lim is None:
        print("gamma schedule undefined: needs gamma0 > 0 and C0 >= 2", file=stream)
    else:
        print(f"gamma_inf <= {lim:.6g} ({'<= 1/2' if lim <= 0.5 else '> 1/2'})", file=stream)
    if not rep["regime_ok"]:
        print("constants regime not satisfied: probabilistic bounds are vacuous for these values", file=stream)
    return EXIT_OK


def _parse_grid(items: Sequence[str]) -> list[tuple[str, list[str]]]:
    grid = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--grid {item!r}: expected KEY=V1,V2,...")
        key, vals = item.split("=", 1)
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"--grid {key}: no values")
        grid.append((key.strip(), values))
    if not grid:
        raise ConfigError("sweep needs at least one --grid entry")
    return grid


def cmd_sweep(base_args, grid: list[tuple[str, list[str]]]) -> int:
    out = Path(base_args.out or parse_config(base_args.config, base_args.set).out)
    out.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in grid]
    rows = []
    any_fail = False
    for n, combo in enumerate(itertools.product(*[v for _, v in grid])):
        cell = out / f"cell_{n:03d}"
        overrides = list(base_args.set) + [f"{k}={v}" for k, v in zip(keys, combo)]
        status = EXIT_OK
        slope = lo = hi = None
        try:
            cfg = parse_config(base_args.config, overrides, seed=base_args.seed, replicas=base_args.replicas,
                               threads=base_args.threads, out=str(cell))
            status = cmd_run(cfg, cell)
            sp = json.loads((cell / "summary.json").read_text(encoding="utf-8"))["speed"]
            if sp:
                slope, lo, hi = sp["slope"], sp["ci"][0], sp["ci"][1]
        except (ConfigError, ValueError) as exc:
            status = EXIT_USAGE
            print(f"cell {n}: {exc}", file=sys.stderr)
        any_fail |= status != EXIT_OK
        rows.append([n, *combo, format_number(slope), format_number(lo), format_number(hi), status])
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", *keys, "slope", "ci_lo", "ci_hi", "status"])
        w.writerows(rows)
    return EXIT_FAIL if any_fail else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    common.add_argument("--seed", type=int)
    common.add_argument("--replicas", type=int)
    common.add_argument("--out")
    common.add_argument("--threads", type=int)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    parser = argparse.ArgumentParser(prog="rumorwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate replicas and write outputs")
    an = sub.add_parser("analyze", parents=[common], help="statistical checks over a run directory")
    an.add_argument("directory")
    an.add_argument("--checks", default="speed,bounds",
                    help="comma list from speed, bounds, martingale, stationarity")
    va = sub.add_parser("validate", parents=[common], help="report the block constants constraints")
    va.add_argument("--r-max", type=int, default=4)
    sw = sub.add_parser("sweep", parents=[common], help="run a cartesian parameter grid")
    sw.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "sweep":
            return cmd_sweep(args, _parse_grid(args.grid))
        if args.command == "analyze":
            checks = [c.strip() for c in args.checks.split(",") if c.strip()]
            unknown = set(checks) - {"speed", "bounds", "martingale", "stationarity"}
            if unknown:
                raise ConfigError(f"unknown check(s): {', '.join(sorted(unknown))}")
            if args.config or args.set:
                parse_config(args.config, args.set)
            return cmd_analyze(Path(args.directory), checks)
        cfg = parse_config(args.config, args.set, seed=args.seed, replicas=args.replicas,
                           out=args.out, threads=args.threads)
        if args.command == "validate":
            return cmd_validate(cfg, args.r_max)
        return cmd_run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, FileNotFoundError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
