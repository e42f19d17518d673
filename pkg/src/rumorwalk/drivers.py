"""Replica-level experiment drivers shared by the command line and the acceptance suite.

Every driver is a plain function of its arguments and a (seed, stream) pair,
so replicas can be farmed out to worker processes and still reproduce exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import blocks as blk
from .path import collect_path, increment_check, martingale_series, traced_path
from .rng import RngStream
from .sim import (
    SimConfig,
    TYPE_B,
    check_domination,
    check_state,
    coupled_run,
    demote_site,
    init_simulation,
    new_record,
    remove_site,
    run_until,
)
from .walk import Box, WalkParams, sample_initial_field

# stream-id offsets keep the randomness of different experiments apart
STREAM_MARTINGALE = 1 << 20
STREAM_COUPLING = 2 << 20
STREAM_BLOCKS = 3 << 20
STREAM_STATIONARITY = 4 << 20


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map, in worker processes when ``threads`` > 1 (0 means all cores)."""
    n = threads or os.cpu_count() or 1
    if n <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, *zip(*items)))


def front_replica(cfg: SimConfig, seed: int, index: int, epochs: Sequence[float],
                  half_region_speed: float = 0.5, debug: bool = False, backend=None):
    """One replica observed on ``epochs``; returns the record and any invariant violations."""
    state = init_simulation(cfg, RngStream(seed, index), backend=backend)
    problems: list[str] = []

    def audit(s):
        problems.extend(f"t={s.now}: {p}" for p in check_state(s))

    record = run_until(state, cfg.t_max, epochs=epochs, record=new_record(state, index),
                       half_region_speed=half_region_speed, on_epoch=audit if debug else None)
    return record, problems


def martingale_replica(params: WalkParams, target: tuple, times: Sequence[float], seed: int, index: int,
                       kappa: float = 1.0, margin: float = 10.0, backend=None) -> dict:
    """Follow the distinguished path from a seed at the origin and evaluate M at ``times``."""
    t_end = max(times)
    cfg = SimConfig(params, ((0,) * params.d,), t_end, margin, kappa)
    state = init_simulation(cfg, RngStream(seed, STREAM_MARTINGALE + index), backend=backend)
    path = traced_path(state, target=target)
    state.engine.advance(t_end)
    collect_path(path, state)
    series = martingale_series(path, params.rate_B, times)
    worst, bound = increment_check(series, t_end)
    return {"m0": series.m0, "values": [v for _, v in series.samples], "max_increment": worst,
            "bound": bound, "n_log": len(path.log)}


def coupling_pair(cfg: SimConfig, seed: int, index: int, epochs: Sequence[float], radius: int = 10,
                  backend=None) -> dict:
    """Perturb one site of a replica and run both systems on shared randomness.

    Even pairs drop every particle at a random occupied site near the origin;
    odd pairs turn the B-particles at one seeded site back into A-particles.
    """
    high = init_simulation(cfg, RngStream(seed, STREAM_COUPLING + index), backend=backend)
    gen = np.random.default_rng([seed, index])
    pos = high.initial.pos
    if index % 2 == 0:
        near = pos[np.all(np.abs(pos) <= radius, axis=1)]
        site = near[gen.integers(len(near))] if len(near) else pos[gen.integers(len(pos))]
        low, kind = remove_site(high, site), "remove"
    else:
        bsites = np.unique(pos[high.initial.types == TYPE_B], axis=0)
        site = bsites[gen.integers(len(bsites))]
        low, kind = demote_site(high, site), "demote"
    rec_low, rec_high = coupled_run(low, high, epochs)
    return {"index": index, "kind": kind, "site": [int(c) for c in site],
            "dominated": bool(check_domination(rec_low, rec_high)), "epochs": len(epochs)}


def blocks_configuration(params: WalkParams, C0: int, gamma0: float, seed: int, index: int,
                         n_paths: int = 50, path_rate: float = 1.0, backend=None, labels_out=None) -> dict:
    """Label one 2-block and its 1-children from a fresh field, then test the counting identities."""
    r = 1
    parent = ((0,) * params.d, 1)
    schedule = blk.gamma_schedule(gamma0, C0, r + 1)
    rng = RngStream(seed, STREAM_BLOCKS + index)
    field = blk.analysis_field(params, parent, C0, r, rng)
    analysis = blk.analyze_parent(field, rng, parent, r, schedule, backend=backend)
    labels = analysis.build_labels()
    if labels_out is not None:
        blk.export_labels(labels, labels_out, params.d)
    out = analysis.exact_checks()
    D1 = blk.delta(C0, r + 1)
    gen = np.random.default_rng([seed, index, 1])
    cache: dict = {}
    fails = 0
    tight = None
    for _ in range(n_paths):
        start = gen.integers(D1 // 4, 3 * D1 // 4, size=params.d)
        path = blk.sample_walk_path(tuple(int(c) for c in start), float(D1), float(2 * D1), path_rate, gen)
        res = blk.check_recursion(path, labels, r, C0, params.d, cache)
        fails += not res.holds
        if tight is None or res.slack < tight[0]:
            tight = (res.slack, res.phi_r, res.phi_r1, res.psi_r1)
    out.update({
        "index": index, "mu_A": params.mu_A, "parent_bad": analysis.parent.bad,
        "parent_pedestal_bad": analysis.parent.pedestal_bad, "parent_slices": analysis.parent_slices,
        "paths": n_paths, "recursion_failures": fails, "tightest": tight,
    })
    out["pass"] = (out["w_le_u_violations"] == 0 and out["bad_not_inferior"] == 0
                   and out["good_with_bad_pedestal"] == 0 and fails == 0)
    return out


def stationarity_field(params: WalkParams, t: float, half_width: int, k: float, seed: int, index: int):
    """Field sampled wide enough that C(half_width) keeps the required margin at time t."""
    margin = math.ceil(3.0 * math.sqrt(params.rate_A * t) * k) + 1
    window = Box.cube(half_width + margin, params.d)
    rng = RngStream(seed, STREAM_STATIONARITY + index)
    return sample_initial_field(window, params, rng), rng
