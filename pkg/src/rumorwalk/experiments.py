"""Replica statistics: fronts, speed fits, bound checks, stationarity and shape diagnostics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.spatial.distance import directed_hausdorff

from .records import OBSERVABLES, ExperimentRecord
from .rng import RngStream
from .sim import SimState, infected_region
from .walk import Box, FreeField, WalkParams, evolve_free_system


def front_extremes(state: SimState) -> tuple[int, int]:
    """Rightmost B position R and negated leftmost B position L (d = 1)."""
    if state.d != 1:
        raise ValueError("front extremes are defined for d = 1 only")
    b = state.b_positions()
    if len(b) == 0:
        raise ValueError("no B-particles")
    return int(b[:, 0].max()), int(-b[:, 0].min())


@dataclass(frozen=True)
class SpeedEstimate:
    slope: float
    intercept: float
    half_width: float
    ci: tuple
    window: tuple
    n_points: int
    n_replicas: int


def _ols(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(t) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    var = s2 / float(np.sum((t - t.mean()) ** 2)) if len(t) > 1 else math.inf
    return float(coef[0]), float(coef[1]), math.sqrt(var)


def _front_matrix(records: Sequence[ExperimentRecord], column: Optional[str]) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("no records")
    col = column or ("R" if records[0].d == 1 else "max_norm_B")
    t = records[0].times()
    for rec in records[1:]:
        if not np.array_equal(rec.times(), t):
            raise ValueError("records must share their epochs")
    Y = np.vstack([rec.column(col) for rec in records])
    return t, Y


def speed_estimate(records, window_fraction: float = 0.5, column: Optional[str] = None,
                   window: Optional[tuple] = None, n_boot: int = 2000, seed: int = 0,
                   level: float = 0.95) -> SpeedEstimate:
    """Least-squares slope of the replica-mean front against time over a late window.

    The confidence interval is a percentile bootstrap over replicas; with a
    single record it falls back to the normal interval of the OLS slope.
    """
    if isinstance(records, ExperimentRecord):
        records = [records]
    t, Y = _front_matrix(records, column)
    if window is None:
        if not 0 < window_fraction <= 1:
            raise ValueError("window_fraction must lie in (0, 1]")
        t_hi = float(t.max())
        window = (t_hi - window_fraction * (t_hi - float(t.min())), t_hi)
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < 10:
        raise ValueError("fewer than 10 epochs in the fit window")
    ts, Ys = t[sel], Y[:, sel]
    if np.isnan(Ys).any():
        raise ValueError("front undefined at some epoch in the fit window")
    slope, icpt, se = _ols(ts, Ys.mean(axis=0))
    z = stats.norm.ppf(0.5 + level / 2)
    if len(records) > 1:
        gen = np.random.default_rng(seed)
        picks = gen.integers(0, len(records), size=(n_boot, len(records)))
        means = Ys[picks].mean(axis=1)
        tc = ts - ts.mean()
        boot = (means - means.mean(axis=1, keepdims=True)) @ tc / float(tc @ tc)
        lo, hi = np.quantile(boot, [0.5 - level / 2, 0.5 + level / 2])
        lo, hi = float(lo), float(hi)
    else:
        lo, hi = float(slope - z * se), float(slope + z * se)
    half = float(max(0.0, (hi - lo) / 2))
    return SpeedEstimate(slope, icpt, half, (lo, hi), (float(window[0]), float(window[1])),
                         int(len(ts)), len(records))


def growth_curvature(records, t_end: float, **kw) -> dict:
    """Compare the fitted slope over [t/4, 3t/4] with the one over [t/2, t]."""
    mid = speed_estimate(records, window=(t_end / 4, 3 * t_end / 4), **kw)
    late = speed_estimate(records, window=(t_end / 2, t_end), **kw)
    rel = abs(late.slope - mid.slope) / abs(mid.slope) if mid.slope else math.inf
    return {"mid_slope": mid.slope, "late_slope": late.slope, "relative_change": rel}


def genealogical_bound(params: WalkParams, N_B: int, t: float) -> float:
    """N_B exp((D_A + D_B) mu_A t), a bound on the expected number of B-particles."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return N_B * math.exp((params.rate_A + params.rate_B) * params.mu_A * t)


def check_b_count_bound(records: Sequence[ExperimentRecord], params: WalkParams, t: float,
                        N_B: Optional[int] = None) -> dict:
    """Empirical mean B-count at t against the genealogical bound.

    With ``N_B`` None each replica's count is divided by its own B-count at
    time 0 and compared with the bound for a single initial B-particle.
    """
    counts = np.array([rec.value_at("n_B_particles", t) for rec in records], dtype=float)
    if len(counts) < 100:
        raise ValueError("need at least 100 replicas")
    if N_B is None:
        counts = counts / np.array([rec.value_at("n_B_particles", 0.0) for rec in records], dtype=float)
        bound = genealogical_bound(params, 1, t)
    else:
        bound = genealogical_bound(params, N_B, t)
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(len(counts)))
    return {"t": t, "n": len(counts), "normalized": N_B is None, "mean": mean, "stderr": se, "bound": bound,
            "pass": bool(mean + 3 * se <= bound)}


def theorem3_check(state: SimState, speed: Optional[SpeedEstimate], t: float) -> int:
    """Sites of C(slope t / 2) holding an A-particle at time t (state must sit at t)."""
    if speed is None:
        raise ValueError("a calibrated speed estimate is required")
    if t != state.now:
        raise ValueError("the state only holds its configuration at its current time")
    a = state.a_positions()
    if len(a) == 0:
        return 0
    inside = np.all(np.abs(a) <= speed.slope * t / 2, axis=1)
    return int(len(np.unique(a[inside], axis=0))) if inside.any() else 0


def a_in_half_region_fraction(records: Sequence[ExperimentRecord], slope: float, t: float) -> float:
    """Fraction of replicas with an A-particle in C(slope t / 2), from the recorded nearest-A distance."""
    near = np.array([rec.value_at("min_norm_A", t) for rec in records], dtype=float)
    return float(np.mean(near <= slope * t / 2))


def upper_bound_check(records: Sequence[ExperimentRecord], times: Sequence[float], headroom: float = 0.5,
                   seed: int = 0) -> dict:
    """Linear upper bound: max-B-norm / t is stable over ``times`` and below a calibrated constant.

    The constant is (1 + headroom) times the largest ratio seen in a random
    half of the replicas; the other half must stay below it.
    """
    ratios = np.array([[rec.value_at("max_norm_B", t) / t for t in times] for rec in records], dtype=float)
    per_t = ratios.max(axis=0)
    variation = float((per_t.max() - per_t.min()) / per_t.mean())
    gen = np.random.default_rng(seed)
    order = gen.permutation(len(records))
    calib, held = order[: len(order) // 2], order[len(order) // 2:]
    c1 = (1 + headroom) * float(ratios[calib].max())
    worst = float(ratios[held].max())
    return {"times": list(times), "max_ratio": per_t.tolist(), "variation": variation,
            "C1": c1, "held_out_max": worst, "pass": bool(variation < 0.25 and worst <= c1)}


def _pooled_chisquare(counts: np.ndarray, mu: float, min_expected: float = 5.0) -> tuple[float, float, int]:
    n = len(counts)
    top = 0
    while n * stats.poisson.sf(top, mu) >= min_expected:
        top += 1
    observed = np.array([np.count_nonzero(counts == j) for j in range(top)] + [np.count_nonzero(counts >= top)])
    probs = np.append(stats.poisson.pmf(np.arange(top), mu), stats.poisson.sf(top - 1, mu))
    res = stats.chisquare(observed, probs * n)
    return float(res.statistic), float(res.pvalue), len(observed)


def poisson_stationarity_test(fields, t: float, window: Box, k: float = 5.0,
                              rng: Optional[Iterable[RngStream]] = None) -> dict:
    """Chi-square fit of pooled per-site counts on ``window`` at time t to Poisson(mu_A).

    Each field must cover ``window`` with a margin of at least 3 k sqrt(D t).
    Fields not yet at time t are evolved with the matching stream in ``rng``.
    """
    if isinstance(fields, FreeField):
        fields = [fields]
    streams = list(rng) if rng is not None else [None] * len(fields)
    pooled = []
    mu = fields[0].params.mu_A
    for f, s in zip(fields, streams):
        need = 3.0 * math.sqrt(f.params.rate_A * t) * k
        if f.window is None:
            raise ValueError("field has no sampled window")
        for lo, hi, wlo, whi in zip(window.lo, window.hi, f.window.lo, f.window.hi):
            if lo - wlo < need or whi - hi < need:
                raise ValueError(f"test window is closer than {need:.2f} sites to the unsampled exterior")
        if f.time != t:
            if s is None:
                raise ValueError("field is not at time t and no stream was given")
            evolve_free_system(f, t, s)
        pooled.append(f.occupancy(window).ravel())
    counts = np.concatenate(pooled)
    stat, p, bins = _pooled_chisquare(counts, mu)
    return {"t": t, "n_sites": int(len(counts)), "mean": float(counts.mean()),
            "statistic": stat, "bins": bins, "p": p}


def shape_snapshot(state: SimState, t: float) -> np.ndarray:
    """The infected sites visited by time t, divided by t."""
    if t <= 0:
        raise ValueError("t must be positive")
    sites = sorted(infected_region(state, t))
    return np.asarray(sites, dtype=float).reshape(len(sites), state.d) / t


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


# -- output ---------------------------------------------------------------

TIMESERIES_COLUMNS = ("replica", "t") + OBSERVABLES


def format_number(v) -> str:
    """Shortest round-trip text; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return ""
    return repr(f)


def write_timeseries_csv(records: Sequence[ExperimentRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_COLUMNS)
        for rec in records:
            for j, t in enumerate(rec.epochs):
                w.writerow([str(rec.replica), format_number(t)] +
                           [format_number(rec.columns[name][j]) for name in OBSERVABLES])


def read_timeseries_csv(path, d: int = 1, fp: str = "") -> list[ExperimentRecord]:
    out: dict[int, ExperimentRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TIMESERIES_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            rep = int(row["replica"])
            rec = out.setdefault(rep, ExperimentRecord(fp, d, rep))
            vals = {name: (int(row[name]) if row[name] else None) for name in OBSERVABLES}
            rec.add(float(row["t"]), vals)
    return [out[k] for k in sorted(out)]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return _plain(asdict(obj))
    return obj


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
