"""The distinguished B-path lambda, its drift terms and the compensated-distance martingale.

A path log is a list of entries ``(time, kind, lam, rho, count, target)``: the
path position and carrier after the entry, the number of particles at ``lam``
and the current drift target.  Entries are written whenever any of these can
change, so every quantity the martingale needs is piecewise constant between
consecutive entries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._pyengine import KIND_HANDOFF, KIND_MOVED, KIND_OCCUPANCY, KIND_START, KIND_TARGET
from .lattice import as_site, check_dimension, neighbor_offsets
from .sim import TYPE_B, EventRecord, SimState

KIND_NAMES = {KIND_START: "start", KIND_MOVED: "moved", KIND_HANDOFF: "handoff",
              KIND_OCCUPANCY: "occupancy", KIND_TARGET: "target"}


def _dist2(a, b) -> int:
    return sum((x - y) * (x - y) for x, y in zip(a, b))


@dataclass
class DistinguishedPath:
    d: int
    target: Optional[tuple] = None
    phi: Optional[int] = None
    log: list = field(default_factory=list)

    @property
    def tracking(self) -> bool:
        return self.phi is not None

    @property
    def time(self) -> float:
        return self.log[-1][0]

    @property
    def lam(self) -> tuple:
        return self.log[-1][2]

    @property
    def rho(self) -> int:
        return self.log[-1][3]

    @property
    def current_target(self) -> tuple:
        return self.log[-1][5]

    @property
    def events(self) -> list:
        """``(time, kind, from, to)`` for every attempted jump of the carrier."""
        out = []
        prev = self.log[0][2]
        for t, kind, lam, *_ in self.log[1:]:
            if kind in (KIND_MOVED, KIND_HANDOFF):
                out.append((t, KIND_NAMES[kind], prev, lam))
            prev = lam
        return out

    def lambda_at(self, t: float) -> tuple:
        times = [e[0] for e in self.log]
        j = int(np.searchsorted(times, t, side="right")) - 1
        if j < 0:
            raise ValueError("time precedes the start of the path")
        return self.log[j][2]


def _pick_carrier(state: SimState, rho: Optional[int]) -> int:
    ids = state.engine.ids
    types = state.engine.types()
    if rho is None:
        b = ids[types == TYPE_B]
        if len(b) == 0:
            raise ValueError("state holds no B-particle")
        first = int(b.min())
        site = state.engine.positions()[int(np.flatnonzero(ids == first)[0])]
        return min(state.engine.site_ids(site))
    rho = int(rho)
    hit = np.flatnonzero(ids == rho)
    if len(hit) == 0 or types[hit[0]] != TYPE_B:
        raise ValueError("the distinguished particle must be an existing B-particle")
    return rho


def _position(state: SimState, pid: int) -> tuple:
    idx = int(np.flatnonzero(state.engine.ids == pid)[0])
    return tuple(int(c) for c in state.engine.positions()[idx])


def _count(state: SimState, site) -> int:
    a, b = state.engine.site_counts(site)
    return a + b


def start_path(state: SimState, target=None, phi: Optional[int] = None, rho: Optional[int] = None) -> DistinguishedPath:
    """Start lambda at the site of the lowest-id B-particle (or of ``rho``).

    Give either a fixed ``target`` site or the id ``phi`` of a particle to track.
    """
    if (target is None) == (phi is None):
        raise ValueError("give exactly one of target and phi")
    rho = _pick_carrier(state, rho)
    lam = _position(state, rho)
    tgt = as_site(target) if target is not None else _position(state, int(phi))
    if len(tgt) != state.d:
        raise ValueError("target dimension mismatch")
    path = DistinguishedPath(state.d, None if target is None else tgt, None if phi is None else int(phi))
    path.log.append((state.now, KIND_START, lam, rho, _count(state, lam), tgt))
    return path


def advance_path(path: DistinguishedPath, event: EventRecord, state: SimState) -> DistinguishedPath:
    """Apply one processed event; ``state`` is the configuration right after it."""
    t, pid, w, w2, _ = event
    if t < path.time:
        raise ValueError("event precedes the path frontier")
    lam, rho, tgt = path.lam, path.rho, path.current_target
    if path.tracking and pid == path.phi:
        tgt = w2
    if pid == rho:
        before = _count(state, w) + 1
        if before == 1 or _dist2(w2, tgt) < _dist2(w, tgt):
            lam, kind = w2, KIND_MOVED
        else:
            kind = KIND_HANDOFF
            rho = min(state.engine.site_ids(w))
        path.log.append((t, kind, lam, rho, _count(state, lam), tgt))
    elif path.tracking and pid == path.phi:
        path.log.append((t, KIND_TARGET, lam, rho, _count(state, lam), tgt))
    elif w == lam or w2 == lam:
        path.log.append((t, KIND_OCCUPANCY, lam, rho, _count(state, lam), tgt))
    return path


def advance_path_tracking(path: DistinguishedPath, event: EventRecord, state: SimState, phi: int) -> DistinguishedPath:
    """Rule with a moving target: compare distances to the current position of ``phi``."""
    if path.phi != phi:
        raise ValueError("path was not started in tracking mode for this particle")
    return advance_path(path, event, state)


def traced_path(state: SimState, target=None, phi: Optional[int] = None, rho: Optional[int] = None) -> DistinguishedPath:
    """Have the engine follow the path natively from now on.

    Call :func:`collect_path` after advancing the state to read it back.
    """
    path = start_path(state, target=target, phi=phi, rho=rho)
    state.engine.start_tracker(path.rho, target=path.target, phi_id=path.phi)
    return path


def collect_path(path: DistinguishedPath, state: SimState) -> DistinguishedPath:
    path.log = [(t, k, tuple(lam), r, c, tuple(tg)) for t, k, lam, r, c, tg in state.engine.tracker_log()]
    return path


def check_path(path: DistinguishedPath, state: SimState) -> list[str]:
    """The carrier is a B-particle sitting at lambda (checked against the live state)."""
    problems = []
    idx = np.flatnonzero(state.engine.ids == path.rho)
    if len(idx) == 0:
        return ["carrier missing"]
    if state.engine.types()[idx[0]] != TYPE_B:
        problems.append("carrier is not a B-particle")
    if _position(state, path.rho) != path.lam:
        problems.append("carrier is not at lambda")
    if path.log[-1][4] != _count(state, path.lam):
        problems.append("logged occupancy disagrees with the state")
    return problems


# -- drift ------------------------------------------------------------------

def _neighbour_gains(diff: np.ndarray, d: int) -> np.ndarray:
    """``||diff + e_i|| - ||diff||`` for each offset; diff has shape (..., d)."""
    offs = neighbor_offsets(d).astype(float)
    diff = np.asarray(diff, dtype=float)
    base = np.sqrt(np.sum(diff * diff, axis=-1))
    moved = diff[..., None, :] + offs
    return np.sqrt(np.sum(moved * moved, axis=-1)) - base[..., None]


def drift_terms(lambda_pos, target_pos, d: int) -> tuple[float, float]:
    """Mean distance gain over all 2d neighbours, and the same mean keeping only the losses."""
    check_dimension(d)
    diff = np.asarray(lambda_pos, dtype=float) - np.asarray(target_pos, dtype=float)
    gains = _neighbour_gains(diff, d)
    g1 = float(gains.sum() / (2 * d))
    g2 = float(gains[gains < 0].sum() / (2 * d))
    return g1, g2


@dataclass
class MartingaleSeries:
    """The compensated distance along one path, evaluated exactly from the path log."""

    D: float
    times: np.ndarray      # log times
    dist: np.ndarray       # ||lam - target|| on [times[j], times[j+1])
    rate: np.ndarray       # integrand on [times[j], times[j+1])
    integral: np.ndarray   # D * integral of the integrand over [times[0], times[j]]
    trace: list            # (time, I1, I2, G1, G2)
    kinds: np.ndarray
    stop: float = math.inf
    samples: list = field(default_factory=list)

    def _segment(self, t: float) -> int:
        if t < self.times[0]:
            raise ValueError("time precedes the path start")
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def value(self, t: float) -> float:
        t = min(t, self.stop)
        j = self._segment(t)
        return float(self.dist[j] - self.integral[j] - self.D * self.rate[j] * (t - self.times[j]))

    def left_limit(self, t: float) -> float:
        t = min(t, self.stop)
        j = int(np.searchsorted(self.times, t, side="left")) - 1
        if j < 0:
            return self.value(t)
        return float(self.dist[j] - self.integral[j] - self.D * self.rate[j] * (t - self.times[j]))

    @property
    def m0(self) -> float:
        return float(self.dist[0])


def martingale_series(path: DistinguishedPath, D: float, sample_times: Sequence[float] = (),
                      stop: float = math.inf) -> MartingaleSeries:
    """M(t) = ||lam(t) - target(t)|| - D * int_0^t [I1 G1 + I2 G2] du (plus D * int G1 when tracking).

    ``stop`` freezes the series at a stopping time (used in tracking mode once
    the tracked particle has been infected).
    """
    log = path.log
    if not log or log[0][1] != KIND_START:
        raise ValueError("path log must begin with its start entry")
    times = np.array([e[0] for e in log], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("path log is not time ordered")
    n = len(log)
    dist = np.empty(n)
    rate = np.empty(n)
    trace = []
    cache = {}
    for j, (t, kind, lam, rho, count, tgt) in enumerate(log):
        if count < 1:
            raise ValueError(f"occupancy gap at t={t}: no particle at lambda")
        key = tuple(a - b for a, b in zip(lam, tgt))
        if key not in cache:
            cache[key] = drift_terms(key, (0,) * path.d, path.d)
        g1, g2 = cache[key]
        i1 = 1 if count == 1 else 0
        i2 = 1 - i1
        rate[j] = i1 * g1 + i2 * g2 + (g1 if path.tracking else 0.0)
        dist[j] = math.sqrt(_dist2(lam, tgt))
        trace.append((t, i1, i2, g1, g2))
    integral = np.zeros(n)
    if n > 1:
        integral[1:] = np.cumsum(D * rate[:-1] * np.diff(times))
    series = MartingaleSeries(float(D), times, dist, rate, integral, trace,
                              np.array([e[1] for e in log]), float(stop))
    series.samples = [(float(s), series.value(s)) for s in sample_times]
    return series


def sigma_grid(series: MartingaleSeries, t_end: float, tracking: bool = False) -> list[float]:
    """sigma_0 = start; sigma_{n+1} = min(sigma_n + 1, next attempted jump after sigma_n)."""
    kinds = (KIND_MOVED, KIND_HANDOFF, KIND_TARGET) if tracking else (KIND_MOVED, KIND_HANDOFF)
    jumps = series.times[np.isin(series.kinds, kinds)]
    grid = [float(series.times[0])]
    while grid[-1] < t_end:
        s = grid[-1]
        j = int(np.searchsorted(jumps, s, side="right"))
        nxt = s + 1.0
        if j < len(jumps) and jumps[j] < nxt:
            nxt = float(jumps[j])
        grid.append(min(nxt, t_end))
    return grid


def increment_check(series: MartingaleSeries, t_end: float, tracking: bool = False) -> tuple[float, float]:
    """Largest ``|M(s) - M(sigma_n)|`` over ``sigma_n <= s <= sigma_{n+1}``, and the bound it must respect.

    M is piecewise linear between log entries, so the supremum over an
    interval is attained at an entry time (from either side) or an endpoint.
    """
    bound = 1.0 + (2.0 if tracking else 1.0) * series.D
    t_end = min(t_end, series.stop)
    grid = sigma_grid(series, t_end, tracking)
    worst = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        ma = series.value(a)
        inner = series.times[(series.times > a) & (series.times <= b)]
        cands = [series.value(b), series.left_limit(b)]
        for s in inner:
            cands.append(series.value(s))
            cands.append(series.left_limit(s))
        worst = max(worst, max(abs(c - ma) for c in cands))
    return worst, bound


def martingale_test(m_values: Sequence[float], m0: Sequence[float] | float) -> dict:
    """Is the mean of M(t) - M(0) within three standard errors of zero?"""
    diff = np.asarray(m_values, dtype=float) - np.asarray(m0, dtype=float)
    n = len(diff)
    mean = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    ok = abs(mean) <= 3 * se if se > 0 else mean == 0.0
    return {"n": n, "mean": mean, "stderr": se, "z": mean / se if se > 0 else 0.0, "pass": bool(ok)}


# -- geometry ---------------------------------------------------------------

def geometry_bounds_check(d: int, radius: int, K8: Optional[float] = None) -> dict:
    """Enumerate every offset lam - x with sup-norm at most ``radius``.

    Checks that the mean over the distance-reducing neighbours is at most
    -1/(4d) away from the target, and reports the smallest K8 for which the
    full mean gain is bounded by K8 / (||lam - x|| + 1) on the enumerated set.
    """
    check_dimension(d)
    if radius < 1:
        raise ValueError("radius must be at least 1")
    axes = [np.arange(-radius, radius + 1)] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d).astype(float)
    gains = _neighbour_gains(pts, d)
    g1 = gains.sum(axis=1) / (2 * d)
    g2 = np.where(gains < 0, gains, 0.0).sum(axis=1) / (2 * d)
    norm = np.sqrt(np.sum(pts * pts, axis=1))
    away = norm > 0
    k9 = 1.0 / (4 * d)
    viol_65 = int(np.count_nonzero(g2[away] > -k9))
    k8_floor = float(np.max(g1 * (norm + 1)))
    report = {
        "d": d,
        "radius": radius,
        "points": int(len(pts)),
        "K9": k9,
        "violations_drift": viol_65,
        "max_drift_away": float(g2[away].max()),
        "K8_floor": k8_floor,
        "max_abs_lhs": float(max(np.abs(g1).max(), np.abs(g2).max())),
    }
    if K8 is not None:
        report["K8"] = float(K8)
        report["violations_mean_gain"] = int(np.count_nonzero(g1 > K8 / (norm + 1)))
        report["violations_with_K8"] = int(np.count_nonzero(g2 > -k9 + K8 / (norm + 1)))
    report["pass"] = viol_65 == 0 and report["max_abs_lhs"] <= 1.0 and \
        (K8 is None or report["violations_mean_gain"] == 0)
    return report


def export_trace(path: DistinguishedPath, series: MartingaleSeries, out) -> None:
    """CSV rows (time, lambda coordinates, carrier id, event kind, M)."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"lambda_{i}" for i in range(path.d)] + ["rho_hat_id", "event_kind", "M_value"])
        for j, (t, kind, lam, rho, _, _) in enumerate(path.log):
            m = series.dist[j] - series.integral[j]
            w.writerow([repr(float(t))] + list(lam) + [rho, KIND_NAMES[kind], repr(float(m))])
    finally:
        if own:
            fh.close()
