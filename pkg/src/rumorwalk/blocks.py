"""Space-time block renormalisation diagnostics for the free walker field.

Geometry at scale r (all boxes half-open, edge ``delta = C0**(6r)``)::

    block       B_r(i, k)  = prod [i delta, (i+1) delta)   x [k delta, (k+1) delta)
    enlarged    Bt_r(i, k) = prod [(i-3) delta, (i+4) delta) x [(k-1) delta, (k+1) delta)
    base        V_r(i)     = prod [(i-3) delta, (i+4) delta), the pedestal sits at time (k-1) delta
    cube        Q_r(x)     = prod [x, x + C0**r)

A block is bad when some cube Q_r(x) inside Bt_r at an integer time holds
fewer than ``gamma_r * mu_A * C0**(d r)`` walkers.  Inside a parent
(r+1)-block, a child is inferior when the same holds counting only walkers
that sat in the parent's base at the parent's pedestal time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .rng import RngStream
from .walk import Box, FreeField, WalkParams, evolve_free_system, sample_initial_field


# -- constants --------------------------------------------------------------

@dataclass(frozen=True)
class GammaSchedule:
    gamma0: float
    C0: int
    values: tuple

    def __getitem__(self, r: int) -> float:
        """gamma_r for r >= 1."""
        if r < 1:
            raise IndexError("scales start at 1")
        return self.values[r - 1]

    @property
    def limit(self) -> float:
        """gamma_infinity, the limit of the schedule."""
        return self.gamma0 * math.exp(_log_inverse_product(self.C0)[1])


def gamma_schedule(gamma0: float, C0: int, r_max: int) -> GammaSchedule:
    if not gamma0 > 0:
        raise ValueError("gamma0 must be positive")
    if C0 < 2:
        raise ValueError("C0 must be at least 2")
    vals = [gamma0]
    prod = 1.0
    for j in range(1, r_max):
        prod *= 1.0 / (1.0 - C0 ** (-j / 4))
        vals.append(gamma0 * prod)
    return GammaSchedule(float(gamma0), int(C0), tuple(vals[:max(r_max, 0)]))


def _log_inverse_product(base: float, terms: int = 400) -> tuple[float, float]:
    """Bounds on log prod_{j>=1} (1 - base^(-j/4))^(-1).

    The first ``terms`` factors are summed exactly; the tail uses
    q <= -log(1-q) <= q/(1-q) with q = base^(-j/4).
    """
    qs = base ** (-np.arange(1, terms + 1) / 4.0)
    head = float(-np.sum(np.log1p(-qs)))
    q_next = base ** (-(terms + 1) / 4.0)
    ratio = base ** (-0.25)
    tail_lo = q_next / (1.0 - ratio)
    tail_hi = tail_lo / (1.0 - q_next)
    return head + tail_lo, head + tail_hi


def validate_constants(gamma0: float, C0: int, mu_A: float, d: int, r_max: int, C4: float = 1.0) -> dict:
    """Evaluate the three constraints on (gamma0, C0, mu_A) for r = 1..r_max.

    The report flags failures; it never raises for out-of-regime values.
    """
    lo, hi = _log_inverse_product(2.0)
    prod_lo, prod_hi = math.exp(lo), math.exp(hi)
    density = {
        "product_bounds": [prod_lo, prod_hi],
        "value_upper": gamma0 * prod_hi,
        "pass": bool(gamma0 > 0 and gamma0 * prod_hi <= 0.5),
    }
    fluct = []
    count = []
    for r in range(1, r_max + 1):
        a = C0 ** (-r / 2)
        lhs = a - (1 - C4 * (r * math.log(C0)) ** d / C0 ** r) * (1 - math.exp(-a)) / (1 - C0 ** (-r / 4))
        rhs = -0.5 * C0 ** (-3 * r / 4)
        fluct.append({"r": r, "lhs": lhs, "rhs": rhs, "pass": bool(lhs <= rhs)})
        log_lhs = ((d + 1) * math.log(3) + 6 * (d + 1) * (r + 1) * math.log(C0)
                   - 0.5 * gamma0 * mu_A * C0 ** ((d - 0.75) * r))
        count.append({"r": r, "log_lhs": log_lhs, "lhs": _safe_exp(log_lhs), "pass": bool(log_lhs <= 0)})
    sched = gamma_schedule(gamma0, C0, r_max) if gamma0 > 0 and C0 >= 2 else None
    report = {
        "gamma0": gamma0, "C0": C0, "mu_A": mu_A, "d": d, "r_max": r_max, "C4": C4,
        "density": density,
        "fluctuation": fluct,
        "block_count": count,
        "gamma": list(sched.values) if sched else [],
        "gamma_limit": sched.limit if sched else None,
    }
    report["regime_ok"] = density["pass"] and all(e["pass"] for e in fluct) and all(e["pass"] for e in count)
    return report


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 700 else math.inf


@dataclass(frozen=True)
class RhoBound:
    value: float
    log_value: float
    vacuous: bool


def rho_bound(r: int, C0: int, schedule: GammaSchedule, mu_A: float, d: int) -> RhoBound:
    """3^(d+1) C0^(6(d+1)(r+1)) exp(-gamma_r mu_A C0^((d-3/4) r) / 2); vacuous when above 1."""
    if r < 1:
        raise ValueError("r must be at least 1")
    log_v = ((d + 1) * math.log(3) + 6 * (d + 1) * (r + 1) * math.log(C0)
             - 0.5 * schedule[r] * mu_A * C0 ** ((d - 0.75) * r))
    return RhoBound(_safe_exp(log_v), log_v, log_v > 0)


def scale_R(t: float, K4: float, C0: int, d: int) -> int:
    """The integer R with C0^R >= (K4 log t)^(1/d) > C0^(R-1)."""
    if t <= 1:
        raise ValueError("t must exceed 1")
    if K4 <= 0:
        raise ValueError("K4 must be positive")
    target = (K4 * math.log(t)) ** (1.0 / d)
    R = math.ceil(math.log(target) / math.log(C0))
    while float(C0) ** R < target:
        R += 1
    while float(C0) ** (R - 1) >= target:
        R -= 1
    return R


# -- geometry ---------------------------------------------------------------

def delta(C0: int, r: int) -> int:
    return int(C0) ** (6 * r)


def cube_edge(C0: int, r: int) -> int:
    return int(C0) ** r


def threshold(schedule: GammaSchedule, r: int, mu_A: float, d: int) -> float:
    return schedule[r] * mu_A * cube_edge(schedule.C0, r) ** d


def base_box(i: Sequence[int], C0: int, r: int) -> Box:
    """V_r(i), the spatial extent of the enlarged block."""
    D = delta(C0, r)
    return Box(tuple((c - 3) * D for c in i), tuple((c + 4) * D for c in i))


def time_range(k: int, C0: int, r: int) -> tuple[int, int]:
    """Integer times of the enlarged block, as a half-open range."""
    D = delta(C0, r)
    return (k - 1) * D, (k + 1) * D


def pedestal_time(k: int, C0: int, r: int) -> int:
    return (k - 1) * delta(C0, r)


@dataclass
class BlockLabel:
    r: int
    i: tuple
    k: int
    bad: bool
    inferior: Optional[bool] = None
    pedestal_bad: Optional[bool] = None

    @property
    def label(self) -> str:
        return "bad" if self.bad else "good"

    @property
    def pedestal_label(self) -> Optional[str]:
        return None if self.pedestal_bad is None else ("bad" if self.pedestal_bad else "good")


# -- direct counts ----------------------------------------------------------

def _positions_at(field: FreeField, v: float) -> np.ndarray:
    return field.snapshot(float(v))


def count_U(field: FreeField, x: Sequence[int], v: int, r: int, C0: int) -> int:
    """Walkers in the cube Q_r(x) at integer time v."""
    pos = _positions_at(field, v)
    x = np.asarray(x, dtype=np.int64)
    inside = np.all((pos >= x) & (pos < x + cube_edge(C0, r)), axis=1)
    return int(np.count_nonzero(inside))


def _origin_mask(field: FreeField, parent: tuple, C0: int, r: int) -> np.ndarray:
    I, K = parent
    t_ped = pedestal_time(K, C0, r + 1)
    try:
        ped = field.snapshot(float(t_ped))
    except KeyError:
        raise ValueError(f"no snapshot at the parent's pedestal time {t_ped}") from None
    box = base_box(I, C0, r + 1)
    return np.all((ped >= np.asarray(box.lo)) & (ped < np.asarray(box.hi)), axis=1)


def count_W(field: FreeField, x: Sequence[int], v: int, r: int, parent: tuple, C0: int) -> int:
    """Like :func:`count_U`, counting only walkers that sat in the parent's base at its pedestal time."""
    I, K = parent
    if v < pedestal_time(K, C0, r + 1):
        raise ValueError("v precedes the parent's pedestal time")
    pos = _positions_at(field, v)
    x = np.asarray(x, dtype=np.int64)
    inside = np.all((pos >= x) & (pos < x + cube_edge(C0, r)), axis=1)
    return int(np.count_nonzero(inside & _origin_mask(field, parent, C0, r)))


def _cube_counts(pos: np.ndarray, lo: np.ndarray, shape: tuple, edge: int) -> np.ndarray:
    """Cube totals for every corner x with the whole cube inside ``[lo, lo+shape)``."""
    occ = np.zeros(shape, dtype=np.int64)
    rel = pos - lo
    keep = np.all((rel >= 0) & (rel < np.asarray(shape)), axis=1)
    np.add.at(occ, tuple(rel[keep].T), 1)
    return box_sums(occ, edge)


def _scan_min(field: FreeField, idx: tuple, r: int, C0: int, times, mask=None) -> int:
    i, k = idx
    box = base_box(i, C0, r)
    lo = np.asarray(box.lo)
    edge = cube_edge(C0, r)
    best = None
    for v in times:
        pos = _positions_at(field, v)
        if mask is not None:
            pos = pos[mask]
        m = int(_cube_counts(pos, lo, box.shape, edge).min())
        best = m if best is None else min(best, m)
    return best


def classify_block(field: FreeField, idx: tuple, r: int, schedule: GammaSchedule,
                   parent: Optional[tuple] = None) -> BlockLabel:
    """Label one block by scanning every integer time of its enlarged box.

    ``field`` must hold snapshots at each of those times.  With ``parent``
    the inferior flag is also set.
    """
    i, k = tuple(idx[0]), int(idx[1])
    C0 = schedule.C0
    d = field.params.d
    thr = threshold(schedule, r, field.params.mu_A, d)
    t0, t1 = time_range(k, C0, r)
    bad = _scan_min(field, (i, k), r, C0, range(t0, t1)) < thr
    ped = _scan_min(field, (i, k), r, C0, [t0]) < thr
    inferior = None
    if parent is not None:
        mask = _origin_mask(field, parent, C0, r)
        inferior = _scan_min(field, (i, k), r, C0, range(t0, t1), mask) < thr
    return BlockLabel(r, i, k, bool(bad), None if inferior is None else bool(inferior), bool(ped))


def classify_pedestal(field: FreeField, idx: tuple, r: int, schedule: GammaSchedule) -> str:
    i, k = tuple(idx[0]), int(idx[1])
    thr = threshold(schedule, r, field.params.mu_A, field.params.d)
    t0 = pedestal_time(k, schedule.C0, r)
    return "bad" if _scan_min(field, (i, k), r, schedule.C0, [t0]) < thr else "good"


# -- streaming analysis -------------------------------------------------------

def box_sums(counts: np.ndarray, edge: int) -> np.ndarray:
    """Sums over every axis-aligned cube of side ``edge`` fully inside ``counts``."""
    out = np.asarray(counts, dtype=np.int64)
    for ax in range(out.ndim):
        c = np.cumsum(out, axis=ax)
        head = np.take(c, [edge - 1], axis=ax)
        hi = np.take(c, np.arange(edge, c.shape[ax]), axis=ax)
        lo = np.take(c, np.arange(0, c.shape[ax] - edge), axis=ax)
        out = np.concatenate([head, hi - lo], axis=ax)
    return out


def window_min(u: np.ndarray, n_blocks: int, D: int, edge: int) -> np.ndarray:
    """Per-block minimum of cube sums over each enlarged window.

    ``u`` holds cube sums indexed by corner relative to ``(j_lo - 3) D``, read
    from counts on ``[(j_lo - 3) D, (j_lo + n_blocks + 3) D)``.  The window
    of block ``j_lo + a`` covers corners ``[a D, (a + 7) D - edge]``: six whole
    chunks of length D and the head of a seventh.  The minimum over a product
    of intervals is taken one axis at a time.
    """
    head = D - edge + 1
    big = np.iinfo(np.int64).max
    for ax in range(u.ndim):
        u = np.moveaxis(u, ax, 0)
        rest = u.shape[1:]
        padded = np.full(((n_blocks + 6) * D,) + rest, big, dtype=np.int64)
        padded[: len(u)] = u
        full = padded[: (n_blocks + 5) * D].reshape((n_blocks + 5, D) + rest).min(axis=1)
        acc = padded[6 * D:].reshape((n_blocks, D) + rest)[:, :head].min(axis=1)
        for s in range(6):
            acc = np.minimum(acc, full[s: s + n_blocks])
        u = np.moveaxis(acc, 0, ax)
    return u


@dataclass
class ParentAnalysis:
    """Labels of one (r+1)-block and all of its r-children from a single field history."""

    C0: int
    d: int
    r: int
    parent: BlockLabel
    children_i: np.ndarray      # (d, n): child spatial indices along each axis
    children_k: np.ndarray      # child time indices
    min_U: np.ndarray           # shape (n,)*d + (n_k,)
    min_W: np.ndarray
    ped_U: np.ndarray
    threshold_child: float
    threshold_parent: float
    wu_points: int = 0
    wu_violations: int = 0
    parent_slices: int = 0
    labels: dict = field(default_factory=dict)

    @property
    def bad(self) -> np.ndarray:
        return self.min_U < self.threshold_child

    @property
    def inferior(self) -> np.ndarray:
        return self.min_W < self.threshold_child

    @property
    def pedestal_bad(self) -> np.ndarray:
        return self.ped_U < self.threshold_child

    def build_labels(self) -> dict:
        labels = {(self.r + 1, self.parent.i, self.parent.k): self.parent}
        bad, inf, ped = self.bad, self.inferior, self.pedestal_bad
        n = self.children_i.shape[1]
        for flat in np.ndindex(*((n,) * self.d)):
            i = tuple(int(self.children_i[ax, a]) for ax, a in enumerate(flat))
            for b, k in enumerate(self.children_k):
                key = flat + (b,)
                labels[(self.r, i, int(k))] = BlockLabel(self.r, i, int(k), bool(bad[key]),
                                                         bool(inf[key]), bool(ped[key]))
        self.labels = labels
        return labels

    def exact_checks(self) -> dict:
        bad, inf, ped = self.bad, self.inferior, self.pedestal_bad
        return {
            "w_le_u_points": self.wu_points,
            "w_le_u_violations": self.wu_violations,
            "bad_not_inferior": int(np.count_nonzero(bad & ~inf)),
            "good_with_bad_pedestal": int(np.count_nonzero(~bad & ped))
            + int((not self.parent.bad) and bool(self.parent.pedestal_bad)),
            "n_children": int(bad.size),
            "n_bad_children": int(np.count_nonzero(bad)),
            "n_inferior_children": int(np.count_nonzero(inf)),
        }


def analysis_field(params: WalkParams, parent: tuple, C0: int, r: int, rng: RngStream, margin_k: float = 5.0) -> FreeField:
    """Poisson field at the parent's pedestal time on its base plus a diffusion margin."""
    I, K = parent
    box = base_box(I, C0, r + 1)
    span = 2 * delta(C0, r + 1)
    margin = math.ceil(margin_k * 3 * math.sqrt(params.rate_A * span)) + cube_edge(C0, r + 1)
    window = Box(tuple(l - margin for l in box.lo), tuple(h + margin for h in box.hi))
    return sample_initial_field(window, params, rng, t0=float(pedestal_time(K, C0, r + 1)))


def analyze_parent(field: FreeField, rng: RngStream, parent: tuple, r: int, schedule: GammaSchedule,
                   stop_parent_early: bool = True, work_budget: float = 2e9,
                   on_slice: Optional[Callable[[int, FreeField], None]] = None,
                   backend=None) -> ParentAnalysis:
    """Stream the free field through one (r+1)-block, labelling it and every r-child.

    The field must sit at the parent's pedestal time.  At each integer time the
    occupancy of the relevant region is read once and reduced to per-block
    minima, so no history is stored.  Every cube count of a child is compared
    with its restricted count (walkers from the parent's base) as it is read.
    """
    C0 = schedule.C0
    d = field.params.d
    mu = field.params.mu_A
    I, K = tuple(parent[0]), int(parent[1])
    r1 = r + 1
    D, D1 = delta(C0, r), delta(C0, r1)
    e, e1 = cube_edge(C0, r), cube_edge(C0, r1)
    n = C0 ** 6
    t_ped = pedestal_time(K, C0, r1)
    if field.time != t_ped:
        raise ValueError("field must sit at the parent's pedestal time")

    pbox = base_box(I, C0, r1)
    first_child = [c * n for c in I]
    cbox = Box(tuple((c - 3) * D for c in first_child), tuple((c + n + 3) * D for c in first_child))
    p0, p1 = time_range(K, C0, r1)
    c0, c1 = K * D1 - D, (K + 1) * D1
    work = pbox.size * (p1 - p0) + cbox.size * (c1 - c0)
    if work > work_budget:
        raise ValueError(f"scan of {work:.3g} cells exceeds the work budget {work_budget:.3g}")
    if field.window is not None:
        for l, h, wl, wh in zip(pbox.lo, pbox.hi, field.window.lo, field.window.hi):
            if l < wl or h > wh:
                raise ValueError("field window does not cover the parent's base")

    eng = field.engine(rng.key, backend)
    origin_in = np.all((field.origin >= np.asarray(pbox.lo)) & (field.origin < np.asarray(pbox.hi)), axis=1)
    eng.set_marks(origin_in.astype(np.uint8))

    thr_c = threshold(schedule, r, mu, d)
    thr_p = threshold(schedule, r1, mu, d)
    ks = np.arange(K * n, (K + 1) * n)
    shape = (n,) * d + (n,)
    min_U = np.full(shape, np.iinfo(np.int64).max, dtype=np.int64)
    min_W = min_U.copy()
    ped_U = min_U.copy()
    parent_min = None
    parent_ped = None
    parent_bad = False
    wu_points = wu_viol = 0
    parent_slices = 0

    for v in range(p0, p1):
        scan_parent = not (parent_bad and stop_parent_early)
        if not scan_parent and v < c0:
            continue
        evolve_free_system(field, v, rng, backend)
        if on_slice is not None:
            on_slice(v, field)
        if scan_parent:
            u = box_sums(field.occupancy(pbox), e1)
            m = int(window_min(u, 1, D1, e1).min())
            parent_slices += 1
            parent_min = m if parent_min is None else min(parent_min, m)
            if v == t_ped:
                parent_ped = m
            parent_bad = parent_min < thr_p
        if v >= c0:
            uc = box_sums(field.occupancy(cbox), e)
            wc = box_sums(field.occupancy(cbox, marked=True), e)
            wu_points += uc.size
            wu_viol += int(np.count_nonzero(wc > uc))
            mu_slice = window_min(uc, n, D, e)
            mw_slice = window_min(wc, n, D, e)
            q = v // D
            for qq in (q, q + 1):
                b = qq - K * n
                if 0 <= b < n and (qq - 1) * D <= v < (qq + 1) * D:
                    sl = (Ellipsis, b)
                    np.minimum(min_U[sl], mu_slice, out=min_U[sl])
                    np.minimum(min_W[sl], mw_slice, out=min_W[sl])
                    if v == (qq - 1) * D:
                        ped_U[sl] = mu_slice

    plabel = BlockLabel(r1, I, K, bool(parent_bad), None, bool(parent_ped < thr_p))
    children_i = np.array([np.arange(c, c + n) for c in first_child])
    return ParentAnalysis(C0, d, r, plabel, children_i, ks, min_U, min_W, ped_U, thr_c, thr_p,
                          wu_points, wu_viol, parent_slices)


# -- path counters ----------------------------------------------------------

@dataclass
class SpaceTimePath:
    """Piecewise-constant path: ``positions[m]`` is held on ``[times[m], times[m+1])``."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        if len(self.times) != len(self.positions) + 1:
            raise ValueError("need one more time than positions")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be non-decreasing")


def sample_walk_path(start: Sequence[int], s0: float, s1: float, rate: float, gen: np.random.Generator) -> SpaceTimePath:
    """A rate-``rate`` simple random walk from ``start`` over ``[s0, s1)``."""
    d = len(start)
    n = gen.poisson(rate * (s1 - s0))
    jt = np.sort(gen.uniform(s0, s1, size=n))
    axis = gen.integers(0, d, size=n)
    sign = gen.choice(np.array([-1, 1]), size=n)
    steps = np.zeros((n, d), dtype=np.int64)
    steps[np.arange(n), axis] = sign
    pos = np.vstack([np.asarray(start, dtype=np.int64)[None, :], np.asarray(start) + np.cumsum(steps, axis=0)])
    return SpaceTimePath(np.concatenate([[s0], jt, [s1]]), pos)


def blocks_on_path(path: SpaceTimePath, C0: int, r: int) -> set:
    """Distinct (i, k) with some point of the path in B_r(i, k)."""
    D = delta(C0, r)
    t0, t1 = path.times[:-1], path.times[1:]
    live = t1 > t0
    t0, t1, pos = t0[live], t1[live], path.positions[live]
    i = np.floor_divide(pos, D)
    k0 = np.floor(t0 / D).astype(np.int64)
    k1 = np.ceil(t1 / D).astype(np.int64) - 1
    span = k1 - k0 + 1
    rows = np.repeat(np.arange(len(k0)), span)
    ks = k0[rows] + (np.arange(len(rows)) - np.repeat(np.cumsum(span) - span, span))
    keys = np.column_stack([i[rows], ks])
    keys = np.unique(keys, axis=0)
    return {(tuple(int(c) for c in row[:-1]), int(row[-1])) for row in keys}


def _lookup(labels: dict, r: int, key) -> BlockLabel:
    try:
        return labels[(r, key[0], key[1])]
    except KeyError:
        raise ValueError(f"no label for {r}-block {key}") from None


def phi_along_path(path: SpaceTimePath, labels: dict, r: int, C0: int) -> int:
    """Number of distinct bad r-blocks the path meets."""
    return sum(_lookup(labels, r, key).bad for key in blocks_on_path(path, C0, r))


def _has_bad_child(labels: dict, r: int, key, C0: int, cache: dict) -> bool:
    if key in cache:
        return cache[key]
    n = C0 ** 6
    I, K = key
    found = False
    for j in np.ndindex(*((n,) * len(I))):
        i = tuple(c * n + a for c, a in zip(I, j))
        for q in range(K * n, (K + 1) * n):
            if _lookup(labels, r, (i, q)).bad:
                found = True
                break
        if found:
            break
    cache[key] = found
    return found


def psi_along_path(path: SpaceTimePath, labels: dict, r: int, C0: int, cache: Optional[dict] = None) -> int:
    """Number of (r+1)-blocks met by the path that have a good pedestal and a bad r-child."""
    cache = {} if cache is None else cache
    total = 0
    for key in blocks_on_path(path, C0, r + 1):
        lab = _lookup(labels, r + 1, key)
        if lab.pedestal_bad is None:
            raise ValueError(f"no pedestal label for {r + 1}-block {key}")
        if not lab.pedestal_bad and _has_bad_child(labels, r, key, C0, cache):
            total += 1
    return total


@dataclass
class RecursionCheck:
    phi_r: int
    phi_r1: int
    psi_r1: int
    factor: int

    @property
    def rhs(self) -> int:
        return self.factor * (self.phi_r1 + self.psi_r1)

    @property
    def slack(self) -> int:
        return self.rhs - self.phi_r

    @property
    def holds(self) -> bool:
        return self.phi_r <= self.rhs

    def __bool__(self):
        return self.holds


def check_recursion(path: SpaceTimePath, labels: dict, r: int, C0: int, d: int,
                    cache: Optional[dict] = None) -> RecursionCheck:
    """phi_r <= C0^(6(d+1)) (phi_{r+1} + psi_{r+1}) along one path."""
    return RecursionCheck(phi_along_path(path, labels, r, C0), phi_along_path(path, labels, r + 1, C0),
                          psi_along_path(path, labels, r, C0, cache), C0 ** (6 * (d + 1)))


def export_labels(labels: dict, out, d: int) -> None:
    """CSV rows (r, i_1..i_d, k, label, inferior, pedestal_label) sorted by block."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r"] + [f"i_{a + 1}" for a in range(d)] + ["k", "label", "inferior", "pedestal_label"])
        for key in sorted(labels):
            lab = labels[key]
            inf = "" if lab.inferior is None else str(lab.inferior).lower()
            w.writerow([lab.r, *lab.i, lab.k, lab.label, inf, lab.pedestal_label or ""])
    finally:
        if own:
            fh.close()
