"""The interacting A/B system: set-up, event loop, infected region and monotone coupling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import _backend
from .lattice import as_site
from .records import ExperimentRecord, Snapshot, fingerprint
from .rng import RngStream
from .walk import Box, WalkParams, sample_initial_field

TYPE_A = 0
TYPE_B = 1


@dataclass(frozen=True)
class SimConfig:
    params: WalkParams = field(default_factory=WalkParams)
    b_seeds: tuple = ((0,),)
    t_max: float = 50.0
    window_margin: float = 10.0
    kappa: float = 4.0
    empty_seed_sites: bool = False

    def __post_init__(self):
        seeds = tuple(as_site(s) for s in self.b_seeds)
        if not seeds:
            raise ValueError("at least one B seed is required")
        if any(len(s) != self.params.d for s in seeds):
            raise ValueError("seed dimension does not match params.d")
        if self.t_max < 0 or self.window_margin < 0 or self.kappa < 0:
            raise ValueError("t_max, window_margin and kappa must be non-negative")
        object.__setattr__(self, "b_seeds", seeds)

    @property
    def window_radius(self) -> int:
        p = self.params
        return math.ceil(self.kappa * (p.rate_A + p.rate_B + 1.0) * self.t_max + self.window_margin)

    @property
    def window(self) -> Box:
        return Box.cube(self.window_radius, self.params.d)

    def settings(self) -> dict:
        p = self.params
        return {
            "d": p.d, "rate_A": p.rate_A, "rate_B": p.rate_B, "mu_A": p.mu_A,
            "b_seeds": [list(s) for s in self.b_seeds], "t_max": self.t_max,
            "window_margin": self.window_margin, "kappa": self.kappa,
            "empty_seed_sites": self.empty_seed_sites,
        }


class EventRecord(NamedTuple):
    time: float
    particle: int
    source: tuple
    target: tuple
    converted: tuple


class SimState:
    """One replica: the event engine plus the configuration that produced it."""

    def __init__(self, cfg: SimConfig, rng: RngStream, ids, pos, types, window: Box, backend=None, now=0.0):
        self.cfg = cfg
        self.rng = rng
        self.window = window
        self.backend = backend
        cls = _backend.engine_class(backend)
        p = cfg.params
        self.engine = cls(p.d, p.rate_A, p.rate_B, rng.key, ids, pos, types, now=now)
        self.initial = Snapshot(float(now), np.asarray(ids, dtype=np.int64).copy(),
                                np.asarray(pos, dtype=np.int64).reshape(-1, p.d).copy(),
                                np.asarray(types, dtype=np.int8).copy())

    @property
    def d(self) -> int:
        return self.cfg.params.d

    @property
    def now(self) -> float:
        return self.engine.now

    @property
    def n_particles(self) -> int:
        return self.engine.n

    def snapshot(self) -> Snapshot:
        ids = self.engine.ids
        order = np.argsort(ids, kind="stable")
        return Snapshot(self.now, ids[order], self.engine.positions()[order], self.engine.types()[order])

    def counts(self, site) -> tuple[int, int]:
        return self.engine.site_counts(as_site(site))

    def b_positions(self) -> np.ndarray:
        return self.engine.positions()[self.engine.types() == TYPE_B]

    def a_positions(self) -> np.ndarray:
        return self.engine.positions()[self.engine.types() == TYPE_A]


def init_simulation(cfg: SimConfig, rng: RngStream, backend=None) -> SimState:
    """Sample the A field on the window, then drop the B seeds and convert their sites.

    With ``empty_seed_sites`` the field is conditioned to leave seed sites
    empty, so the time-0 B population is exactly the seeds.
    """
    window = cfg.window
    for s in cfg.b_seeds:
        if not window.contains(s):
            raise ValueError(f"seed {s} lies outside the sampled window C({cfg.window_radius})")
    field_ = sample_initial_field(window, cfg.params, rng)
    seeds = np.asarray(cfg.b_seeds, dtype=np.int64).reshape(-1, cfg.params.d)
    seeded = {tuple(s) for s in seeds.tolist()}
    fpos = field_.positions
    at_seed = np.fromiter((tuple(x) in seeded for x in fpos.tolist()), bool, count=len(fpos))
    if cfg.empty_seed_sites:
        fpos, at_seed = fpos[~at_seed], at_seed[~at_seed]
    n = len(fpos)
    pos = np.concatenate([fpos, seeds])
    ids = np.arange(len(pos), dtype=np.int64)
    types = np.zeros(len(pos), dtype=np.int8)
    types[n:] = TYPE_B
    types[:n][at_seed] = TYPE_B
    return SimState(cfg, rng, ids, pos, types, window, backend=backend)


def step_event(state: SimState, rng: Optional[RngStream] = None) -> Optional[EventRecord]:
    """Process the earliest pending jump; None when nothing is left before ``t_max``."""
    if state.engine.peek_time() > state.cfg.t_max:
        return None
    out = state.engine.step()
    if out is None:
        return None
    t, pid, old, new, conv = out
    return EventRecord(t, pid, tuple(old), tuple(new), tuple(conv))


def epoch_grid(t_max: float, n_linear: int = 40, n_geometric: int = 8) -> list[float]:
    """Sampling times: a geometric run dense near 0 merged with an even grid."""
    if t_max <= 0:
        return [0.0]
    pts = {0.0, float(t_max)}
    pts.update(k * t_max / n_linear for k in range(1, n_linear))
    pts.update(t_max * 2.0 ** -j for j in range(1, n_geometric + 1))
    return sorted(pts)


def observe(state: SimState, half_region_speed: float = 0.5) -> dict:
    eng = state.engine
    pos = eng.positions()
    types = eng.types()
    bpos = pos[types == TYPE_B]
    apos = pos[types == TYPE_A]
    out = {
        "n_infected_sites": eng.n_infected,
        "n_B_particles": int(len(bpos)),
        "R": None,
        "L": None,
        "max_norm_B": int(np.abs(bpos).max()) if len(bpos) else None,
    }
    if state.d == 1 and len(bpos):
        out["R"] = int(bpos[:, 0].max())
        out["L"] = int(-bpos[:, 0].min())
    radius = half_region_speed * state.now / 2.0
    if len(apos):
        inside = np.all(np.abs(apos) <= radius, axis=1)
        out["n_A_in_half_region"] = int(len(np.unique(apos[inside], axis=0))) if inside.any() else 0
    else:
        out["n_A_in_half_region"] = 0
    return out


def min_norm_A(state: SimState) -> float:
    apos = state.a_positions()
    return float(np.abs(apos).max(axis=1).min()) if len(apos) else math.inf


def new_record(state: SimState, replica: int = 0) -> ExperimentRecord:
    return ExperimentRecord(fingerprint(state.cfg.settings()), state.d, replica)


def run_until(
    state: SimState,
    t: float,
    rng: Optional[RngStream] = None,
    epochs: Optional[Iterable[float]] = None,
    record: Optional[ExperimentRecord] = None,
    half_region_speed: float = 0.5,
    keep_snapshots: bool = False,
    on_epoch: Optional[Callable[[SimState], None]] = None,
) -> ExperimentRecord:
    """Process every event up to ``t``, observing the state at each epoch in ``[now, t]``."""
    if t > state.cfg.t_max:
        raise ValueError(f"t={t} exceeds t_max={state.cfg.t_max}")
    if t < state.now:
        raise ValueError("cannot run backwards")
    if record is None:
        record = new_record(state)
    grid = sorted({float(e) for e in (epochs if epochs is not None else [t]) if state.now <= e <= t})
    if not record.epochs and (not grid or grid[0] > state.now):
        grid.insert(0, state.now)
    for e in grid:
        state.engine.advance(e)
        extra = {"min_norm_A": min_norm_A(state)}
        snap = state.snapshot() if keep_snapshots else None
        record.add(e, observe(state, half_region_speed), snap, extra)
        if on_epoch is not None:
            on_epoch(state)
    state.engine.advance(t)
    return record


def infected_region(state: SimState, t: float) -> set:
    """Sites visited by a B-particle during ``[0, t]``."""
    if t > state.now:
        raise ValueError("t lies beyond the simulated time")
    sites, times = state.engine.first_visits()
    return {tuple(int(c) for c in x) for x, s in zip(sites.tolist(), times) if s <= t}


def check_state(state: SimState) -> list[str]:
    """Exact invariants of a live state; returns a list of violations (empty when sound)."""
    problems = []
    eng = state.engine
    pos = eng.positions()
    types = eng.types()
    switch = eng.switch_times()
    if len(pos):
        _, inv = np.unique(pos, axis=0, return_inverse=True)
        inv = inv.ravel()
        has_a = np.bincount(inv, weights=(types == TYPE_A), minlength=inv.max() + 1) > 0
        has_b = np.bincount(inv, weights=(types == TYPE_B), minlength=inv.max() + 1) > 0
        if np.any(has_a & has_b):
            problems.append("a site holds both A and B particles")
    if np.any(np.isnan(switch[types == TYPE_B])) or np.any(~np.isnan(switch[types == TYPE_A])):
        problems.append("switch times inconsistent with types")
    if np.any(switch[types == TYPE_B] > eng.now):
        problems.append("switch time in the future")
    sites, times = eng.first_visits()
    if np.any(times > eng.now):
        problems.append("first visit recorded in the future")
    bsites = {tuple(x) for x in pos[types == TYPE_B].tolist()}
    visited = {tuple(x) for x in sites.tolist()}
    if not bsites <= visited:
        problems.append("occupied B site missing from the first-visit field")
    if eng.n != state.initial.ids.size:
        problems.append("particle count changed")
    return problems


def snapshot_json(state: SimState) -> dict:
    snap = state.snapshot()
    sites, times = state.engine.first_visits()
    return {
        "time": state.now,
        "particles": [
            {"id": int(i), "pos": [int(c) for c in p], "type": "B" if t == TYPE_B else "A"}
            for i, p, t in zip(snap.ids, snap.pos, snap.types)
        ],
        "first_visit": [{"site": [int(c) for c in x], "time": float(s)} for x, s in zip(sites.tolist(), times)],
    }


# -- monotone coupling -----------------------------------------------------

def derive_state(state: SimState, keep: np.ndarray, types: np.ndarray) -> SimState:
    """A fresh replica started from a modified copy of ``state``'s initial configuration.

    The copy keeps the particles selected by ``keep`` with the given ``types``
    and shares the random stream, so every shared particle follows the same path.
    """
    init = state.initial
    keep = np.asarray(keep, dtype=bool)
    return SimState(state.cfg, state.rng, init.ids[keep], init.pos[keep], np.asarray(types)[keep],
                    state.window, backend=state.backend, now=init.time)


def remove_site(state: SimState, site) -> SimState:
    init = state.initial
    keep = ~np.all(init.pos == np.asarray(site), axis=1)
    return derive_state(state, keep, init.types)


def demote_site(state: SimState, site) -> SimState:
    """Turn every particle at ``site`` into an A-particle."""
    init = state.initial
    types = init.types.copy()
    types[np.all(init.pos == np.asarray(site), axis=1)] = TYPE_A
    return derive_state(state, np.ones(len(types), bool), types)


def dominated(low: Snapshot, high: Snapshot) -> bool:
    """Low particles form a subset of high ones at equal positions, and A in high implies A in low."""
    idx = np.searchsorted(high.ids, low.ids)
    if np.any(idx >= len(high.ids)):
        return False
    if not np.array_equal(high.ids[idx], low.ids):
        return False
    if not np.array_equal(high.pos[idx], low.pos):
        return False
    return not np.any((high.types[idx] == TYPE_A) & (low.types != TYPE_A))


def coupled_run(low: SimState, high: SimState, epochs: Sequence[float], t: Optional[float] = None):
    """Run two replicas driven by the same per-particle randomness.

    Shared ids consume identical clocks and jump directions, so with equal
    jump rates every shared particle has the same path in both systems.
    """
    for s in (low, high):
        if s.cfg.params.rate_A != s.cfg.params.rate_B:
            raise ValueError("coupling needs equal A and B jump rates")
    if low.engine.key != high.engine.key:
        raise ValueError("coupled systems must share one random stream")
    if low.now != high.now or not dominated(low.snapshot(), high.snapshot()):
        raise ValueError("initial states violate the containment ordering")
    t = max(epochs) if t is None else t
    rec_low = run_until(low, t, epochs=epochs, keep_snapshots=True)
    rec_high = run_until(high, t, epochs=epochs, keep_snapshots=True)
    return rec_low, rec_high


def check_domination(rec_low: ExperimentRecord, rec_high: ExperimentRecord) -> bool:
    if rec_low.epochs != rec_high.epochs or len(rec_low.snapshots) != len(rec_low.epochs) \
            or len(rec_high.snapshots) != len(rec_high.epochs):
        raise ValueError("records do not share their sampling epochs")
    return all(dominated(lo, hi) for lo, hi in zip(rec_low.snapshots, rec_high.snapshots))
