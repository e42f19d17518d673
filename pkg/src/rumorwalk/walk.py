"""Continuous-time simple random walks and the free (non-interacting) walker system."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .lattice import check_dimension, neighbor_offsets
from .rng import RngStream, holding_time, uniform_array, draw_bits_array


@dataclass(frozen=True)
class WalkParams:
    d: int = 1
    rate_A: float = 1.0
    rate_B: float = 1.0
    mu_A: float = 1.0

    def __post_init__(self):
        check_dimension(self.d)
        if self.rate_A < 0 or self.rate_B < 0:
            raise ValueError("jump rates must be non-negative")
        if not self.mu_A > 0:
            raise ValueError("mu_A must be positive")


@dataclass(frozen=True)
class Box:
    """Half-open box of sites ``[lo, hi)``."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @classmethod
    def cube(cls, radius: int, d: int) -> "Box":
        """The closed cube C(radius) as a half-open box."""
        r = int(radius)
        return cls((-r,) * d, (r + 1,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 0

    def sites(self) -> np.ndarray:
        """All sites in scan order (first coordinate slowest) as an (n, d) array."""
        axes = [np.arange(l, h, dtype=np.int64) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)

    def contains(self, x: Sequence[int]) -> bool:
        return all(l <= c < h for l, c, h in zip(self.lo, x, self.hi))

    def shrink(self, margin: int) -> "Box":
        return Box(tuple(l + margin for l in self.lo), tuple(h - margin for h in self.hi))


class FreeField:
    """Walkers of the free system P*: rate-``rate_A`` walks with no interaction.

    The field owns its walkers' clocks once it has been evolved, so repeated
    calls to :func:`evolve_free_system` continue the same trajectories.
    ``snapshots`` maps a time to the positions held at that time.
    """

    def __init__(self, params: WalkParams, ids, positions, time=0.0, window: Optional[Box] = None):
        self.params = params
        self.ids = np.asarray(ids, dtype=np.int64)
        self._positions = np.asarray(positions, dtype=np.int64).reshape(len(self.ids), params.d)
        self.origin = self._positions.copy()
        self.t0 = float(time)
        self.time = float(time)
        self.window = window
        self.snapshots: dict[float, np.ndarray] = {}
        self._engine = None
        self._key = None

    def __len__(self):
        return len(self.ids)

    @property
    def positions(self) -> np.ndarray:
        if self._engine is not None:
            return self._engine.positions()
        return self._positions

    def engine(self, key: int, backend=None):
        if self._engine is None:
            cls = _backend.engine_class(backend)
            types = np.zeros(len(self.ids), dtype=np.int8)
            rate = self.params.rate_A
            self._engine = cls(self.params.d, rate, rate, key, self.ids, self._positions, types, now=self.time)
            self._key = key
        elif key != self._key:
            raise ValueError("field already evolves under a different random stream")
        return self._engine

    def occupancy(self, box: Box, marked: bool = False) -> np.ndarray:
        """Counts N*(x, time) on ``box`` as an array of shape ``box.shape``."""
        if self._engine is not None:
            return self._engine.occupancy(box.lo, box.shape, marked)
        out = np.zeros(box.shape, dtype=np.int32)
        rel = self._positions - np.asarray(box.lo)
        keep = np.all((rel >= 0) & (rel < np.asarray(box.shape)), axis=1)
        np.add.at(out, tuple(rel[keep].T), 1)
        return out

    def record_snapshot(self) -> np.ndarray:
        snap = self.positions.copy()
        self.snapshots[self.time] = snap
        return snap

    def snapshot(self, t: float) -> np.ndarray:
        if t == self.time:
            return self.positions
        try:
            return self.snapshots[float(t)]
        except KeyError:
            raise KeyError(f"no snapshot of the free field at time {t}") from None


def sample_poisson_counts(box: Box, mu: float, rng: RngStream) -> np.ndarray:
    return rng.generator().poisson(mu, size=box.size)


def sample_initial_field(window: Box, params: WalkParams, rng: RngStream, t0: float = 0.0) -> FreeField:
    """Independent Poisson(mu_A) walkers on every site of ``window``.

    Ids run through the sites in scan order and then through the walkers at a site.
    """
    if window.size == 0:
        raise ValueError("window is empty")
    if window.d != params.d:
        raise ValueError("window dimension does not match params")
    counts = sample_poisson_counts(window, params.mu_A, rng)
    positions = np.repeat(window.sites(), counts, axis=0)
    ids = np.arange(len(positions), dtype=np.int64)
    return FreeField(params, ids, positions, time=t0, window=window)


def sample_jump_time(rate: float, now: float, rng: RngStream, pid=0, n=0):
    """``now`` plus an Exp(rate) holding time; +inf when the rate is zero.

    ``pid`` and ``n`` select the draw; arrays give many draws at once.
    """
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if np.ndim(pid) == 0 and np.ndim(n) == 0:
        return now + holding_time(rng.key, int(pid), int(n), rate)
    if rate == 0:
        return np.full(np.broadcast(pid, n).shape, math.inf)
    u = uniform_array(rng.key, pid, n, 0)
    return now + (-np.log1p(-u) / rate)


def sample_jump_target(x, basis: np.ndarray, rng: RngStream, pid=0, n=0):
    """``x`` plus a uniformly chosen offset from ``basis`` (vectorised over ``pid``/``n``)."""
    n_dirs = len(basis)
    h = draw_bits_array(rng.key, pid, n, 1)
    k = ((h >> np.uint64(32)) * np.uint64(n_dirs)) >> np.uint64(32)
    return np.asarray(x, dtype=np.int64) + basis[k.astype(np.int64)]


def evolve_free_system(field: FreeField, t_target: float, rng: RngStream, backend=None) -> FreeField:
    """Run every walker of ``field`` independently up to ``t_target`` (in place)."""
    if t_target < field.time:
        raise ValueError("cannot evolve the free field backwards")
    if t_target == field.time:
        return field
    eng = field.engine(rng.key, backend)
    eng.advance(float(t_target))
    field.time = float(t_target)
    return field


def mean_square_displacement(field: FreeField) -> float:
    disp = field.positions - field.origin
    return float(np.mean(np.sum(disp * disp, axis=1))) if len(field) else 0.0


__all__ = [
    "WalkParams",
    "Box",
    "FreeField",
    "sample_initial_field",
    "sample_jump_time",
    "sample_jump_target",
    "evolve_free_system",
    "neighbor_offsets",
]
