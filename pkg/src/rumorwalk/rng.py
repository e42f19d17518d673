"""Counter-based randomness shared by the compiled and pure-Python engines.

Every random quantity a walker consumes is a hash of ``(stream key, particle id,
draw counter, lane)``.  Lane 0 gives the holding time of a particle's n-th
clock and lane 1 the direction of the jump that clock triggers.  Because the
draw depends only on the particle's identity and its own counter, two systems
that contain the same particle move it along the same path, whatever else
happens around it.  Both engines evaluate the same integer arithmetic, so a
given ``(seed, stream_id)`` reproduces the same event sequence bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
PARTICLE_MULT = 0xD1B54A32D192ED03
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def particle_base(key: int, pid: int) -> int:
    return mix64((key + (pid + 1) * PARTICLE_MULT) & MASK64)


def draw_bits(key: int, pid: int, n: int, lane: int) -> int:
    base = particle_base(key, pid)
    return mix64((base + (2 * n + lane + 1) * GOLDEN) & MASK64)


def bits_to_uniform(h: int) -> float:
    return (h >> 11) * INV_2_53


def holding_time(key: int, pid: int, n: int, rate: float) -> float:
    if rate <= 0.0:
        return math.inf
    u = bits_to_uniform(draw_bits(key, pid, n, 0))
    return -math.log1p(-u) / rate


def direction(key: int, pid: int, n: int, n_dirs: int) -> int:
    h = draw_bits(key, pid, n, 1)
    return ((h >> 32) * n_dirs) >> 32


# numpy versions, used for bulk draws in tests and for the free walkers' start-up

def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def draw_bits_array(key: int, pid, n, lane: int) -> np.ndarray:
    pid = np.asarray(pid, dtype=np.uint64)
    n = np.asarray(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64_np(np.uint64(key) + (pid + np.uint64(1)) * np.uint64(PARTICLE_MULT))
        return _mix64_np(base + (np.uint64(2) * n + np.uint64(lane + 1)) * np.uint64(GOLDEN))


def uniform_array(key: int, pid, n, lane: int) -> np.ndarray:
    h = draw_bits_array(key, pid, n, lane)
    return (h >> np.uint64(11)).astype(np.float64) * INV_2_53


@dataclass(frozen=True)
class RngStream:
    """Random stream of one replica, derived from ``(seed, stream_id)``.

    The initial Poisson field is drawn from a numpy ``Generator`` spawned off
    the same seed; walker randomness comes from :attr:`key`.
    """

    seed: int
    stream_id: int = 0

    def _sequence(self, lane: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, lane))

    @cached_property
    def key(self) -> int:
        return int(self._sequence(1).generate_state(1, np.uint64)[0])

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._sequence(0)))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)
