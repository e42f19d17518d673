import numpy as np
import pytest

from rumorwalk.rng import RngStream
from rumorwalk.sim import TYPE_A, TYPE_B, SimConfig, SimState
from rumorwalk.walk import Box, WalkParams


def make_state(positions, types, d=1, rate_A=1.0, rate_B=1.0, seed=0, stream=0, t_max=100.0, backend=None):
    """A replica started from an explicit configuration instead of a Poisson field."""
    pos = np.asarray(positions, dtype=np.int64).reshape(-1, d)
    types = np.asarray([TYPE_B if t in ("B", TYPE_B) else TYPE_A for t in types], dtype=np.int8)
    seeds = tuple(tuple(p) for p in pos[types == TYPE_B]) or ((0,) * d,)
    cfg = SimConfig(WalkParams(d, rate_A, rate_B, 1.0), seeds, t_max, 10.0, 1.0)
    ids = np.arange(len(pos), dtype=np.int64)
    return SimState(cfg, RngStream(seed, stream), ids, pos, types, Box.cube(50, d), backend=backend)


@pytest.fixture
def state_factory():
    return make_state
