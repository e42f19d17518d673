import math

import numpy as np
import pytest

from rumorwalk.lattice import neighbor_offsets
from rumorwalk.rng import RngStream, direction, draw_bits, draw_bits_array, holding_time, uniform_array
from rumorwalk.walk import (
    Box,
    FreeField,
    WalkParams,
    evolve_free_system,
    mean_square_displacement,
    sample_initial_field,
    sample_jump_target,
    sample_jump_time,
)
from scipy import stats


def test_walk_params_validation():
    with pytest.raises(ValueError):
        WalkParams(1, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        WalkParams(4, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        WalkParams(1, 1.0, 1.0, -0.5)


def test_box_geometry():
    b = Box.cube(2, 2)
    assert b.shape == (5, 5) and b.size == 25
    assert b.contains((2, -2)) and not b.contains((3, 0))
    sites = b.sites()
    assert sites[0].tolist() == [-2, -2] and sites[1].tolist() == [-2, -1]


def test_scalar_and_array_draws_agree():
    key = RngStream(7).key
    pids = np.arange(50)
    ns = np.arange(50) % 3
    bits = draw_bits_array(key, pids, ns, 1)
    assert [int(b) for b in bits] == [draw_bits(key, int(p), int(n), 1) for p, n in zip(pids, ns)]
    u = uniform_array(key, pids, ns, 0)
    assert np.allclose(-np.log1p(-u), [holding_time(key, int(p), int(n), 1.0) for p, n in zip(pids, ns)])


def test_streams_are_distinct_and_reproducible():
    assert RngStream(1, 0).key == RngStream(1, 0).key
    assert RngStream(1, 0).key != RngStream(1, 1).key
    assert RngStream(1, 0).key != RngStream(2, 0).key


def test_jump_time_rate_zero_never_jumps():
    assert sample_jump_time(0.0, 3.0, RngStream(0)) == math.inf
    assert np.all(np.isinf(sample_jump_time(0.0, 0.0, RngStream(0), pid=np.arange(4))))


def test_jump_time_mean_rate_one():
    t = sample_jump_time(1.0, 0.0, RngStream(11), pid=np.arange(10 ** 6))
    assert abs(t.mean() - 1.0) < 0.01


def test_jump_time_survival_rate_two():
    t = sample_jump_time(2.0, 0.0, RngStream(12), pid=np.arange(10 ** 6))
    p = math.exp(-2.0)
    sigma = math.sqrt(p * (1 - p) / t.size)
    assert abs(np.mean(t > 1.0) - p) <= 3 * sigma


def test_jump_target_d1_symmetric():
    n = 10 ** 6
    out = sample_jump_target((0,), neighbor_offsets(1), RngStream(13), pid=np.arange(n))
    freq = np.mean(out[:, 0] == 1)
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_jump_target_d2_uniform():
    n = 10 ** 6
    basis = neighbor_offsets(2)
    out = sample_jump_target((0, 0), basis, RngStream(14), pid=np.arange(n))
    sigma = 3 * math.sqrt(0.25 * 0.75 / n)
    for b in basis:
        assert abs(np.mean(np.all(out == b, axis=1)) - 0.25) <= sigma
    assert np.all(np.abs(out).sum(axis=1) == 1)


def test_direction_matches_array_form():
    key = RngStream(3).key
    basis = neighbor_offsets(3)
    arr = sample_jump_target((0, 0, 0), basis, RngStream(3), pid=np.arange(20), n=2)
    scalar = [basis[direction(key, p, 2, 6)] for p in range(20)]
    assert np.array_equal(arr, np.array(scalar))


def test_initial_field_same_stream_identical():
    p = WalkParams(2, 1.0, 1.0, 1.3)
    a = sample_initial_field(Box.cube(5, 2), p, RngStream(4, 2))
    b = sample_initial_field(Box.cube(5, 2), p, RngStream(4, 2))
    assert np.array_equal(a.positions, b.positions)


def test_initial_field_tiny_density():
    p = WalkParams(1, 1.0, 1.0, 1e-4)
    window = Box((0,), (10,))
    gen = RngStream(5).generator()
    counts = gen.poisson(p.mu_A, size=(10 ** 5, window.size)).sum(axis=1)
    # the field draws its per-site counts with one poisson call on this generator
    f = sample_initial_field(window, p, RngStream(5))
    assert len(f) == int(RngStream(5).generator().poisson(p.mu_A, size=window.size).sum())
    assert abs(counts.mean() - 0.001) <= 3 * math.sqrt(0.001 / 10 ** 5)
    assert np.mean(counts == 0) > 0.998


def test_initial_field_poisson_dispersion():
    p = WalkParams(1, 1.0, 1.0, 2.0)
    window = Box.cube(20000, 1)
    f = sample_initial_field(window, p, RngStream(6))
    occ = f.occupancy(window).astype(float)
    ratio = occ.var(ddof=1) / occ.mean()
    # variance of the sample variance ratio for Poisson counts is about (2 + 1/mu) / n
    assert abs(ratio - 1.0) <= 3 * math.sqrt((2 + 1 / p.mu_A) / occ.size)


def test_evolve_identity_and_conservation():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    f = sample_initial_field(Box.cube(50, 1), p, RngStream(8))
    before = f.positions.copy()
    evolve_free_system(f, 0.0, RngStream(8))
    assert np.array_equal(f.positions, before)
    evolve_free_system(f, 3.0, RngStream(8))
    assert len(f.positions) == len(before) and f.time == 3.0
    with pytest.raises(ValueError):
        evolve_free_system(f, 1.0, RngStream(8))


def test_evolve_mean_square_displacement():
    p = WalkParams(2, 1.5, 1.5, 1.0)
    f = sample_initial_field(Box.cube(60, 2), p, RngStream(9))
    evolve_free_system(f, 4.0, RngStream(9))
    # each walker jumps at rate D, every jump adds 1 to the squared displacement
    disp = np.sum((f.positions - f.origin) ** 2, axis=1)
    assert abs(mean_square_displacement(f) - 6.0) <= 3 * disp.std() / math.sqrt(len(disp))


def test_evolve_stays_poisson():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    f = sample_initial_field(Box.cube(3000, 1), p, RngStream(10))
    evolve_free_system(f, 5.0, RngStream(10))
    occ = f.occupancy(Box.cube(2500, 1)).ravel()
    values = np.arange(6)
    observed = np.array([np.sum(occ == v) for v in values[:-1]] + [np.sum(occ >= 5)])
    probs = stats.poisson.pmf(values[:-1], 1.0)
    probs = np.append(probs, 1 - probs.sum())
    res = stats.chisquare(observed, probs * occ.size)
    assert res.pvalue > 0.01


def test_field_engine_key_is_fixed():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    f = FreeField(p, [0], [[0]])
    f.engine(1)
    with pytest.raises(ValueError):
        f.engine(2)
