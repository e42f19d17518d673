import math

import numpy as np
import pytest

from conftest import make_state
from rumorwalk.records import Snapshot
from rumorwalk.rng import RngStream
from rumorwalk.sim import (
    TYPE_A,
    TYPE_B,
    SimConfig,
    check_domination,
    check_state,
    coupled_run,
    demote_site,
    dominated,
    epoch_grid,
    infected_region,
    init_simulation,
    remove_site,
    run_until,
    step_event,
)
from rumorwalk.walk import WalkParams


def first_event_of(state, pid):
    while True:
        ev = step_event(state)
        assert ev is not None
        if ev.particle == pid:
            return ev


def test_seed_converts_resident_field():
    params = WalkParams(1, 1.0, 1.0, 2.0)
    for seed in range(50):
        cfg = SimConfig(params, ((0,),), 5.0)
        state = init_simulation(cfg, RngStream(seed))
        a, b = state.counts((0,))
        field_here = int(np.sum(np.all(state.initial.pos[:-1] == 0, axis=1)))
        assert (a, b) == (0, field_here + 1)
        if field_here == 2:
            break
    else:
        pytest.fail("no replica with two residents at the seed")


def test_seed_on_empty_site():
    state = init_simulation(SimConfig(WalkParams(1, 1.0, 1.0, 1e-9), ((0,),), 5.0), RngStream(1))
    assert state.counts((0,)) == (0, 1)
    assert state.n_particles == 1


def test_empty_seed_sites_start_with_seeds_only():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 3.0), ((0,), (2,)), 5.0, empty_seed_sites=True)
    for seed in range(10):
        state = init_simulation(cfg, RngStream(seed))
        assert state.counts((0,)) == (0, 1) and state.counts((2,)) == (0, 1)
        assert int(np.sum(state.initial.types == TYPE_B)) == 2


def test_seed_outside_window_rejected():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((500,),), 1.0, 5.0, 1.0)
    with pytest.raises(ValueError, match="outside"):
        init_simulation(cfg, RngStream(0))


def test_b_jump_converts_every_resident():
    for seed in range(40):
        state = make_state([[0], [1], [1], [1]], "BAAA", rate_A=0.0, seed=seed)
        ev = first_event_of(state, 0)
        if ev.target == (1,):
            assert sorted(ev.converted) == [1, 2, 3]
            assert state.counts((1,)) == (0, 4)
            return
    pytest.fail("the B-particle never stepped right")


def test_a_jump_onto_b_converts_jumper():
    for seed in range(40):
        state = make_state([[0], [1]], "BA", rate_B=0.0, seed=seed)
        ev = first_event_of(state, 1)
        if ev.target == (0,):
            assert ev.converted == (1,)
            assert state.engine.types().tolist() == [TYPE_B, TYPE_B]
            return
    pytest.fail("the A-particle never stepped left")


def test_a_jump_among_a_only():
    for seed in range(40):
        state = make_state([[0], [5], [6]], "BAA", rate_B=0.0, seed=seed)
        ev = first_event_of(state, 1)
        if ev.target == (6,):
            assert ev.converted == ()
            assert state.counts((6,)) == (2, 0)
            return
    pytest.fail("the A-particle never stepped right")


def test_run_until_zero_records_initial_state():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,),), 10.0)
    state = init_simulation(cfg, RngStream(2))
    before = state.snapshot()
    rec = run_until(state, 0.0)
    after = state.snapshot()
    assert rec.epochs == [0.0]
    assert np.array_equal(before.pos, after.pos) and np.array_equal(before.types, after.types)


def test_zero_rates_freeze_the_state():
    cfg = SimConfig(WalkParams(1, 0.0, 0.0, 1.0), ((0,),), 10.0)
    state = init_simulation(cfg, RngStream(3))
    before = state.snapshot()
    run_until(state, 10.0)
    assert state.engine.n_events == 0
    assert np.array_equal(before.pos, state.snapshot().pos)


def test_event_count_matches_poisson_superposition():
    # only B-particles exist, so no switch ever changes a rate
    counts = []
    for seed in range(300):
        state = make_state([[0], [3], [7]], "BBB", rate_B=1.5, seed=seed)
        run_until(state, 2.0)
        counts.append(state.engine.n_events)
    counts = np.array(counts, dtype=float)
    expected = 3 * 1.5 * 2.0
    assert abs(counts.mean() - expected) <= 3 * math.sqrt(expected / len(counts))


def test_infected_region():
    for seed in range(20):
        state = make_state([[0]], "B", seed=seed)
        assert infected_region(state, 0.0) == {(0,)}
        ev = step_event(state)
        region = infected_region(state, ev.time)
        assert region == {(0,), ev.target}
        assert infected_region(state, ev.time / 2) == {(0,)}


def test_infected_region_monotone():
    cfg = SimConfig(WalkParams(2, 1.0, 1.0, 1.0), ((0, 0),), 8.0)
    state = init_simulation(cfg, RngStream(4))
    run_until(state, 8.0)
    regions = [infected_region(state, t) for t in (0.0, 1.0, 2.5, 4.0, 8.0)]
    assert all(a <= b for a, b in zip(regions, regions[1:]))


def test_invariants_hold_along_a_run():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,), (4,)), 20.0)
    state = init_simulation(cfg, RngStream(5))
    seen = []
    run_until(state, 20.0, epochs=epoch_grid(20.0), on_epoch=lambda s: seen.extend(check_state(s)))
    assert seen == []


def test_epoch_grid():
    assert epoch_grid(0.0) == [0.0]
    g = epoch_grid(10.0, 5, 3)
    assert g[0] == 0.0 and g[-1] == 10.0 and g == sorted(set(g))
    assert 1.25 in g and 2.0 in g


def test_coupling_identical_systems():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,),), 10.0)
    a = init_simulation(cfg, RngStream(6))
    b = init_simulation(cfg, RngStream(6))
    ra, rb = coupled_run(a, b, [0.0, 5.0, 10.0])
    for x, y in zip(ra.snapshots, rb.snapshots):
        assert np.array_equal(x.pos, y.pos) and np.array_equal(x.types, y.types)
    assert check_domination(ra, rb)


def test_coupling_removed_particle_keeps_shared_paths():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,),), 10.0)
    high = init_simulation(cfg, RngStream(7))
    victim = high.initial.pos[3]
    low = remove_site(high, victim)
    epochs = [0.5 * k for k in range(21)]
    rl, rh = coupled_run(low, high, epochs)
    for sl, sh in zip(rl.snapshots, rh.snapshots):
        idx = np.searchsorted(sh.ids, sl.ids)
        assert np.array_equal(sh.pos[idx], sl.pos)
    assert check_domination(rl, rh)


def test_coupling_demoted_seed():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,), (3,)), 10.0)
    high = init_simulation(cfg, RngStream(8))
    low = demote_site(high, (3,))
    rl, rh = coupled_run(low, high, [0.5 * k for k in range(21)])
    assert check_domination(rl, rh)


def test_domination_detects_corruption():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,),), 4.0)
    high = init_simulation(cfg, RngStream(9))
    low = demote_site(high, (0,))
    rl, rh = coupled_run(low, high, [0.0, 2.0, 4.0])
    snap = rl.snapshots[-1]
    idx = np.searchsorted(rh.snapshots[-1].ids, snap.ids)
    a_in_high = np.flatnonzero(rh.snapshots[-1].types[idx] == TYPE_A)
    types = snap.types.copy()
    types[a_in_high[0]] = TYPE_B
    rl.snapshots[-1] = Snapshot(snap.time, snap.ids, snap.pos, types)
    assert not check_domination(rl, rh)


def test_dominated_requires_subset():
    hi = Snapshot(0.0, np.array([0, 1]), np.array([[0], [1]]), np.array([TYPE_B, TYPE_A], np.int8))
    lo = Snapshot(0.0, np.array([2]), np.array([[1]]), np.array([TYPE_A], np.int8))
    assert not dominated(lo, hi)


def test_coupling_rejects_unequal_rates():
    cfg = SimConfig(WalkParams(1, 0.5, 1.0, 1.0), ((0,),), 4.0)
    a = init_simulation(cfg, RngStream(1))
    with pytest.raises(ValueError):
        coupled_run(a, init_simulation(cfg, RngStream(1)), [1.0])
