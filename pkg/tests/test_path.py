import numpy as np
import pytest

from conftest import make_state
from rumorwalk.drivers import martingale_replica
from rumorwalk.path import (
    DistinguishedPath,
    advance_path,
    advance_path_tracking,
    check_path,
    collect_path,
    drift_terms,
    export_trace,
    geometry_bounds_check,
    increment_check,
    martingale_series,
    martingale_test,
    sigma_grid,
    start_path,
    traced_path,
)
from rumorwalk.rng import RngStream
from rumorwalk.sim import SimConfig, init_simulation, step_event
from rumorwalk.walk import WalkParams


def carrier_event(state, path, step=advance_path):
    """Step until the carrier attempts a jump, feeding every event to the path."""
    while True:
        ev = step_event(state)
        before = path.rho
        step(path, ev, state)
        if ev.particle == before:
            return ev


def test_start_single_seed():
    state = make_state([[0]], "B")
    path = start_path(state, target=(5,))
    assert path.lam == (0,) and path.rho == 0
    assert martingale_series(path, 1.0).m0 == 5.0


def test_start_two_seeds_picks_lowest_id():
    state = make_state([[4], [-2]], "BB")
    assert start_path(state, target=(5,)).rho == 0


def test_start_needs_one_target_kind():
    state = make_state([[0]], "B")
    with pytest.raises(ValueError):
        start_path(state)
    with pytest.raises(ValueError):
        start_path(state, target=(1,), phi=0)


def test_lone_carrier_always_followed():
    for seed in range(30):
        state = make_state([[0]], "B", seed=seed)
        path = start_path(state, target=(5,))
        ev = carrier_event(state, path)
        assert path.lam == ev.target and path.rho == 0
        if ev.target == (-1,):
            return
    pytest.fail("carrier never stepped away from the target")


def test_company_toward_target_follows():
    for seed in range(30):
        state = make_state([[0], [0]], "BB", rate_B=1.0, seed=seed)
        path = start_path(state, target=(5,))
        ev = carrier_event(state, path)
        if ev.particle == 0 and ev.source == (0,) and ev.target == (1,) and state.counts((0,))[1] == 1:
            assert path.lam == (1,) and path.rho == 0
            return
    pytest.fail("no run with the carrier stepping toward the target first")


def test_company_away_hands_off():
    for seed in range(30):
        state = make_state([[0], [0]], "BB", seed=seed)
        path = start_path(state, target=(5,))
        ev = carrier_event(state, path)
        if ev.source == (0,) and ev.target == (-1,) and state.counts((0,))[1] == 1:
            assert path.lam == (0,) and path.rho == 1
            assert path.log[-1][1] == 2
            return
    pytest.fail("no run with the carrier stepping away first")


def test_equal_distance_cannot_occur_for_fixed_target():
    # ||w' - x||^2 - ||w - x||^2 = 2 (w - x)_i +- ... is always odd
    rng = np.random.default_rng(0)
    for _ in range(1000):
        w = rng.integers(-9, 10, size=2)
        x = rng.integers(-9, 10, size=2)
        for e in ([1, 0], [0, 1], [-1, 0], [0, -1]):
            assert (np.sum((w + e - x) ** 2) - np.sum((w - x) ** 2)) % 2 == 1


def test_tracking_stationary_target_reduces_to_fixed():
    for seed in range(10):
        # phi is a frozen A-particle too far away to be reached in 60 events
        a = make_state([[0], [0], [0], [40]], "BBBA", rate_A=0.0, seed=seed)
        b = make_state([[0], [0], [0], [40]], "BBBA", rate_A=0.0, seed=seed)
        pa = start_path(a, target=(40,))
        pb = start_path(b, phi=3)
        for _ in range(60):
            ev_a, ev_b = step_event(a), step_event(b)
            advance_path(pa, ev_a, a)
            advance_path_tracking(pb, ev_b, b, 3)
        assert [e[:4] for e in pa.log] == [e[:4] for e in pb.log]


def test_tracking_phi_on_lambda_hands_off():
    for seed in range(30):
        state = make_state([[0], [0]], "BB", seed=seed)
        path = start_path(state, phi=1)
        ev = carrier_event(state, path)
        if ev.particle == 0 and state.counts(ev.source)[1] >= 1 and ev.source == (0,):
            # the tracked particle sat on lambda, so every jump moves away from it
            if path.current_target == (0,):
                assert path.lam == (0,) and path.rho == 1
                return
    pytest.fail("no run where the carrier moved first")


def test_tracking_lone_carrier_follows():
    for seed in range(10):
        state = make_state([[0], [3]], "BA", seed=seed)
        path = start_path(state, phi=1)
        ev = carrier_event(state, path, lambda p, e, s: advance_path_tracking(p, e, s, 1))
        assert path.lam == ev.target


def test_drift_terms_examples():
    assert drift_terms((0,), (0,), 1) == (1.0, 0.0)
    g1, g2 = drift_terms((1,), (0,), 1)
    assert abs(g1) < 1e-15 and g2 == -0.5
    g1, g2 = drift_terms((3, 4), (0, 0), 2)
    assert g2 < 0 and 0 < g1 < 0.1
    # the mean gain behaves like (d - 1) / (2 d ||lam - x||) far from the target
    assert abs(g1 - 1 / (4 * 5)) < 0.01


def test_martingale_without_events_is_closed_form():
    state = make_state([[2]], "B")
    path = start_path(state, target=(0,))
    series = martingale_series(path, 1.0, [0.0, 3.0])
    g1, _ = drift_terms((2,), (0,), 1)
    assert series.samples[0][1] == 2.0
    assert series.samples[1][1] == 2.0 - 3.0 * g1


def test_replay_matches_engine_tracker():
    cfg = SimConfig(WalkParams(2, 1.0, 1.0, 1.0), ((0, 0),), 6.0, 5.0, 1.0)
    for seed in range(5):
        a = init_simulation(cfg, RngStream(seed))
        b = init_simulation(cfg, RngStream(seed))
        replay = start_path(a, target=(3, 4))
        while (ev := step_event(a)) is not None:
            advance_path(replay, ev, a)
        native = traced_path(b, target=(3, 4))
        b.engine.advance(6.0)
        collect_path(native, b)
        assert replay.log == native.log
        assert check_path(native, b) == []


def test_increment_bound_and_sigma_grid():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,),), 5.0, 5.0, 1.0)
    state = init_simulation(cfg, RngStream(3))
    path = traced_path(state, target=(5,))
    state.engine.advance(5.0)
    collect_path(path, state)
    series = martingale_series(path, 1.0)
    grid = sigma_grid(series, 5.0)
    assert grid[0] == 0.0 and grid[-1] == 5.0
    assert all(0 < b - a <= 1.0 for a, b in zip(grid, grid[1:]))
    worst, bound = increment_check(series, 5.0)
    assert worst <= bound == 2.0


def test_martingale_mean_small_sample():
    rows = [martingale_replica(WalkParams(1, 1.0, 1.0, 1.0), (5,), [1.0, 2.0], 99, i) for i in range(400)]
    for j in range(2):
        res = martingale_test([r["values"][j] for r in rows], [r["m0"] for r in rows])
        assert res["pass"], res
    assert all(r["max_increment"] <= r["bound"] for r in rows)


def test_martingale_test_detects_drift():
    m0 = np.zeros(1000)
    vals = np.random.default_rng(1).normal(0.5, 1.0, 1000)
    assert not martingale_test(vals, m0)["pass"]


def test_geometry_examples():
    rep = geometry_bounds_check(1, 1)
    assert rep["violations_drift"] == 0
    g1, g2 = drift_terms((1,), (0,), 1)
    assert g1 == 0 and g2 == -0.5 <= -0.25
    with pytest.raises(ValueError):
        geometry_bounds_check(1, 0)


def test_geometry_with_explicit_K8():
    rep = geometry_bounds_check(2, 10, K8=1.0)
    assert rep["violations_mean_gain"] == 0 and rep["pass"]
    assert rep["K8_floor"] <= 1.0


def test_export_trace(tmp_path):
    state = make_state([[0]], "B", seed=2)
    path = traced_path(state, target=(3,))
    state.engine.advance(2.0)
    collect_path(path, state)
    out = tmp_path / "trace.csv"
    export_trace(path, martingale_series(path, 1.0), out)
    lines = out.read_text().splitlines()
    assert lines[0] == "time,lambda_0,rho_hat_id,event_kind,M_value"
    assert len(lines) == len(path.log) + 1
    assert lines[1].split(",")[3] == "start"


def test_lambda_at():
    path = DistinguishedPath(1, (3,), None, [(0.0, 0, (0,), 0, 1, (3,)), (1.0, 1, (1,), 0, 1, (3,))])
    assert path.lambda_at(0.5) == (0,) and path.lambda_at(1.0) == (1,)
    with pytest.raises(ValueError):
        path.lambda_at(-1.0)
