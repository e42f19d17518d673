import numpy as np
import pytest

from conftest import make_state
from rumorwalk.drivers import front_replica, stationarity_field
from rumorwalk.experiments import (
    check_b_count_bound,
    format_number,
    front_extremes,
    genealogical_bound,
    growth_curvature,
    hausdorff,
    poisson_stationarity_test,
    read_timeseries_csv,
    shape_snapshot,
    speed_estimate,
    upper_bound_check,
    theorem3_check,
    write_timeseries_csv,
)
from rumorwalk.records import ExperimentRecord
from rumorwalk.rng import RngStream
from rumorwalk.sim import SimConfig, epoch_grid, init_simulation, run_until
from rumorwalk.walk import Box, WalkParams, sample_initial_field


def synthetic(fn, times, replica=0):
    rec = ExperimentRecord("synthetic", 1, replica)
    for t in times:
        rec.add(float(t), {"R": fn(t), "n_B_particles": 1})
    return rec


def test_front_extremes():
    assert front_extremes(make_state([[0]], "B")) == (0, 0)
    assert front_extremes(make_state([[-3], [0], [5], [9]], "BBBA")) == (5, 3)
    with pytest.raises(ValueError):
        front_extremes(make_state([[0, 0]], "B", d=2))


def test_b_positions_inside_front():
    cfg = SimConfig(WalkParams(1, 1.0, 1.0, 1.0), ((0,),), 10.0)
    state = init_simulation(cfg, RngStream(2))
    for t in np.linspace(0, 10, 21):
        run_until(state, float(t))
        R, L = front_extremes(state)
        b = state.b_positions()[:, 0]
        assert np.all((-L <= b) & (b <= R))


def test_speed_exact_line():
    est = speed_estimate(synthetic(lambda t: 3 * t, range(0, 41)), 0.5)
    assert abs(est.slope - 3) < 1e-12 and est.half_width < 1e-9


def test_speed_noisy_line():
    gen = np.random.default_rng(0)
    noise = dict(zip(range(101), gen.integers(-1, 2, size=101)))
    est = speed_estimate(synthetic(lambda t: 2 * t + noise[t], range(101)), 1.0)
    assert abs(est.slope - 2) < 0.1


def test_speed_bootstrap_over_replicas():
    gen = np.random.default_rng(1)
    recs = []
    for i in range(20):
        c = gen.normal(0, 2)
        recs.append(synthetic(lambda t, c=c: 0.7 * t + c + gen.normal(0, 1), range(60), i))
    est = speed_estimate(recs, 0.5)
    assert est.ci[0] < 0.7 < est.ci[1]
    assert est.n_replicas == 20


def test_speed_needs_enough_points():
    with pytest.raises(ValueError):
        speed_estimate(synthetic(lambda t: t, range(5)), 0.5)


def test_growth_curvature_of_line_is_zero():
    rec = synthetic(lambda t: 1.5 * t, range(0, 101))
    assert growth_curvature([rec], 100.0)["relative_change"] < 1e-12


def test_genealogical_bound_examples():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    assert abs(genealogical_bound(p, 1, 1.0) - 7.389056) < 1e-6
    assert genealogical_bound(p, 3, 0.0) == 3


@pytest.mark.parametrize("field", ["rate_A", "rate_B", "mu_A"])
def test_genealogical_bound_monotone(field):
    base = dict(d=1, rate_A=1.0, rate_B=1.0, mu_A=1.0)
    lo = genealogical_bound(WalkParams(**base), 1, 1.0)
    base[field] = 1.5
    assert genealogical_bound(WalkParams(**base), 1, 1.0) > lo


def run_front(params, n, t_max, epochs, seed=0):
    cfg = SimConfig(params, ((0,),), t_max)
    return [front_replica(cfg, seed, i, epochs)[0] for i in range(n)]


def test_b_count_bound_near_empty_field():
    p = WalkParams(1, 1.0, 1.0, 1e-6)
    recs = run_front(p, 100, 1.0, [0.0, 1.0])
    rep = check_b_count_bound(recs, p, 1.0, 1)
    assert abs(rep["mean"] - 1.0) < 0.05 and rep["pass"]


def test_b_count_bound_at_zero_is_equality():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    recs = run_front(p, 100, 1.0, [0.0, 1.0])
    rep = check_b_count_bound(recs, p, 0.0)
    assert rep["mean"] == rep["bound"] == 1.0 and rep["pass"]
    cfg = SimConfig(p, ((0,),), 1.0, empty_seed_sites=True)
    single = [front_replica(cfg, 0, i, [0.0, 1.0])[0] for i in range(100)]
    rep = check_b_count_bound(single, p, 0.0, 1)
    assert rep["mean"] == rep["bound"] == 1.0 and rep["pass"]


def test_b_count_bound_normalised_by_initial_population():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    recs = run_front(p, 200, 1.0, [0.0, 1.0])
    rep = check_b_count_bound(recs, p, 1.0)
    assert rep["normalized"] and rep["pass"]


def test_b_count_bound_needs_replicas():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        check_b_count_bound(run_front(p, 5, 1.0, [0.0, 1.0]), p, 1.0, 1)


def test_half_region_check_tiny_density():
    p = WalkParams(1, 1.0, 1.0, 1e-9)
    state = init_simulation(SimConfig(p, ((0,),), 5.0), RngStream(0))
    run_until(state, 5.0)
    est = speed_estimate(synthetic(lambda t: t, range(20)), 0.5)
    assert theorem3_check(state, est, 5.0) == 0


def test_half_region_check_counts_sites():
    state = make_state([[0], [1], [1], [-2], [30]], "BAAAA", rate_A=0.0, rate_B=0.0)
    est = speed_estimate(synthetic(lambda t: 2.2 * t, range(20)), 0.5)
    state.engine.advance(2.0)
    assert theorem3_check(state, est, 2.0) == 2


def test_upper_bound_check_on_linear_fronts():
    times = [100.0, 150.0, 200.0]
    recs = []
    for i in range(10):
        rec = ExperimentRecord("x", 1, i)
        for t in times:
            rec.add(t, {"max_norm_B": int(0.5 * t) + i})
        recs.append(rec)
    rep = upper_bound_check(recs, times)
    assert rep["pass"] and rep["variation"] < 0.1


def test_stationarity_at_time_zero():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    f = sample_initial_field(Box.cube(2000, 1), p, RngStream(1))
    assert poisson_stationarity_test(f, 0.0, Box.cube(1000, 1))["p"] > 0.001


def test_stationarity_p_values_uniform_at_time_zero():
    from scipy import stats
    p = WalkParams(1, 1.0, 1.0, 1.0)
    ps = [poisson_stationarity_test(sample_initial_field(Box.cube(600, 1), p, RngStream(s)), 0.0,
                                    Box.cube(500, 1))["p"] for s in range(200)]
    # discrete chi-square p-values are only roughly uniform, so a loose check
    assert stats.kstest(ps, "uniform").pvalue > 1e-3


def test_stationarity_after_evolution():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    passed = 0
    for s in range(40):
        f, rng = stationarity_field(p, 10.0, 200, 5.0, 77, s)
        passed += poisson_stationarity_test([f], 10.0, Box.cube(200, 1), 5.0, [rng])["p"] > 0.001
    assert passed >= 39


def test_stationarity_window_too_close_to_edge():
    p = WalkParams(1, 1.0, 1.0, 1.0)
    f = sample_initial_field(Box.cube(60, 1), p, RngStream(1))
    with pytest.raises(ValueError, match="exterior"):
        poisson_stationarity_test(f, 10.0, Box.cube(50, 1), 5.0, [RngStream(1)])


def test_shape_snapshot_and_hausdorff():
    state = make_state([[0, 0]], "B", d=2, rate_B=0.0)
    state.engine.advance(1.0)
    assert shape_snapshot(state, 1.0).tolist() == [[0.0, 0.0]]
    with pytest.raises(ValueError):
        shape_snapshot(state, 0.0)
    grid = np.array([[x, y] for x in range(-4, 5) for y in range(-4, 5)], float)
    assert hausdorff(grid / 4, grid / 4) == 0.0
    assert np.abs(grid / 4).max() == 1.0


def test_shape_snapshot_run():
    cfg = SimConfig(WalkParams(2, 1.0, 1.0, 1.0), ((0, 0),), 6.0)
    state = init_simulation(cfg, RngStream(3))
    run_until(state, 3.0)
    a = shape_snapshot(state, 3.0)
    run_until(state, 6.0)
    b = shape_snapshot(state, 6.0)
    assert len(b) >= len(a) and hausdorff(a, b) >= 0


def test_timeseries_round_trip(tmp_path):
    recs = run_front(WalkParams(1, 1.0, 1.0, 1.0), 3, 4.0, epoch_grid(4.0, 8, 2))
    out = tmp_path / "ts.csv"
    write_timeseries_csv(recs, out)
    back = read_timeseries_csv(out, 1)
    write_timeseries_csv(back, tmp_path / "again.csv")
    assert out.read_bytes() == (tmp_path / "again.csv").read_bytes()
    assert out.read_text().splitlines()[0] == \
        "replica,t,n_infected_sites,n_B_particles,R,L,max_norm_B,n_A_in_half_region"


def test_format_number():
    assert format_number(None) == "" and format_number(float("nan")) == ""
    assert format_number(0.1) == "0.1" and format_number(3) == "3" and format_number(True) == "true"
    assert float(format_number(1 / 3)) == 1 / 3
