from __future__ import annotations

import numpy as np
import pytest

import privroute as pr
from privroute.dynamics import BregmanGeometry, LearningSchedule
from privroute.game import solve_equilibrium, validate_allocation
from privroute.sim import (
    SimulationConfig,
    check_suboptimality_bound,
    fit_loglog_slope,
    monte_carlo,
    observe_losses,
    run_trajectory,
)



def small_config(game, sigma=0.1, horizon=40, runs=3, seed=11, scale=1.0, decay=0.5):
    k = game.num_populations
    return SimulationConfig(
        game=game,
        geometries=tuple(BregmanGeometry("entropic", game.block_sizes) for _ in range(k)),
        schedules=tuple(LearningSchedule(scale, decay) for _ in range(k)),
        sigma=sigma,
        horizon=horizon,
        runs=runs,
        seed=seed,
    )


# ------------------------------------------------------------ observations


def test_observe_losses_degenerate_noise():
    rng = np.random.default_rng(0)
    losses = np.array([1.0, 2.0, 3.0])
    out = observe_losses(losses, 0.0, rng)
    np.testing.assert_array_equal(out, losses)
    assert out is not losses


def test_observe_losses_moments():
    rng = np.random.default_rng(1)
    sigma = 0.3
    losses = np.array([1.0, 2.0, 0.5, 4.0])
    n = 100_000
    draws = np.stack([observe_losses(losses, sigma, rng) - losses for _ in range(n)])
    # CLT width for the empirical mean of each coordinate.
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * sigma / np.sqrt(n))
    variances = draws.var(axis=0)
    assert np.all(np.abs(variances - sigma**2) < 0.05 * sigma**2)


# ------------------------------------------------------------- trajectories


def test_trajectory_deterministic_descent_to_equilibrium(pigou_game):
    cfg = small_config(pigou_game, sigma=0.0, horizon=400, runs=1, scale=0.8, decay=0.0)
    record = run_trajectory(cfg, 0)
    assert np.all(np.diff(record.potentials) <= 1e-12)
    assert record.potentials[-1] == pytest.approx(0.5, abs=1e-3)
    assert record.gaps[-1] < 1e-3
    np.testing.assert_array_equal(record.observed_losses[0], [0.5, 1.0])


def test_trajectory_bit_identical_for_equal_seeds(standin_game, standin_dynamics):
    geometries, schedules = standin_dynamics
    cfg = SimulationConfig(standin_game, geometries, schedules, 0.4, 25, 1, 5)
    a = run_trajectory(cfg, 123)
    b = run_trajectory(cfg, 123)
    assert a.potentials.tobytes() == b.potentials.tobytes()
    assert a.gaps.tobytes() == b.gaps.tobytes()
    assert a.allocations.tobytes() == b.allocations.tobytes()
    assert a.observed_losses.tobytes() == b.observed_losses.tobytes()


def test_trajectory_zero_mass_is_constant():
    net = pr.build_network(
        {"nodes": ["s", "t"], "edges": [["s", "t"], ["s", "t"]], "od_pairs": [["s", "t"]]}
    )
    game = pr.build_game(net, [pr.AffineCost(1, 0), pr.AffineCost(0, 1)], [[0.0]])
    cfg = small_config(game, sigma=0.2, horizon=30, runs=1)
    record = run_trajectory(cfg, 3)
    assert np.all(record.potentials == 0.0)
    np.testing.assert_allclose(record.allocations, 0.5, atol=1e-12)


def test_trajectory_feasible_at_every_iteration(standin_game, standin_dynamics):
    geometries, schedules = standin_dynamics
    cfg = SimulationConfig(standin_game, geometries, schedules, 0.4, 60, 1, 9)
    record = run_trajectory(cfg, 42)
    for t in range(cfg.horizon):
        validate_allocation(standin_game, record.allocations[t])


# --------------------------------------------------------------- ensembles


def test_monte_carlo_singleton_equals_single_run(standin_game, standin_dynamics):
    geometries, schedules = standin_dynamics
    cfg = SimulationConfig(standin_game, geometries, schedules, 0.1, 30, 1, 77)
    stats = monte_carlo(cfg)
    child = np.random.SeedSequence(77).spawn(1)[0]
    record = run_trajectory(cfg, child)
    np.testing.assert_array_equal(stats.f_mean, record.potentials)
    np.testing.assert_array_equal(stats.f_std, np.zeros(30))
    np.testing.assert_array_equal(stats.flow_mean, record.allocations)


def test_monte_carlo_reproducible(standin_game, standin_dynamics):
    geometries, schedules = standin_dynamics
    cfg = SimulationConfig(standin_game, geometries, schedules, 0.1, 20, 4, 13)
    eq = solve_equilibrium(standin_game)
    a = monte_carlo(cfg, eq)
    b = monte_carlo(cfg, eq)
    assert a.f_mean.tobytes() == b.f_mean.tobytes()
    assert a.slope == b.slope


def test_monte_carlo_respects_theory_bound(standin_game, standin_dynamics):
    geometries, schedules = standin_dynamics
    cfg = SimulationConfig(standin_game, geometries, schedules, 0.1, 50, 5, 21)
    stats = monte_carlo(cfg)
    result = check_suboptimality_bound(cfg, stats)
    assert result["ok"]
    assert result["realized"] <= result["bound"]


def test_slope_fit_recovers_power_law():
    iterations = np.arange(1, 201)
    values = 3.0 * iterations**-0.7
    assert fit_loglog_slope(iterations, values, (50, 200)) == pytest.approx(-0.7, abs=1e-9)
    with pytest.raises(ValueError, match="window"):
        fit_loglog_slope(iterations, values, (500, 600))


def test_simulation_config_validation(standin_game, standin_dynamics):
    geometries, schedules = standin_dynamics
    with pytest.raises(ValueError, match="per population"):
        SimulationConfig(standin_game, geometries[:1], schedules, 0.1, 10, 1, 0)
    with pytest.raises(ValueError, match="nonnegative"):
        SimulationConfig(standin_game, geometries, schedules, -0.1, 10, 1, 0)
    bad_geom = tuple(BregmanGeometry("entropic", (2, 2)) for _ in geometries)
    with pytest.raises(ValueError, match="block structure"):
        SimulationConfig(standin_game, bad_geom, schedules, 0.1, 10, 1, 0)
