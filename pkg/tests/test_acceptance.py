"""Acceptance suite: one test per release criterion, one printed line each."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy.special import ndtr

from privroute.cli import main
from privroute.config import privacy_pairs
from privroute.dynamics import BregmanGeometry, LearningSchedule, suboptimality_bound
from privroute.game import nash_gap, potential_gradient, solve_equilibrium
from privroute.privacy import compose_adaptive, privacy_report
from privroute.sim import SimulationConfig, monte_carlo

from conftest import CONFIG_DIR, random_allocation, random_game
from test_game import central_difference_gradient
from test_privacy import flow_shift_trial, prox_displacement_trial

TWO_OD = CONFIG_DIR / "two_od.json"


def report(number: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def convergence_ensemble(standin_config, standin_game, standin_dynamics):
    """The full convergence experiment, shared by criteria 1 and 8."""
    geometries, schedules = standin_dynamics
    sim = standin_config["simulation"]
    started = time.perf_counter()
    equilibrium = solve_equilibrium(standin_game, tol=1e-8)
    results = {}
    for sigma in sim["sigma"]:
        cfg = SimulationConfig(
            game=standin_game,
            geometries=geometries,
            schedules=schedules,
            sigma=float(sigma),
            horizon=sim["T"],
            runs=sim["runs"],
            seed=sim["seed"],
        )
        results[float(sigma)] = (cfg, monte_carlo(cfg, equilibrium))
    elapsed = time.perf_counter() - started
    return results, elapsed


def test_criterion_1_convergence_reproduction(standin_config, standin_dynamics, convergence_ensemble):
    _, schedules = standin_dynamics
    sim = standin_config["simulation"]
    assert [s.decay for s in schedules] == [0.5, 0.2]
    assert sim["T"] == 200 and sim["runs"] == 150
    assert sim["sigma"] == [0.01, 0.1, 0.4]

    results, elapsed = convergence_ensemble
    slopes = {sigma: stats.slope for sigma, (_, stats) in results.items()}
    terminals = [results[s][1].f_mean[-1] for s in (0.01, 0.1, 0.4)]
    windows = {stats.slope_window for _, stats in results.values()}

    ok = (
        windows == {(50, 200)}
        and all(slope <= -0.15 for slope in slopes.values())
        and all(a <= b for a, b in zip(terminals, terminals[1:]))
        and elapsed <= 120.0
    )
    report(
        1,
        ok,
        f"slopes={ {s: round(v, 3) for s, v in slopes.items()} } (all <= -0.15), "
        f"terminal f {['%.5f' % v for v in terminals]} nondecreasing in sigma, "
        f"runtime {elapsed:.1f}s <= 120s",
    )


def test_criterion_2_equilibrium_oracle(pigou_game):
    eq = solve_equilibrium(pigou_game, tol=1e-6)
    gap = nash_gap(pigou_game, eq.allocation)
    ok = abs(eq.potential - 0.5) < 1e-4 and gap < 1e-4
    report(2, ok, f"Pigou f*={eq.potential:.8f} (|err| < 1e-4), nash_gap={gap:.2e} < 1e-4")


def test_criterion_3_gradient_correctness():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        game = random_game(rng)
        x = random_allocation(rng, game)
        grad = potential_gradient(game, x)
        fd = central_difference_gradient(game, x)
        rel = np.linalg.norm(fd - grad) / max(float(np.linalg.norm(grad)), 1e-12)
        worst = max(worst, rel)
    ok = worst < 1e-6
    report(3, ok, f"100 random affine instances, worst FD relative error {worst:.2e} < 1e-6")


def test_criterion_4_sensitivity_bounds_never_violated():
    rng = np.random.default_rng(99)
    prox_violations = 0
    for i in range(1000):
        moved, bound = prox_displacement_trial(rng, "entropic" if i % 2 else "euclidean")
        if moved > bound * (1 + 1e-9) + 1e-12:
            prox_violations += 1
    flow_violations = 0
    for _ in range(1000):
        moved, bound = flow_shift_trial(rng)
        if moved > bound * (1 + 1e-9) + 1e-12:
            flow_violations += 1
    ok = prox_violations == 0 and flow_violations == 0
    report(
        4,
        ok,
        f"1000 prox-displacement trials ({prox_violations} violations), "
        f"1000 flow-shift trials ({flow_violations} violations)",
    )


def test_criterion_5_single_step_dp_analytic(standin_game, standin_dynamics):
    _, schedules = standin_dynamics
    sigma = 0.1
    rep = privacy_report(
        standin_game, schedules, sigma=sigma, horizon=200, clip=2.0,
        delta_budget=1e-3, adjacency_radius=1e-6,
    )
    step = 0  # largest per-step sensitivity
    assert rep.valid_steps[step]
    sensitivity = float(rep.sensitivities[step])
    eps = float(rep.epsilons[step])
    delta = float(rep.deltas[step])

    lo = -12.0 * sigma
    hi = 12.0 * sigma + sensitivity
    starts = np.linspace(lo, hi, 5000)
    tails_l = starts
    tails_u = np.full_like(starts, np.inf)
    widths = np.concatenate([np.full(2500, 0.5 * sigma), np.full(2500, 4.0 * sigma)])
    finite_l = np.linspace(lo, hi, 5000)
    finite_u = finite_l + widths
    lower = np.concatenate([tails_l, finite_l])
    upper = np.concatenate([tails_u, finite_u])
    assert lower.size == 10_000

    def interval_mass(mean):
        hi_cdf = np.where(np.isinf(upper), 1.0, ndtr((upper - mean) / sigma))
        return hi_cdf - ndtr((lower - mean) / sigma)

    worst = -np.inf
    for mu_a, mu_b in [(0.0, sensitivity), (sensitivity, 0.0)]:
        gap = interval_mass(mu_a) - math.exp(eps) * interval_mass(mu_b) - delta
        worst = max(worst, float(gap.max()))
    ok = worst <= 1e-15
    report(
        5,
        ok,
        f"scalar Gaussian mechanism (Delta={sensitivity:.3e}, eps={eps:.3e}, "
        f"delta={delta:.1e}) on 10^4 interval events, max violation {worst:.2e} <= 0",
    )


def test_criterion_6_composition_unit_value():
    d0 = 1e-6
    eps, delta = compose_adaptive([0.1, 0.1, 0.1], [d0, d0, d0])
    expected = d0 * (math.exp(0.2) + math.exp(0.1) + 1.0)
    ok = abs(eps - 0.3) <= 1e-12 and abs(delta - expected) <= 1e-12
    report(6, ok, f"three-step compose delta={delta!r} matches hand expansion to 1e-12")


def first_trivial_horizon(game, schedules, c, sigma, t_max=2**15):
    def delta_at(t):
        return privacy_report(
            game, schedules, sigma=sigma, horizon=t, clip=2.0,
            delta_budget=1e-3, adjacency_radius=c,
        ).delta

    lo, t = 1, 1
    hi = None
    while t <= t_max:
        if delta_at(t) >= 1.0:
            hi = t
            break
        lo, t = t, 2 * t
    if hi is None:
        return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if delta_at(mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def test_criterion_7_fig4_qualitative(standin_config, standin_game, standin_dynamics):
    _, schedules = standin_dynamics
    pairs = privacy_pairs(standin_config)
    assert pairs == [(1e-6, 0.1), (1e-5, 0.3)]
    assert standin_config["privacy"]["a"] == 2.0
    horizons = {
        pair: first_trivial_horizon(standin_game, schedules, *pair) for pair in pairs
    }
    small_c, large_c = horizons[pairs[0]], horizons[pairs[1]]
    ok = large_c is not None and small_c is not None and large_c < small_c
    report(
        7,
        ok,
        f"delta reaches 1 at T={large_c} for (c, sigma)=(1e-5, 0.3) vs "
        f"T={small_c} for (1e-6, 0.1): larger c trivial strictly earlier",
    )


def test_criterion_8_bound_evaluation(convergence_ensemble):
    geom = BregmanGeometry("entropic", (2,))
    sched = LearningSchedule(1.0, 0.5)
    value = suboptimality_bound([geom], [sched], 1.0, 1)
    expected = 2.0 * (math.log(2) + 1.0)
    formula_ok = abs(value - expected) <= 1e-12

    from privroute.sim import check_suboptimality_bound

    results, _ = convergence_ensemble
    ratios = {}
    realized_ok = True
    for sigma, (cfg, stats) in results.items():
        check = check_suboptimality_bound(cfg, stats)
        ratios[sigma] = check["realized"] / check["bound"]
        realized_ok = realized_ok and check["realized"] <= 3.0 * check["bound"]
    ok = formula_ok and realized_ok
    report(
        8,
        ok,
        f"bound(D=ln2, c=1, a=.5, L=1, t=1)={value!r} == 2(ln2+1) to 1e-12; "
        f"realized/bound at T: { {s: f'{r:.2e}' for s, r in ratios.items()} } (all <= 3)",
    )


def test_criterion_9_determinism(tmp_path):
    args = [
        "simulate", "--config", str(TWO_OD), "--sigma", "0.1",
        "--runs", "4", "--T", "30", "--seed", "90210",
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    code_a = main(args + ["--out", str(out_a)])
    code_b = main(args + ["--out", str(out_b)])
    name = "ensemble_sigma_0p1.csv"
    same = (out_a / name).read_bytes() == (out_b / name).read_bytes()

    acc = ["accountant", "--config", str(TWO_OD), "--T-range", "1:31:10"]
    code_c = main(acc + ["--out", str(out_a)])
    code_d = main(acc + ["--out", str(out_b)])
    same_acc = (out_a / "accountant.csv").read_bytes() == (out_b / "accountant.csv").read_bytes()

    ok = code_a == code_b == code_c == code_d == 0 and same and same_acc
    report(9, ok, "repeated runs with identical config and seed emit byte-identical CSVs")
