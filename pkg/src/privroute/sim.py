"""Monte Carlo simulation of noisy mirror-descent routing dynamics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import game as game_ops
from .dynamics import BregmanGeometry, LearningSchedule, smd_update, suboptimality_bound
from .game import Equilibrium, GameInstance, solve_equilibrium
from .privacy import loss_sup_bound

__all__ = [
    "EnsembleStats",
    "RunRecord",
    "SimulationConfig",
    "check_suboptimality_bound",
    "fit_loglog_slope",
    "monte_carlo",
    "observe_losses",
    "run_seeds",
    "run_trajectory",
    "write_ensemble_csv",
    "write_manifest",
    "write_run_csv",
]

EQUILIBRIUM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """One experiment: a game, per-population dynamics, noise, and replication.

    ``sigma = 0`` runs the deterministic dynamics.  Each run draws one
    noise vector per iteration, observed identically by all populations.
    ``slope_window`` bounds the iterations used for the log-log rate fit
    and defaults to the last three quarters of the horizon.
    """

    game: GameInstance
    geometries: tuple[BregmanGeometry, ...]
    schedules: tuple[LearningSchedule, ...]
    sigma: float
    horizon: int
    runs: int
    seed: int
    slope_window: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        k = self.game.num_populations
        if len(self.geometries) != k or len(self.schedules) != k:
            raise ValueError("one geometry and one schedule per population are required")
        for geom in self.geometries:
            if geom.block_sizes != self.game.block_sizes:
                raise ValueError("geometry block structure does not match the game")
        if self.sigma < 0:
            raise ValueError("noise standard deviation must be nonnegative")
        if self.horizon < 1 or self.runs < 1:
            raise ValueError("horizon and run count must be at least one")


@dataclass(frozen=True, eq=False)
class RunRecord:
    """One trajectory: post-update states and the observations that drove them.

    Row ``t`` (0-based) holds the potential, gap, and allocation after
    ``t + 1`` updates, plus the noisy loss vector observed at the state
    preceding that update.
    """

    potentials: np.ndarray
    gaps: np.ndarray
    allocations: np.ndarray
    observed_losses: np.ndarray
    seed: object


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Per-iteration statistics across independent runs."""

    iterations: np.ndarray
    f_mean: np.ndarray
    f_std: np.ndarray
    gap_mean: np.ndarray
    flow_mean: np.ndarray
    f_star: float
    equilibrium: Equilibrium
    slope: float
    slope_window: tuple[int, int]
    sigma: float
    runs: int
    seed: int


def observe_losses(losses: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Release the loss vector through i.i.d. additive Gaussian noise."""
    losses = np.asarray(losses, float)
    if sigma < 0:
        raise ValueError("noise standard deviation must be nonnegative")
    if sigma == 0:
        return losses.copy()
    return losses + sigma * rng.standard_normal(losses.shape)


def run_trajectory(cfg: SimulationConfig, seed) -> RunRecord:
    """Simulate one run; fully determined by the config and the seed."""
    rng = np.random.default_rng(seed)
    game = cfg.game
    T = cfg.horizon
    x = game_ops.uniform_allocation(game)
    potentials = np.empty(T)
    gaps = np.empty(T)
    allocations = np.empty((T, game.num_populations, game.total_paths))
    observed = np.empty((T, game.total_paths))

    phi = game_ops.edge_flows(game, x)
    losses = game_ops.path_losses(game, phi)
    for t in range(T):
        loss_hat = observe_losses(losses, cfg.sigma, rng)
        for k in range(game.num_populations):
            x[k] = smd_update(
                cfg.geometries[k], cfg.schedules[k], t, x[k], game.masses[k], loss_hat
            )
        phi = game_ops.edge_flows(game, x)
        losses = game_ops.path_losses(game, phi)
        potentials[t] = game_ops.potential_from_flows(game, phi)
        gaps[t] = game_ops.gap_from_losses(game, x, losses)
        allocations[t] = x
        observed[t] = loss_hat
    return RunRecord(potentials, gaps, allocations, observed, seed)


def fit_loglog_slope(iterations: np.ndarray, values: np.ndarray, window: tuple[int, int]) -> float:
    """Least-squares slope of log(values) against log(iterations) in a window."""
    lo, hi = window
    mask = (iterations >= lo) & (iterations <= hi)
    if mask.sum() < 2:
        raise ValueError(f"slope window {window} selects fewer than two iterations")
    safe = np.clip(values[mask], 1e-300, None)
    return float(np.polyfit(np.log(iterations[mask]), np.log(safe), 1)[0])


def run_seeds(seed: int, runs: int) -> list[np.random.SeedSequence]:
    """Per-run seed substreams: ``SeedSequence(seed).spawn(runs)``."""
    return np.random.SeedSequence(seed).spawn(runs)


def monte_carlo(
    cfg: SimulationConfig,
    equilibrium: Equilibrium | None = None,
    records: list[RunRecord] | None = None,
) -> EnsembleStats:
    """Replicate the trajectory over independent seeds and aggregate.

    Per-run generators are spawned from :func:`run_seeds` so runs are
    independent yet the whole ensemble is reproducible.  The potential
    reference value comes from a gap-certified equilibrium solve, shared
    across noise levels when passed in.  Precomputed ``records`` (for
    example, kept to write per-run files) skip the simulation pass.
    """
    if equilibrium is None:
        equilibrium = solve_equilibrium(cfg.game, tol=EQUILIBRIUM_TOL)
    if records is None:
        records = [run_trajectory(cfg, child) for child in run_seeds(cfg.seed, cfg.runs)]
    elif len(records) != cfg.runs:
        raise ValueError(f"expected {cfg.runs} run records, got {len(records)}")

    f_runs = np.stack([r.potentials for r in records])
    gap_runs = np.stack([r.gaps for r in records])
    flow_runs = np.stack([r.allocations for r in records])
    iterations = np.arange(1, cfg.horizon + 1)
    window = cfg.slope_window or (max(1, cfg.horizon // 4), cfg.horizon)
    f_mean = f_runs.mean(axis=0)
    slope = fit_loglog_slope(iterations, f_mean - equilibrium.potential, window)
    return EnsembleStats(
        iterations=iterations,
        f_mean=f_mean,
        f_std=f_runs.std(axis=0),
        gap_mean=gap_runs.mean(axis=0),
        flow_mean=flow_runs.mean(axis=0),
        f_star=equilibrium.potential,
        equilibrium=equilibrium,
        slope=slope,
        slope_window=window,
        sigma=cfg.sigma,
        runs=cfg.runs,
        seed=cfg.seed,
    )


def check_suboptimality_bound(cfg: SimulationConfig, stats: EnsembleStats) -> dict:
    """Compare realized final-iterate suboptimality against the theory bound.

    The noise second moment is bounded by ``total_paths * (M^2 + sigma^2)``
    with ``M`` the uniform loss bound; noise coordinates are independent
    and the dual norm is dominated by the full euclidean norm.
    """
    loss_sup = loss_sup_bound(cfg.game)
    noise_bound = cfg.game.total_paths * (loss_sup**2 + cfg.sigma**2)
    bound = suboptimality_bound(cfg.geometries, cfg.schedules, noise_bound, cfg.horizon)
    realized = float(stats.f_mean[-1] - stats.f_star)
    return {
        "noise_bound": noise_bound,
        "bound": bound,
        "realized": realized,
        "ok": realized <= 3.0 * bound,
    }


def write_ensemble_csv(stats: EnsembleStats, path) -> None:
    """Write per-iteration ensemble statistics as RFC-4180 CSV.

    Columns: ``t, f_mean, f_std, gap_mean`` then ``flow[k][p]`` for every
    population ``k`` and concatenated path index ``p``.
    """
    _, n_pops, n_paths = stats.flow_mean.shape
    header = ["t", "f_mean", "f_std", "gap_mean"] + [
        f"flow[{k}][{p}]" for k in range(n_pops) for p in range(n_paths)
    ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i, t in enumerate(stats.iterations):
            row = [
                int(t),
                repr(float(stats.f_mean[i])),
                repr(float(stats.f_std[i])),
                repr(float(stats.gap_mean[i])),
            ]
            row.extend(repr(float(v)) for v in stats.flow_mean[i].ravel())
            writer.writerow(row)


def write_run_csv(record: RunRecord, path) -> None:
    """Write one trajectory as RFC-4180 CSV.

    Columns: ``t, f, gap`` then ``flow[k][p]`` and the released noisy
    losses ``loss_hat[p]``.
    """
    horizon, n_pops, n_paths = record.allocations.shape
    header = (
        ["t", "f", "gap"]
        + [f"flow[{k}][{p}]" for k in range(n_pops) for p in range(n_paths)]
        + [f"loss_hat[{p}]" for p in range(n_paths)]
    )
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for t in range(horizon):
            row = [t + 1, repr(float(record.potentials[t])), repr(float(record.gaps[t]))]
            row.extend(repr(float(v)) for v in record.allocations[t].ravel())
            row.extend(repr(float(v)) for v in record.observed_losses[t])
            writer.writerow(row)


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def stats_summary(stats: EnsembleStats) -> dict:
    """Manifest-ready summary of an ensemble (no per-iteration arrays)."""
    return {
        "sigma": stats.sigma,
        "runs": stats.runs,
        "seed": stats.seed,
        "f_star": stats.f_star,
        "equilibrium_gap": stats.equilibrium.gap,
        "equilibrium_iterations": stats.equilibrium.iterations,
        "slope": stats.slope,
        "slope_window": list(stats.slope_window),
        "terminal_f_mean": float(stats.f_mean[-1]),
        "terminal_gap_mean": float(stats.gap_mean[-1]),
    }
