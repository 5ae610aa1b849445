"""Command-line front end: simulate, accountant, constants, equilibrium."""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_dynamics_from_config,
    build_game_from_config,
    load_config,
    privacy_pairs,
)
from .game import solve_equilibrium
from .network import NetworkError
from .privacy import (
    allocation_supremum,
    incidence_gain,
    loss_lipschitz_bound,
    loss_sup_bound,
    privacy_report,
)
from .sim import (
    SimulationConfig,
    check_suboptimality_bound,
    monte_carlo,
    run_seeds,
    run_trajectory,
    stats_summary,
    write_ensemble_csv,
    write_manifest,
    write_run_csv,
)

OUTPUT_DIR_ENV = "PRIVROUTE_OUTDIR"


def _output_dir(args, cfg: dict) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _sigma_token(sigma: float) -> str:
    return f"{sigma:g}".replace(".", "p").replace("-", "m")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sim_cfg = cfg.get("simulation")
    if sim_cfg is None:
        raise ConfigError("config has no simulation block")
    game = build_game_from_config(cfg)
    geometries, schedules = build_dynamics_from_config(cfg, game.paths)

    sigmas = [args.sigma] if args.sigma is not None else np.atleast_1d(sim_cfg["sigma"]).tolist()
    horizon = args.T if args.T is not None else sim_cfg["T"]
    runs = args.runs if args.runs is not None else sim_cfg["runs"]
    seed = args.seed if args.seed is not None else sim_cfg["seed"]
    window = tuple(sim_cfg["slope_window"]) if "slope_window" in sim_cfg else None

    outdir = _output_dir(args, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    equilibrium = solve_equilibrium(game)
    all_ok = True
    for sigma in sigmas:
        run_cfg = SimulationConfig(
            game=game,
            geometries=geometries,
            schedules=schedules,
            sigma=float(sigma),
            horizon=int(horizon),
            runs=int(runs),
            seed=int(seed),
            slope_window=window,
        )
        token = _sigma_token(float(sigma))
        records = None
        if args.per_run:
            records = [run_trajectory(run_cfg, s) for s in run_seeds(run_cfg.seed, run_cfg.runs)]
            run_dir = outdir / f"runs_sigma_{token}"
            run_dir.mkdir(parents=True, exist_ok=True)
            for i, record in enumerate(records):
                write_run_csv(record, run_dir / f"run_{i:03d}.csv")
        stats = monte_carlo(run_cfg, equilibrium, records=records)
        bound = check_suboptimality_bound(run_cfg, stats)
        all_ok = all_ok and bound["ok"]
        write_ensemble_csv(stats, outdir / f"ensemble_sigma_{token}.csv")
        manifest = {
            "command": "simulate",
            "version": __version__,
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "config": cfg,
            "effective": {
                "sigma": float(sigma),
                "T": int(horizon),
                "runs": int(runs),
                "seed": int(seed),
            },
            "seeding": {
                "master_seed": int(seed),
                "rule": "numpy SeedSequence(master_seed).spawn(runs)",
            },
            "results": stats_summary(stats),
            "checks": {"suboptimality_bound": bound},
        }
        write_manifest(outdir / f"manifest_sigma_{token}.json", manifest)
        print(
            f"sigma={sigma:g}: slope={stats.slope:.4f} "
            f"terminal_f_mean={stats.f_mean[-1]:.6f} f_star={stats.f_star:.6f} "
            f"bound_ok={bound['ok']}"
        )
    return 0 if all_ok else 1


def _parse_t_range(text: str) -> range:
    parts = [int(p) for p in text.split(":")]
    if len(parts) == 2:
        start, stop = parts
        step = 1
    elif len(parts) == 3:
        start, stop, step = parts
    else:
        raise ConfigError(f"bad T-range {text!r}; expected start:stop[:step]")
    if start < 1 or stop < start or step < 1:
        raise ConfigError(f"bad T-range {text!r}")
    return range(start, stop + 1, step)


def cmd_accountant(args) -> int:
    cfg = load_config(args.config)
    privacy_cfg = cfg.get("privacy")
    if privacy_cfg is None:
        raise ConfigError("config has no privacy block")
    game = build_game_from_config(cfg)
    _, schedules = build_dynamics_from_config(cfg, game.paths)

    pairs = privacy_pairs(cfg)
    if args.c is not None:
        sigmas = sorted({sigma for _, sigma in pairs})
        pairs = [(args.c, sigma) for sigma in sigmas]
    if args.t_range is not None:
        horizons = _parse_t_range(args.t_range)
    else:
        spec = privacy_cfg.get("T_range", [1, 200])
        horizons = range(spec[0], spec[1] + 1, spec[2] if len(spec) == 3 else 1)

    clip = privacy_cfg.get("a", 2.0)
    delta_budget = privacy_cfg.get("delta_budget", 1e-3)
    paper_variant = privacy_cfg.get("paper_variant", False)

    outdir = _output_dir(args, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    out_path = outdir / "accountant.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["c", "sigma", "T", "epsilon", "delta", "valid"])
        for c, sigma in pairs:
            for horizon in horizons:
                report = privacy_report(
                    game,
                    schedules,
                    sigma=sigma,
                    horizon=horizon,
                    clip=clip,
                    delta_budget=delta_budget,
                    paper_variant=paper_variant,
                    adjacency_radius=c,
                )
                writer.writerow(
                    [
                        repr(float(c)),
                        repr(float(sigma)),
                        horizon,
                        repr(report.epsilon),
                        repr(report.delta),
                        int(report.valid),
                    ]
                )
            # Full report (constants and per-step arrays) at the last horizon.
            report_path = outdir / f"report_c_{c:g}_sigma_{_sigma_token(sigma)}.json"
            write_manifest(report_path, report.to_dict())
    manifest = {
        "command": "accountant",
        "version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg,
        "effective": {
            "pairs": [[c, s] for c, s in pairs],
            "T_range": [horizons.start, horizons.stop - 1, horizons.step],
            "a": clip,
            "delta_budget": delta_budget,
            "paper_variant": paper_variant,
        },
    }
    write_manifest(outdir / "accountant_manifest.json", manifest)
    print(f"wrote {out_path}")
    return 0


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    game = build_game_from_config(cfg)
    n_blocks = game.network.num_od_pairs
    values = {
        "incidence_gain": incidence_gain(game.paths),
        "allocation_norm_bound": allocation_supremum(game.paths),
        "mass_bound": game.mass_bound,
        "loss_lipschitz": loss_lipschitz_bound(game),
        "loss_sup": loss_sup_bound(game),
        "moduli": [1.0 / n_blocks] * game.num_populations,
        "total_paths": game.total_paths,
        "paths_per_od": list(game.block_sizes),
    }
    if args.json:
        json.dump(values, sys.stdout, indent=2, sort_keys=True)
        print()
        return 0
    print(f"paths per OD pair: {values['paths_per_od']} (total {values['total_paths']})")
    print(
        f"incidence gain A_x = {values['incidence_gain']!r}"
        "  (largest per-OD incidence spectral norm, by power iteration)"
    )
    print(
        f"allocation norm bound A_Delta = {values['allocation_norm_bound']!r}"
        "  (sum over OD pairs of the per-simplex vertex norm, 1 each)"
    )
    print(f"mass bound A_theta = {values['mass_bound']!r}  (largest declared OD mass)")
    print(
        f"loss Lipschitz A_ell = {values['loss_lipschitz']!r}"
        "  (sum of incidence spectral norms times the worst cost slope)"
    )
    print(
        f"loss sup bound M = {values['loss_sup']!r}"
        "  (costliest path with the total mass on every edge)"
    )
    for k, modulus in enumerate(values["moduli"]):
        print(
            f"population {k}: strong-convexity modulus = {modulus!r}"
            f"  (1 per simplex, / {n_blocks} OD blocks for the summed norm)"
        )
    return 0


def cmd_equilibrium(args) -> int:
    cfg = load_config(args.config)
    game = build_game_from_config(cfg)
    eq = solve_equilibrium(game, tol=args.tol)
    if args.json:
        payload = {
            "f_star": eq.potential,
            "gap": eq.gap,
            "iterations": eq.iterations,
            "allocation": eq.allocation.tolist(),
        }
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
        return 0
    print(f"f_star = {eq.potential!r}  (gap {eq.gap:.3e} after {eq.iterations} iterations)")
    for k in range(game.num_populations):
        print(f"population {k} path flows: {np.round(eq.allocation[k], 6).tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privroute",
        description=(
            "Simulate noisy mirror-descent routing-game dynamics and compute "
            "differential-privacy guarantees for the released loss sequence."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the Monte Carlo experiment")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--sigma", type=float, help="override the config noise level")
    p_sim.add_argument("--runs", type=int, help="override the Monte Carlo run count")
    p_sim.add_argument("--T", type=int, help="override the iteration horizon")
    p_sim.add_argument("--seed", type=int, help="override the master seed")
    p_sim.add_argument("--per-run", dest="per_run", action="store_true",
                       help="also write one CSV per Monte Carlo run")
    p_sim.add_argument("--out", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_acc = sub.add_parser("accountant", help="tabulate (epsilon, delta) against T")
    p_acc.add_argument("--config", required=True)
    p_acc.add_argument("--T-range", dest="t_range", help="start:stop[:step]")
    p_acc.add_argument("--c", type=float, help="override the adjacency radius")
    p_acc.add_argument("--out", help="output directory")
    p_acc.set_defaults(func=cmd_accountant)

    p_const = sub.add_parser("constants", help="print the sensitivity constants")
    p_const.add_argument("--config", required=True)
    p_const.add_argument("--json", action="store_true")
    p_const.set_defaults(func=cmd_constants)

    p_eq = sub.add_parser("equilibrium", help="solve for the equilibrium allocation")
    p_eq.add_argument("--config", required=True)
    p_eq.add_argument("--tol", type=float, default=1e-8)
    p_eq.add_argument("--json", action="store_true")
    p_eq.set_defaults(func=cmd_equilibrium)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NetworkError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
