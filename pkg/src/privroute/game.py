"""Routing-game evaluation: edge flows, path losses, potential, equilibrium."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .network import Network, PathSet, enumerate_paths

__all__ = [
    "AffineCost",
    "EquilibriumError",
    "Equilibrium",
    "GameInstance",
    "GenericCost",
    "SIMPLEX_TOL",
    "build_game",
    "edge_flows",
    "gap_from_losses",
    "gradient_smoothness",
    "nash_gap",
    "path_losses",
    "potential",
    "potential_from_flows",
    "potential_gradient",
    "solve_equilibrium",
    "uniform_allocation",
    "validate_allocation",
    "weighted_inner",
]

SIMPLEX_TOL = 1e-12


class EquilibriumError(RuntimeError):
    """Equilibrium solve exhausted its iteration budget before the tolerance."""


@dataclass(frozen=True)
class AffineCost:
    """Edge travel cost ``slope * u + intercept`` with both coefficients >= 0."""

    slope: float
    intercept: float

    def __post_init__(self) -> None:
        if self.slope < 0 or self.intercept < 0:
            raise ValueError("affine cost coefficients must be nonnegative")

    def value(self, u):
        return self.slope * u + self.intercept

    def integral(self, u):
        return 0.5 * self.slope * u * u + self.intercept * u

    @property
    def lipschitz(self) -> float:
        return self.slope


@dataclass(frozen=True)
class GenericCost:
    """Nondecreasing Lipschitz edge cost given by callables.

    ``antiderivative`` must be the closed-form integral of ``fn`` from 0;
    potential evaluation refuses to run without it rather than falling back
    to silent quadrature.  Monotonicity and the declared Lipschitz constant
    are spot-checked on the feasible flow range when a game is built.
    """

    fn: Callable[[float], float]
    lipschitz: float
    antiderivative: Callable[[float], float] | None = None

    def __post_init__(self) -> None:
        if self.lipschitz < 0:
            raise ValueError("lipschitz constant must be nonnegative")

    def value(self, u):
        return self.fn(u)

    def integral(self, u):
        if self.antiderivative is None:
            raise ValueError("generic cost without antiderivative")
        return self.antiderivative(u)


EdgeCost = AffineCost | GenericCost


@dataclass(frozen=True, eq=False)
class GameInstance:
    """A routing game: network, path structure, edge costs, population masses.

    ``masses`` has one row per population and one column per OD pair; each
    entry is the traffic mass that population routes on that OD pair.
    ``mass_bound`` is the common-knowledge sup-norm bound on every row.
    ``adjacency_radius`` is the optional default mass-shift radius used by
    the privacy accounting; it can always be supplied there explicitly.
    """

    network: Network
    paths: PathSet
    costs: tuple[EdgeCost, ...]
    masses: np.ndarray
    mass_bound: float
    adjacency_radius: float | None
    incidence: np.ndarray  # stacked num_edges x total_paths matrix

    @property
    def num_populations(self) -> int:
        return self.masses.shape[0]

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return self.paths.block_sizes

    @property
    def total_paths(self) -> int:
        return self.paths.total_paths

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def path_weights(self) -> np.ndarray:
        """Per-population masses expanded over the concatenated path axis."""
        return np.repeat(self.masses, self.block_sizes, axis=1)


def build_game(
    network: Network,
    costs: Sequence[EdgeCost],
    masses,
    mass_bound: float | None = None,
    adjacency_radius: float | None = None,
    paths: PathSet | None = None,
    max_paths_per_od: int | None = None,
) -> GameInstance:
    """Assemble and validate a :class:`GameInstance`.

    ``mass_bound`` defaults to the largest mass entry.  Generic costs are
    spot-checked for monotonicity and for their declared Lipschitz constant
    on a grid of the feasible flow range ``[0, total mass]``.
    """
    if paths is None:
        if max_paths_per_od is None:
            paths = enumerate_paths(network)
        else:
            paths = enumerate_paths(network, max_paths_per_od)
    costs = tuple(costs)
    if len(costs) != network.num_edges:
        raise ValueError(
            f"expected {network.num_edges} edge costs, got {len(costs)}"
        )
    masses = np.array(masses, dtype=float)
    if masses.ndim != 2 or masses.shape[1] != network.num_od_pairs:
        raise ValueError(
            "masses must be a populations x od_pairs array, got shape "
            f"{masses.shape} for {network.num_od_pairs} OD pairs"
        )
    if np.any(masses < 0):
        raise ValueError("population masses must be nonnegative")
    peak = float(masses.max(initial=0.0))
    if mass_bound is None:
        mass_bound = peak
    elif peak > mass_bound + 1e-12:
        raise ValueError(f"mass entry {peak} exceeds the declared bound {mass_bound}")
    if adjacency_radius is not None and adjacency_radius < 0:
        raise ValueError("adjacency radius must be nonnegative")
    _spot_check_costs(costs, float(masses.sum()))
    masses.setflags(write=False)
    return GameInstance(
        network=network,
        paths=paths,
        costs=costs,
        masses=masses,
        mass_bound=float(mass_bound),
        adjacency_radius=adjacency_radius,
        incidence=paths.stacked_incidence(),
    )


def _spot_check_costs(costs: tuple[EdgeCost, ...], total_mass: float) -> None:
    grid = np.linspace(0.0, max(total_mass, 1.0), 33)
    for j, cost in enumerate(costs):
        if isinstance(cost, AffineCost):
            continue
        values = np.array([float(cost.value(u)) for u in grid])
        diffs = np.diff(values)
        if np.any(diffs < -1e-9):
            raise ValueError(f"edge cost {j} is decreasing on the feasible range")
        ratios = np.abs(diffs) / np.diff(grid)
        if np.any(ratios > cost.lipschitz * (1 + 1e-6) + 1e-12):
            raise ValueError(
                f"edge cost {j} violates its declared Lipschitz constant {cost.lipschitz}"
            )


def _cost_values(game: GameInstance, phi: np.ndarray) -> np.ndarray:
    return np.array([float(c.value(u)) for c, u in zip(game.costs, phi)])


def _cost_integrals(game: GameInstance, phi: np.ndarray) -> float:
    return float(sum(c.integral(u) for c, u in zip(game.costs, phi)))


def uniform_allocation(game: GameInstance) -> np.ndarray:
    """Every population splits each OD's unit uniformly over its paths."""
    row = np.concatenate([np.full(n, 1.0 / n) for n in game.block_sizes])
    return np.tile(row, (game.num_populations, 1))


def validate_allocation(game: GameInstance, x: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    """Check shape, nonnegativity, and per-block normalization of ``x``."""
    x = np.asarray(x)
    expected = (game.num_populations, game.total_paths)
    if x.shape != expected:
        raise ValueError(f"allocation shape {x.shape} does not match {expected}")
    if np.any(x < -tol):
        raise ValueError("allocation has negative entries")
    for s in game.paths.block_slices():
        sums = x[:, s].sum(axis=1)
        if np.any(np.abs(sums - 1.0) > max(tol, 1e-9)):
            raise ValueError(f"allocation block {s} does not sum to one: {sums}")


def edge_flows(game: GameInstance, x: np.ndarray) -> np.ndarray:
    """Mass-weighted aggregation of path allocations into edge flows."""
    x = np.asarray(x, float)
    if x.shape != (game.num_populations, game.total_paths):
        raise ValueError(
            f"allocation shape {x.shape} does not match "
            f"({game.num_populations}, {game.total_paths})"
        )
    weighted = (game.path_weights() * x).sum(axis=0)
    return game.incidence @ weighted


def path_losses(game: GameInstance, phi: np.ndarray) -> np.ndarray:
    """Per-path travel costs: each path sums its edges' costs at flow ``phi``."""
    phi = np.asarray(phi, float)
    if phi.shape != (game.network.num_edges,):
        raise ValueError("flow vector length does not match the edge count")
    return game.incidence.T @ _cost_values(game, phi)


def potential_from_flows(game: GameInstance, phi: np.ndarray) -> float:
    return _cost_integrals(game, np.asarray(phi, float))


def potential(game: GameInstance, x: np.ndarray) -> float:
    """Congestion potential: sum over edges of the cost antiderivative."""
    return potential_from_flows(game, edge_flows(game, x))


def potential_gradient(game: GameInstance, x: np.ndarray) -> np.ndarray:
    """Gradient of the potential: mass-scaled path losses, one row per population."""
    losses = path_losses(game, edge_flows(game, x))
    return game.path_weights() * losses[None, :]


def weighted_inner(x: np.ndarray, y: np.ndarray, theta, block_sizes: Sequence[int]) -> float:
    """Mass-weighted inner product: blocks are scaled by their OD mass."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    weights = np.repeat(np.asarray(theta, float), block_sizes)
    if x.shape != weights.shape or y.shape != weights.shape:
        raise ValueError("weighted_inner arguments do not match the block structure")
    return float(np.sum(weights * x * y))


def gap_from_losses(game: GameInstance, x: np.ndarray, losses: np.ndarray) -> float:
    starts = [s.start for s in game.paths.block_slices()]
    block_min = np.minimum.reduceat(losses, starts)
    weights = game.path_weights()
    current = float(np.sum(weights * np.asarray(x, float) * losses[None, :]))
    best = float(np.sum(game.masses * block_min[None, :]))
    return max(current - best, 0.0)


def nash_gap(game: GameInstance, x: np.ndarray) -> float:
    """Total incentive to deviate; zero exactly at equilibrium.

    Each population compares its current mass-weighted cost against
    rerouting every OD's mass onto that OD's cheapest path, holding the
    losses fixed.
    """
    losses = path_losses(game, edge_flows(game, x))
    return gap_from_losses(game, x, losses)


def gradient_smoothness(game: GameInstance) -> float:
    """Upper bound on the Lipschitz constant of the potential gradient."""
    lam = max((c.lipschitz for c in game.costs), default=0.0)
    if lam == 0.0 or game.total_mass == 0.0:
        return 0.0
    spectral = np.linalg.norm(game.incidence, 2)
    mass_sq = float(np.sum(game.masses.max(axis=1) ** 2))
    return lam * spectral**2 * mass_sq


@dataclass(frozen=True, eq=False)
class Equilibrium:
    allocation: np.ndarray
    potential: float
    gap: float
    iterations: int


def solve_equilibrium(
    game: GameInstance,
    tol: float = 1e-8,
    max_iter: int = 500_000,
    step_size: float | None = None,
) -> Equilibrium:
    """Minimize the potential over the allocation polytope to a gap certificate.

    Runs deterministic entropic mirror descent on exact losses from the
    uniform allocation and stops once :func:`nash_gap` (which upper-bounds
    the potential suboptimality) drops to ``tol``.  The step size defaults
    to the inverse gradient-smoothness bound; iterates are kept in the log
    domain so long runs cannot underflow a path's weight into a hard zero.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    smoothness = gradient_smoothness(game)
    eta = step_size if step_size is not None else (1.0 / smoothness if smoothness > 0 else 1.0)
    if eta <= 0:
        raise ValueError("step size must be positive")

    weights = game.path_weights()
    slices = game.paths.block_slices()
    logits = np.log(uniform_allocation(game))
    x = np.empty_like(logits)
    for it in range(max_iter + 1):
        for s in slices:
            block = logits[:, s]
            w = np.exp(block - block.max(axis=1, keepdims=True))
            x[:, s] = w / w.sum(axis=1, keepdims=True)
        phi = edge_flows(game, x)
        losses = path_losses(game, phi)
        gap = gap_from_losses(game, x, losses)
        if gap <= tol:
            return Equilibrium(x.copy(), potential_from_flows(game, phi), gap, it)
        logits -= eta * weights * losses[None, :]
    raise EquilibriumError(
        f"no equilibrium within {max_iter} iterations (gap {gap:.3e} > tol {tol:.1e})"
    )
