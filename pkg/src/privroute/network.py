"""Directed road networks: nodes, indexed edges, OD pairs, and simple paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_PATH_CAP",
    "Network",
    "NetworkError",
    "PathSet",
    "build_network",
    "enumerate_paths",
]

DEFAULT_PATH_CAP = 10_000


class NetworkError(ValueError):
    """Malformed or unroutable network description."""


@dataclass(frozen=True)
class Network:
    """Directed multigraph with stable integer edge indices.

    ``edges[j]`` is the ``(tail, head)`` pair of edge ``j``.  Parallel edges
    are legal and are distinguished by their index; self-loops are not
    allowed.  ``od_pairs[i]`` is the ``(origin, destination)`` pair of
    commodity ``i``.  Instances are immutable and safe to share across
    threads.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    od_pairs: tuple[tuple[str, str], ...]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_od_pairs(self) -> int:
        return len(self.od_pairs)

    def out_edges(self) -> dict[str, list[tuple[int, str]]]:
        """Outgoing ``(edge index, head)`` lists per node, in index order."""
        table: dict[str, list[tuple[int, str]]] = {v: [] for v in self.nodes}
        for j, (tail, head) in enumerate(self.edges):
            table[tail].append((j, head))
        return table


def build_network(spec: dict) -> Network:
    """Validate a ``{"nodes", "edges", "od_pairs"}`` description.

    Raises :class:`NetworkError` on duplicate node names, edges with
    unknown endpoints, self-loops, or OD pairs with no connecting path.
    """
    try:
        nodes = list(spec["nodes"])
        edges = [tuple(e) for e in spec["edges"]]
        od_pairs = [tuple(p) for p in spec["od_pairs"]]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"network spec is missing or malformed: {exc}") from exc

    if len(set(nodes)) != len(nodes):
        dupes = sorted({v for v in nodes if nodes.count(v) > 1})
        raise NetworkError(f"duplicate node name(s): {', '.join(dupes)}")
    known = set(nodes)
    for j, (tail, head) in enumerate(edges):
        if tail not in known or head not in known:
            raise NetworkError(f"edge {j} ({tail} -> {head}) references an unknown node")
        if tail == head:
            raise NetworkError(f"edge {j} is a self-loop on {tail}")
    if not od_pairs:
        raise NetworkError("at least one OD pair is required")
    for origin, dest in od_pairs:
        if origin not in known or dest not in known:
            raise NetworkError(f"OD pair ({origin}, {dest}) references an unknown node")
        if origin == dest:
            raise NetworkError(f"degenerate OD pair ({origin}, {dest})")

    net = Network(tuple(nodes), tuple(edges), tuple(od_pairs))
    out = net.out_edges()
    for origin, dest in net.od_pairs:
        if not _reachable(out, origin, dest):
            raise NetworkError(f"unreachable OD pair ({origin}, {dest})")
    return net


def _reachable(out: dict[str, list[tuple[int, str]]], origin: str, dest: str) -> bool:
    seen = {origin}
    frontier = [origin]
    while frontier:
        node = frontier.pop()
        for _, head in out[node]:
            if head == dest:
                return True
            if head not in seen:
                seen.add(head)
                frontier.append(head)
    return False


@dataclass(frozen=True, eq=False)
class PathSet:
    """Enumerated simple paths and edge-path incidence matrices.

    ``paths[i]`` lists the simple paths of OD pair ``i`` as tuples of edge
    indices, ordered lexicographically so repeated enumeration is
    byte-identical.  ``incidence[i]`` is the ``num_edges x len(paths[i])``
    0/1 matrix whose column ``p`` marks the edges of path ``p``.
    """

    network: Network
    paths: tuple[tuple[tuple[int, ...], ...], ...]
    incidence: tuple[np.ndarray, ...]

    @property
    def block_sizes(self) -> tuple[int, ...]:
        """Number of paths per OD pair."""
        return tuple(len(group) for group in self.paths)

    @property
    def total_paths(self) -> int:
        return sum(self.block_sizes)

    def block_slices(self) -> list[slice]:
        """Slices of the concatenated path vector, one per OD pair."""
        out, start = [], 0
        for size in self.block_sizes:
            out.append(slice(start, start + size))
            start += size
        return out

    def stacked_incidence(self) -> np.ndarray:
        """All incidence matrices side by side, ``num_edges x total_paths``."""
        return np.concatenate(self.incidence, axis=1)


def enumerate_paths(network: Network, max_paths_per_od: int = DEFAULT_PATH_CAP) -> PathSet:
    """Enumerate every simple path of every OD pair by depth-first search.

    Paths visit no node twice and are emitted in lexicographic order of
    their edge-index sequences.  If an OD pair has more than
    ``max_paths_per_od`` simple paths the enumeration fails loudly instead
    of truncating.
    """
    out = network.out_edges()
    all_paths: list[tuple[tuple[int, ...], ...]] = []
    matrices: list[np.ndarray] = []
    for origin, dest in network.od_pairs:
        found: list[tuple[int, ...]] = []
        prefix: list[int] = []
        visited = {origin}

        def walk(node: str) -> None:
            if node == dest:
                found.append(tuple(prefix))
                if len(found) > max_paths_per_od:
                    raise NetworkError(
                        f"OD pair ({origin}, {dest}) has more than "
                        f"{max_paths_per_od} simple paths; raise the cap explicitly"
                    )
                return
            for j, head in out[node]:
                if head in visited:
                    continue
                visited.add(head)
                prefix.append(j)
                walk(head)
                prefix.pop()
                visited.remove(head)

        walk(origin)
        if not found:
            raise NetworkError(f"unreachable OD pair ({origin}, {dest})")
        matrix = np.zeros((network.num_edges, len(found)))
        for p, path in enumerate(found):
            matrix[list(path), p] = 1.0
        all_paths.append(tuple(found))
        matrices.append(matrix)
    return PathSet(network, tuple(all_paths), tuple(matrices))
