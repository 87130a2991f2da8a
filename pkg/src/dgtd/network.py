"""Static undirected communication graphs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import tolerances as tol
from .errors import ConnectivityError

# Transcription of the five-agent association graph used by the trading
# example: a 5-cycle with one chord.  Any connected graph satisfies the theory.
EXAMPLE1_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3))


@dataclass(frozen=True)
class CommNetwork:
    n_agents: int
    edges: tuple  # sorted (i, j) pairs with i < j

    @cached_property
    def W(self) -> np.ndarray:
        W = np.zeros((self.n_agents, self.n_agents))
        for i, j in self.edges:
            W[i, j] = W[j, i] = 1.0
        W.setflags(write=False)
        return W

    @cached_property
    def H(self) -> np.ndarray:
        H = np.diag(self.W.sum(axis=1))
        H.setflags(write=False)
        return H

    @cached_property
    def L(self) -> np.ndarray:
        L = self.H - self.W
        L.setflags(write=False)
        return L

    def neighbors(self, i: int) -> list[int]:
        return sorted([b for a, b in self.edges if a == i] + [a for a, b in self.edges if b == i])

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))


def build_network(n_agents: int, edges) -> CommNetwork:
    """Validate an edge list and return the graph.

    Duplicate and reversed edges are merged.  Self-loops, out-of-range
    endpoints and disconnected graphs raise.
    """
    if n_agents < 1:
        raise ValueError(f"need at least one agent, got {n_agents}")
    canon = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n_agents and 0 <= j < n_agents):
            raise ValueError(f"edge ({i}, {j}) has an endpoint outside [0, {n_agents})")
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        canon.add((min(i, j), max(i, j)))
    net = CommNetwork(n_agents, tuple(sorted(canon)))
    if n_agents > 1:
        eig = np.linalg.eigvalsh(net.L)
        if eig[1] <= tol.CONNECTIVITY:
            raise ConnectivityError(
                f"graph on {n_agents} nodes is disconnected (algebraic connectivity {eig[1]:.3g})"
            )
    return net


def star(n: int) -> CommNetwork:
    return build_network(n, [(0, j) for j in range(1, n)])


def path(n: int) -> CommNetwork:
    return build_network(n, [(j, j + 1) for j in range(n - 1)])


def complete(n: int) -> CommNetwork:
    return build_network(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def ring(n: int) -> CommNetwork:
    if n < 3:
        return path(n)
    return build_network(n, [(j, (j + 1) % n) for j in range(n)])


def example1() -> CommNetwork:
    return build_network(5, EXAMPLE1_EDGES)


def random_connected(n: int, rng, extra_edge_prob: float = 0.3) -> CommNetwork:
    """Random spanning tree plus independent extra edges."""
    edges = [(int(rng.integers(0, j)), j) for j in range(1, n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra_edge_prob:
                edges.append((i, j))
    return build_network(n, edges)


_PRESETS = {"star": star, "path": path, "complete": complete, "ring": ring}


def parse_graph(spec: str) -> CommNetwork:
    """Resolve ``star:N``, ``path:N``, ``complete:N``, ``ring:N``, ``example1``
    or a path to an edge-list file."""
    if spec == "example1":
        return example1()
    kind, sep, n = spec.partition(":")
    if sep and kind in _PRESETS:
        return _PRESETS[kind](int(n))
    return read_edge_list(spec)


def read_edge_list(path_) -> CommNetwork:
    """One ``i j`` pair per line, 0-indexed.  ``# nodes N`` sets isolated-node count."""
    edges, n = [], 0
    with open(path_) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "nodes":
                    n = max(n, int(parts[1]))
                continue
            i, j = (int(t) for t in line.split())
            edges.append((i, j))
            n = max(n, i + 1, j + 1)
    return build_network(n, edges)


def write_edge_list(net: CommNetwork, path_) -> None:
    with open(path_, "w") as fh:
        fh.write(f"# nodes {net.n_agents}\n")
        for i, j in net.edges:
            fh.write(f"{i} {j}\n")


def neighbor_disagreement(net: CommNetwork, vectors, i: int) -> np.ndarray:
    """``|N_i| x_i - sum_{j in N_i} x_j`` for agent ``i``."""
    vectors = np.asarray(vectors, dtype=float)
    nbrs = net.neighbors(i)
    out = len(nbrs) * vectors[i]
    for j in nbrs:
        out = out - vectors[j]
    return out


def laplacian_kron(net: CommNetwork, q: int) -> np.ndarray:
    """Laplacian lifted to stacked ``q``-vectors, ``L kron I_q``."""
    if q < 1:
        raise ValueError(f"q must be positive, got {q}")
    return np.kron(net.L, np.eye(q))
