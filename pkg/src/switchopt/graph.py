"""Undirected graphs, Laplacians, spectral connectivity, Kronecker stacking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "Network",
    "laplacian",
    "adjacency",
    "lambda2",
    "jointly_connected",
    "stack",
]

CONNECTIVITY_TOL = 1e-9


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph; edges stored canonically as (min, max)."""

    n_nodes: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        canon = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i},{j}) outside 0..{self.n_nodes - 1}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def from_edges(cls, n_nodes, pairs, one_based=False):
        off = 1 if one_based else 0
        return cls(n_nodes, frozenset((i - off, j - off) for i, j in pairs))


def adjacency(g: Graph) -> np.ndarray:
    A = np.zeros((g.n_nodes, g.n_nodes))
    for i, j in g.edges:
        A[i, j] = 1.0
        A[j, i] = 1.0
    return A


def laplacian(g: Graph) -> np.ndarray:
    """Degree matrix minus adjacency; symmetric, PSD, zero row sums."""
    A = adjacency(g)
    return np.diag(A.sum(axis=1)) - A


def lambda2(L: np.ndarray) -> float:
    """Second-smallest eigenvalue (algebraic connectivity).

    Rejects non-symmetric input; returns the raw eigenvalue, which is ~0
    whenever the zero eigenvalue has multiplicity above one.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("Laplacian must be square")
    if not np.allclose(L, L.T, rtol=0.0, atol=1e-12):
        raise ValueError("Laplacian must be symmetric")
    if L.shape[0] < 2:
        return 0.0
    return float(np.linalg.eigvalsh(L)[1])


def jointly_connected(graphs, tol: float = CONNECTIVITY_TOL) -> bool:
    """True when the union of the graphs is connected, decided spectrally:
    the summed Laplacian must have its second eigenvalue above ``tol``."""
    graphs = list(graphs)
    if not graphs:
        return False
    n = graphs[0].n_nodes
    if any(g.n_nodes != n for g in graphs):
        raise ValueError("all graphs must share the node count")
    total = sum(laplacian(g) for g in graphs)
    return lambda2(total) > tol


def stack(L: np.ndarray, n: int) -> np.ndarray:
    """Lift an N x N Laplacian to act blockwise on stacked n-vectors."""
    return np.kron(np.asarray(L, dtype=float), np.eye(n))


@dataclass(frozen=True)
class Network:
    """Switching communication topology with multiplicative channel noise.

    sigma[j, i] is the noise intensity on the directed channel carrying
    state j to receiver i; the two directions of an undirected edge are
    independent channels and may carry different intensities.  kappa is the
    certified upper bound on every intensity and coupling is the consensus
    gain.
    """

    graphs: tuple[Graph, ...]
    sigma: np.ndarray
    coupling: float
    kappa: float

    def __post_init__(self):
        graphs = tuple(self.graphs)
        object.__setattr__(self, "graphs", graphs)
        if not graphs:
            raise ValueError("network needs at least one graph")
        N = graphs[0].n_nodes
        if any(g.n_nodes != N for g in graphs):
            raise ValueError("all switching modes must share the node count")
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = np.full((N, N), float(sigma))
            np.fill_diagonal(sigma, 0.0)
        if sigma.shape != (N, N):
            raise ValueError(f"sigma must be scalar or {N}x{N}")
        if np.any(sigma < 0.0):
            raise ValueError("noise intensities must be nonnegative")
        object.__setattr__(self, "sigma", sigma)
        if self.coupling <= 0.0:
            raise ValueError("coupling strength must be positive")
        if self.kappa < 0.0:
            raise ValueError("kappa must be nonnegative")
        off = sigma[~np.eye(N, dtype=bool)]
        if off.size and off.max() > self.kappa + 1e-15:
            raise ValueError(
                f"noise intensity {off.max():.6g} exceeds bound kappa={self.kappa}"
            )

    @property
    def n_nodes(self) -> int:
        return self.graphs[0].n_nodes

    @property
    def n_modes(self) -> int:
        return len(self.graphs)

    def receive_coeffs(self, mode: int) -> np.ndarray:
        """R[i, j] = adjacency * sigma_{j->i}: the diffusion coefficient on
        what receiver i hears from neighbor j in the given mode."""
        return adjacency(self.graphs[mode]) * self.sigma.T
