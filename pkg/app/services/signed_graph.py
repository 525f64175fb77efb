"""Signed weighted digraphs and their Laplacians.

Convention: an edge k -> i with weight w sets a_ik = w, so node i listens to
node k. Weights may be negative; the Laplacian diagonal keeps signed in-degree
sums (no absolute values), which is what makes L indefinite on signed graphs.
"""

import logging
from dataclasses import dataclass
from typing import Iterable

import networkx as nx
import numpy as np
from scipy import linalg

from app.config import get_settings
from app.errors import GraphConditionError, ValidationError

logger = logging.getLogger(__name__)
settings = get_settings()


@dataclass(frozen=True, eq=False)
class SignedDigraph:
    n: int
    adjacency: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n: must be at least 1, got {self.n}")
        A = np.array(self.adjacency, dtype=float, copy=True)
        if A.shape != (self.n, self.n):
            raise ValidationError(f"adjacency: shape {A.shape} does not match n={self.n}")
        if np.any(np.diag(A) != 0.0):
            raise ValidationError("adjacency: self-loops are not allowed")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "SignedDigraph":
        """Edges as (from k, to i, weight)."""
        A = np.zeros((n, n))
        for k, i, w in edges:
            if not (0 <= k < n and 0 <= i < n):
                raise ValidationError(f"edges: node index out of range in edge {k}->{i} (n={n})")
            if k == i:
                raise ValidationError(f"edges: self-loop at node {i}")
            if A[i, k] != 0.0:
                raise ValidationError(f"edges: duplicate edge {k}->{i}")
            A[i, k] = float(w)
        return cls(n, A)

    @classmethod
    def from_laplacian(cls, L) -> "SignedDigraph":
        """Recover the adjacency a_ik = -L_ik implied by a Laplacian."""
        L = np.atleast_2d(np.asarray(L, dtype=float))
        if L.shape[0] != L.shape[1]:
            raise ValidationError(f"laplacian: must be square, got {L.shape}")
        if not np.allclose(L.sum(axis=1), 0.0, atol=settings.balance_tol):
            raise ValidationError("laplacian: rows must sum to zero")
        A = -L.copy()
        np.fill_diagonal(A, 0.0)
        return cls(L.shape[0], A)

    def edges(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(self.adjacency)
        return [(int(k), int(i), float(self.adjacency[i, k])) for i, k in zip(rows, cols)]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        for k, i, w in self.edges():
            g.add_edge(k, i, weight=w, sign="+" if w > 0 else "-")
        return g


@dataclass(frozen=True, eq=False)
class LaplacianAnalysis:
    L: np.ndarray
    weight_balanced: bool
    strongly_connected: bool
    zero_is_simple: bool
    inertia: tuple[int, int, int]           # (n_pos, n_neg, n_zero) of (L + L^T)/2
    ofp_radius: float | None                # None: not applicable
    certificate: float | None = None        # λ_min(r L^T L + (L + L^T)/2) at the returned r
    eigenvalues: np.ndarray | None = None

    @property
    def sync_conditions_met(self) -> bool:
        """Balanced, strongly connected and zero simple: the synchronization hypotheses."""
        return self.weight_balanced and self.strongly_connected and self.zero_is_simple


# ---------------------------------------------------------------------------
# Laplacian
# ---------------------------------------------------------------------------

def build_laplacian(g: SignedDigraph) -> np.ndarray:
    A = g.adjacency
    L = -A.copy()
    np.fill_diagonal(L, A.sum(axis=1))  # signed in-degrees
    return L


def is_weight_balanced(L: np.ndarray, tol: float | None = None) -> bool:
    tol = settings.balance_tol if tol is None else tol
    L = np.asarray(L, dtype=float)
    return bool(np.all(np.abs(L.sum(axis=0)) <= tol) and np.all(np.abs(L.sum(axis=1)) <= tol))


def _zero_count(L: np.ndarray) -> int:
    eigs = linalg.eigvals(L)
    return int(np.sum(np.abs(eigs) < settings.zero_eig_tol))


def zero_is_simple(L: np.ndarray) -> bool:
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    return _zero_count(L) == 1 and np.linalg.matrix_rank(L, tol=settings.zero_eig_tol) == n - 1


def _restricted_pencil(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = L.shape[0]
    U = linalg.null_space(np.ones((1, n)))
    LU = L @ U
    M = LU.T @ LU
    S = U.T @ ((L + L.T) / 2) @ U
    return (M + M.T) / 2, (S + S.T) / 2


def compute_ofp_radius(L) -> float:
    """Minimal r with r L^T L + (L + L^T)/2 ⪰ 0.

    Both forms vanish on the ones vector for balanced L, so the condition is
    checked on its orthogonal complement, where L^T L is positive definite when
    zero is a simple eigenvalue. r is then the largest generalized eigenvalue
    of the pencil (-S, M). Any larger r is feasible too; negative values mean
    the coupling is output strictly passive.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValidationError(f"laplacian: must be square, got {L.shape}")
    if not is_weight_balanced(L):
        raise GraphConditionError("laplacian is not weight-balanced (1^T L != 0 or L 1 != 0)")
    if n == 1:
        return 0.0
    if not zero_is_simple(L):
        raise GraphConditionError("zero is not a simple eigenvalue of the Laplacian")
    M, S = _restricted_pencil(L)
    r = float(linalg.eigh(-S, M, eigvals_only=True)[-1])
    logger.debug("OFP radius r=%.12g (n=%d)", r, n)
    return r


def ofp_certificate(L, r: float) -> float:
    """λ_min(r L^T L + (L + L^T)/2); nonnegative iff r is feasible."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    Q = r * (L.T @ L) + (L + L.T) / 2
    return float(np.linalg.eigvalsh((Q + Q.T) / 2)[0])


def analyze(g: SignedDigraph) -> LaplacianAnalysis:
    L = build_laplacian(g)
    balanced = is_weight_balanced(L)
    connected = g.n == 1 or nx.is_strongly_connected(g.to_networkx())
    simple = zero_is_simple(L)

    sym_eigs = np.linalg.eigvalsh((L + L.T) / 2)
    tol = settings.zero_eig_tol
    inertia = (int(np.sum(sym_eigs > tol)), int(np.sum(sym_eigs < -tol)), int(np.sum(np.abs(sym_eigs) <= tol)))

    radius = certificate = None
    if balanced and simple:
        radius = compute_ofp_radius(L)
        certificate = ofp_certificate(L, radius)
    elif not balanced:
        logger.info("Graph is not weight-balanced; OFP radius not applicable")

    analysis = LaplacianAnalysis(
        L=L,
        weight_balanced=balanced,
        strongly_connected=connected,
        zero_is_simple=simple,
        inertia=inertia,
        ofp_radius=radius,
        certificate=certificate,
        eigenvalues=linalg.eigvals(L),
    )
    logger.info("Graph analyzed: n=%d balanced=%s strongly_connected=%s zero_simple=%s r=%s",
                g.n, balanced, connected, simple, radius)
    return analysis


# ---------------------------------------------------------------------------
# Built-in graphs
# ---------------------------------------------------------------------------

EXAMPLE4_LAPLACIAN = np.array([
    [-1.0, 0.0, -1.0, 2.0],
    [-1.0, 1.0, 0.0, 0.0],
    [2.0, -1.0, -1.0, 0.0],
    [0.0, 0.0, 2.0, -2.0],
])


def example4_graph() -> SignedDigraph:
    """Four-node balanced signed digraph with indefinite symmetric Laplacian part (r = 0.5)."""
    return SignedDigraph.from_laplacian(EXAMPLE4_LAPLACIAN)


def directed_cycle(n: int, weight: float = 1.0) -> SignedDigraph:
    """Edges k -> k+1 (mod n)."""
    if n < 2:
        raise ValidationError("n: a cycle needs at least 2 nodes")
    return SignedDigraph.from_edges(n, [(k, (k + 1) % n, weight) for k in range(n)])


def path_graph(n: int, weight: float = 1.0) -> SignedDigraph:
    """Undirected path: both directions of every edge k <-> k+1."""
    if n < 1:
        raise ValidationError("n: must be at least 1")
    edges = []
    for k in range(n - 1):
        edges += [(k, k + 1, weight), (k + 1, k, weight)]
    return SignedDigraph.from_edges(n, edges)
