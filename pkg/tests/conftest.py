import numpy as np
import pytest
from hypothesis import settings as hyp_settings

from app.config import get_settings
from app.services.lti import PoleChain, PoleResidueSystem
from app.services.signed_graph import (
    EXAMPLE4_LAPLACIAN,
    SignedDigraph,
    build_laplacian,
    is_weight_balanced,
    ofp_certificate,
    zero_is_simple,
)

settings = get_settings()

hyp_settings.register_profile("pfc-sync", derandomize=True, deadline=None)
hyp_settings.load_profile("pfc-sync")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(settings.pfc_sync_seed)


@pytest.fixture
def example4_laplacian() -> np.ndarray:
    return EXAMPLE4_LAPLACIAN.copy()


# --- random plants ---

def random_stable_siso(rng: np.random.Generator) -> PoleResidueSystem:
    """Strictly stable real SISO plant: Re d in [0.1, 5], |Im d| <= 5, chains up to length 3,
    residue parts uniform in [-2, 2], D >= 0."""
    chains = []
    for _ in range(rng.integers(1, 3)):
        d = rng.uniform(0.1, 5.0)
        k = rng.integers(1, 4)
        chains.append(PoleChain(d, tuple([[rng.uniform(-2.0, 2.0)]] for _ in range(k))))
    for _ in range(rng.integers(0, 2)):
        d = complex(rng.uniform(0.1, 5.0), rng.uniform(0.2, 5.0))
        k = rng.integers(1, 4)
        residues = [complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)) for _ in range(k)]
        chains.append(PoleChain(d, tuple([[r]] for r in residues)))
        chains.append(PoleChain(d.conjugate(), tuple([[r.conjugate()]] for r in residues)))
    return PoleResidueSystem((1, 1), tuple(chains), [[rng.uniform(0.0, 1.0)]])


def _random_symmetric(rng, m):
    X = rng.normal(size=(m, m))
    return (X + X.T) / 2


def random_symmetric_mimo(rng: np.random.Generator, m: int) -> PoleResidueSystem:
    """Strictly stable MIMO plant whose first residues are symmetric."""
    chains = []
    for _ in range(rng.integers(1, 3)):
        d = rng.uniform(0.1, 3.0)
        residues = [_random_symmetric(rng, m)] + [rng.normal(size=(m, m)) for _ in range(rng.integers(0, 2))]
        chains.append(PoleChain(d, tuple(residues)))
    if rng.random() < 0.5:
        d = complex(rng.uniform(0.1, 2.0), rng.uniform(0.2, 4.0))
        R1 = _random_symmetric(rng, m) + 1j * _random_symmetric(rng, m)
        chains.append(PoleChain(d, (R1,)))
        chains.append(PoleChain(d.conjugate(), (R1.conj(),)))
    return PoleResidueSystem((m, m), tuple(chains))


# --- random graphs ---

def random_balanced_digraph(rng: np.random.Generator, n: int, signed: bool = True) -> SignedDigraph:
    """Positive ring plus random directed cycles, one weight per cycle so in- and out-degrees match."""
    while True:
        A = np.zeros((n, n))
        ring = rng.uniform(0.5, 2.0)
        for k in range(n):
            A[(k + 1) % n, k] += ring
        for _ in range(rng.integers(1, n + 1)):
            length = rng.integers(2, n + 1)
            nodes = rng.permutation(n)[:length]
            w = rng.uniform(-1.0, 1.0) if signed else rng.uniform(0.1, 1.0)
            for a, b in zip(nodes, np.roll(nodes, -1)):
                A[b, a] += w
        np.fill_diagonal(A, 0.0)
        g = SignedDigraph(n, A)
        L = build_laplacian(g)
        assert is_weight_balanced(L)
        if zero_is_simple(L):
            return g


def bisection_ofp_radius(L: np.ndarray, tol: float = 1e-7) -> float:
    """Smallest r with λ_min(r L^T L + (L + L^T)/2) >= 0, by bisection."""
    feasible = lambda r: ofp_certificate(L, r) >= -1e-10  # noqa: E731
    lo, hi = -1.0, 1.0
    while feasible(lo):
        lo *= 2
    while not feasible(hi):
        hi *= 2
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
