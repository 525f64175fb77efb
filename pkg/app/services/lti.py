"""LTI systems in pole-residue and state-space form.

A PoleResidueSystem stores

    H(s) = D + sum_l sum_k R_lk / (s + d_l)^k

so the chain with parameter d has its pole at s = -d. Stability therefore reads
Re[d] >= 0. All objects are immutable; every operation returns new objects.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg

from app.config import get_settings
from app.errors import InvariantViolation, PoleProximityError, ValidationError

logger = logging.getLogger(__name__)
settings = get_settings()

# Chains whose poles agree to this relative precision are the same chain.
_POLE_MATCH_RTOL = 1e-12


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _same_pole(a: complex, b: complex) -> bool:
    return abs(a - b) <= _POLE_MATCH_RTOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PoleChain:
    """Residues R_1..R_k attached to one pole parameter d."""
    pole: complex
    residues: tuple[np.ndarray, ...]

    def __post_init__(self):
        residues = tuple(_frozen(np.atleast_2d(r), dtype=complex) for r in self.residues)
        if not residues:
            raise ValidationError("a pole chain needs at least one residue")
        shape = residues[0].shape
        if any(r.shape != shape for r in residues):
            raise ValidationError(f"residue shapes differ within the chain at d={self.pole}")
        object.__setattr__(self, "pole", complex(self.pole))
        object.__setattr__(self, "residues", residues)

    @property
    def length(self) -> int:
        return len(self.residues)

    @property
    def shape(self) -> tuple[int, int]:
        return self.residues[0].shape

    def conjugate(self) -> "PoleChain":
        return PoleChain(self.pole.conjugate(), tuple(r.conj() for r in self.residues))

    def plus(self, other: "PoleChain") -> "PoleChain":
        k = max(self.length, other.length)
        zero = np.zeros(self.shape, dtype=complex)
        summed = []
        for i in range(k):
            a = self.residues[i] if i < self.length else zero
            b = other.residues[i] if i < other.length else zero
            summed.append(a + b)
        return PoleChain(self.pole, tuple(summed))


@dataclass(frozen=True, eq=False)
class RationalSISO:
    """Real rational function num(s)/den(s); coefficients in ascending powers."""
    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self):
        num = np.trim_zeros(np.asarray(self.num, dtype=float), "b")
        den = np.asarray(self.den, dtype=float)
        if den.size == 0 or den[-1] == 0.0:
            raise ValidationError("den: leading coefficient must be nonzero")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise ValidationError(
                f"num: plant is not proper (numerator degree {num.size - 1} "
                f"> denominator degree {den.size - 1})"
            )
        object.__setattr__(self, "num", tuple(float(c) for c in num))
        object.__setattr__(self, "den", tuple(float(c) for c in den))

    @property
    def num_degree(self) -> int:
        return len(self.num) - 1

    @property
    def den_degree(self) -> int:
        return len(self.den) - 1

    def evaluate(self, s):
        return npoly.polyval(s, self.num) / npoly.polyval(s, self.den)


@dataclass(frozen=True, eq=False)
class PoleResidueSystem:
    dims: tuple[int, int]
    chains: tuple[PoleChain, ...] = ()
    feedthrough: np.ndarray | None = None
    ill_conditioned: bool = False

    def __post_init__(self):
        m_out, m_in = (int(v) for v in self.dims)
        if m_out < 1 or m_in < 1:
            raise ValidationError(f"dims: must be positive, got {self.dims}")
        D = np.zeros((m_out, m_in)) if self.feedthrough is None else np.atleast_2d(
            np.asarray(self.feedthrough, dtype=float))
        if D.shape != (m_out, m_in):
            raise ValidationError(f"feedthrough: shape {D.shape} does not match dims {(m_out, m_in)}")
        merged: list[PoleChain] = []
        for chain in self.chains:
            if chain.shape != (m_out, m_in):
                raise ValidationError(
                    f"chains: residue shape {chain.shape} at d={chain.pole} does not match dims")
            for i, existing in enumerate(merged):
                if _same_pole(existing.pole, chain.pole):
                    merged[i] = existing.plus(chain)
                    break
            else:
                merged.append(chain)
        merged.sort(key=lambda c: (c.pole.real, c.pole.imag))
        object.__setattr__(self, "dims", (m_out, m_in))
        object.__setattr__(self, "feedthrough", _frozen(D, dtype=float))
        object.__setattr__(self, "chains", tuple(merged))

    @property
    def poles(self) -> list[complex]:
        """Pole parameters d (the poles themselves sit at s = -d)."""
        return [c.pole for c in self.chains]

    @property
    def order(self) -> int:
        """State dimension of the realization."""
        return sum(c.length for c in self.chains) * self.dims[1]

    @property
    def is_siso(self) -> bool:
        return self.dims == (1, 1)

    def chain_at(self, pole: complex) -> PoleChain | None:
        for chain in self.chains:
            if _same_pole(chain.pole, pole):
                return chain
        return None

    def conjugate_of(self, chain: PoleChain) -> PoleChain | None:
        return self.chain_at(chain.pole.conjugate())

    def scaled(self, gain: float) -> "PoleResidueSystem":
        chains = tuple(PoleChain(c.pole, tuple(gain * r for r in c.residues)) for c in self.chains)
        return PoleResidueSystem(self.dims, chains, gain * self.feedthrough, self.ill_conditioned)

    def check_invariants(self) -> list[str]:
        """Return a description of every violated invariant (empty when valid)."""
        tol = settings.imag_axis_tol
        problems = []
        for chain in self.chains:
            d = chain.pole
            if d.real < -tol:
                problems.append(f"unstable pole at d={d:.6g} (Re[d] < 0)")
                continue
            if abs(d.real) <= tol:
                if chain.length > 1:
                    problems.append(f"imaginary-axis pole d={d:.6g} is not simple")
                R = chain.residues[0]
                if np.abs(R.imag).max(initial=0.0) > settings.realness_tol:
                    problems.append(f"imaginary-axis residue at d={d:.6g} is not real")
                Rr = R.real
                if Rr.shape[0] != Rr.shape[1] or not np.allclose(Rr, Rr.T, atol=settings.symmetry_tol):
                    problems.append(f"imaginary-axis residue at d={d:.6g} is not symmetric")
                elif np.linalg.eigvalsh((Rr + Rr.T) / 2)[0] < -settings.psd_tol:
                    problems.append(f"imaginary-axis residue at d={d:.6g} is not positive semidefinite")
            if abs(d.imag) > tol:
                partner = self.conjugate_of(chain)
                if partner is None or partner.length != chain.length or not all(
                    np.allclose(a, b.conj(), atol=settings.realness_tol)
                    for a, b in zip(chain.residues, partner.residues)
                ):
                    problems.append(f"chain at d={d:.6g} has no matching conjugate chain")
            elif any(np.abs(r.imag).max(initial=0.0) > settings.realness_tol for r in chain.residues):
                problems.append(f"complex residue at real pole d={d:.6g}")
        return problems

    def validate(self) -> "PoleResidueSystem":
        problems = self.check_invariants()
        if problems:
            raise InvariantViolation("; ".join(problems))
        return self


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    storage_matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        A = A.reshape(0, 0) if A.size == 0 else np.atleast_2d(A)
        B, C, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValidationError(f"A: must be square, got {A.shape}")
        if n == 0:
            B = B.reshape(0, D.shape[1])
            C = C.reshape(D.shape[0], 0)
        if B.shape[0] != n or C.shape[1] != n or C.shape[0] != D.shape[0] or B.shape[1] != D.shape[1]:
            raise ValidationError(
                f"state-space dimensions inconsistent: A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))
        if self.storage_matrix is not None:
            P = np.atleast_2d(np.asarray(self.storage_matrix, dtype=float))
            if P.shape != (n, n):
                raise ValidationError(f"storage_matrix: shape {P.shape} does not match n={n}")
            object.__setattr__(self, "storage_matrix", _frozen(P))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.D.shape


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def static_system(D) -> PoleResidueSystem:
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return PoleResidueSystem(D.shape, (), D)


def zero_system(m_out: int, m_in: int) -> PoleResidueSystem:
    return PoleResidueSystem((m_out, m_in))


# ---------------------------------------------------------------------------
# Partial fractions
# ---------------------------------------------------------------------------

def _cluster_roots(roots: Sequence[complex], tol: float) -> list[list[complex]]:
    clusters: list[list[complex]] = []
    for root in sorted(roots, key=lambda z: (z.real, z.imag)):
        for cluster in clusters:
            if min(abs(root - member) for member in cluster) <= tol:
                cluster.append(root)
                break
        else:
            clusters.append([root])
    return _merge_split_roots(clusters, tol)


def _spread(cluster: Sequence[complex]) -> float:
    center = np.mean(cluster)
    return float(max(abs(z - center) for z in cluster))


def _merge_split_roots(clusters: list[list[complex]], tol: float) -> list[list[complex]]:
    """Merge clusters that together look like one k-fold root scattered by rounding.

    A k-fold root computed from polynomial coefficients moves by roughly
    eps^(1/k) relative to its magnitude, so the admissible spread grows with
    the merged multiplicity. Closest admissible pair first.
    """
    clusters = [list(c) for c in clusters]
    while True:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                merged = clusters[i] + clusters[j]
                scale = max(1.0, abs(complex(np.mean(merged))))
                limit = max(tol, settings.root_split_eps ** (1.0 / len(merged)) * scale)
                spread = _spread(merged)
                if spread <= limit and (best is None or spread < best[0]):
                    best = (spread, i, j)
        if best is None:
            return clusters
        _, i, j = best
        clusters[i] = clusters[i] + clusters.pop(j)


def partial_fraction_decompose(plant: RationalSISO, cluster_tol: float | None = None) -> PoleResidueSystem:
    """Split a proper SISO rational function into pole chains plus feedthrough.

    Roots come from companion-matrix eigenvalues; roots within ``cluster_tol``
    of each other form one repeated pole. Residues are fitted by least squares
    on sample points spread over a circle enclosing every pole.
    """
    tol = settings.root_cluster_tol if cluster_tol is None else cluster_tol
    n = plant.den_degree
    if n < 1:
        raise ValidationError("den: denominator degree must be at least 1")

    den = np.asarray(plant.den)
    num = np.zeros(n + 1)
    num[: len(plant.num)] = plant.num
    feedthrough = num[n] / den[n]
    remainder = (num - feedthrough * den)[:n]

    roots = linalg.eigvals(linalg.companion(den[::-1]))
    clusters = _cluster_roots(list(roots), tol)

    centers = []
    for cluster in clusters:
        c = complex(np.mean(cluster))
        if abs(c.imag) <= tol:
            c = complex(c.real, 0.0)
        if abs(c.real) <= settings.imag_axis_tol:
            c = complex(0.0, c.imag)
        centers.append(c)

    ill_conditioned = False
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if abs(centers[i] - centers[j]) < 1e3 * tol:
                ill_conditioned = True
    # exact conjugate symmetry for complex clusters
    for i, c in enumerate(centers):
        if c.imag > 0:
            partner = min(
                (j for j, o in enumerate(centers) if o.imag < 0 and len(clusters[j]) == len(clusters[i])),
                key=lambda j: abs(centers[j] - c.conjugate()),
                default=None,
            )
            if partner is None or abs(centers[partner] - c.conjugate()) > 1e3 * tol:
                ill_conditioned = True
            else:
                centers[partner] = c.conjugate()

    # least-squares residue fit
    radius = 2.0 * max(1.0, float(np.max(np.abs(roots))))
    n_sample = max(4 * n, 16)
    theta = 2 * np.pi * (np.arange(n_sample) + 0.5) / n_sample
    samples = radius * np.exp(1j * theta)
    target = npoly.polyval(samples, remainder) / npoly.polyval(samples, den)

    columns, index = [], []
    for ci, (center, cluster) in enumerate(zip(centers, clusters)):
        for k in range(1, len(cluster) + 1):
            columns.append(1.0 / (samples - center) ** k)
            index.append((ci, k))
    basis = np.column_stack(columns)
    scale = np.linalg.norm(basis, axis=0)
    coef, *_ = np.linalg.lstsq(basis / scale, target, rcond=None)
    coef = coef / scale

    residues: list[list[complex]] = [[0j] * len(cl) for cl in clusters]
    for (ci, k), value in zip(index, coef):
        residues[ci][k - 1] = complex(value)

    for i, c in enumerate(centers):
        if c.imag == 0.0:
            residues[i] = [complex(r.real, 0.0) for r in residues[i]]
        elif c.imag > 0:
            j = next((j for j, o in enumerate(centers) if o == c.conjugate()), None)
            if j is not None:
                avg = [(a + b.conjugate()) / 2 for a, b in zip(residues[i], residues[j])]
                residues[i] = avg
                residues[j] = [a.conjugate() for a in avg]

    if ill_conditioned:
        logger.warning("Root clustering is ill-conditioned for den=%s (tol=%g)", plant.den, tol)

    chains = tuple(
        PoleChain(-c, tuple(np.array([[r]]) for r in res)) for c, res in zip(centers, residues)
    )
    return PoleResidueSystem((1, 1), chains, [[feedthrough]], ill_conditioned)


# ---------------------------------------------------------------------------
# Realization
# ---------------------------------------------------------------------------

def _jordan_chain(pole: complex, residues: Sequence[np.ndarray], m_in: int):
    k = len(residues)
    eye = np.eye(m_in)
    A = -pole * np.eye(k * m_in) + np.kron(np.eye(k, k=1), eye)
    B = np.kron(np.eye(k)[:, [k - 1]], eye)
    # block j has transfer 1/(s+d)^(k-j), so it carries R_(k-j)
    C = np.hstack(list(reversed(residues)))
    return A, B, C


def realize(sys: PoleResidueSystem) -> StateSpaceSystem:
    """Real state-space realization; one Jordan block per chain.

    A conjugate pair of chains becomes one real block in (Re z, Im z)
    coordinates, so the realization stays real.
    """
    sys.validate()
    m_out, m_in = sys.dims
    tol = settings.imag_axis_tol
    A_blocks, B_blocks, C_blocks = [], [], []
    done: set[int] = set()
    for idx, chain in enumerate(sys.chains):
        if idx in done:
            continue
        d = chain.pole
        if abs(d.imag) <= tol:
            A, B, C = _jordan_chain(d.real, [r.real for r in chain.residues], m_in)
        else:
            partner = sys.conjugate_of(chain)
            done.add(next(i for i, c in enumerate(sys.chains) if c is partner))
            Ac, Bc, Cc = _jordan_chain(d, chain.residues, m_in)
            A = np.block([[Ac.real, -Ac.imag], [Ac.imag, Ac.real]])
            B = np.vstack([Bc, np.zeros_like(Bc)])
            C = np.hstack([2 * Cc.real, -2 * Cc.imag])
        A_blocks.append(A)
        B_blocks.append(B)
        C_blocks.append(C)
        done.add(idx)

    if not A_blocks:
        return StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, m_in)), np.zeros((m_out, 0)), sys.feedthrough)
    return StateSpaceSystem(
        linalg.block_diag(*A_blocks), np.vstack(B_blocks), np.hstack(C_blocks), sys.feedthrough
    )


# ---------------------------------------------------------------------------
# Combination and evaluation
# ---------------------------------------------------------------------------

def parallel(sys1: PoleResidueSystem, sys2: PoleResidueSystem) -> PoleResidueSystem:
    """Parallel connection: same input, outputs added."""
    if sys1.dims != sys2.dims:
        raise ValidationError(f"dims: parallel connection needs equal dims, got {sys1.dims} and {sys2.dims}")
    return PoleResidueSystem(
        sys1.dims,
        sys1.chains + sys2.chains,
        sys1.feedthrough + sys2.feedthrough,
        sys1.ill_conditioned or sys2.ill_conditioned,
    )


def _check_sample(sys: PoleResidueSystem, s: complex, tol: float) -> None:
    for chain in sys.chains:
        if abs(s + chain.pole) < tol:
            raise PoleProximityError(chain.pole, float(np.imag(s)))


def evaluate_s(sys: PoleResidueSystem, s: complex, tol: float | None = None) -> np.ndarray:
    """H(s) at an arbitrary complex point."""
    tol = settings.pole_proximity_tol if tol is None else tol
    _check_sample(sys, s, tol)
    H = sys.feedthrough.astype(complex)
    for chain in sys.chains:
        base = s + chain.pole
        for k, R in enumerate(chain.residues, start=1):
            H = H + R / base**k
    return H


def evaluate(sys: PoleResidueSystem, omega: float, tol: float | None = None) -> np.ndarray:
    """H(jω)."""
    return evaluate_s(sys, 1j * float(omega), tol)


def frequency_response(sys: PoleResidueSystem, omegas: Iterable[float], tol: float | None = None) -> np.ndarray:
    """H(jω) for every ω, shape (P, m_out, m_in)."""
    tol = settings.pole_proximity_tol if tol is None else tol
    s = 1j * np.asarray(list(omegas), dtype=float)
    H = np.broadcast_to(sys.feedthrough.astype(complex), (s.size,) + sys.dims).copy()
    for chain in sys.chains:
        base = s + chain.pole
        close = np.abs(base) < tol
        if close.any():
            raise PoleProximityError(chain.pole, float(s[np.argmax(close)].imag))
        for k, R in enumerate(chain.residues, start=1):
            H += R[None, :, :] / (base**k)[:, None, None]
    return H


def ss_frequency_response(ss: StateSpaceSystem, omegas: Iterable[float]) -> np.ndarray:
    """C (jωI - A)^-1 B + D for every ω, shape (P, m_out, m_in)."""
    omegas = np.asarray(list(omegas), dtype=float)
    out = np.empty((omegas.size,) + ss.dims, dtype=complex)
    eye = np.eye(ss.n)
    for i, w in enumerate(omegas):
        if ss.n:
            out[i] = ss.C @ np.linalg.solve(1j * w * eye - ss.A, ss.B) + ss.D
        else:
            out[i] = ss.D
    return out
