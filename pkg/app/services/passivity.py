"""Positive-real verification and passivity indices of LTI systems.

The Hermitian-part test is carried out on a frequency grid, so every index
reported here is a grid estimate: the true infimum can only be lower.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from app.config import get_settings
from app.errors import NotIFPError, ValidationError
from app.services.lti import PoleResidueSystem, frequency_response

logger = logging.getLogger(__name__)
settings = get_settings()


# ---------------------------------------------------------------------------
# Frequency grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    points: np.ndarray
    excluded: tuple[float, ...] = ()

    def __post_init__(self):
        pts = np.unique(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValidationError("grid: needs at least one frequency")
        if pts[0] < 0:
            raise ValidationError("grid: frequencies must be nonnegative")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size

    @classmethod
    def build(
        cls,
        sys: PoleResidueSystem | None = None,
        omega_min: float | None = None,
        omega_max: float | None = None,
        n_points: int | None = None,
        refine_points: int | None = None,
    ) -> "FrequencyGrid":
        """Log-spaced grid plus ω = 0 and linear refinement around each |Im d|.

        Frequencies sitting on an imaginary-axis pole are dropped and recorded
        in ``excluded``.
        """
        omega_min = settings.omega_min if omega_min is None else omega_min
        omega_max = settings.omega_max if omega_max is None else omega_max
        n_points = settings.grid_points if n_points is None else n_points
        refine_points = settings.pole_refine_points if refine_points is None else refine_points
        if not 0 < omega_min < omega_max:
            raise ValidationError(f"grid: need 0 < omega_min < omega_max, got {omega_min}, {omega_max}")
        if n_points < 2:
            raise ValidationError("grid: n_points must be at least 2")

        parts = [np.array([0.0]), np.logspace(np.log10(omega_min), np.log10(omega_max), n_points)]
        axis_poles = []
        if sys is not None:
            for chain in sys.chains:
                center = abs(chain.pole.imag)
                half = 2.0 * max(abs(chain.pole.real), 1e-2)
                if refine_points > 0:
                    parts.append(np.linspace(max(0.0, center - half), center + half, refine_points))
                if abs(chain.pole.real) <= settings.imag_axis_tol:
                    axis_poles.append(center)

        pts = np.unique(np.concatenate(parts))
        keep = np.ones(pts.size, dtype=bool)
        for w0 in axis_poles:
            keep &= np.abs(pts - w0) >= settings.pole_proximity_tol
        return cls(pts[keep], tuple(float(w) for w in pts[~keep]))

    def union(self, other: "FrequencyGrid") -> "FrequencyGrid":
        return FrequencyGrid(np.union1d(self.points, other.points), self.excluded + other.excluded)


# ---------------------------------------------------------------------------
# Verdict types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidueCheck:
    pole: complex
    passed: bool
    min_eigenvalue: float
    detail: str = ""


@dataclass(frozen=True, eq=False)
class MarginCurve:
    omegas: np.ndarray
    margins: np.ndarray          # λ_min of (H + H^H)/2 per frequency
    response: np.ndarray         # H(jω), shape (P, m_out, m_in)
    dropped: tuple[float, ...] = ()


@dataclass(frozen=True)
class PassivityVerdict:
    is_positive_real: bool
    margin: float
    worst_frequency: float
    ifp_index: float | None
    stable: bool
    residue_checks: tuple[ResidueCheck, ...] = ()
    notes: tuple[str, ...] = field(default_factory=tuple)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def hermitian_margin_curve(sys: PoleResidueSystem, grid: FrequencyGrid) -> MarginCurve:
    """Smallest eigenvalue of the Hermitian part of H(jω) on the grid."""
    omegas = grid.points
    keep = np.ones(omegas.size, dtype=bool)
    for chain in sys.chains:
        keep &= np.abs(1j * omegas + chain.pole) >= settings.pole_proximity_tol
    dropped = tuple(float(w) for w in omegas[~keep])
    omegas = omegas[keep]
    if omegas.size == 0:
        raise ValidationError("grid: every frequency lies on a pole")
    H = frequency_response(sys, omegas)
    herm = (H + np.conj(np.transpose(H, (0, 2, 1)))) / 2
    margins = np.linalg.eigvalsh(herm)[:, 0]
    return MarginCurve(omegas, margins, H, dropped)


def _residue_checks(sys: PoleResidueSystem) -> list[ResidueCheck]:
    checks = []
    for chain in sys.chains:
        if abs(chain.pole.real) > settings.imag_axis_tol:
            continue
        R = chain.residues[0]
        if chain.length > 1:
            checks.append(ResidueCheck(chain.pole, False, float("nan"), "repeated imaginary-axis pole"))
            continue
        if R.shape[0] != R.shape[1] or not np.allclose(R, R.conj().T, atol=settings.symmetry_tol):
            checks.append(ResidueCheck(chain.pole, False, float("nan"), "residue is not Hermitian"))
            continue
        lam = float(np.linalg.eigvalsh((R + R.conj().T) / 2)[0])
        ok = lam >= -settings.psd_tol
        checks.append(ResidueCheck(chain.pole, ok, lam, "" if ok else "residue is not positive semidefinite"))
    return checks


def check_positive_real(sys: PoleResidueSystem, grid: FrequencyGrid | None = None) -> PassivityVerdict:
    """Positive-real test: stable poles, PSD Hermitian part on the grid,
    PSD Hermitian residues at imaginary-axis poles."""
    grid = FrequencyGrid.build(sys) if grid is None else grid
    notes = []
    unstable = [c.pole for c in sys.chains if c.pole.real < -settings.imag_axis_tol]
    if unstable:
        notes.append("unstable poles at d=" + ", ".join(f"{d:.6g}" for d in unstable))
    checks = _residue_checks(sys)

    curve = hermitian_margin_curve(sys, grid)
    if curve.dropped or grid.excluded:
        notes.append(f"{len(curve.dropped) + len(grid.excluded)} grid point(s) excluded near imaginary-axis poles")
    worst = int(np.argmin(curve.margins))
    margin = float(curve.margins[worst])
    worst_frequency = float(curve.omegas[worst])

    stable = not unstable
    residues_ok = all(c.passed for c in checks)
    verdict = PassivityVerdict(
        is_positive_real=stable and residues_ok and margin >= -settings.psd_tol,
        margin=margin,
        worst_frequency=worst_frequency,
        ifp_index=margin if stable and residues_ok else None,
        stable=stable,
        residue_checks=tuple(checks),
        notes=tuple(notes),
    )
    logger.debug("Positive-real check: %s (margin=%.6g at omega=%.6g)",
                 verdict.is_positive_real, margin, worst_frequency)
    return verdict


def estimate_ifp_index(sys: PoleResidueSystem, grid: FrequencyGrid | None = None) -> float:
    """Grid estimate of the IFP index ν = ½ min λ_min(H(jω) + H^H(jω)).

    This is an upper bound of the true index; refining the grid can only
    lower it.
    """
    for chain in sys.chains:
        if chain.pole.real < -settings.imag_axis_tol:
            raise NotIFPError(f"not IFP: unstable pole at d={chain.pole:.6g}")
    failed = [c for c in _residue_checks(sys) if not c.passed]
    if failed:
        raise NotIFPError(f"not IFP: {failed[0].detail} at d={failed[0].pole:.6g}")
    grid = FrequencyGrid.build(sys) if grid is None else grid
    return float(hermitian_margin_curve(sys, grid).margins.min())


def ofp_compose(rho: float, nu: float) -> float:
    """OFP index of the loop formed by an OFP(ρ) forward path and an IFP(ν)
    feedback path (zero external input on the feedback path)."""
    return rho + nu


def ifp_compose(nu_plant: float, nu_comp: float) -> float:
    """IFP index of a parallel connection; the inputs coincide so indices add."""
    return nu_plant + nu_comp
