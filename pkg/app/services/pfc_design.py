"""Parallel feedforward compensator (PFC) synthesis.

Every designed compensator is either static or has strictly stable poles, so
its output vanishes when its input does.

Gain rules (per pole parameter d with Re[d] > 0; gains are zero when Re[d] = 0):

- MIMO:  A = bound * I with
  bound = ||Im[d] Im[R_1]|| / Re[d]
          + sum_k (||R_k + R_k^H|| + ||R_k^H - R_k||) / (2 Re[d]^(k-1))
  (spectral norms; requires R_1 symmetric).
- SISO:  a = |Im[c_1] Im[d]| / Re[d] + sum_k |c_k| / Re[d]^(k-1).
"""

import logging
from dataclasses import dataclass

import numpy as np

from app.config import get_settings
from app.errors import AsymmetricResidueError, InvariantViolation, ValidationError
from app.services.lti import PoleChain, PoleResidueSystem, parallel, static_system

logger = logging.getLogger(__name__)
settings = get_settings()


@dataclass(frozen=True, eq=False)
class PoleGain:
    pole: complex
    gain: np.ndarray        # A_l, real symmetric PSD
    bound: float            # right-hand side of the gain rule
    skipped: bool = False   # Re[d] = 0: no compensation at this pole


@dataclass(frozen=True, eq=False)
class PfcDesignReport:
    compensator: PoleResidueSystem
    gains: tuple[PoleGain, ...]
    slack: float
    rule: str                                       # "siso" | "mimo"
    pre_compensator: PoleResidueSystem | None = None
    ill_conditioned: bool = False                   # plant roots were clustered under a warning

    @property
    def skipped_poles(self) -> list[complex]:
        return [g.pole for g in self.gains if g.skipped]

    def gain_for(self, pole: complex) -> PoleGain | None:
        for g in self.gains:
            if abs(g.pole - pole) <= 1e-12 * max(1.0, abs(pole)):
                return g
        return None


def _on_imag_axis(chain: PoleChain) -> bool:
    return abs(chain.pole.real) <= settings.imag_axis_tol


def _is_symmetric(R: np.ndarray) -> bool:
    return R.shape[0] == R.shape[1] and np.allclose(R, R.T, atol=settings.symmetry_tol)


def mimo_bound(chain: PoleChain) -> float:
    d = chain.pole
    re = d.real
    R1 = chain.residues[0]
    bound = np.linalg.norm(d.imag * R1.imag, 2) / re
    for k, R in enumerate(chain.residues, start=1):
        RH = R.conj().T
        bound += (np.linalg.norm(R + RH, 2) + np.linalg.norm(RH - R, 2)) / (2 * re ** (k - 1))
    return float(bound)


def siso_bound(chain: PoleChain) -> float:
    d = chain.pole
    re = d.real
    c = [complex(R[0, 0]) for R in chain.residues]
    bound = abs(c[0].imag * d.imag) / re
    for k, ck in enumerate(c, start=1):
        bound += abs(ck) / re ** (k - 1)
    return float(bound)


def design_mimo_pfc(plant: PoleResidueSystem, slack: float | None = None) -> PfcDesignReport:
    """Compensator sum_l A_l/(s + d_l) with A_l = (bound_l + slack) I."""
    slack = settings.design_slack if slack is None else slack
    if slack < 0:
        raise ValidationError("slack: must be nonnegative")
    m_out, m_in = plant.dims
    if m_out != m_in:
        raise ValidationError(f"dims: PFC design needs a square plant, got {plant.dims}")
    plant.validate()
    if plant.ill_conditioned:
        logger.warning("Plant poles come from an ill-conditioned root clustering; gains may be unreliable")

    gains, chains = [], []
    for chain in plant.chains:
        if _on_imag_axis(chain):
            if chain.length > 1:
                raise InvariantViolation(f"imaginary-axis pole d={chain.pole:.6g} is not simple")
            gains.append(PoleGain(chain.pole, np.zeros((m_in, m_in)), 0.0, skipped=True))
            continue
        if not _is_symmetric(chain.residues[0]):
            raise AsymmetricResidueError(chain.pole)
        # conjugate pairs share the gain computed at Im[d] >= 0
        ref = chain if chain.pole.imag >= 0 else plant.conjugate_of(chain)
        bound = mimo_bound(ref)
        A = (bound + slack) * np.eye(m_in)
        gains.append(PoleGain(chain.pole, A, bound))
        chains.append(PoleChain(chain.pole, (A,)))

    report = PfcDesignReport(PoleResidueSystem(plant.dims, tuple(chains)), tuple(gains), slack, "mimo",
                             ill_conditioned=plant.ill_conditioned)
    logger.info("MIMO PFC designed: %d pole(s), %d skipped", len(gains), len(report.skipped_poles))
    return report


def design_siso_pfc(plant: PoleResidueSystem, slack: float | None = None) -> PfcDesignReport:
    """Compensator sum_l a_l/(s + d_l), one gain per pole."""
    slack = settings.design_slack if slack is None else slack
    if slack < 0:
        raise ValidationError("slack: must be nonnegative")
    if not plant.is_siso:
        raise ValidationError(f"dims: SISO PFC design needs a 1x1 plant, got {plant.dims}")
    plant.validate()
    if plant.ill_conditioned:
        logger.warning("Plant poles come from an ill-conditioned root clustering; gains may be unreliable")

    gains, chains = [], []
    for chain in plant.chains:
        if _on_imag_axis(chain):
            gains.append(PoleGain(chain.pole, np.zeros((1, 1)), 0.0, skipped=True))
            continue
        bound = siso_bound(chain)
        a = np.array([[bound + slack]])
        gains.append(PoleGain(chain.pole, a, bound))
        chains.append(PoleChain(chain.pole, (a,)))

    report = PfcDesignReport(PoleResidueSystem((1, 1), tuple(chains)), tuple(gains), slack, "siso",
                             ill_conditioned=plant.ill_conditioned)
    logger.info("SISO PFC designed: gains=%s",
                ", ".join(f"{g.gain[0, 0]:.6g}@d={g.pole:.4g}" for g in gains))
    return report


def symmetrize_residue(plant: PoleResidueSystem) -> tuple[PoleResidueSystem, PoleResidueSystem]:
    """Pre-compensate R_1^T/(s + d) wherever the first residue is asymmetric.

    Returns (pre_pfc, plant + pre_pfc); pre_pfc is empty for symmetric plants.
    """
    if plant.dims[0] != plant.dims[1]:
        raise ValidationError(f"dims: symmetrization needs a square plant, got {plant.dims}")
    pre_chains = tuple(
        PoleChain(chain.pole, (chain.residues[0].T,))
        for chain in plant.chains
        if not _is_symmetric(chain.residues[0])
    )
    pre = PoleResidueSystem(plant.dims, pre_chains)
    if pre_chains:
        logger.info("Symmetrizing %d asymmetric first residue(s)", len(pre_chains))
    return pre, parallel(plant, pre)


def design_static_pfc(nu: float, dims: int) -> PoleResidueSystem:
    """Memoryless compensator D_c = ν I, which is IFP(ν)."""
    if nu <= 0:
        raise ValidationError(f"nu: static PFC needs nu > 0, got {nu}")
    if dims < 1:
        raise ValidationError("dims: must be positive")
    return static_system(nu * np.eye(dims))


def design_derivative_pfc(d_c: float, tau: float, dims: int) -> PoleResidueSystem:
    """Low-pass realization d_c I/(τs + 1) = (d_c/τ) I/(s + 1/τ) of derivative action.

    The limit τ -> 0 is the static gain d_c I. A positive static gain gives
    u^T y = d_c u^T u, i.e. it is IFP(+d_c); that is the sign convergence over
    signed graphs needs (ν > r > 0), so the "IFP(-d_c)" wording sometimes
    attached to this compensator is not used here.
    """
    if d_c <= 0 or tau <= 0:
        raise ValidationError(f"d_c, tau: must be positive, got d_c={d_c}, tau={tau}")
    if dims < 1:
        raise ValidationError("dims: must be positive")
    chain = PoleChain(1.0 / tau, ((d_c / tau) * np.eye(dims),))
    return PoleResidueSystem((dims, dims), (chain,))


def design_pfc(plant: PoleResidueSystem, slack: float | None = None) -> PfcDesignReport:
    """Pick the SISO or MIMO rule; MIMO plants are symmetrized first if needed.

    The returned compensator already includes any pre-compensator.
    """
    if plant.is_siso:
        return design_siso_pfc(plant, slack)
    pre, symmetric_plant = symmetrize_residue(plant)
    report = design_mimo_pfc(symmetric_plant, slack)
    if not pre.chains:
        return report
    return PfcDesignReport(
        parallel(pre, report.compensator), report.gains, report.slack, "mimo", pre_compensator=pre,
        ill_conditioned=plant.ill_conditioned,
    )
