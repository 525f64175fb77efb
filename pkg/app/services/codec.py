"""Conversion between domain objects and the JSON/CSV wire formats."""

import json
import logging
from pathlib import Path
from typing import TypeVar

import numpy as np
import pandas as pd
import pydantic

from app.config import get_settings
from app.errors import ValidationError
from app.models.schemas import (
    AgentKind,
    AgentSpec,
    AgentTemplate,
    ComplexValue,
    EdgeSpec,
    EnergyAuditOut,
    GraphSpec,
    IndexCheckOut,
    Inertia,
    Interconnection,
    LaplacianAnalysisOut,
    PassivityVerdictOut,
    PfcDesignOut,
    PfcKind,
    PfcSpec,
    PoleChainSpec,
    PoleGainOut,
    ResidueCheckOut,
    ResidueMatrix,
    RunMetricsOut,
    SimulationSpec,
    StateSpaceSpec,
    SystemSpec,
)
from app.services import netsim
from app.services.lti import (
    PoleChain,
    PoleResidueSystem,
    RationalSISO,
    StateSpaceSystem,
    partial_fraction_decompose,
    realize,
)
from app.services.passivity import MarginCurve, PassivityVerdict
from app.services.pfc_design import (
    PfcDesignReport,
    design_derivative_pfc,
    design_pfc,
    design_static_pfc,
)
from app.services.signed_graph import LaplacianAnalysis, SignedDigraph

logger = logging.getLogger(__name__)
settings = get_settings()

M = TypeVar("M", bound=pydantic.BaseModel)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def parse_file(path: str | Path, model: type[M]) -> M:
    """Load and validate a JSON file; errors name the offending field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"input: cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return model.model_validate_json(text)
    except pydantic.ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ValidationError(f"{loc}: {err['msg']}") from exc


def dumps(model: pydantic.BaseModel) -> str:
    return json.dumps(model.model_dump(mode="json", by_alias=True), indent=2) + "\n"


def write_json(path: str | Path, model: pydantic.BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(model), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def write_csv(path: str | Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


# ---------------------------------------------------------------------------
# LTI systems
# ---------------------------------------------------------------------------

def complex_out(z: complex) -> ComplexValue:
    z = complex(z)
    return ComplexValue(re=z.real, im=z.imag)


def _matrix_in(rows: ResidueMatrix) -> np.ndarray:
    try:
        R = np.array([[complex(*e) if isinstance(e, tuple) else complex(e) for e in row] for row in rows])
    except ValueError as exc:
        raise ValidationError("residues: every row must have the same length") from exc
    if R.ndim != 2:
        raise ValidationError(f"residues: expected a matrix, got shape {R.shape}")
    return R


def _matrix_out(R: np.ndarray) -> ResidueMatrix:
    return [[(z.real, z.imag) for z in row] for row in R.tolist()]


def system_from_spec(spec: SystemSpec) -> PoleResidueSystem:
    if spec.rational is not None:
        return partial_fraction_decompose(RationalSISO(tuple(spec.rational.num), tuple(spec.rational.den)))
    chains = tuple(
        PoleChain(complex(c.pole_re, c.pole_im), tuple(_matrix_in(r) for r in c.residues))
        for c in spec.chains
    )
    return PoleResidueSystem(spec.dims, chains, spec.feedthrough, spec.ill_conditioned)


def system_to_spec(sys: PoleResidueSystem) -> SystemSpec:
    return SystemSpec(
        dims=sys.dims,
        chains=[
            PoleChainSpec(pole_re=c.pole.real, pole_im=c.pole.imag, residues=[_matrix_out(r) for r in c.residues])
            for c in sys.chains
        ],
        feedthrough=sys.feedthrough.tolist(),
        ill_conditioned=sys.ill_conditioned,
    )


def state_space_from_spec(spec: StateSpaceSpec) -> StateSpaceSystem:
    A = np.asarray(spec.A, dtype=float) if spec.A else np.zeros((0, 0))
    return StateSpaceSystem(A, spec.B, spec.C, spec.D, spec.storage_matrix)


# ---------------------------------------------------------------------------
# Passivity and design
# ---------------------------------------------------------------------------

def verdict_to_out(verdict: PassivityVerdict, grid_points: int = 0) -> PassivityVerdictOut:
    return PassivityVerdictOut(
        positive_real=verdict.is_positive_real,
        margin=verdict.margin,
        worst_omega=verdict.worst_frequency,
        ifp_index=verdict.ifp_index,
        stable=verdict.stable,
        residue_checks=[
            ResidueCheckOut(
                pole=complex_out(c.pole),
                passed=c.passed,
                min_eigenvalue=None if np.isnan(c.min_eigenvalue) else c.min_eigenvalue,
                detail=c.detail,
            )
            for c in verdict.residue_checks
        ],
        notes=list(verdict.notes),
        grid_points=grid_points,
    )


def design_to_out(report: PfcDesignReport, verdict: PassivityVerdictOut | None = None) -> PfcDesignOut:
    return PfcDesignOut(
        rule=report.rule,
        slack=report.slack,
        gains=[
            PoleGainOut(pole=complex_out(g.pole), gain=g.gain.tolist(), bound=g.bound, skipped=g.skipped)
            for g in report.gains
        ],
        compensator=system_to_spec(report.compensator),
        pre_compensator=None if report.pre_compensator is None else system_to_spec(report.pre_compensator),
        compensated_verdict=verdict,
        ill_conditioned=report.ill_conditioned,
    )


def margin_frame(curve: MarginCurve) -> pd.DataFrame:
    """Hermitian-part margin per frequency; SISO systems also get Nyquist columns."""
    frame = pd.DataFrame({"omega": curve.omegas, "margin": curve.margins})
    if curve.response.shape[1:] == (1, 1):
        h = curve.response[:, 0, 0]
        frame["re_h"] = h.real
        frame["im_h"] = h.imag
    return frame


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------

def graph_from_spec(spec: GraphSpec) -> SignedDigraph:
    return SignedDigraph.from_edges(spec.n, [(e.source, e.target, e.weight) for e in spec.edges])


def graph_to_spec(g: SignedDigraph) -> GraphSpec:
    return GraphSpec(n=g.n, edges=[EdgeSpec(source=k, target=i, weight=w) for k, i, w in g.edges()])


def analysis_to_out(analysis: LaplacianAnalysis) -> LaplacianAnalysisOut:
    n_pos, n_neg, n_zero = analysis.inertia
    eigs = [] if analysis.eigenvalues is None else sorted(
        analysis.eigenvalues, key=lambda z: (round(z.real, 12), round(z.imag, 12)))
    return LaplacianAnalysisOut(
        n=analysis.L.shape[0],
        laplacian=analysis.L.tolist(),
        weight_balanced=analysis.weight_balanced,
        strongly_connected=analysis.strongly_connected,
        zero_is_simple=analysis.zero_is_simple,
        inertia=Inertia(n_pos=n_pos, n_neg=n_neg, n_zero=n_zero),
        ofp_radius=analysis.ofp_radius,
        certificate=analysis.certificate,
        sync_conditions_met=analysis.sync_conditions_met,
        eigenvalues=[complex_out(z) for z in eigs],
    )


# ---------------------------------------------------------------------------
# Simulation inputs
# ---------------------------------------------------------------------------

def agent_plant(spec: AgentSpec | None) -> PoleResidueSystem | None:
    """The agent's transfer matrix in pole-residue form, when it has one."""
    if spec is None:
        return None
    if spec.template == AgentTemplate.MODIFIED_PI:
        return netsim.modified_pi_plant(spec.q)
    if spec.kind == AgentKind.LTI and spec.system is not None:
        return system_from_spec(spec.system)
    return None


def agent_from_spec(spec: AgentSpec) -> netsim.AgentModel:
    x0 = spec.x0
    if spec.template == AgentTemplate.HARMONIC_OSCILLATOR:
        return netsim.harmonic_oscillator(x0 if x0 is not None else (1.0, 0.0), spec.frequency)
    if spec.template == AgentTemplate.INTEGRATOR:
        return netsim.integrator_agent(x0[0] if x0 else 0.0)
    if spec.template == AgentTemplate.MODIFIED_PI:
        return netsim.modified_pi_agent(spec.q, x0)
    if spec.kind == AgentKind.LTI:
        if spec.state_space is not None:
            ss = state_space_from_spec(spec.state_space)
        else:
            plant = system_from_spec(spec.system)
            ss = realize(plant)
            ss = StateSpaceSystem(ss.A, ss.B, ss.C, ss.D, netsim.chain_storage(plant))
        return netsim.LtiAgent(ss, x0)
    if spec.kind == AgentKind.INTEGRATOR_STATIC_OUTPUT:
        return netsim.IntegratorStaticOutputAgent(tuple(spec.h), x0[0] if x0 else 0.0)
    objective = netsim.QuadraticObjective(spec.q, spec.b)
    return netsim.GradientFlowAgent(objective, x0[0] if x0 else None)


def pfc_from_spec(spec: PfcSpec, agent: AgentSpec | None, m: int) -> PoleResidueSystem | None:
    if spec.kind == PfcKind.NONE:
        return None
    if spec.kind == PfcKind.STATIC:
        return design_static_pfc(spec.nu, m)
    if spec.kind == PfcKind.DERIVATIVE:
        return design_derivative_pfc(spec.d_c, spec.tau, m)
    if spec.kind == PfcKind.DYNAMIC:
        return system_from_spec(spec.system)
    plant = agent_plant(agent)
    if plant is None:
        raise ValidationError("pfc: 'designed' compensators need an agent given in pole-residue or rational form")
    slack = settings.simulation_slack if spec.slack is None else spec.slack
    return design_pfc(plant, slack).compensator


def config_from_spec(spec: SimulationSpec, sigma: float | None = None) -> netsim.SimConfig:
    agents = [agent_from_spec(a) for a in spec.agents]
    m = agents[0].m
    pfc_specs = spec.pfc if isinstance(spec.pfc, list) else [spec.pfc] * len(agents)
    if len(pfc_specs) != len(agents):
        raise ValidationError(f"pfc: expected {len(agents)} entries, got {len(pfc_specs)}")
    pfcs = tuple(pfc_from_spec(p, a, m) for p, a in zip(pfc_specs, spec.agents))
    run = dict(step=spec.step, horizon=spec.horizon, output_stride=spec.output_stride, name=spec.name)
    if spec.interconnection == Interconnection.FEEDBACK:
        return netsim.FeedbackConfig(agents[0], agents[1], pfcs[0], **run)
    sigma = spec.sigma if sigma is None else sigma
    return netsim.NetworkConfig(tuple(agents), graph_from_spec(spec.graph), sigma, pfcs, **run)


# ---------------------------------------------------------------------------
# Simulation outputs
# ---------------------------------------------------------------------------

def audit_to_out(audit: netsim.EnergyAudit) -> EnergyAuditOut:
    return EnergyAuditOut(
        checked=audit.checked,
        storage=audit.storage,
        max_violation=audit.max_violation,
        slack=audit.slack,
        initial=audit.initial,
        final=audit.final,
        drift=audit.drift,
        passed=audit.passed,
        notice=audit.notice,
    )


def index_check_to_out(check: netsim.IndexCheck) -> IndexCheckOut:
    return IndexCheckOut(
        ofp_radius=check.ofp_radius,
        pfc_index=check.pfc_index,
        strictness=check.strictness,
        passed=check.passed,
        notice=check.notice,
    )


def metrics_to_out(
    log: netsim.TrajectoryLog,
    metrics: netsim.SyncMetrics,
    audit: netsim.EnergyAudit | None = None,
    zgs_drift: float | None = None,
    sigma: float | None = None,
    csv: str | None = None,
) -> RunMetricsOut:
    return RunMetricsOut(
        name=log.name,
        step=log.step,
        horizon=float(log.times[-1]),
        samples=int(log.times.size),
        diverged=log.diverged,
        threshold=metrics.threshold,
        initial_sync_error=float(metrics.sync_error[0]),
        final_sync_error=metrics.final_sync_error,
        settled_time=metrics.settled_time,
        consensus_value=None if metrics.consensus_value is None else metrics.consensus_value.tolist(),
        final_pfc_output=float(np.linalg.norm(log.pfc_outputs[-1], axis=1).max()),
        final_state_norm=float(np.linalg.norm(log.states[-1])),
        energy_audit=None if audit is None else audit_to_out(audit),
        index_check=None if log.index_check is None else index_check_to_out(log.index_check),
        zgs_drift=zgs_drift,
        sigma=sigma,
        csv=csv,
    )


def trajectory_frame(log: netsim.TrajectoryLog, metrics: netsim.SyncMetrics) -> pd.DataFrame:
    """Columns t, y1_1..y1_N, yc_1..yc_N, sync_error (y1_<i>_<k> for vector outputs)."""
    _, n_agents, m = log.outputs.shape

    def names(prefix: str) -> list[str]:
        if m == 1:
            return [f"{prefix}_{i + 1}" for i in range(n_agents)]
        return [f"{prefix}_{i + 1}_{k + 1}" for i in range(n_agents) for k in range(m)]

    samples = log.times.size
    data = {"t": log.times}
    data |= dict(zip(names("y1"), log.outputs.reshape(samples, -1).T))
    data |= dict(zip(names("yc"), log.pfc_outputs.reshape(samples, -1).T))
    data["sync_error"] = metrics.sync_error
    return pd.DataFrame(data)


def pfc_option(text: str) -> PfcSpec:
    """Parse --pfc: 'none', 'static:<nu>', 'derivative:<d_c>,<tau>', 'designed[:<slack>]' or a JSON path."""
    kind, _, args = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == PfcKind.NONE.value and not args:
            return PfcSpec(kind=PfcKind.NONE)
        if kind == PfcKind.STATIC.value:
            return PfcSpec(kind=PfcKind.STATIC, nu=float(args))
        if kind == PfcKind.DERIVATIVE.value:
            d_c, tau = (float(v) for v in args.split(","))
            return PfcSpec(kind=PfcKind.DERIVATIVE, d_c=d_c, tau=tau)
        if kind == PfcKind.DESIGNED.value:
            return PfcSpec(kind=PfcKind.DESIGNED, slack=float(args) if args else None)
    except ValueError as exc:
        raise ValidationError(f"pfc: cannot parse '{text}' ({exc})") from exc
    return PfcSpec(kind=PfcKind.DYNAMIC, system=parse_file(text, SystemSpec))
