"""Built-in scenarios with their parameters embedded.

Each scenario returns a ScenarioResult: the JSON report plus the raw runs and
curves the CLI turns into CSV files and plots.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from app.config import get_settings
from app.errors import ValidationError
from app.models.schemas import PfcKind, PfcSpec, ScenarioName, ScenarioReport
from app.services import codec, netsim
from app.services.lti import PoleChain, PoleResidueSystem, parallel
from app.services.passivity import (
    FrequencyGrid,
    MarginCurve,
    check_positive_real,
    estimate_ifp_index,
    hermitian_margin_curve,
)
from app.services.pfc_design import design_pfc, design_siso_pfc, design_static_pfc
from app.services.signed_graph import SignedDigraph, analyze, directed_cycle, example4_graph

logger = logging.getLogger(__name__)
settings = get_settings()


@dataclass(frozen=True)
class ScenarioOverrides:
    step: float | None = None
    horizon: float | None = None
    sigma: float | None = None
    slack: float | None = None
    d_c: float | None = None
    tau: float | None = None
    pfc: PfcSpec | None = None
    omega_min: float | None = None
    omega_max: float | None = None
    grid_points: int | None = None


@dataclass
class ScenarioRun:
    key: str
    log: netsim.TrajectoryLog
    metrics: netsim.SyncMetrics
    audit: netsim.EnergyAudit | None = None
    zgs_drift: float | None = None
    sigma: float | None = None
    reference: bool = False       # comparison run; divergence here is expected, not a failure


@dataclass
class ScenarioResult:
    report: ScenarioReport
    runs: list[ScenarioRun] = field(default_factory=list)
    curves: dict[str, MarginCurve] = field(default_factory=dict)
    graph: SignedDigraph | None = None

    @property
    def diverged(self) -> bool:
        return any(run.log.diverged for run in self.runs if not run.reference)


def _grid(sys: PoleResidueSystem, ov: ScenarioOverrides) -> FrequencyGrid:
    return FrequencyGrid.build(sys, ov.omega_min, ov.omega_max, ov.grid_points)


def _resolve_pfc(spec: PfcSpec, plant: PoleResidueSystem | None, m: int) -> PoleResidueSystem | None:
    if spec.kind == PfcKind.DESIGNED:
        if plant is None:
            raise ValidationError("pfc: this scenario has no transfer matrix to design from")
        slack = settings.simulation_slack if spec.slack is None else spec.slack
        return design_pfc(plant, slack).compensator
    return codec.pfc_from_spec(spec, None, m)


# ---------------------------------------------------------------------------
# Lossless feedback pair stabilized by a first-order PFC
# ---------------------------------------------------------------------------

def example1(ov: ScenarioOverrides) -> ScenarioResult:
    """Two integrators with cubic outputs in negative feedback, with and without x_c' = -x_c + u_c."""
    cubic = (0.0, 0.0, 0.0, 1.0)
    first_order = PoleResidueSystem((1, 1), (PoleChain(1.0, ([[1.0]],)),))
    pfc = first_order if ov.pfc is None else _resolve_pfc(ov.pfc, None, 1)
    horizon = ov.horizon

    def pair(h, compensator, name):
        return netsim.FeedbackConfig(
            netsim.IntegratorStaticOutputAgent(h, 1.0),
            netsim.IntegratorStaticOutputAgent(h, 1.0),
            compensator, step=ov.step, horizon=horizon, name=name,
        )

    runs = []
    for key, cfg in (
        ("with_pfc", pair(cubic, pfc, "example1-with-pfc")),
        ("without_pfc", pair(cubic, None, "example1-without-pfc")),
        ("linear_with_pfc", pair((0.0, 1.0), pfc, "example1-linear-with-pfc")),
    ):
        log, metrics = netsim.simulate(cfg)
        runs.append(ScenarioRun(key, log, metrics, netsim.energy_audit(log)))

    with_pfc, without_pfc, linear = runs
    v0 = with_pfc.audit.initial
    values = {
        "with_pfc_final_norm": float(np.linalg.norm(with_pfc.log.states[-1])),
        "with_pfc_storage_ratio": with_pfc.audit.final / v0 if with_pfc.audit.checked and v0 else None,
        "with_pfc_max_storage_increase": with_pfc.audit.max_violation,
        "without_pfc_storage_drift": abs(without_pfc.audit.drift) if without_pfc.audit.checked else None,
        "linear_with_pfc_final_norm": float(np.linalg.norm(linear.log.states[-1])),
    }
    passed = bool(
        with_pfc.audit.passed
        and without_pfc.audit.checked and abs(without_pfc.audit.drift) < 1e-6
        and values["linear_with_pfc_final_norm"] < 1e-3
    )
    report = ScenarioReport(
        name=ScenarioName.EXAMPLE1.value,
        description="lossless feedback pair; the PFC makes the storage strictly decreasing",
        passed=passed,
        values=values,
        runs=[codec.metrics_to_out(r.log, r.metrics, r.audit) for r in runs],
    )
    return ScenarioResult(report, runs)


# ---------------------------------------------------------------------------
# Passivation boundary of 1/(s + 0.5)^2
# ---------------------------------------------------------------------------

EXAMPLE2_PLANT = PoleResidueSystem((1, 1), (PoleChain(0.5, ([[0.0]], [[1.0]])),))


def example2(ov: ScenarioOverrides) -> ScenarioResult:
    plant = EXAMPLE2_PLANT
    design = design_siso_pfc(plant, 0.0)
    a_min = float(design.gains[0].gain[0, 0])
    slack = 1e-3 if ov.slack is None else ov.slack
    d = design.gains[0].pole

    verdicts, curves = {}, {}
    plant_grid = _grid(plant, ov)
    plant_verdict = check_positive_real(plant, plant_grid)
    verdicts["plant"] = codec.verdict_to_out(plant_verdict, len(plant_grid))
    curves["plant"] = hermitian_margin_curve(plant, plant_grid)
    nu = estimate_ifp_index(plant, plant_grid)

    margins = {}
    for key, a in (("below", a_min - 1e-3), ("above", a_min + slack)):
        compensated = parallel(plant, PoleResidueSystem((1, 1), (PoleChain(d, ([[a]],)),)))
        grid = _grid(compensated, ov)
        verdict = check_positive_real(compensated, grid)
        verdicts[key] = codec.verdict_to_out(verdict, len(grid))
        curves[key] = hermitian_margin_curve(compensated, grid)
        margins[key] = verdict

    report = ScenarioReport(
        name=ScenarioName.EXAMPLE2.value,
        description="1/(s+0.5)^2 plus a/(s+0.5) is positive real iff a >= 2",
        passed=bool(abs(a_min - 2.0) < 1e-12 and not margins["below"].is_positive_real
                    and margins["above"].is_positive_real),
        values={
            "a_min": a_min,
            "a_below": a_min - 1e-3,
            "a_above": a_min + slack,
            "margin_below": margins["below"].margin,
            "margin_above": margins["above"].margin,
            "plant_ifp_index": nu,
            "plant_worst_frequency": plant_verdict.worst_frequency,
        },
        verdicts=verdicts,
        designs={"siso": codec.design_to_out(design)},
    )
    return ScenarioResult(report, curves=curves)


# ---------------------------------------------------------------------------
# Zero-gradient-sum optimization and the modified PI comparison
# ---------------------------------------------------------------------------

EXAMPLE3_CURVATURES = (1.0, 2.0, 4.0)
EXAMPLE3_OFFSETS = (0.0, 1.0, 2.0)
# curvatures below 1 make the modified PI agents passivity-short
EXAMPLE3_SHORT_CURVATURES = (0.25, 0.5, 2.0)


def example3(ov: ScenarioOverrides) -> ScenarioResult:
    graph = directed_cycle(3)
    objectives = [netsim.QuadraticObjective(q, b) for q, b in zip(EXAMPLE3_CURVATURES, EXAMPLE3_OFFSETS)]
    optimum = sum(f.q * f.b for f in objectives) / sum(f.q for f in objectives)
    sigmas = [ov.sigma] if ov.sigma is not None else [0.1, 1.0, 10.0]
    step = 1e-2 if ov.step is None else ov.step

    configs = [
        netsim.NetworkConfig(
            tuple(netsim.GradientFlowAgent(f) for f in objectives), graph, sigma,
            step=step, horizon=ov.horizon or (200.0 if sigma < 1 else 50.0),
            name=f"example3-zgs-sigma-{sigma:g}",
        )
        for sigma in sigmas
    ]
    runs = []
    for sigma, (log, metrics) in zip(sigmas, netsim.run_sweep(configs, threshold=1e-4)):
        runs.append(ScenarioRun(f"zgs_sigma_{sigma:g}", log, metrics,
                                zgs_drift=netsim.zgs_invariant(log, objectives), sigma=sigma))

    values: dict = {"optimum": optimum}
    passed = True
    for run in runs:
        consensus = None if run.metrics.consensus_value is None else float(run.metrics.consensus_value[0])
        values[f"consensus_sigma_{run.sigma:g}"] = consensus
        values[f"zgs_drift_sigma_{run.sigma:g}"] = run.zgs_drift
        passed &= consensus is not None and abs(consensus - optimum) < 1e-4 and run.zgs_drift < 1e-8

    # modified PI agents with and without the locally designed PFC
    designs = {}
    pfcs = []
    for i, q in enumerate(EXAMPLE3_SHORT_CURVATURES):
        report = design_siso_pfc(netsim.modified_pi_plant(q), settings.simulation_slack)
        designs[f"modified_pi_{i + 1}"] = codec.design_to_out(report)
        pfcs.append(report.compensator)
    agents = tuple(netsim.modified_pi_agent(q, (float(i), 0.0)) for i, q in enumerate(EXAMPLE3_SHORT_CURVATURES))
    sigma = 1.0 if ov.sigma is None else ov.sigma
    for key, compensators in (("modified_pi_without_pfc", None), ("modified_pi_with_pfc", tuple(pfcs))):
        cfg = netsim.NetworkConfig(agents, graph, sigma, compensators, step=step,
                                   horizon=ov.horizon or 50.0, name=f"example3-{key.replace('_', '-')}")
        log, metrics = netsim.simulate(cfg)
        runs.append(ScenarioRun(key, log, metrics, sigma=sigma, reference=True))
        values[f"{key}_final_sync_error"] = metrics.final_sync_error

    report = ScenarioReport(
        name=ScenarioName.EXAMPLE3.value,
        description="zero-gradient-sum flow reaches the curvature-weighted mean for every coupling gain",
        passed=bool(passed),
        values=values,
        runs=[codec.metrics_to_out(r.log, r.metrics, zgs_drift=r.zgs_drift, sigma=r.sigma) for r in runs],
        designs=designs,
    )
    return ScenarioResult(report, runs, graph=graph)


# ---------------------------------------------------------------------------
# Oscillators over the signed Example-4 graph
# ---------------------------------------------------------------------------

OSCILLATOR_INITIAL_STATES = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.5), (0.5, -1.0))


def oscillator_plant() -> PoleResidueSystem:
    """s/(s^2 + 1) = 0.5/(s + j) + 0.5/(s - j)."""
    return PoleResidueSystem((1, 1), (PoleChain(1j, ([[0.5]],)), PoleChain(-1j, ([[0.5]],))))


def example4(ov: ScenarioOverrides) -> ScenarioResult:
    graph = example4_graph()
    analysis = analyze(graph)
    spec = ov.pfc or PfcSpec(kind=PfcKind.STATIC, nu=1.0)
    pfc = _resolve_pfc(spec, oscillator_plant(), 1)
    agents = tuple(netsim.harmonic_oscillator(x0) for x0 in OSCILLATOR_INITIAL_STATES)
    sigma = ov.sigma

    cases = [(f"pfc_{spec.kind.value}", pfc, False)]
    if spec.kind != PfcKind.NONE:
        cases.append(("pfc_none", None, True))
    runs = []
    for key, compensator, reference in cases:
        cfg = netsim.NetworkConfig(agents, graph, sigma, compensator, step=ov.step, horizon=ov.horizon,
                                   name=f"example4-{key.replace('_', '-')}")
        log, metrics = netsim.simulate(cfg)
        runs.append(ScenarioRun(key, log, metrics, netsim.energy_audit(log), reference=reference))

    primary = runs[0]
    growth = primary.metrics.final_sync_error / max(primary.metrics.sync_error[0], np.finfo(float).tiny)
    values = {
        "ofp_radius": analysis.ofp_radius,
        "primary_final_sync_error": primary.metrics.final_sync_error,
        "primary_growth": float(growth),
        "primary_diverged": primary.log.diverged,
    }
    if spec.kind == PfcKind.NONE:
        passed = primary.log.diverged or growth > 10
    else:
        reference_run = runs[1]
        ref_growth = reference_run.metrics.final_sync_error / reference_run.metrics.sync_error[0]
        values["reference_growth"] = float(ref_growth)
        values["reference_diverged"] = reference_run.log.diverged
        passed = primary.metrics.final_sync_error < settings.sync_threshold and (
            reference_run.log.diverged or ref_growth > 10)

    report = ScenarioReport(
        name=ScenarioName.EXAMPLE4.value,
        description="diffusive coupling over a signed graph fails without a PFC and synchronizes with C = I",
        passed=bool(passed),
        values=values,
        runs=[codec.metrics_to_out(r.log, r.metrics, r.audit) for r in runs],
        analysis=codec.analysis_to_out(analysis),
    )
    return ScenarioResult(report, runs, graph=graph)


# ---------------------------------------------------------------------------
# PD consensus: integrators plus a static PFC over the signed graph
# ---------------------------------------------------------------------------

PD_INITIAL_STATES = (1.0, -2.0, 3.0, 0.5)


def pd_consensus(ov: ScenarioOverrides) -> ScenarioResult:
    graph = example4_graph()
    analysis = analyze(graph)
    d_c = 1.0 if ov.d_c is None else ov.d_c
    if ov.pfc is not None:
        pfc = _resolve_pfc(ov.pfc, None, 1)
    elif ov.tau is not None:
        pfc = _resolve_pfc(PfcSpec(kind=PfcKind.DERIVATIVE, d_c=d_c, tau=ov.tau), None, 1)
    else:
        pfc = design_static_pfc(d_c, 1)
    agents = tuple(netsim.integrator_agent(x0) for x0 in PD_INITIAL_STATES)

    cfg = netsim.NetworkConfig(agents, graph, ov.sigma, pfc, step=ov.step, horizon=ov.horizon,
                               name="pd-consensus")
    closed = netsim.assemble(cfg)
    log, metrics = netsim.simulate(cfg, threshold=1e-3)
    runs = [ScenarioRun("pd", log, metrics)]

    reference = netsim.NetworkConfig(agents, graph, ov.sigma, None, step=ov.step, horizon=ov.horizon,
                                     name="pd-consensus-proportional-only")
    ref_log, ref_metrics = netsim.simulate(reference, threshold=1e-3)
    runs.append(ScenarioRun("proportional_only", ref_log, ref_metrics, reference=True))

    values = {
        "d_c": d_c,
        "ofp_radius": analysis.ofp_radius,
        "loop_condition_number": closed.condition_number,
        "final_sync_error": metrics.final_sync_error,
        "average_initial_state": float(np.mean(PD_INITIAL_STATES)),
        "proportional_only_diverged": ref_log.diverged,
    }
    report = ScenarioReport(
        name=ScenarioName.PD_CONSENSUS.value,
        description="(I + d_c L) x' = -L x reaches consensus when d_c exceeds the OFP radius",
        passed=bool(metrics.final_sync_error < 1e-3 and not log.diverged),
        values=values,
        runs=[codec.metrics_to_out(r.log, r.metrics) for r in runs],
        analysis=codec.analysis_to_out(analysis),
    )
    return ScenarioResult(report, runs, graph=graph)


SCENARIOS: dict[ScenarioName, Callable[[ScenarioOverrides], ScenarioResult]] = {
    ScenarioName.EXAMPLE1: example1,
    ScenarioName.EXAMPLE2: example2,
    ScenarioName.EXAMPLE3: example3,
    ScenarioName.EXAMPLE4: example4,
    ScenarioName.PD_CONSENSUS: pd_consensus,
}


def run_scenario(name: ScenarioName | str, ov: ScenarioOverrides | None = None) -> ScenarioResult:
    try:
        key = ScenarioName(name)
    except ValueError as exc:
        choices = ", ".join(s.value for s in ScenarioName)
        raise ValidationError(f"scenario: unknown name '{name}' (choose from {choices})") from exc
    logger.info("Running scenario %s", key.value)
    result = SCENARIOS[key](ov or ScenarioOverrides())
    logger.info("Scenario %s %s", key.value, "passed" if result.report.passed else "did not reproduce")
    return result
