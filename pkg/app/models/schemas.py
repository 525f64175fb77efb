from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


# --- Enums ---

class AgentKind(str, Enum):
    LTI = "lti"
    INTEGRATOR_STATIC_OUTPUT = "integrator_static_output"
    GRADIENT_FLOW = "gradient_flow"


class AgentTemplate(str, Enum):
    HARMONIC_OSCILLATOR = "harmonic_oscillator"
    INTEGRATOR = "integrator"
    MODIFIED_PI = "modified_pi"


class PfcKind(str, Enum):
    NONE = "none"
    STATIC = "static"
    DERIVATIVE = "derivative"
    DYNAMIC = "dynamic"        # explicit pole-residue compensator
    DESIGNED = "designed"      # synthesized from the agent's own transfer matrix


class Interconnection(str, Enum):
    NETWORK = "network"
    FEEDBACK = "feedback"


class ScenarioName(str, Enum):
    EXAMPLE1 = "example1"
    EXAMPLE2 = "example2"
    EXAMPLE3 = "example3"
    EXAMPLE4 = "example4"
    PD_CONSENSUS = "pd-consensus"


Matrix = list[list[float]]


# --- LTI systems ---

class ComplexValue(BaseModel):
    re: float
    im: float = 0.0


# a residue entry is a real number or an [re, im] pair
Entry = float | tuple[float, float]
ResidueMatrix = list[list[Entry]]


class RationalSpec(BaseModel):
    """Coefficients in ascending powers of s."""
    num: list[float]
    den: list[float]


class PoleChainSpec(BaseModel):
    pole_re: float                     # d = pole_re + j pole_im; the pole sits at s = -d
    pole_im: float = 0.0
    residues: list[ResidueMatrix] = Field(min_length=1)


class SystemSpec(BaseModel):
    """Pole-residue system, or a SISO rational function to decompose."""
    dims: Optional[tuple[int, int]] = None
    chains: list[PoleChainSpec] = []
    feedthrough: Optional[Matrix] = None
    rational: Optional[RationalSpec] = None
    ill_conditioned: bool = False

    @model_validator(mode="after")
    def _one_form(self):
        if self.rational is None and self.dims is None:
            raise ValueError("either 'dims' (pole-residue form) or 'rational' is required")
        if self.rational is not None and (self.chains or self.feedthrough is not None):
            raise ValueError("'rational' cannot be combined with 'chains' or 'feedthrough'")
        return self


class StateSpaceSpec(BaseModel):
    A: Matrix
    B: Matrix
    C: Matrix
    D: Matrix
    storage_matrix: Optional[Matrix] = None


# --- Passivity ---

class GridSpec(BaseModel):
    omega_min: Optional[float] = None
    omega_max: Optional[float] = None
    points: Optional[int] = None


class ResidueCheckOut(BaseModel):
    pole: ComplexValue
    passed: bool
    min_eigenvalue: Optional[float] = None
    detail: str = ""


class PassivityVerdictOut(BaseModel):
    positive_real: bool
    margin: float
    worst_omega: float
    ifp_index: Optional[float] = None
    stable: bool
    residue_checks: list[ResidueCheckOut] = []
    notes: list[str] = []
    grid_points: int = 0


# --- PFC design ---

class PoleGainOut(BaseModel):
    pole: ComplexValue
    gain: Matrix
    bound: float
    skipped: bool = False


class PfcDesignOut(BaseModel):
    rule: Literal["siso", "mimo"]
    slack: float
    gains: list[PoleGainOut]
    compensator: SystemSpec
    pre_compensator: Optional[SystemSpec] = None
    compensated_verdict: Optional[PassivityVerdictOut] = None
    ill_conditioned: bool = False


class PfcSpec(BaseModel):
    kind: PfcKind = PfcKind.NONE
    nu: Optional[float] = None                 # static gain
    d_c: Optional[float] = None                # derivative gain
    tau: Optional[float] = None                # derivative filter time constant
    system: Optional[SystemSpec] = None        # explicit compensator
    slack: Optional[float] = None              # designed compensator

    @model_validator(mode="after")
    def _fields_for_kind(self):
        required = {
            PfcKind.STATIC: ("nu",),
            PfcKind.DERIVATIVE: ("d_c", "tau"),
            PfcKind.DYNAMIC: ("system",),
        }.get(self.kind, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"pfc kind '{self.kind.value}' requires {', '.join(missing)}")
        return self


# --- Signed graphs ---

class EdgeSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    source: int = Field(alias="from", ge=0)
    target: int = Field(alias="to", ge=0)
    weight: float


class GraphSpec(BaseModel):
    n: int = Field(ge=1)
    edges: list[EdgeSpec] = []


class Inertia(BaseModel):
    n_pos: int
    n_neg: int
    n_zero: int


class LaplacianAnalysisOut(BaseModel):
    n: int
    laplacian: Matrix
    weight_balanced: bool
    strongly_connected: bool
    zero_is_simple: bool
    inertia: Inertia
    ofp_radius: Optional[float] = None
    certificate: Optional[float] = None
    sync_conditions_met: bool
    eigenvalues: list[ComplexValue] = []


# --- Simulation ---

class AgentSpec(BaseModel):
    kind: Optional[AgentKind] = None
    template: Optional[AgentTemplate] = None
    x0: Optional[list[float]] = None
    state_space: Optional[StateSpaceSpec] = None       # lti
    system: Optional[SystemSpec] = None                # lti, realized
    h: Optional[list[float]] = None                    # integrator_static_output
    q: Optional[float] = None                          # gradient_flow curvature / modified_pi
    b: float = 0.0                                     # gradient_flow offset
    frequency: float = 1.0                             # harmonic_oscillator

    @model_validator(mode="after")
    def _kind_or_template(self):
        if (self.kind is None) == (self.template is None):
            raise ValueError("exactly one of 'kind' or 'template' is required")
        if self.kind == AgentKind.LTI and (self.state_space is None) == (self.system is None):
            raise ValueError("lti agents need exactly one of 'state_space' or 'system'")
        if self.kind == AgentKind.INTEGRATOR_STATIC_OUTPUT and self.h is None:
            raise ValueError("integrator_static_output agents need 'h'")
        if (self.kind == AgentKind.GRADIENT_FLOW or self.template == AgentTemplate.MODIFIED_PI) and self.q is None:
            raise ValueError("this agent needs the curvature 'q'")
        return self


class SweepSpec(BaseModel):
    sigma: list[float] = Field(min_length=1)


class SimulationSpec(BaseModel):
    name: str = "sim"
    interconnection: Interconnection = Interconnection.NETWORK
    agents: list[AgentSpec] = Field(min_length=1)
    graph: Optional[GraphSpec] = None
    sigma: Optional[float] = None
    pfc: PfcSpec | list[PfcSpec] = PfcSpec()
    step: Optional[float] = None
    horizon: Optional[float] = None
    output_stride: Optional[int] = None
    threshold: Optional[float] = None
    sweep: Optional[SweepSpec] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.interconnection == Interconnection.NETWORK and self.graph is None:
            raise ValueError("network simulations need 'graph'")
        if self.interconnection == Interconnection.FEEDBACK and len(self.agents) != 2:
            raise ValueError("feedback simulations need exactly two agents")
        return self


class EnergyAuditOut(BaseModel):
    checked: bool
    storage: Optional[str] = None
    max_violation: float = 0.0
    slack: float = 0.0
    initial: Optional[float] = None
    final: Optional[float] = None
    drift: Optional[float] = None
    passed: bool = False
    notice: str = ""


class IndexCheckOut(BaseModel):
    ofp_radius: float
    pfc_index: Optional[float] = None
    strictness: Optional[float] = None
    passed: bool = False
    notice: str = ""


class RunMetricsOut(BaseModel):
    name: str
    step: float
    horizon: float
    samples: int
    diverged: bool
    threshold: float
    initial_sync_error: float
    final_sync_error: float
    settled_time: Optional[float] = None
    consensus_value: Optional[list[float]] = None
    final_pfc_output: float = 0.0                      # max_i ‖y_ci(T)‖
    final_state_norm: float = 0.0
    energy_audit: Optional[EnergyAuditOut] = None
    index_check: Optional[IndexCheckOut] = None
    zgs_drift: Optional[float] = None
    sigma: Optional[float] = None
    csv: Optional[str] = None


class ScenarioReport(BaseModel):
    name: str
    description: str = ""
    passed: bool = True
    values: dict[str, Optional[float | bool | str]] = {}
    runs: list[RunMetricsOut] = []
    verdicts: dict[str, PassivityVerdictOut] = {}
    designs: dict[str, PfcDesignOut] = {}
    analysis: Optional[LaplacianAnalysisOut] = None
