"""Closed-loop simulation of agents coupled through a constant interconnection.

Every supported loop has the form

    agent i:  ẋ_i = f_i(x_i) + G_i u_i,   y_i = h_i(x_i) + D_i u_i
    PFC i:    ẋ_ci = A_ci x_ci + B_ci u_i, y_ci = C_ci x_ci + D_ci u_i
    loop:     u = -Γ ỹ,   ỹ_i = y_i + y_ci

with Γ = σ (L ⊗ I_m) for a network and Γ = [[0, I], [-I, 0]] for a negative
feedback pair. Feedthrough makes the loop algebraic; it is resolved once at
assembly as u = -(I + Γ D_tot)^-1 Γ h(x).
"""

import logging
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, ClassVar, Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg

from app.config import get_settings
from app.errors import GraphConditionError, NotIFPError, NotWellPosedError, ValidationError
from app.models.schemas import AgentKind
from app.services.lti import PoleChain, PoleResidueSystem, StateSpaceSystem, realize
from app.services.passivity import estimate_ifp_index, ofp_compose
from app.services.signed_graph import SignedDigraph, build_laplacian, compute_ofp_radius

logger = logging.getLogger(__name__)
settings = get_settings()


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------

class AgentModel(ABC):
    """Control-affine agent ẋ = f(x) + G u, y = h(x) + D u with square I/O."""
    kind: ClassVar[AgentKind]

    @property
    @abstractmethod
    def initial_state(self) -> np.ndarray: ...

    @property
    @abstractmethod
    def input_matrix(self) -> np.ndarray: ...

    @property
    @abstractmethod
    def feedthrough(self) -> np.ndarray: ...

    @abstractmethod
    def drift(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def output(self, x: np.ndarray) -> np.ndarray:
        """h(x), the output without feedthrough."""

    def linear_maps(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(A, C) when f(x) = A x and h(x) = C x, else None."""
        return None

    def storage(self, x: np.ndarray) -> float | None:
        return None

    @property
    def n_states(self) -> int:
        return self.initial_state.size

    @property
    def m(self) -> int:
        return self.feedthrough.shape[0]


@dataclass(frozen=True, eq=False)
class LtiAgent(AgentModel):
    kind: ClassVar[AgentKind] = AgentKind.LTI
    system: StateSpaceSystem
    x0: np.ndarray | None = None

    def __post_init__(self):
        m_out, m_in = self.system.dims
        if m_out != m_in:
            raise ValidationError(f"agent: coupling needs square I/O, got {self.system.dims}")
        x0 = np.zeros(self.system.n) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.size != self.system.n:
            raise ValidationError(f"x0: expected {self.system.n} states, got {x0.size}")
        object.__setattr__(self, "x0", x0)

    @property
    def initial_state(self) -> np.ndarray:
        return self.x0

    @property
    def input_matrix(self) -> np.ndarray:
        return self.system.B

    @property
    def feedthrough(self) -> np.ndarray:
        return self.system.D

    def drift(self, x):
        return self.system.A @ x

    def output(self, x):
        return self.system.C @ x

    def linear_maps(self):
        return self.system.A, self.system.C

    def storage(self, x):
        P = self.system.storage_matrix
        return None if P is None else 0.5 * float(x @ P @ x)


@dataclass(frozen=True, eq=False)
class IntegratorStaticOutputAgent(AgentModel):
    """ẋ = u, y = h(x) with an odd-leading polynomial h, h(0) = 0."""
    kind: ClassVar[AgentKind] = AgentKind.INTEGRATOR_STATIC_OUTPUT
    h: tuple[float, ...]             # ascending coefficients
    x0: float = 0.0

    def __post_init__(self):
        coeffs = np.trim_zeros(np.asarray(self.h, dtype=float), "b")
        if coeffs.size < 2:
            raise ValidationError("h: needs degree at least 1")
        if coeffs[0] != 0.0:
            raise ValidationError("h: must satisfy h(0) = 0")
        degree = coeffs.size - 1
        if degree % 2 == 0 or coeffs[-1] <= 0:
            raise ValidationError("h: leading term must have odd degree and positive coefficient")
        object.__setattr__(self, "h", tuple(float(c) for c in coeffs))
        object.__setattr__(self, "x0", float(self.x0))

    @property
    def initial_state(self):
        return np.array([self.x0])

    @property
    def input_matrix(self):
        return np.eye(1)

    @property
    def feedthrough(self):
        return np.zeros((1, 1))

    def drift(self, x):
        return np.zeros(1)

    def output(self, x):
        return npoly.polyval(x, self.h)

    def linear_maps(self):
        if len(self.h) == 2:
            return np.zeros((1, 1)), np.array([[self.h[1]]])
        return None

    def storage(self, x):
        # ∫_0^x h
        return float(npoly.polyval(x[0], npoly.polyint(self.h)))


@dataclass(frozen=True)
class QuadraticObjective:
    """f(x) = q/2 (x - b)^2."""
    q: float
    b: float = 0.0

    def __post_init__(self):
        if self.q <= 0:
            raise ValidationError(f"q: curvature must be positive, got {self.q}")

    def value(self, x):
        return 0.5 * self.q * (np.asarray(x) - self.b) ** 2

    def gradient(self, x):
        return self.q * (np.asarray(x) - self.b)

    @property
    def minimizer(self) -> float:
        return self.b


@dataclass(frozen=True, eq=False)
class GradientFlowAgent(AgentModel):
    """Zero-gradient-sum agent ẋ = (∇²f)^-1 u, y = x."""
    kind: ClassVar[AgentKind] = AgentKind.GRADIENT_FLOW
    objective: QuadraticObjective
    x0: float | None = None

    def __post_init__(self):
        x0 = self.objective.minimizer if self.x0 is None else float(self.x0)
        object.__setattr__(self, "x0", x0)

    @property
    def initial_state(self):
        return np.array([self.x0])

    @property
    def input_matrix(self):
        return np.array([[1.0 / self.objective.q]])

    @property
    def feedthrough(self):
        return np.zeros((1, 1))

    def drift(self, x):
        return np.zeros(1)

    def output(self, x):
        return x.copy()

    def linear_maps(self):
        return np.zeros((1, 1)), np.eye(1)

    def storage(self, x):
        return 0.5 * self.objective.q * float(x @ x)


# --- templates --------------------------------------------------------------

def harmonic_oscillator(x0: Sequence[float] = (1.0, 0.0), frequency: float = 1.0) -> LtiAgent:
    """Lossless oscillator with storage ½‖x‖²."""
    A = np.array([[0.0, -frequency], [frequency, 0.0]])
    ss = StateSpaceSystem(A, [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]], storage_matrix=np.eye(2))
    return LtiAgent(ss, np.asarray(x0, dtype=float))


def integrator_agent(x0: float = 0.0) -> IntegratorStaticOutputAgent:
    return IntegratorStaticOutputAgent((0.0, 1.0), x0)


def modified_pi_plant(q: float) -> PoleResidueSystem:
    """(s + 1)/(s (s + q)) = (1/q)/s + (1 - 1/q)/(s + q); passivity-short for q < 1."""
    if q <= 0:
        raise ValidationError(f"q: curvature must be positive, got {q}")
    chains = (PoleChain(0.0, ([[1.0 / q]],)), PoleChain(q, ([[1.0 - 1.0 / q]],)))
    return PoleResidueSystem((1, 1), chains)


def modified_pi_agent(q: float, x0: Sequence[float] | None = None) -> LtiAgent:
    plant = modified_pi_plant(q)
    ss = realize(plant)
    P = chain_storage(plant)
    ss = StateSpaceSystem(ss.A, ss.B, ss.C, ss.D, storage_matrix=P)
    return LtiAgent(ss, None if x0 is None else np.asarray(x0, dtype=float))


def chain_storage(sys: PoleResidueSystem) -> np.ndarray | None:
    """Storage matrix P (V = ½ x^T P x) of realize(sys) when it is known in closed form.

    Known when every chain is first order with a real pole and a real symmetric
    PSD residue R: the block ẋ = -d x + u, y = R x then has P = R.
    """
    blocks = []
    for chain in sys.chains:
        R = chain.residues[0]
        if chain.length > 1 or abs(chain.pole.imag) > settings.imag_axis_tol:
            return None
        if np.abs(R.imag).max(initial=0.0) > settings.realness_tol:
            return None
        Rr = R.real
        if Rr.shape[0] != Rr.shape[1] or not np.allclose(Rr, Rr.T, atol=settings.symmetry_tol):
            return None
        if np.linalg.eigvalsh((Rr + Rr.T) / 2)[0] < -settings.psd_tol:
            return None
        blocks.append(Rr)
    if not blocks:
        return np.zeros((0, 0))
    return linalg.block_diag(*blocks)


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

def _resolve_run(step, horizon, stride) -> tuple[float, float, int]:
    step = settings.sim_step if step is None else float(step)
    horizon = settings.sim_horizon if horizon is None else float(horizon)
    stride = settings.output_stride if stride is None else int(stride)
    return step, horizon, stride


def _broadcast_pfcs(pfcs, n: int) -> tuple[PoleResidueSystem | None, ...]:
    if pfcs is None:
        return (None,) * n
    if isinstance(pfcs, PoleResidueSystem):
        return (pfcs,) * n
    pfcs = tuple(pfcs)
    if not pfcs:
        return (None,) * n
    if len(pfcs) != n:
        raise ValidationError(f"pfc: expected one compensator per agent ({n}), got {len(pfcs)}")
    return pfcs


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    agents: tuple[AgentModel, ...]
    graph: SignedDigraph
    sigma: float | None = None
    pfcs: tuple[PoleResidueSystem | None, ...] | PoleResidueSystem | None = None
    step: float | None = None
    horizon: float | None = None
    output_stride: int | None = None
    name: str = "network"

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) != self.graph.n:
            raise ValidationError(f"agents: {len(agents)} agents for a graph with {self.graph.n} nodes")
        if len({a.m for a in agents}) != 1:
            raise ValidationError("agents: all agents must share the output dimension")
        sigma = settings.coupling_gain if self.sigma is None else float(self.sigma)
        if sigma <= 0:
            raise ValidationError(f"sigma: must be positive, got {sigma}")
        step, horizon, stride = _resolve_run(self.step, self.horizon, self.output_stride)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "pfcs", _broadcast_pfcs(self.pfcs, len(agents)))
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "output_stride", stride)

    def interconnection(self) -> np.ndarray:
        m = self.agents[0].m
        return self.sigma * np.kron(build_laplacian(self.graph), np.eye(m))


@dataclass(frozen=True, eq=False)
class FeedbackConfig:
    """Negative feedback pair: u_1 = -ỹ_2, u_2 = ỹ_1; the PFC sits on the forward block."""
    forward: AgentModel
    feedback: AgentModel
    pfc: PoleResidueSystem | None = None
    step: float | None = None
    horizon: float | None = None
    output_stride: int | None = None
    name: str = "feedback"

    def __post_init__(self):
        if self.forward.m != self.feedback.m:
            raise ValidationError("agents: feedback blocks must share the output dimension")
        step, horizon, stride = _resolve_run(self.step, self.horizon, self.output_stride)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "output_stride", stride)

    @property
    def agents(self) -> tuple[AgentModel, AgentModel]:
        return self.forward, self.feedback

    @property
    def pfcs(self) -> tuple[PoleResidueSystem | None, None]:
        return self.pfc, None

    def interconnection(self) -> np.ndarray:
        eye = np.eye(self.forward.m)
        zero = np.zeros_like(eye)
        return np.block([[zero, eye], [-eye, zero]])


SimConfig = NetworkConfig | FeedbackConfig


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexCheck:
    """Passivity-index bookkeeping of a network: coupling OFP(-r) against PFC IFP(ν)."""
    ofp_radius: float                       # r of σL; the coupling is OFP(-r)
    pfc_index: float | None                 # weakest estimated IFP index over agents, None if some PFC is not IFP
    strictness: float | None                # ofp_compose(-r, ν)
    notice: str = ""

    @property
    def passed(self) -> bool:
        return self.strictness is not None and self.strictness > 0


def _pfc_index(pfc: PoleResidueSystem | None) -> float | None:
    if pfc is None:
        return 0.0
    try:
        return estimate_ifp_index(pfc)
    except NotIFPError as exc:
        logger.warning("PFC is not IFP: %s", exc)
        return None


def index_check(cfg: SimConfig) -> IndexCheck | None:
    """Compare the PFC IFP index ν against the OFP radius r of the coupling.

    Only networks on balanced graphs with a simple zero eigenvalue have a
    radius; anything else returns None. The IFP index is a grid estimate and
    therefore an upper bound.
    """
    if not isinstance(cfg, NetworkConfig) or cfg.graph.n == 1:
        return None
    try:
        r = compute_ofp_radius(build_laplacian(cfg.graph)) / cfg.sigma
    except GraphConditionError as exc:
        logger.debug("%s: no OFP radius (%s)", cfg.name, exc)
        return None

    indices = {}
    for pfc in cfg.pfcs:
        if id(pfc) not in indices:
            indices[id(pfc)] = _pfc_index(pfc)
    nu = None if any(v is None for v in indices.values()) else min(indices.values())
    strictness = None if nu is None else ofp_compose(-r, nu)
    has_pfc = any(pfc is not None for pfc in cfg.pfcs)

    notice = ""
    if strictness is None:
        notice = "a compensator is not IFP; synchronization is not guaranteed"
    elif strictness <= 0 and (has_pfc or r > settings.zero_eig_tol):
        notice = f"PFC index {nu:.6g} does not exceed the coupling radius {r:.6g}; synchronization is not guaranteed"
    if notice:
        logger.warning("%s: %s", cfg.name, notice)
    return IndexCheck(r, nu, strictness, notice)


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    config: SimConfig
    agents: tuple[AgentModel, ...]
    compensators: tuple[StateSpaceSystem | None, ...]
    compensator_storage: tuple[np.ndarray | None, ...]
    agent_slices: tuple[slice, ...]
    pfc_slices: tuple[slice, ...]
    io_slices: tuple[slice, ...]
    loop_gain: np.ndarray                   # (I + Γ D_tot)^-1 Γ
    condition_number: float
    x0: np.ndarray
    linear_matrix: np.ndarray | None = None
    index_check: IndexCheck | None = None

    @property
    def n_states(self) -> int:
        return self.x0.size

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return self.agents[0].m

    def _free_outputs(self, x: np.ndarray) -> np.ndarray:
        h = np.empty(self.n_agents * self.m)
        for agent, comp, sa, sc, io in zip(
                self.agents, self.compensators, self.agent_slices, self.pfc_slices, self.io_slices):
            h[io] = agent.output(x[sa])
            if comp is not None and comp.n:
                h[io] += comp.C @ x[sc]
        return h

    def inputs(self, x: np.ndarray) -> np.ndarray:
        return -self.loop_gain @ self._free_outputs(x)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        if self.linear_matrix is not None:
            return self.linear_matrix @ x
        u = self.inputs(x)
        dx = np.empty_like(x)
        for agent, comp, sa, sc, io in zip(
                self.agents, self.compensators, self.agent_slices, self.pfc_slices, self.io_slices):
            dx[sa] = agent.drift(x[sa]) + agent.input_matrix @ u[io]
            if comp is not None and comp.n:
                dx[sc] = comp.A @ x[sc] + comp.B @ u[io]
        return dx

    def signals(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, y, y_c), each of shape (N, m)."""
        u = self.inputs(x)
        y = np.empty_like(u)
        yc = np.zeros_like(u)
        for agent, comp, sa, sc, io in zip(
                self.agents, self.compensators, self.agent_slices, self.pfc_slices, self.io_slices):
            y[io] = agent.output(x[sa]) + agent.feedthrough @ u[io]
            if comp is not None:
                yc[io] = comp.D @ u[io] + (comp.C @ x[sc] if comp.n else 0.0)
        shape = (self.n_agents, self.m)
        return u.reshape(shape), y.reshape(shape), yc.reshape(shape)


def assemble(cfg: SimConfig) -> ClosedLoopSystem:
    """Resolve the algebraic loop and lay out the stacked state vector."""
    agents = tuple(cfg.agents)
    m = agents[0].m
    compensators, storages = [], []
    for pfc in cfg.pfcs:
        if pfc is None:
            compensators.append(None)
            storages.append(np.zeros((0, 0)))
            continue
        if pfc.dims != (m, m):
            raise ValidationError(f"pfc: dims {pfc.dims} do not match agent I/O dimension {m}")
        compensators.append(realize(pfc))
        storages.append(chain_storage(pfc))

    agent_slices, pfc_slices, io_slices, x0 = [], [], [], []
    offset = 0
    for i, (agent, comp) in enumerate(zip(agents, compensators)):
        agent_slices.append(slice(offset, offset + agent.n_states))
        offset += agent.n_states
        nc = 0 if comp is None else comp.n
        pfc_slices.append(slice(offset, offset + nc))
        offset += nc
        io_slices.append(slice(i * m, (i + 1) * m))
        x0 += [agent.initial_state, np.zeros(nc)]
    x0 = np.concatenate(x0)

    gamma = cfg.interconnection()
    d_tot = linalg.block_diag(*[
        agent.feedthrough + (comp.D if comp is not None else 0.0)
        for agent, comp in zip(agents, compensators)
    ])
    loop = np.eye(gamma.shape[0]) + gamma @ d_tot
    cond = float(np.linalg.cond(loop))
    if not np.isfinite(cond) or cond > settings.well_posed_cond_max:
        raise NotWellPosedError(cond)
    loop_gain = linalg.lu_solve(linalg.lu_factor(loop), gamma)

    linear_matrix = None
    maps = [agent.linear_maps() for agent in agents]
    if all(mp is not None for mp in maps):
        n = offset
        A = np.zeros((n, n))
        G = np.zeros((n, gamma.shape[0]))
        C = np.zeros((gamma.shape[0], n))
        for agent, (Aa, Ca), comp, sa, sc, io in zip(
                agents, maps, compensators, agent_slices, pfc_slices, io_slices):
            A[sa, sa] = Aa
            G[sa, io] = agent.input_matrix
            C[io, sa] = Ca
            if comp is not None and comp.n:
                A[sc, sc] = comp.A
                G[sc, io] = comp.B
                C[io, sc] = comp.C
        linear_matrix = A - G @ loop_gain @ C

    logger.debug("Assembled %s: %d agents, %d states, cond(I + Gamma D)=%.3g, linear=%s",
                 cfg.name, len(agents), offset, cond, linear_matrix is not None)
    return ClosedLoopSystem(
        config=cfg,
        agents=agents,
        compensators=tuple(compensators),
        compensator_storage=tuple(storages),
        agent_slices=tuple(agent_slices),
        pfc_slices=tuple(pfc_slices),
        io_slices=tuple(io_slices),
        loop_gain=loop_gain,
        condition_number=cond,
        x0=x0,
        linear_matrix=linear_matrix,
        index_check=index_check(cfg),
    )


# ---------------------------------------------------------------------------
# Storage functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StorageSpec:
    name: str
    fn: Callable[[np.ndarray], float]       # full closed-loop state -> V


def default_storage(closed: ClosedLoopSystem) -> StorageSpec | None:
    """Sum of agent and compensator storages, or None if any is unknown."""
    if any(a.storage(a.initial_state) is None for a in closed.agents):
        return None
    if any(P is None for P in closed.compensator_storage):
        return None

    def total(x: np.ndarray) -> float:
        value = 0.0
        for agent, P, sa, sc in zip(closed.agents, closed.compensator_storage,
                                    closed.agent_slices, closed.pfc_slices):
            value += agent.storage(x[sa])
            if P.size:
                xc = x[sc]
                value += 0.5 * float(xc @ P @ xc)
        return value

    return StorageSpec("agents+compensators", total)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryLog:
    name: str
    times: np.ndarray                       # (K,)
    outputs: np.ndarray                     # y, (K, N, m)
    pfc_outputs: np.ndarray                 # y_c, (K, N, m)
    coupling_outputs: np.ndarray            # -u, (K, N, m)
    states: np.ndarray                      # (K, n)
    step: float
    output_stride: int
    agent_kinds: tuple[AgentKind, ...]
    agent_slices: tuple[slice, ...]
    pfc_slices: tuple[slice, ...]
    diverged: bool = False
    storage: np.ndarray | None = None       # V(t_k) when a storage is known
    index_check: IndexCheck | None = None

    @property
    def n_agents(self) -> int:
        return self.outputs.shape[1]

    @property
    def combined_outputs(self) -> np.ndarray:
        return self.outputs + self.pfc_outputs


@dataclass(frozen=True, eq=False)
class SyncMetrics:
    sync_error: np.ndarray
    final_sync_error: float
    settled_time: float | None
    consensus_value: np.ndarray | None
    threshold: float
    diverged: bool = False

    @property
    def settled(self) -> bool:
        return self.settled_time is not None


def _rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + h / 2 * k1)
    k3 = f(x + h / 2 * k2)
    k4 = f(x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_matrix(A: np.ndarray, h: float) -> np.ndarray:
    """RK4 applied to ẋ = A x is exactly x_{k+1} = Φ x_k with this Φ."""
    hA = h * A
    eye = np.eye(A.shape[0])
    return eye + hA @ (eye + hA @ (eye / 2 + hA @ (eye / 6 + hA / 24)))


def integrate(closed: ClosedLoopSystem, step: float, horizon: float, stride: int):
    """Fixed-step RK4. Returns (sample times, sampled states, diverged)."""
    if step <= 0:
        raise ValidationError(f"step: must be positive, got {step}")
    if horizon <= 0:
        raise ValidationError(f"horizon: must be positive, got {horizon}")
    if stride < 1:
        raise ValidationError(f"output_stride: must be at least 1, got {stride}")

    n_steps = max(1, int(round(horizon / step)))
    guard = settings.divergence_guard
    phi = None if closed.linear_matrix is None else _rk4_matrix(closed.linear_matrix, step)

    x = closed.x0.copy()
    times, states = [0.0], [x.copy()]
    diverged = False
    for k in range(1, n_steps + 1):
        x = phi @ x if phi is not None else _rk4_step(closed.derivative, x, step)
        norm = np.linalg.norm(x)
        if not np.isfinite(norm) or norm > guard:
            diverged = True
            logger.warning("%s: divergence guard tripped at t=%.4g (|x|=%.3g)",
                           closed.config.name, k * step, norm)
            if np.isfinite(norm):
                times.append(k * step)
                states.append(x.copy())
            break
        if k % stride == 0 or k == n_steps:
            times.append(k * step)
            states.append(x.copy())
    return np.array(times), np.array(states), diverged


def simulate(cfg: SimConfig, threshold: float | None = None) -> tuple[TrajectoryLog, SyncMetrics]:
    closed = assemble(cfg)
    started = time.perf_counter()
    times, states, diverged = integrate(closed, cfg.step, cfg.horizon, cfg.output_stride)

    signals = [closed.signals(x) for x in states]
    storage_spec = default_storage(closed)
    log = TrajectoryLog(
        name=cfg.name,
        times=times,
        outputs=np.array([s[1] for s in signals]),
        pfc_outputs=np.array([s[2] for s in signals]),
        coupling_outputs=-np.array([s[0] for s in signals]),
        states=states,
        step=cfg.step,
        output_stride=cfg.output_stride,
        agent_kinds=tuple(a.kind for a in closed.agents),
        agent_slices=closed.agent_slices,
        pfc_slices=closed.pfc_slices,
        diverged=diverged,
        storage=None if storage_spec is None else np.array([storage_spec.fn(x) for x in states]),
        index_check=closed.index_check,
    )
    metrics = sync_metrics(log, threshold)
    logger.info("Simulated %s: T=%.4g h=%.3g, %d samples in %.2fs, final sync error %.3g%s",
                cfg.name, times[-1], cfg.step, times.size, time.perf_counter() - started,
                metrics.final_sync_error, " (diverged)" if diverged else "")
    return log, metrics


def sync_metrics(log: TrajectoryLog, threshold: float | None = None) -> SyncMetrics:
    threshold = settings.sync_threshold if threshold is None else threshold
    if log.times.size == 0:
        raise ValidationError("log: empty trajectory")
    y = log.outputs
    error = (y.max(axis=1) - y.min(axis=1)).max(axis=1)

    settled_time = None
    consensus = None
    if not log.diverged:
        above = np.nonzero(error >= threshold)[0]
        if above.size == 0:
            settled_time = float(log.times[0])
        elif above[-1] < error.size - 1:
            settled_time = float(log.times[above[-1] + 1])
        if settled_time is not None:
            consensus = y[-1].mean(axis=0)
    return SyncMetrics(error, float(error[-1]), settled_time, consensus, threshold, log.diverged)


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyAudit:
    checked: bool
    storage: str | None = None
    max_violation: float = 0.0
    slack: float = 0.0
    initial: float | None = None
    final: float | None = None
    notice: str = ""

    @property
    def passed(self) -> bool:
        return self.checked and self.max_violation <= self.slack

    @property
    def drift(self) -> float | None:
        if self.initial is None or self.final is None:
            return None
        return self.final - self.initial


def energy_audit(log: TrajectoryLog, storage_spec: StorageSpec | None = None) -> EnergyAudit:
    """Check V(t_{k+1}) - V(t_k) <= slack between consecutive samples.

    The slack scales with h^4 per integration step between samples.
    """
    if storage_spec is not None:
        values = np.array([storage_spec.fn(x) for x in log.states])
        name = storage_spec.name
    elif log.storage is not None:
        values = log.storage
        name = "agents+compensators"
    else:
        logger.warning("%s: no storage function known, energy audit skipped", log.name)
        return EnergyAudit(False, notice="no storage function available; audit skipped")

    slack = settings.audit_slack_factor * log.step ** 4 * log.output_stride
    increments = np.diff(values)
    violation = float(max(0.0, increments.max(initial=0.0)))
    audit = EnergyAudit(True, name, violation, slack, float(values[0]), float(values[-1]))
    logger.info("Energy audit %s: max increase %.3g (slack %.3g), V: %.6g -> %.6g",
                log.name, violation, slack, values[0], values[-1])
    return audit


def zgs_invariant(log: TrajectoryLog, fns: Sequence[QuadraticObjective]) -> float:
    """max_t |Σ ∇f_i(x_i(t)) - Σ ∇f_i(x_i(0))|."""
    if any(kind != AgentKind.GRADIENT_FLOW for kind in log.agent_kinds):
        raise ValidationError("agents: the zero-gradient-sum invariant needs gradient-flow agents")
    if len(fns) != log.n_agents:
        raise ValidationError(f"fns: expected {log.n_agents} objectives, got {len(fns)}")
    x = log.outputs[:, :, 0]
    grad_sum = sum(f.gradient(x[:, i]) for i, f in enumerate(fns))
    return float(np.max(np.abs(grad_sum - grad_sum[0])))


# ---------------------------------------------------------------------------
# Horizon control and sweeps
# ---------------------------------------------------------------------------

def settle(
    cfg: SimConfig, threshold: float | None = None, max_horizon: float | None = None,
) -> tuple[TrajectoryLog, SyncMetrics]:
    """Double the horizon until the run settles, diverges, or reaches max_horizon."""
    threshold = settings.sync_threshold if threshold is None else threshold
    max_horizon = 8 * cfg.horizon if max_horizon is None else max_horizon
    while True:
        log, metrics = simulate(cfg, threshold)
        if metrics.settled and metrics.final_sync_error < threshold or log.diverged:
            return log, metrics
        if cfg.horizon * 2 > max_horizon:
            logger.info("%s: not settled by horizon %.4g", cfg.name, cfg.horizon)
            return log, metrics
        cfg = replace(cfg, horizon=cfg.horizon * 2)


def run_sweep(
    configs: Iterable[SimConfig], max_workers: int | None = None, threshold: float | None = None,
) -> list[tuple[TrajectoryLog, SyncMetrics]]:
    """Independent runs in a thread pool; results keep the input order."""
    configs = list(configs)
    workers = settings.sweep_workers if max_workers is None else max_workers
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda c: simulate(c, threshold), configs))
