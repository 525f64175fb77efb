from functools import lru_cache
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Partial fractions / evaluation
    root_cluster_tol: float = 1e-7       # roots closer than this form one chain
    root_split_eps: float = 1e-12        # a k-fold root splits by about eps^(1/k) under rounding
    pole_proximity_tol: float = 1e-9     # |jω + d| below this is "on the pole"
    imag_axis_tol: float = 1e-10         # |Re d| below this counts as Re d = 0
    symmetry_tol: float = 1e-10
    realness_tol: float = 1e-9           # imaginary residue parts below this are dropped

    # Passivity sweep
    psd_tol: float = 1e-9                # eigenvalue >= -psd_tol counts as nonnegative
    grid_points: int = 2000
    omega_min: float = 1e-3
    omega_max: float = 1e3
    pole_refine_points: int = 50

    # PFC design
    design_slack: float = 0.0
    simulation_slack: float = 1e-6       # added when a design feeds a simulation

    # Signed graphs
    balance_tol: float = 1e-10
    zero_eig_tol: float = 1e-8

    # Simulation
    sim_step: float = 1e-3
    sim_horizon: float = 50.0
    output_stride: int = 10
    divergence_guard: float = 1e9
    coupling_gain: float = 1.0
    sync_threshold: float = 1e-2
    well_posed_cond_max: float = 1e12
    audit_slack_factor: float = 1e3      # energy audit slack = factor * h^4
    sweep_workers: int = 4

    # CLI
    output_dir: str = "out"
    log_level: str = "INFO"

    # Randomized tests
    pfc_sync_seed: int = 0

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8"}


@lru_cache
def get_settings() -> Settings:
    return Settings()
