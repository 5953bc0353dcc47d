"""Sample surrogate-noise trajectories by sequential projective measurement,
replay them through open quantum systems, and check when such a noise
description is legitimate.
"""
from .envmodel import (
    EnvironmentModel,
    build_exact_env,
    build_lindblad_env,
    build_rtn_env,
    load_model,
    propagate,
    stationarity_residual,
)
from .errors import *  # noqa: F401,F403
from .opensim import (
    SystemSpec,
    ensemble_average,
    error_report,
    evolve_trajectory_exact_pc,
    evolve_trajectory_rk4,
    exact_rtn_coherence,
    pure_dephasing_system,
    simulate_ensemble,
)
from .qcore import Observable, dm_diagnostics, evolve_unitary, spectral_decompose
from .quasiprob import TimeGrid, joint_prob, joint_quasiprob, moment, validity_witness
from .sampler import (
    Trajectory,
    TrajectoryEnsemble,
    load_ensemble,
    measure_once,
    sample_ensemble,
    sample_trajectory,
    save_ensemble,
)

__version__ = "0.1.0"
