"""Trajectory-driven identification of hydrodynamic coefficients for
planar articulated underwater mechanisms.

Workflow: describe a mechanism (model), simulate it under a candidate
coefficient set (dynamics plus hydro), compare simulated keypoint tracks
against recorded ones (trajectory, loss), and search coefficient space
with a bounded evolution strategy (cmaes, identify). A FastAPI service
(service) and a thin CLI (cli) wrap the pipeline.
"""
from .errors import (
    HydroidentError,
    DataError,
    NumericalError,
    ParseError,
    ConfigError,
    InvalidModel,
    SingularMass,
    DivergedSimulation,
)
from .model import (
    HydroCoeffs,
    ParamVector,
    LinkSpec,
    JointSpec,
    ActuatorSpec,
    FluidEnv,
    MechanismModel,
    validate_model,
    load_model,
    save_model,
    effective_length,
)
from .trajectory import (
    Trajectory,
    Calibration,
    load_trajectory,
    save_trajectory,
    load_calibration,
    keypoints_from_centerline,
    resample,
)
from .loss import (
    trajectory_mse,
    normalized_endpoint_error,
    per_keypoint_error,
    select_keypoints,
)
from .dynamics import (
    State,
    SimResult,
    initial_state,
    forward_kinematics,
    mass_matrix,
    bias_forces,
    total_energy,
    actuator_torque,
    run_simulation,
    simulate,
    step,
    sample_grid,
)
from .hydro import link_fluid_wrench, generalized_fluid_forces, projected_area
from .cmaes import CmaConfig, cma_init, ask, tell, converged
from .identify import (
    IdentConfig,
    IdentResult,
    make_ident_config,
    run_identification,
    synth_target,
    save_result,
    save_coeffs,
    load_coeffs,
)

__version__ = "0.1.0"

__all__ = [
    "HydroidentError", "DataError", "NumericalError", "ParseError",
    "ConfigError", "InvalidModel", "SingularMass", "DivergedSimulation",
    "HydroCoeffs", "ParamVector", "LinkSpec", "JointSpec", "ActuatorSpec",
    "FluidEnv", "MechanismModel", "validate_model", "load_model",
    "save_model", "effective_length",
    "Trajectory", "Calibration", "load_trajectory", "save_trajectory",
    "load_calibration", "keypoints_from_centerline", "resample",
    "trajectory_mse", "normalized_endpoint_error", "per_keypoint_error",
    "select_keypoints",
    "State", "SimResult", "initial_state", "forward_kinematics",
    "mass_matrix", "bias_forces", "total_energy", "actuator_torque",
    "run_simulation", "simulate", "step", "sample_grid",
    "link_fluid_wrench", "generalized_fluid_forces", "projected_area",
    "CmaConfig", "cma_init", "ask", "tell", "converged",
    "IdentConfig", "IdentResult", "make_ident_config", "run_identification",
    "synth_target", "save_result", "save_coeffs", "load_coeffs",
]
