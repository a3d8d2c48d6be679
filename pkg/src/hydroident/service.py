"""HTTP service exposing the simulation and identification pipeline.

Four POST endpoints mirror the CLI subcommands: /simulate, /identify,
/evaluate, /synth. Package errors map to a 422 response whose body says
which branch failed: {"error_type": "data" | "numerical", "message": ...}.
The CLI turns error_type into its exit code, so both transports (embedded
TestClient and a remote server) behave identically.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

import numpy as np

from . import identify as ident
from . import loss as loss_mod
from .dynamics import DEFAULT_DT, sample_grid, simulate
from .errors import HydroidentError, InvalidModel, NumericalError
from .model import effective_length, model_from_dict, validate_model
from .trajectory import Trajectory
from .schemas import (
    ErrorBody,
    EvaluateRequest,
    EvaluateResponse,
    IdentifyRequest,
    IdentifyResponse,
    SimulateRequest,
    SynthRequest,
    TrajectoryPayload,
    payload_to_trajectory,
    trajectory_to_payload,
)


def _load_model(doc: dict):
    model = model_from_dict(doc)
    violations = validate_model(model)
    if violations:
        raise InvalidModel(violations)
    return model


def create_app() -> FastAPI:
    app = FastAPI(title="hydroident", version="0.1.0")

    @app.exception_handler(HydroidentError)
    async def _package_error(request, exc: HydroidentError):
        kind = "numerical" if isinstance(exc, NumericalError) else "data"
        body = ErrorBody(error_type=kind, message=str(exc))
        return JSONResponse(status_code=422, content=body.model_dump())

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/simulate", response_model=TrajectoryPayload)
    def simulate_endpoint(req: SimulateRequest) -> TrajectoryPayload:
        model = _load_model(req.model)
        coeffs, joint = ident.coeffs_from_dict(req.coeffs)
        if joint is not None:
            model = model.with_joint_params(joint["damping"], joint["friction_loss"])
        times = sample_grid(req.duration, req.rate)
        traj = simulate(model, coeffs, req.duration, req.dt, times)
        return trajectory_to_payload(traj)

    @app.post("/synth", response_model=TrajectoryPayload)
    def synth_endpoint(req: SynthRequest) -> TrajectoryPayload:
        model = _load_model(req.model)
        coeffs, joint = ident.coeffs_from_dict(req.coeffs)
        if joint is not None:
            model = model.with_joint_params(joint["damping"], joint["friction_loss"])
        traj = ident.synth_target(model, coeffs, req.duration, req.rate,
                                  noise_std=req.noise_std, seed=req.seed,
                                  dt=req.dt)
        return trajectory_to_payload(traj)

    @app.post("/identify", response_model=IdentifyResponse)
    def identify_endpoint(req: IdentifyRequest) -> IdentifyResponse:
        model = _load_model(req.model)
        target = payload_to_trajectory(req.target)
        config = ident.make_ident_config(
            model, target, max_evals=req.max_evals, sigma0=req.sigma0,
            seed=req.seed, dt=req.dt,
            include_joint_params=req.include_joint_params,
            loss_keypoints=req.loss_keypoints)
        result = ident.run_identification(config, parallelism=req.workers)
        history = [[float(r.generation), float(r.evals), r.best, r.median]
                   for r in result.loss_history]
        return IdentifyResponse(result=ident.result_to_dict(result),
                                history=history)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate_endpoint(req: EvaluateRequest) -> EvaluateResponse:
        model = _load_model(req.model)
        coeffs, joint = ident.coeffs_from_dict(req.coeffs)
        if joint is not None:
            model = model.with_joint_params(joint["damping"], joint["friction_loss"])
        target = payload_to_trajectory(req.target)
        fractions = np.linspace(0.0, 1.0, target.n_keypoints)
        sim = simulate(model, coeffs, float(target.times[-1]), DEFAULT_DT,
                       sample_times=target.times, fractions=fractions)
        sim = Trajectory(sim.times, sim.points, target.keypoint_labels)
        return EvaluateResponse(
            trajectory_mse=loss_mod.trajectory_mse(sim, target),
            normalized_error=loss_mod.normalized_endpoint_error(
                sim, target, effective_length(model)),
            per_keypoint_error=[float(v) for v in
                                loss_mod.per_keypoint_error(sim, target)])

    return app
