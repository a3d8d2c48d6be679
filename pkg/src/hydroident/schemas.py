"""Wire schemas for the HTTP service.

Mechanism configs travel as the same JSON documents the file loaders
accept, coefficients as coeffs/result documents, trajectories as
structured arrays. Physics validation happens in the core modules; these
models only pin envelope shapes and defaults.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel

from .dynamics import DEFAULT_DT
from .trajectory import Trajectory


class TrajectoryPayload(BaseModel):
    times: list[float]
    keypoint_labels: list[str]
    # points[sample][keypoint] = [x, y]
    points: list[list[list[float]]]


def trajectory_to_payload(traj: Trajectory) -> TrajectoryPayload:
    return TrajectoryPayload(times=[float(t) for t in traj.times],
                             keypoint_labels=list(traj.keypoint_labels),
                             points=traj.points.tolist())


def payload_to_trajectory(payload: TrajectoryPayload) -> Trajectory:
    return Trajectory(np.asarray(payload.times, dtype=float),
                      np.asarray(payload.points, dtype=float),
                      tuple(payload.keypoint_labels))


class SimulateRequest(BaseModel):
    model: dict
    coeffs: dict
    duration: float
    rate: float
    dt: float = DEFAULT_DT


class SynthRequest(BaseModel):
    model: dict
    coeffs: dict
    duration: float
    rate: float
    noise_std: float = 0.0
    seed: int = 0
    dt: float = DEFAULT_DT


class IdentifyRequest(BaseModel):
    model: dict
    target: TrajectoryPayload
    max_evals: int = 5000
    sigma0: float = 1.0
    seed: int = 0
    workers: int = 1
    dt: float = DEFAULT_DT
    include_joint_params: bool = False
    loss_keypoints: Optional[list[str]] = None


class IdentifyResponse(BaseModel):
    result: dict
    # history rows mirror the CSV columns: generation, evals, best, median
    history: list[list[float]]


class EvaluateRequest(BaseModel):
    model: dict
    coeffs: dict
    target: TrajectoryPayload


class EvaluateResponse(BaseModel):
    schema_version: int = 1
    trajectory_mse: float
    normalized_error: float
    per_keypoint_error: list[float]


class ErrorBody(BaseModel):
    error_type: Literal["data", "numerical"]
    message: str
