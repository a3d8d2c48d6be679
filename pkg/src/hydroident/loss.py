"""Discrepancy measures between a simulated and a reference trajectory."""
from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, TimeMismatch
from .trajectory import Trajectory

#: finite worst-rank score assigned when a candidate's simulation diverges
DIVERGED_LOSS = 1.0e6

#: timestamps may differ by at most this before comparison is refused
TIME_TOLERANCE = 1e-9


def _check_comparable(sim: Trajectory, real: Trajectory) -> None:
    if sim.n_samples != real.n_samples:
        raise ShapeMismatch(f"sample counts differ: {sim.n_samples} vs {real.n_samples}")
    if sim.n_keypoints != real.n_keypoints:
        raise ShapeMismatch(f"keypoint counts differ: {sim.n_keypoints} vs {real.n_keypoints}")
    if sim.keypoint_labels != real.keypoint_labels:
        raise ShapeMismatch(f"keypoint labels differ: {sim.keypoint_labels} "
                            f"vs {real.keypoint_labels}")
    dt = np.abs(sim.times - real.times)
    if np.any(dt > TIME_TOLERANCE):
        raise TimeMismatch(f"timestamps differ by up to {dt.max():g} s; resample first")


def trajectory_mse(sim: Trajectory, real: Trajectory) -> float:
    """Mean over time of the squared stacked-coordinate residual, in m^2.

    L = (1/N) * sum_t ||y_sim(t) - y_real(t)||^2 where y(t) stacks all 2K
    keypoint coordinates at time t.
    """
    _check_comparable(sim, real)
    diff = sim.flat_points() - real.flat_points()
    return float(np.square(diff).sum() / sim.n_samples)


def normalized_endpoint_error(sim: Trajectory, real: Trajectory,
                              system_length: float) -> float:
    """Mean keypoint distance over time and keypoints, over system length."""
    _check_comparable(sim, real)
    if not system_length > 0:
        raise ShapeMismatch("system_length must be > 0")
    dist = np.linalg.norm(sim.points - real.points, axis=2)  # (N, K)
    return float(dist.mean() / system_length)


def per_keypoint_error(sim: Trajectory, real: Trajectory) -> np.ndarray:
    """Time-mean Euclidean distance per keypoint, in metres: shape (K,)."""
    _check_comparable(sim, real)
    return np.linalg.norm(sim.points - real.points, axis=2).mean(axis=0)


def select_keypoints(traj: Trajectory, labels) -> Trajectory:
    """Restrict a trajectory to the named keypoints, in the given order."""
    idx = []
    for label in labels:
        try:
            idx.append(traj.keypoint_labels.index(label))
        except ValueError:
            raise ShapeMismatch(f"keypoint {label!r} not in {traj.keypoint_labels}") from None
    return Trajectory(traj.times, traj.points[:, idx, :], tuple(labels))
