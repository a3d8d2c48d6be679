"""Keypoint trajectories: containers, CSV round-trip, calibration, resampling.

A trajectory is K planar keypoints tracked over N timestamps. On disk it is
a CSV with header ``t,P0x,P0y,P1x,P1y,...``; values are written with %.17g
so a load/save cycle is bit exact.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegeneratePolyline,
    DuplicateTimestamp,
    NonMonotonicTime,
    OutOfRange,
    ParseError,
    ShapeMismatch,
)

#: arc-length fractions defining the standard keypoints P0..P3
KEYPOINT_FRACTIONS = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)


def default_labels(k: int) -> tuple[str, ...]:
    return tuple(f"P{i}" for i in range(k))


@dataclass(frozen=True)
class Trajectory:
    """times: (N,) strictly increasing; points: (N, K, 2) world metres."""

    times: np.ndarray
    points: np.ndarray
    keypoint_labels: tuple[str, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        points = np.asarray(self.points, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ShapeMismatch(f"times must be a non-empty 1-d array, got shape {times.shape}")
        if points.ndim != 3 or points.shape[2] != 2 or points.shape[1] == 0:
            raise ShapeMismatch(f"points must have shape (N, K, 2), got {points.shape}")
        if points.shape[0] != times.size:
            raise ShapeMismatch(f"times has {times.size} rows but points has {points.shape[0]}")
        if not np.all(np.isfinite(times)):
            raise OutOfRange("timestamps must be finite")
        diffs = np.diff(times)
        if np.any(diffs == 0):
            raise DuplicateTimestamp("timestamps contain duplicates")
        if np.any(diffs < 0):
            raise NonMonotonicTime("timestamps must be strictly increasing")
        if not np.all(np.isfinite(points)):
            raise OutOfRange("keypoint coordinates must be finite")
        labels = tuple(self.keypoint_labels) or default_labels(points.shape[1])
        if len(labels) != points.shape[1]:
            raise ShapeMismatch(f"{len(labels)} labels for {points.shape[1]} keypoints")
        times.setflags(write=False)
        points.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "keypoint_labels", labels)

    @property
    def n_samples(self) -> int:
        return self.times.size

    @property
    def n_keypoints(self) -> int:
        return self.points.shape[1]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def flat_points(self) -> np.ndarray:
        """Points as (N, 2K): x0, y0, x1, y1, ... per row."""
        return self.points.reshape(self.n_samples, 2 * self.n_keypoints)


@dataclass(frozen=True)
class Calibration:
    """Pixel to world map: shift by an origin pixel, scale, optionally flip y.

    flip_y handles image coordinates where y grows downward while world y
    grows upward.
    """

    meters_per_pixel: float
    origin_px: tuple[float, float] = (0.0, 0.0)
    flip_y: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.meters_per_pixel) and self.meters_per_pixel > 0):
            raise OutOfRange("meters_per_pixel must be > 0")

    def to_world(self, pixels: np.ndarray) -> np.ndarray:
        px = np.asarray(pixels, dtype=float)
        out = np.empty_like(px)
        out[..., 0] = (px[..., 0] - self.origin_px[0]) * self.meters_per_pixel
        dy = px[..., 1] - self.origin_px[1]
        out[..., 1] = (-dy if self.flip_y else dy) * self.meters_per_pixel
        return out

    def to_pixels(self, world: np.ndarray) -> np.ndarray:
        w = np.asarray(world, dtype=float)
        out = np.empty_like(w)
        out[..., 0] = w[..., 0] / self.meters_per_pixel + self.origin_px[0]
        wy = w[..., 1] / self.meters_per_pixel
        out[..., 1] = self.origin_px[1] + (-wy if self.flip_y else wy)
        return out


def load_calibration(path) -> Calibration:
    """JSON sidecar: {"meters_per_pixel": ..., "origin_px": [x, y], "flip_y": ...}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return Calibration(meters_per_pixel=float(doc["meters_per_pixel"]),
                           origin_px=tuple(float(v) for v in doc.get("origin_px", (0.0, 0.0))),
                           flip_y=bool(doc.get("flip_y", True)))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed calibration ({exc})") from exc


def trajectory_to_csv(traj: Trajectory) -> str:
    header = ["t"]
    for label in traj.keypoint_labels:
        header += [f"{label}x", f"{label}y"]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    flat = traj.flat_points()
    for i in range(traj.n_samples):
        row = [f"{traj.times[i]:.17g}"] + [f"{v:.17g}" for v in flat[i]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def trajectory_from_csv(text: str, calibration: Optional[Calibration] = None) -> Trajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty trajectory file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t" or len(header) < 3 or (len(header) - 1) % 2 != 0:
        raise ParseError(f"bad header {lines[0]!r}: expected t,P0x,P0y,...")
    labels = []
    for k in range((len(header) - 1) // 2):
        cx, cy = header[1 + 2 * k], header[2 + 2 * k]
        if not (cx.endswith("x") and cy.endswith("y") and cx[:-1] == cy[:-1] and cx[:-1]):
            raise ParseError(f"bad header pair {cx!r},{cy!r}: expected <label>x,<label>y")
        labels.append(cx[:-1])
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ParseError(f"line {ln_no}: expected {len(header)} cells, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"line {ln_no}: {exc}") from exc
    data = np.array(rows)
    # Recording pipelines do not guarantee row order; sort, then let the
    # Trajectory invariant reject exact duplicates.
    data = data[np.argsort(data[:, 0], kind="stable")]
    times = data[:, 0]
    points = data[:, 1:].reshape(len(rows), len(labels), 2)
    if calibration is not None:
        points = calibration.to_world(points)
    return Trajectory(times, points, tuple(labels))


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trajectory_to_csv(traj))


def load_trajectory(path, calibration: Optional[Calibration] = None) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        return trajectory_from_csv(fh.read(), calibration)


def keypoints_from_centerline(polyline: np.ndarray,
                              fractions: Sequence[float] = KEYPOINT_FRACTIONS) -> np.ndarray:
    """Points at given arc-length fractions along an open polyline.

    polyline: (M, 2) ordered world points from the P0 end to the distal tip.
    Fraction 0 is polyline[0], fraction 1 is polyline[-1]; intermediate
    fractions interpolate linearly along cumulative arc length, so the
    defaults (0, 1/3, 2/3, 1) split the centerline into three equal-length
    segments.
    """
    v = np.asarray(polyline, dtype=float)
    if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] != 2:
        raise ShapeMismatch(f"polyline must have shape (M>=2, 2), got {v.shape}")
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    total = seg.sum()
    if not (np.isfinite(total) and total >= 1e-12):
        raise DegeneratePolyline("polyline arc length below 1e-12 m")
    s = np.concatenate(([0.0], np.cumsum(seg))) / total
    fr = np.asarray(fractions, dtype=float)
    if np.any(fr < 0) or np.any(fr > 1):
        raise OutOfRange("arc-length fractions must lie in [0, 1]")
    out = np.empty((fr.size, 2))
    out[:, 0] = np.interp(fr, s, v[:, 0])
    out[:, 1] = np.interp(fr, s, v[:, 1])
    return out


def resample(traj: Trajectory, new_times) -> Trajectory:
    """Linear time-interpolation onto new_times (must lie within the span).

    Passing the trajectory's own timestamps returns its samples unchanged.
    """
    t_new = np.asarray(new_times, dtype=float)
    t = traj.times
    if t_new.ndim != 1 or t_new.size == 0:
        raise ShapeMismatch("new_times must be a non-empty 1-d array")
    if t_new[0] < t[0] or t_new[-1] > t[-1]:
        raise OutOfRange(f"new_times [{t_new[0]}, {t_new[-1]}] extend beyond "
                         f"the recorded span [{t[0]}, {t[-1]}]")
    flat = traj.flat_points()
    out = np.empty((t_new.size, flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.interp(t_new, t, flat[:, c])
    return Trajectory(t_new, out.reshape(t_new.size, traj.n_keypoints, 2),
                      traj.keypoint_labels)
