"""Forward dynamics and kinematics of the planar n-link chain.

Equations of motion in joint coordinates q:

    M(q) qddot + b(q, qdot) = tau_act + tau_fluid - damping qdot
                              - friction_loss tanh(qdot / 1e-3)

with M the chain mass matrix and b the Coriolis/centrifugal plus
gravity-buoyancy bias. The default integrator is semi-implicit Euler at
dt = 1e-3 s with the joint damping term folded into the implicit velocity
solve, which stays stable for arbitrarily large identified damping; an
RK4 integrator at small dt is available for conservation checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import engine
from .errors import (
    ConfigError,
    DivergedSimulation,
    InvalidModel,
    OutOfRange,
    ShapeMismatch,
    SingularMass,
)
from .model import ActuatorSpec, MechanismModel, ParamVector, validate_model
from .trajectory import KEYPOINT_FRACTIONS, Trajectory, default_labels, keypoints_from_centerline

INTEGRATORS = ("semi_implicit", "rk4")
DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class State:
    """Instantaneous joint-space state."""

    t: float
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qdot = np.asarray(self.qdot, dtype=float)
        if q.ndim != 1 or q.shape != qdot.shape:
            raise ShapeMismatch(f"q {q.shape} and qdot {qdot.shape} must be equal-length vectors")
        if not (np.isfinite(self.t) and np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise OutOfRange("state entries must be finite")
        q.setflags(write=False)
        qdot.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)


@dataclass(frozen=True)
class LinkFrame:
    """World-frame kinematics of one link."""

    origin: tuple[float, float]       # proximal joint position
    axis_angle: float                 # world orientation of the link axis
    com_pos: tuple[float, float]
    com_vel: tuple[float, float]
    omega: float                      # absolute angular rate


def initial_state(model: MechanismModel) -> State:
    q0, qdot0 = model.initial_state
    return State(0.0, np.array(q0, dtype=float), np.array(qdot0, dtype=float))


def _require_valid(model: MechanismModel) -> None:
    violations = validate_model(model)
    if violations:
        raise InvalidModel(violations)


def _require_coeffs(model: MechanismModel, coeffs: ParamVector) -> None:
    if coeffs.n_links != model.n_links:
        raise ShapeMismatch(f"coefficients describe {coeffs.n_links} links, "
                            f"model has {model.n_links}")


def pack_model(model: MechanismModel):
    """Flatten a model into the engine's array layout (see engine docs)."""
    n = model.n_links
    base = np.array(model.base_pose, dtype=float)
    geom = np.empty((n, 8))
    derived = np.empty((n, 4))
    joint = np.empty((n, 2))
    for i, link in enumerate(model.links):
        geom[i] = (link.length, link.com_offset, link.mass, link.inertia_com,
                   link.semi_axes[0], link.semi_axes[1], link.semi_axes[2],
                   link.overlap_radius)
        derived[i] = (link.volume(), link.surface_area(), link.mean_radius(),
                      (link.mass - model.fluid.density * link.volume()) * model.fluid.gravity)
    for i, j in enumerate(model.joints):
        joint[i] = (j.damping, j.friction_loss)
    act = np.zeros((n, 3))
    seg_rows: list[list[float]] = [[] for _ in range(n)]
    for a in model.actuators:
        if a.kind == "none":
            continue
        act[a.joint_index] = (a.kv, a.force_range[0], a.force_range[1])
        seg_rows[a.joint_index] = [list(seg) for seg in a.schedule]
    seg_off = np.zeros(n + 1, dtype=np.int64)
    flat_segs: list[list[float]] = []
    for j in range(n):
        flat_segs.extend(seg_rows[j])
        seg_off[j + 1] = len(flat_segs)
    segs = np.array(flat_segs, dtype=float) if flat_segs else np.zeros((0, 3))
    fluid = np.array([model.fluid.density, model.fluid.viscosity])
    return base, geom, derived, joint, act, seg_off, segs, fluid


def forward_kinematics(model: MechanismModel, q: Sequence[float],
                       qdot: Optional[Sequence[float]] = None):
    """Per-link frames plus the centerline polyline from base to tip.

    Walks the chain accumulating angles; joint i+1 sits at
    (length - overlap_radius) along link i, the tip at full length of the
    last link. qdot defaults to rest.
    """
    _require_valid(model)
    q = np.asarray(q, dtype=float)
    n = model.n_links
    if q.shape != (n,):
        raise ShapeMismatch(f"expected q of length {n}, got shape {q.shape}")
    qdot = np.zeros(n) if qdot is None else np.asarray(qdot, dtype=float)
    if qdot.shape != (n,):
        raise ShapeMismatch(f"expected qdot of length {n}, got shape {qdot.shape}")

    frames = []
    polyline = np.empty((n + 1, 2))
    th = model.base_pose[2]
    om = 0.0
    px, py = model.base_pose[0], model.base_pose[1]
    vx, vy = 0.0, 0.0
    for i, link in enumerate(model.links):
        th += q[i]
        om += qdot[i]
        c, s = math.cos(th), math.sin(th)
        polyline[i] = (px, py)
        rx = px + link.com_offset * c
        ry = py + link.com_offset * s
        frames.append(LinkFrame(origin=(px, py), axis_angle=th, com_pos=(rx, ry),
                                com_vel=(vx - om * (ry - py), vy + om * (rx - px)),
                                omega=om))
        step = link.length if i == n - 1 else link.length - link.overlap_radius
        nx, ny = px + step * c, py + step * s
        vx, vy = vx - om * (ny - py), vy + om * (nx - px)
        px, py = nx, ny
    polyline[n] = (px, py)
    return frames, polyline


def _run_mass_bias(model: MechanismModel, q: np.ndarray, qdot: np.ndarray):
    base, geom, derived, joint, act, seg_off, segs, fluid = pack_model(model)
    n = model.n_links
    th = np.empty(n)
    p = np.empty((n, 2))
    u = np.empty((n, 2))
    r = np.empty((n, 2))
    vp = np.empty((n, 2))
    vc = np.empty((n, 2))
    om = np.empty(n)
    ac = np.empty((n, 2))
    M = np.empty((n, n))
    b = np.empty(n)
    engine._fk_arrays(base, geom, q, qdot, th, p, u, r, vp, vc, om)
    engine._mass_bias(geom, derived, p, r, om, ac, M, b)
    return M, b


def mass_matrix(model: MechanismModel, q: Sequence[float]) -> np.ndarray:
    """Joint-space inertia M(q); symmetric by construction, PD for valid models."""
    _require_valid(model)
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_links,):
        raise ShapeMismatch(f"expected q of length {model.n_links}, got shape {q.shape}")
    M, _ = _run_mass_bias(model, q, np.zeros(model.n_links))
    return M


def bias_forces(model: MechanismModel, state: State) -> np.ndarray:
    """Coriolis/centrifugal plus gravity-buoyancy torques b(q, qdot).

    Enters the equation of motion as M qddot + b = tau: a sinking
    horizontal link (COM at +x of its joint) has b = +(m - rho V) g lc,
    so it falls clockwise under zero torque.
    """
    _require_valid(model)
    if state.q.shape != (model.n_links,):
        raise ShapeMismatch(f"state has {state.q.size} joints, model has {model.n_links}")
    _, b = _run_mass_bias(model, state.q, state.qdot)
    return b


def total_energy(model: MechanismModel, q: Sequence[float],
                 qdot: Sequence[float]) -> float:
    """Kinetic plus gravity-buoyancy potential energy, zero at y = 0."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    M, _ = _run_mass_bias(model, q, qdot)
    frames, _ = forward_kinematics(model, q, qdot)
    kinetic = 0.5 * float(qdot @ M @ qdot)
    potential = 0.0
    for link, frame in zip(model.links, frames):
        net_weight = (link.mass - model.fluid.density * link.volume()) * model.fluid.gravity
        potential += net_weight * frame.com_pos[1]
    return kinetic + potential


def actuator_torque(act: ActuatorSpec, state: State) -> float:
    """Velocity-servo torque: clamp(kv (v_ref(t) - qdot), tau_min, tau_max).

    Schedule segments are half-open [t_start, t_end); the reference is zero
    outside all of them. kind "none" always returns zero.
    """
    if act.kind == "none":
        return 0.0
    if not 0 <= act.joint_index < state.q.size:
        raise ConfigError(f"actuator joint index {act.joint_index} out of range")
    v_ref = 0.0
    for t0, t1, v in act.schedule:
        if t0 <= state.t < t1:
            v_ref = v
            break
    tau = act.kv * (v_ref - state.qdot[act.joint_index])
    return float(min(max(tau, act.force_range[0]), act.force_range[1]))


@dataclass(frozen=True)
class SimResult:
    """Raw sampled output of one simulation run."""

    times: np.ndarray        # (S,)
    q: np.ndarray            # (S, n)
    qdot: np.ndarray         # (S, n)
    vertices: np.ndarray     # (S, n+1, 2) centerline polyline per sample
    final_state: State


def _dispatch(method: str):
    if method == "semi_implicit":
        return engine._simulate_si
    if method == "rk4":
        return engine._simulate_rk4
    raise ConfigError(f"unknown integrator {method!r}; choose from {INTEGRATORS}")


def run_simulation(model: MechanismModel, coeffs: ParamVector, duration: float,
                   dt: float = DEFAULT_DT, sample_times: Optional[Sequence[float]] = None,
                   method: str = "semi_implicit",
                   start: Optional[State] = None) -> SimResult:
    """Integrate the chain and sample its state and centerline.

    sample_times must ascend within [0, duration] (offset by start.t when a
    start state is given); defaults to the final instant only. States at
    sample times are linear interpolations across the bracketing step.
    """
    _require_valid(model)
    _require_coeffs(model, coeffs)
    kernel = _dispatch(method)
    if not (np.isfinite(duration) and duration >= 0):
        raise ConfigError(f"duration must be >= 0, got {duration}")
    if not (np.isfinite(dt) and dt > 0):
        raise ConfigError(f"dt must be > 0, got {dt}")
    if start is None:
        start = initial_state(model)
    if start.q.shape != (model.n_links,):
        raise ShapeMismatch(f"start state has {start.q.size} joints, "
                            f"model has {model.n_links}")
    t0 = float(start.t)
    if sample_times is None:
        sample_times = np.array([t0 + duration])
    t_samples = np.asarray(sample_times, dtype=float)
    if t_samples.ndim != 1 or t_samples.size == 0:
        raise ShapeMismatch("sample_times must be a non-empty 1-d array")
    if np.any(np.diff(t_samples) < 0):
        raise OutOfRange("sample_times must be ascending")
    if t_samples[0] < t0 - 1e-12 or t_samples[-1] > t0 + duration + 1e-9:
        raise OutOfRange(f"sample_times [{t_samples[0]}, {t_samples[-1]}] outside "
                         f"the simulated span [{t0}, {t0 + duration}]")

    base, geom, derived, joint, act, seg_off, segs, fluid = pack_model(model)
    n = model.n_links
    n_steps = int(math.ceil(duration / dt - 1e-9)) if duration > 0 else 0
    S = t_samples.size
    out_q = np.empty((S, n))
    out_qdot = np.empty((S, n))
    out_vertices = np.empty((S, n + 1, 2))
    final = np.empty((2, n))
    status = kernel(base, geom, derived, joint, act, seg_off, segs, fluid,
                    coeffs.coeff_matrix(), start.q.copy(), start.qdot.copy(),
                    t0, dt, n_steps, t_samples, out_q, out_qdot, out_vertices,
                    final)
    if status == engine.STATUS_SINGULAR:
        raise SingularMass("mass matrix numerically singular "
                           f"(pivot-ratio condition estimate > {engine.COND_LIMIT:g})")
    if status == engine.STATUS_DIVERGED:
        raise DivergedSimulation(f"|qdot| exceeded {engine.QDOT_LIMIT:g} rad/s")
    return SimResult(times=t_samples, q=out_q, qdot=out_qdot, vertices=out_vertices,
                     final_state=State(t0 + n_steps * dt, final[0], final[1]))


def step(model: MechanismModel, coeffs: ParamVector, state: State, dt: float,
         method: str = "semi_implicit") -> State:
    """Advance one integrator step from an explicit state."""
    result = run_simulation(model, coeffs, duration=dt, dt=dt,
                            sample_times=np.array([state.t + dt]),
                            method=method, start=state)
    return State(state.t + dt, result.q[0], result.qdot[0])


def simulate(model: MechanismModel, coeffs: ParamVector, duration: float,
             dt: float = DEFAULT_DT, sample_times: Optional[Sequence[float]] = None,
             fractions: Sequence[float] = KEYPOINT_FRACTIONS,
             method: str = "semi_implicit") -> Trajectory:
    """Simulate and reduce each sampled centerline to arc-length keypoints."""
    result = run_simulation(model, coeffs, duration, dt, sample_times, method)
    S = result.times.size
    points = np.empty((S, len(tuple(fractions)), 2))
    for s in range(S):
        points[s] = keypoints_from_centerline(result.vertices[s], fractions)
    return Trajectory(result.times, points, default_labels(points.shape[1]))


def sample_grid(duration: float, rate: float) -> np.ndarray:
    """Uniform sample times k / rate for k = 0 .. floor(duration * rate)."""
    if not (np.isfinite(rate) and rate > 0):
        raise ConfigError(f"sample rate must be > 0, got {rate}")
    if not (np.isfinite(duration) and duration >= 0):
        raise ConfigError(f"duration must be >= 0, got {duration}")
    count = int(math.floor(duration * rate + 1e-9)) + 1
    return np.arange(count) / rate
