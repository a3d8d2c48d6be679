"""Bundled synthetic scenarios for the identification pipeline.

Five ready-made mechanisms: two purely passive three-link drops released
from different poses, two motor-driven three-link runs with a 2:1
slow/fast velocity schedule, and an eight-segment tapered arm driven by
the same schedule.  Each scenario carries the capture settings (duration,
sample rate) used to generate its synthetic target and a reference
coefficient set that plays the role of ground truth.

The servo gain is deliberately small.  The explicit velocity feedback
tau = kv*(v_ref - qdot) is only stable when dt*kv stays well below twice
the effective inertia felt by the driven joint, and with free distal
joints that inertia is the Schur complement of the mass matrix, roughly
1.9e-6 kg*m^2 here, not the raw diagonal entry.  kv = 2e-3 at dt = 1e-3
keeps the update at about half the stability bound and still sweeps the
base joint through more than a radian per phase.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .model import (
    ActuatorSpec,
    FluidEnv,
    JointSpec,
    LinkSpec,
    MechanismModel,
    ParamVector,
    model_to_dict,
)

# Slightly denser than water so passive drops actually sink.
LINK_DENSITY_SCALE = 1.1

# Light viscous joint with a small Coulomb floor, shared by every preset.
DEFAULT_JOINT = JointSpec(damping=2.0e-4, friction_loss=2.0e-5)

SERVO_KV = 2.0e-3
SERVO_FORCE_RANGE = (-0.02, 0.02)
# Slow counterclockwise phase twice as long as the fast clockwise return.
SERVO_SCHEDULE = ((0.0, 2.0, 0.8), (2.0, 3.0, -1.6))

THREE_LINK_REFERENCE = (
    0.87, 0.31, 2.3, 1.35, 0.65,
    0.92, 0.28, 2.1, 1.20, 0.80,
    0.83, 0.35, 2.6, 1.30, 0.70,
)
# Per-link jitter applied to the three-link baseline for the tapered arm.
OCTOPUS_JITTER_SEED = 5

COEFF_BOUNDS = (0.0, 10.0)


def ellipsoid_link(length: float = 0.030, width: float = 0.008,
                   overlap: float = 0.005,
                   density_scale: float = LINK_DENSITY_SCALE) -> LinkSpec:
    """Uniform ellipsoid link: semi axes (length/2, width, width)."""
    rx = length / 2.0
    volume = 4.0 / 3.0 * math.pi * rx * width * width
    mass = density_scale * 1000.0 * volume
    # Solid ellipsoid inertia about the center, spin axis normal to the plane.
    inertia = mass * (rx * rx + width * width) / 5.0
    return LinkSpec(length=length, com_offset=rx, mass=mass,
                    inertia_com=inertia, semi_axes=(rx, width, width),
                    overlap_radius=overlap)


def _three_link(base_pose, q0, actuators=()):
    links = (ellipsoid_link(),) * 3
    joints = (DEFAULT_JOINT,) * 3
    return MechanismModel(base_pose=base_pose, links=links, joints=joints,
                          actuators=tuple(actuators), fluid=FluidEnv(),
                          initial_state=(tuple(q0), (0.0, 0.0, 0.0)))


def _base_servo():
    return ActuatorSpec(joint_index=0, kind="velocity_servo", kv=SERVO_KV,
                        force_range=SERVO_FORCE_RANGE,
                        schedule=SERVO_SCHEDULE)


def passive_pose_one() -> MechanismModel:
    return _three_link((0.0, 0.0, 0.9), (0.35, -0.5, 0.4))


def passive_pose_two() -> MechanismModel:
    return _three_link((0.0, 0.0, 0.9), (-0.6, 0.3, -0.2))


def active_straight() -> MechanismModel:
    """Motor-driven chain hanging straight down at release."""
    return _three_link((0.0, 0.0, -math.pi / 2), (0.0, 0.0, 0.0),
                       actuators=(_base_servo(),))


def active_bent() -> MechanismModel:
    """Motor-driven chain released from a bent pose."""
    return _three_link((0.0, 0.0, -math.pi / 2), (0.25, -0.35, 0.15),
                       actuators=(_base_servo(),))


def octopus_arm() -> MechanismModel:
    """Eight-segment arm with linearly tapering width, servo at the base."""
    widths = np.linspace(0.008, 0.004, 8)
    links = tuple(ellipsoid_link(width=w) for w in widths)
    joints = (DEFAULT_JOINT,) * 8
    n = len(links)
    return MechanismModel(base_pose=(0.0, 0.0, -math.pi / 2), links=links,
                          joints=joints, actuators=(_base_servo(),),
                          fluid=FluidEnv(),
                          initial_state=((0.0,) * n, (0.0,) * n))


def reference_coeffs(name: str) -> ParamVector:
    """Ground-truth coefficient vector for a bundled scenario."""
    if name not in SCENARIOS:
        raise KeyError("unknown scenario %r" % (name,))
    if name == "octopus_arm":
        rng = np.random.default_rng(OCTOPUS_JITTER_SEED)
        base = np.tile(THREE_LINK_REFERENCE[:5], 8)
        values = base * rng.uniform(0.8, 1.2, base.size)
    else:
        values = np.asarray(THREE_LINK_REFERENCE, dtype=float)
    lo = np.full(values.size, COEFF_BOUNDS[0])
    hi = np.full(values.size, COEFF_BOUNDS[1])
    return ParamVector(values, lo, hi)


class Scenario(NamedTuple):
    build: Callable[[], MechanismModel]
    duration: float
    sample_rate: float


SCENARIOS: dict[str, Scenario] = {
    "passive_pose_one": Scenario(passive_pose_one, 2.5, 30.0),
    "passive_pose_two": Scenario(passive_pose_two, 2.5, 30.0),
    "active_straight": Scenario(active_straight, 3.0, 30.0),
    "active_bent": Scenario(active_bent, 3.0, 30.0),
    "octopus_arm": Scenario(octopus_arm, 3.0, 30.0),
}


def write_bundled_configs(dest) -> list:
    """Write every scenario model plus the reference coefficient files.

    Returns the written paths.  Used by the repo's configs/ generator and
    by the test that keeps the checked-in copies in sync.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for name, scenario in SCENARIOS.items():
        payload = model_to_dict(scenario.build())
        payload["capture"] = {"duration": scenario.duration,
                              "sample_rate": scenario.sample_rate}
        path = dest / (name + ".model.json")
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(path)
    for name, pv in (("three_link", reference_coeffs("passive_pose_one")),
                     ("octopus_arm", reference_coeffs("octopus_arm"))):
        payload = {
            "schema_version": 1,
            "per_link_coeffs": [[float(v) for v in row]
                                for row in pv.coeff_matrix()],
        }
        path = dest / (name + ".coeffs.json")
        path.write_text(json.dumps(payload, indent=2) + "\n")
        written.append(path)
    return written
