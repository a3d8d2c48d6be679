"""Structural description of a planar articulated underwater mechanism.

A mechanism is a serial chain of n rigid links attached to a fixed base.
Joint i is revolute and connects link i to link i-1 (or to the base for
i = 0). Consecutive links overlap: the next joint sits at
(length - overlap_radius) along the parent link's axis, so the straight
chain's reach is sum(length_i - overlap_i) + length_{n-1}.

All quantities SI, angles in radians, gravity acts along world -y.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError

SCHEMA_VERSION = 1

#: number of hydrodynamic coefficients per link (c0..c4)
COEFFS_PER_LINK = 5

#: default box bounds for every coefficient during identification
DEFAULT_COEFF_BOUNDS = (0.0, 10.0)

#: neutral order-of-magnitude start point (c0, c1, c2, c3, c4)
DEFAULT_COEFF_START = (0.5, 0.25, 1.5, 1.0, 1.0)


class Violation(NamedTuple):
    """One invariant breach, located by a path into the model document."""

    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class HydroCoeffs:
    """Per-link hydrodynamic coefficients (all dimensionless, >= 0).

    c0: blunt drag   -- pressure drag on the projected frontal area
    c1: slender drag -- skin drag on the remaining surface area
    c2: angular drag -- torque opposing body rotation
    c3: kutta lift   -- incidence-angle lift, zero at 0 and 90 degrees
    c4: magnus lift  -- spin-induced lift
    """

    c0: float
    c1: float
    c2: float
    c3: float
    c4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3, self.c4])

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "HydroCoeffs":
        if len(values) != COEFFS_PER_LINK:
            raise ConfigError(f"expected {COEFFS_PER_LINK} coefficients, got {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class ParamVector:
    """Flattened hydrodynamic coefficients for all links with box bounds.

    Layout: [link0.c0..c4, link1.c0..c4, ...], length 5n. Values must lie
    within [bounds_lo, bounds_hi] elementwise; out-of-bounds candidates are
    repaired before a ParamVector is ever built.
    """

    values: np.ndarray
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        lo = np.asarray(self.bounds_lo, dtype=float)
        hi = np.asarray(self.bounds_hi, dtype=float)
        if values.ndim != 1 or values.size == 0 or values.size % COEFFS_PER_LINK != 0:
            raise ConfigError(f"parameter vector length must be a positive multiple of "
                              f"{COEFFS_PER_LINK}, got shape {values.shape}")
        if lo.shape != values.shape or hi.shape != values.shape:
            raise ConfigError("bounds must match the parameter vector shape")
        if not np.all(lo <= hi):
            raise ConfigError("bounds_lo must be <= bounds_hi elementwise")
        if not np.all((lo <= values) & (values <= hi)):
            raise ConfigError("parameter values fall outside their bounds")
        for name, arr in (("values", values), ("bounds_lo", lo), ("bounds_hi", hi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_links(self) -> int:
        return self.values.size // COEFFS_PER_LINK

    def coeff_matrix(self) -> np.ndarray:
        """Coefficients as an (n_links, 5) array."""
        return self.values.reshape(self.n_links, COEFFS_PER_LINK)

    def link_coeffs(self, i: int) -> HydroCoeffs:
        return HydroCoeffs.from_sequence(self.coeff_matrix()[i])

    @classmethod
    def from_link_coeffs(cls, coeffs: Sequence[HydroCoeffs],
                         bounds: tuple[float, float] = DEFAULT_COEFF_BOUNDS) -> "ParamVector":
        values = np.concatenate([c.as_array() for c in coeffs])
        lo = np.full(values.size, bounds[0])
        hi = np.full(values.size, bounds[1])
        return cls(values, lo, hi)

    @classmethod
    def uniform(cls, n_links: int, per_link: Sequence[float] = DEFAULT_COEFF_START,
                bounds: tuple[float, float] = DEFAULT_COEFF_BOUNDS) -> "ParamVector":
        values = np.tile(np.asarray(per_link, dtype=float), n_links)
        lo = np.full(values.size, bounds[0])
        hi = np.full(values.size, bounds[1])
        return cls(values, lo, hi)


@dataclass(frozen=True)
class LinkSpec:
    """One rigid link, enclosed by an ellipsoid with r_x along the link axis."""

    length: float                       # m
    com_offset: float                   # m, from proximal joint along the axis
    mass: float                         # kg
    inertia_com: float                  # kg m^2, planar, about the COM
    semi_axes: tuple[float, float, float]  # m (r_x, r_y, r_z)
    overlap_radius: float = 0.0         # m, joint placement offset to the next link

    def volume(self) -> float:
        rx, ry, rz = self.semi_axes
        return 4.0 / 3.0 * np.pi * rx * ry * rz

    def surface_area(self) -> float:
        rx, ry, rz = self.semi_axes
        return 4.0 * np.pi * (rx * ry + ry * rz + rz * rx) / 3.0

    def mean_radius(self) -> float:
        return sum(self.semi_axes) / 3.0


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint: viscous damping plus Coulomb friction magnitude."""

    damping: float = 0.0          # N m s / rad
    friction_loss: float = 0.0    # N m
    limits: Optional[tuple[float, float]] = None  # rad; validated, not enforced


@dataclass(frozen=True)
class ActuatorSpec:
    """Velocity servo on one joint: tau = clamp(kv * (v_ref(t) - qdot)).

    The schedule is piecewise constant: [(t_start, t_end, v_ref)] with
    v_ref(t) = 0 outside every segment. kind "none" always outputs zero.
    """

    joint_index: int
    kind: str = "velocity_servo"        # "none" | "velocity_servo"
    kv: float = 0.0                     # N m s / rad
    force_range: tuple[float, float] = (0.0, 0.0)  # N m, (tau_min, tau_max)
    schedule: tuple[tuple[float, float, float], ...] = ()

    KINDS = ("none", "velocity_servo")


@dataclass(frozen=True)
class FluidEnv:
    """Still-water environment; gravity points along world -y."""

    density: float = 1000.0   # kg/m^3
    viscosity: float = 1.0e-3  # Pa s
    gravity: float = 9.81     # m/s^2, magnitude


@dataclass(frozen=True)
class MechanismModel:
    """Full mechanism: base pose, links, joints, actuators, fluid, x(0)."""

    base_pose: tuple[float, float, float]  # (x, y, theta)
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    actuators: tuple[ActuatorSpec, ...] = ()
    fluid: FluidEnv = field(default_factory=FluidEnv)
    initial_state: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "actuators", tuple(self.actuators))
        q0, qdot0 = self.initial_state
        object.__setattr__(self, "initial_state",
                           (tuple(float(v) for v in q0), tuple(float(v) for v in qdot0)))

    @property
    def n_links(self) -> int:
        return len(self.links)

    def with_initial_q(self, q0: Sequence[float],
                       qdot0: Optional[Sequence[float]] = None) -> "MechanismModel":
        if qdot0 is None:
            qdot0 = (0.0,) * len(tuple(q0))
        return replace(self, initial_state=(tuple(q0), tuple(qdot0)))

    def with_joint_params(self, damping: Sequence[float],
                          friction_loss: Sequence[float]) -> "MechanismModel":
        joints = tuple(replace(j, damping=float(d), friction_loss=float(f))
                       for j, d, f in zip(self.joints, damping, friction_loss))
        return replace(self, joints=joints)


def effective_length(model: MechanismModel) -> float:
    """Straight-configuration reach from base attachment to the distal tip."""
    n = model.n_links
    total = 0.0
    for i, link in enumerate(model.links):
        total += link.length if i == n - 1 else link.length - link.overlap_radius
    return total


def _finite(*values) -> bool:
    return all(np.isfinite(v) for v in values)


def validate_model(model: MechanismModel) -> list[Violation]:
    """Collect every invariant violation; an empty list means simulation-ready.

    Pure and idempotent: violations are data, not failures.
    """
    out: list[Violation] = []
    n = model.n_links

    if not _finite(*model.base_pose):
        out.append(Violation("base_pose", "components must be finite"))
    if n < 1:
        out.append(Violation("links", "at least one link is required"))
    if len(model.joints) != n:
        out.append(Violation("joints", f"expected {n} joints (one per link), "
                                       f"got {len(model.joints)}"))

    for i, link in enumerate(model.links):
        p = f"links[{i}]"
        if not (_finite(link.length) and link.length > 0):
            out.append(Violation(f"{p}.length", "must be > 0"))
        if not (_finite(link.mass) and link.mass > 0):
            out.append(Violation(f"{p}.mass", "must be > 0"))
        if not (_finite(link.inertia_com) and link.inertia_com >= 0):
            out.append(Violation(f"{p}.inertia_com", "must be >= 0"))
        if len(link.semi_axes) != 3 or not all(_finite(r) and r > 0 for r in link.semi_axes):
            out.append(Violation(f"{p}.semi_axes", "all three semi-axes must be > 0"))
        if not (_finite(link.com_offset) and 0 <= link.com_offset <= link.length):
            out.append(Violation(f"{p}.com_offset", "must lie within [0, length]"))
        if not (_finite(link.overlap_radius) and 0 <= link.overlap_radius < link.length):
            out.append(Violation(f"{p}.overlap_radius", "must lie within [0, length)"))

    for i, joint in enumerate(model.joints):
        p = f"joints[{i}]"
        if not (_finite(joint.damping) and joint.damping >= 0):
            out.append(Violation(f"{p}.damping", "must be >= 0"))
        if not (_finite(joint.friction_loss) and joint.friction_loss >= 0):
            out.append(Violation(f"{p}.friction_loss", "must be >= 0"))
        if joint.limits is not None:
            lo, hi = joint.limits
            if not (_finite(lo, hi) and lo < hi):
                out.append(Violation(f"{p}.limits", "requires lo < hi"))

    seen = set()
    for i, act in enumerate(model.actuators):
        p = f"actuators[{i}]"
        if act.kind not in ActuatorSpec.KINDS:
            out.append(Violation(f"{p}.kind", f"unknown kind {act.kind!r}"))
        if not (0 <= act.joint_index < n):
            out.append(Violation(f"{p}.joint_index", f"index {act.joint_index} out of range"))
        elif act.joint_index in seen:
            out.append(Violation(f"{p}.joint_index", f"joint {act.joint_index} actuated twice"))
        seen.add(act.joint_index)
        tau_min, tau_max = act.force_range
        if not (_finite(tau_min, tau_max) and tau_min <= 0 <= tau_max):
            out.append(Violation(f"{p}.force_range", "requires tau_min <= 0 <= tau_max"))
        if not (_finite(act.kv) and act.kv >= 0):
            out.append(Violation(f"{p}.kv", "must be >= 0"))
        prev_end = None
        for k, seg in enumerate(act.schedule):
            t0, t1, v = seg
            if not (_finite(t0, t1, v) and t0 < t1):
                out.append(Violation(f"{p}.schedule[{k}]", "requires t_start < t_end"))
                continue
            if prev_end is not None and t0 < prev_end:
                out.append(Violation(f"{p}.schedule[{k}]",
                                     "segments must be time-ordered and non-overlapping"))
            prev_end = t1 if prev_end is None else max(prev_end, t1)

    f = model.fluid
    if not (_finite(f.density) and f.density >= 0):
        out.append(Violation("fluid.density", "must be >= 0"))
    if not (_finite(f.viscosity) and f.viscosity >= 0):
        out.append(Violation("fluid.viscosity", "must be >= 0"))
    if not (_finite(f.gravity) and f.gravity >= 0):
        out.append(Violation("fluid.gravity", "must be >= 0"))

    q0, qdot0 = model.initial_state
    if len(q0) != n or len(qdot0) != n:
        out.append(Violation("initial_state", f"q0 and qdot0 must both have length {n}"))
    elif not _finite(*q0, *qdot0):
        out.append(Violation("initial_state", "entries must be finite"))

    return out


# --- JSON document schema ---------------------------------------------------

def model_to_dict(model: MechanismModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "base_pose": {"x": model.base_pose[0], "y": model.base_pose[1],
                      "theta": model.base_pose[2]},
        "links": [
            {
                "length": l.length,
                "com_offset": l.com_offset,
                "mass": l.mass,
                "inertia_com": l.inertia_com,
                "semi_axes": list(l.semi_axes),
                "overlap_radius": l.overlap_radius,
            }
            for l in model.links
        ],
        "joints": [
            {
                "damping": j.damping,
                "friction_loss": j.friction_loss,
                "limits": list(j.limits) if j.limits is not None else None,
            }
            for j in model.joints
        ],
        "actuators": [
            {
                "joint_index": a.joint_index,
                "kind": a.kind,
                "kv": a.kv,
                "force_range": list(a.force_range),
                "schedule": [list(seg) for seg in a.schedule],
            }
            for a in model.actuators
        ],
        "fluid": {"density": model.fluid.density, "viscosity": model.fluid.viscosity,
                  "gravity": model.fluid.gravity},
        "initial_state": {"q": list(model.initial_state[0]),
                          "qdot": list(model.initial_state[1])},
    }


def model_from_dict(doc: dict) -> MechanismModel:
    try:
        version = doc["schema_version"]
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {version!r}")
        base = doc["base_pose"]
        links = tuple(
            LinkSpec(length=float(l["length"]),
                     com_offset=float(l["com_offset"]),
                     mass=float(l["mass"]),
                     inertia_com=float(l["inertia_com"]),
                     semi_axes=tuple(float(r) for r in l["semi_axes"]),
                     overlap_radius=float(l.get("overlap_radius", 0.0)))
            for l in doc["links"]
        )
        joints = tuple(
            JointSpec(damping=float(j.get("damping", 0.0)),
                      friction_loss=float(j.get("friction_loss", 0.0)),
                      limits=tuple(float(v) for v in j["limits"])
                      if j.get("limits") is not None else None)
            for j in doc["joints"]
        )
        actuators = tuple(
            ActuatorSpec(joint_index=int(a["joint_index"]),
                         kind=str(a.get("kind", "velocity_servo")),
                         kv=float(a.get("kv", 0.0)),
                         force_range=tuple(float(v) for v in a.get("force_range", (0.0, 0.0))),
                         schedule=tuple(tuple(float(v) for v in seg)
                                        for seg in a.get("schedule", ())))
            for a in doc.get("actuators", ())
        )
        fluid = FluidEnv(density=float(doc["fluid"]["density"]),
                         viscosity=float(doc["fluid"]["viscosity"]),
                         gravity=float(doc["fluid"]["gravity"]))
        init = doc["initial_state"]
        initial = (tuple(float(v) for v in init["q"]),
                   tuple(float(v) for v in init["qdot"]))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc
    return MechanismModel(base_pose=(float(base["x"]), float(base["y"]),
                                     float(base["theta"])),
                          links=links, joints=joints, actuators=actuators,
                          fluid=fluid, initial_state=initial)


def load_model(path) -> MechanismModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)


def save_model(model: MechanismModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
