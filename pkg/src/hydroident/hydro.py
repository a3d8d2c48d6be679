"""Five-term hydrodynamic force model for ellipsoidal links.

Forces act at each link's COM and depend on its world velocity v, angular
rate omega, and axis direction xhat; the medium is still water, so the
relative flow velocity equals the body velocity. With fluid density rho
and dynamic viscosity beta:

    blunt drag    F_b   = -c0 rho A_proj(vhat) |v| v
    slender drag  F_s   = -c1 rho max(A_surf - A_proj(vhat), 0) |v| v
    angular drag  tau_a = -c2 rho rbar^5 |omega| omega
    kutta lift    F_k   = c3 rho A_proj(vhat) (vhat . xhat) ((v x xhat) x v) / |v|
    magnus lift   F_m   = c4 rho V (omega zhat x v)

plus a coefficient-independent viscous floor F_v = -6 pi beta rbar v and
tau_v = -8 pi beta rbar^3 omega, so a coefficientless body still settles.
A_surf = 4 pi (rx ry + ry rz + rz rx) / 3 approximates the ellipsoid
surface, rbar = (rx + ry + rz) / 3, V = 4/3 pi rx ry rz. There is no 1/2
factor in the drag terms; the identified coefficients absorb it.

Cross products use the planar z-embedding: for in-plane a, b the product
a x b is the scalar ax*by - ay*bx along zhat, and (w zhat) x v = w (-vy, vx).
Both lift terms are therefore perpendicular to v and do no translational
work.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

from .errors import ZeroDirection
from .model import FluidEnv, HydroCoeffs, LinkSpec, MechanismModel, ParamVector

if TYPE_CHECKING:
    from .dynamics import LinkFrame, State


@dataclass(frozen=True)
class FluidWrench:
    """World-frame force (N) at the COM and planar torque (N m) about it."""

    force: tuple[float, float]
    torque: float


def projected_area(semi_axes, direction) -> float:
    """Shadow area of an ellipsoid seen along a link-frame direction.

    A(d) = pi sqrt((ry rz dx)^2 + (rz rx dy)^2 + (rx ry dz)^2); dz = 0 for
    planar directions. The direction is normalized internally, so only its
    orientation matters; a near-zero vector has no orientation and is
    rejected.
    """
    rx, ry, rz = (float(r) for r in semi_axes)
    d = np.asarray(direction, dtype=float)
    if d.size == 2:
        d = np.append(d, 0.0)
    norm = math.sqrt(float(d @ d))
    if norm < 1e-9:
        raise ZeroDirection(f"direction norm {norm:g} is below 1e-9")
    dx, dy, dz = d / norm
    return math.pi * math.sqrt((ry * rz * dx) ** 2 + (rz * rx * dy) ** 2
                               + (rx * ry * dz) ** 2)


@njit(cache=True)
def wrench_core(c0, c1, c2, c3, c4, rho, beta, rx, ry, rz, vol, asurf, rbar,
                ux, uy, vx, vy, om):
    """Scalar five-term wrench; shared by the public API and the engine.

    (ux, uy) is the world link-axis direction, (vx, vy) the COM velocity,
    om the angular rate. Returns (fx, fy, tau). At v = 0 the projected
    area is undefined and every velocity-driven term vanishes, so those
    terms are skipped rather than divided by zero.
    """
    fx = 0.0
    fy = 0.0
    speed2 = vx * vx + vy * vy
    if speed2 > 0.0:
        speed = math.sqrt(speed2)
        du = (vx * ux + vy * uy) / speed          # vhat . xhat
        dn = (vy * ux - vx * uy) / speed          # vhat . (zhat x xhat)
        aproj = math.pi * math.sqrt((ry * rz * du) ** 2 + (rz * rx * dn) ** 2)
        kb = -c0 * rho * aproj * speed
        fx += kb * vx
        fy += kb * vy
        rem = asurf - aproj
        if rem < 0.0:
            rem = 0.0
        ks = -c1 * rho * rem * speed
        fx += ks * vx
        fy += ks * vy
        w = vx * uy - vy * ux                     # (v x xhat) . zhat
        kk = c3 * rho * aproj * du * w / speed
        fx += kk * (-vy)
        fy += kk * vx
    km = c4 * rho * vol * om
    fx += km * (-vy)
    fy += km * vx
    kv = -6.0 * math.pi * beta * rbar
    fx += kv * vx
    fy += kv * vy
    tau = -c2 * rho * rbar ** 5 * abs(om) * om - 8.0 * math.pi * beta * rbar ** 3 * om
    return fx, fy, tau


def link_fluid_wrench(coeffs: HydroCoeffs, env: FluidEnv, link: LinkSpec,
                      frame: "LinkFrame") -> FluidWrench:
    """Total fluid wrench on one link in its current kinematic state."""
    ux = math.cos(frame.axis_angle)
    uy = math.sin(frame.axis_angle)
    vx, vy = frame.com_vel
    fx, fy, tau = wrench_core(coeffs.c0, coeffs.c1, coeffs.c2, coeffs.c3, coeffs.c4,
                              env.density, env.viscosity,
                              link.semi_axes[0], link.semi_axes[1], link.semi_axes[2],
                              link.volume(), link.surface_area(), link.mean_radius(),
                              ux, uy, vx, vy, frame.omega)
    return FluidWrench(force=(fx, fy), torque=tau)


def generalized_fluid_forces(model: MechanismModel, coeffs: ParamVector,
                             state: "State") -> np.ndarray:
    """Joint-space fluid torques: tau[j] = sum_{i>=j} Jv_ij . F_i + tau_i.

    The COM Jacobian column for joint j acting on link i is
    zhat x (r_i - p_j), so each wrench contributes its moment about every
    upstream joint plus its spin torque.
    """
    from .dynamics import forward_kinematics

    frames, _ = forward_kinematics(model, state.q, state.qdot)
    n = model.n_links
    tau = np.zeros(n)
    for i, (frame, link) in enumerate(zip(frames, model.links)):
        wrench = link_fluid_wrench(coeffs.link_coeffs(i), model.fluid, link, frame)
        fx, fy = wrench.force
        rx_, ry_ = frame.com_pos
        for j in range(i + 1):
            px, py = frames[j].origin
            tau[j] += fx * (py - ry_) + fy * (rx_ - px) + wrench.torque
    return tau
