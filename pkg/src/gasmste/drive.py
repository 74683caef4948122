"""Differential-drive kinematics and the saturated go-to-point law."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plume import Domain


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ControlGains:
    k_v: float = 1.0
    k_omega: float = 2.0
    v_max: float = 4.0
    omega_max: float = 2.25
    dt: float = 0.05
    conv_eps: float = 1e-2
    arrive_tol: float = 0.02

    def __post_init__(self):
        for name in ("k_v", "k_omega", "v_max", "omega_max", "dt", "conv_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.arrive_tol < 0:
            raise ValueError("arrive_tol must be >= 0")


def wrap_angle(a):
    """Map angles into [-pi, pi)."""
    a = np.asarray(a, dtype=float)
    inside = (a >= -math.pi) & (a < math.pi)
    return np.where(inside, a, np.mod(a + math.pi, 2 * math.pi) - math.pi)


def control_batch(positions, headings, targets, gains: ControlGains):
    """Commands ``(v, omega)`` for n robots at once.

    A robot within ``gains.arrive_tol`` of its target is treated as having
    arrived and receives zero commands.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    headings = np.asarray(headings, dtype=float).reshape(-1)
    e = np.column_stack([np.cos(headings), np.sin(headings)])
    e_perp = np.column_stack([-e[:, 1], e[:, 0]])
    d = positions - targets
    v_par = np.sum(e * d, axis=1)
    v_perp = np.sum(e_perp * d, axis=1)
    v = np.where(v_par > 0, 0.0, np.clip(-gains.k_v * v_par, 0.0, gains.v_max))
    at_target = np.hypot(d[:, 0], d[:, 1]) <= gains.arrive_tol
    v = np.where(at_target, 0.0, v)
    omega = np.clip(gains.k_omega * np.arctan2(-v_perp, -v_par), -gains.omega_max, gains.omega_max)
    omega = np.where(at_target, 0.0, omega)
    return v, omega


def control(robot: RobotState, target, gains: ControlGains) -> tuple[float, float]:
    v, w = control_batch(robot.position, [robot.heading], target, gains)
    return float(v[0]), float(w[0])


def step_batch(positions, headings, v, omega, dt: float, domain: Domain | None = None):
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    headings = np.asarray(headings, dtype=float).reshape(-1)
    e = np.column_stack([np.cos(headings), np.sin(headings)])
    new_p = positions + (np.asarray(v)[:, None] * dt) * e
    if domain is not None:
        new_p = domain.clamp(new_p)
    return new_p, wrap_angle(headings + np.asarray(omega) * dt)


def step(robot: RobotState, v: float, omega: float, dt: float,
         domain: Domain | None = None) -> RobotState:
    """Forward-Euler update of one robot; positions clamp to ``domain`` if given."""
    p, h = step_batch(robot.position, [robot.heading], [v], [omega], dt, domain)
    return RobotState(float(p[0, 0]), float(p[0, 1]), float(h[0]))


def motion_effort(v, omega) -> float:
    return float(np.sum(np.asarray(v) + np.abs(np.asarray(omega))))


def converged(robots, targets, gains: ControlGains) -> bool:
    """True when the summed command magnitude ``sum(v + |omega|)`` is below ``conv_eps``."""
    pos = np.array([r.position for r in robots])
    heads = np.array([r.heading for r in robots])
    v, w = control_batch(pos, heads, targets, gains)
    return motion_effort(v, w) < gains.conv_eps
