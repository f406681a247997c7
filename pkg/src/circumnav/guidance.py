"""Turn-rate laws for followers and leaders.

Followers use a bearing-only law built from two angle differences: the
heading offset to their out-neighbour and the LOS offset from their own
heading.  Leaders fly a two-arc circle-circle (CC) path onto a boarding
point of their target orbit and then hold the orbit with a constant rate.

Sign conventions for CC paths follow the classical formulation: the first
circle's centre sits at ``a + r_a * (sin(alpha), -cos(alpha))`` (right of the
start heading for ``r_a > 0``) and the second circle's centre at
``b + r_b * (-sin(beta), cos(beta))`` (left of the goal heading for
``r_b > 0``).  So a positive ``r_a`` turns clockwise and a positive ``r_b``
turns counter-clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .geometry import (
    AgentState,
    GeometryError,
    OrientedPose,
    propagate_arc,
    relative_geometry,
    wrap_angle,
)

TWO_PI = 2.0 * math.pi

# arcs shorter than this (in radians) are treated as empty
ARC_SNAP = 1e-10


class GuidanceError(ValueError):
    pass


class ParallelHeadingsError(GuidanceError):
    pass


class SingularRadiusError(GuidanceError):
    pass


class TurningRadiusError(GuidanceError):
    pass


@dataclass(frozen=True)
class GuidanceGains:
    c1: float
    c2: float

    def __post_init__(self):
        for name in ("c1", "c2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise GuidanceError(f"{name.upper()} must be > 0, got {value!r}")


@dataclass(frozen=True)
class ErrorState:
    e1: float
    e2: float

    def __post_init__(self):
        if not (math.isfinite(self.e1) and math.isfinite(self.e2)):
            raise GuidanceError("error state must be finite")


def error_state(me: AgentState, neighbor: AgentState, unwrapped_heading_error: bool = False) -> ErrorState:
    """Heading error ``gamma_j - gamma_i`` and bearing error ``lambda_ij - gamma_i``."""
    lam = relative_geometry(me, neighbor).los
    dgamma = neighbor.gamma - me.gamma
    if not unwrapped_heading_error:
        dgamma = wrap_angle(dgamma)
    return ErrorState(dgamma, wrap_angle(lam - me.gamma))


def follower_control(
    gains: GuidanceGains,
    me: AgentState,
    neighbor: AgentState,
    unwrapped_heading_error: bool = False,
) -> float:
    """Turn rate ``C1 * dgamma + C2 * sin(lambda_ij - gamma_i)``."""
    e = error_state(me, neighbor, unwrapped_heading_error)
    return gains.c1 * e.e1 + gains.c2 * math.sin(e.e2)


class Direction(str, Enum):
    CCW = "counterclockwise"
    CW = "clockwise"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.CCW else -1.0

    @classmethod
    def parse(cls, text: str) -> "Direction":
        key = str(text).strip().lower()
        if key in ("ccw", "counterclockwise", "counter-clockwise", "+1", "1"):
            return cls.CCW
        if key in ("cw", "clockwise", "-1"):
            return cls.CW
        raise GuidanceError(f"unknown orbit direction {text!r}")


@dataclass(frozen=True)
class OrbitSpec:
    center: tuple[float, float]
    radius: float
    direction: Direction
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise GuidanceError(f"orbit radius must be > 0, got {self.radius!r}")
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction.parse(self.direction))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def for_speed(cls, center, radius: float, direction, speed: float) -> "OrbitSpec":
        d = direction if isinstance(direction, Direction) else Direction.parse(direction)
        if radius <= 0:
            raise GuidanceError(f"orbit radius must be > 0, got {radius!r}")
        return cls(tuple(center), radius, d, d.sign * abs(speed) / radius)

    def boarding_pose(self, angle: float) -> OrientedPose:
        """Point at polar ``angle`` on the orbit, heading along the direction of travel."""
        cx, cy = self.center
        p = (cx + self.radius * math.cos(angle), cy + self.radius * math.sin(angle))
        return OrientedPose(p, angle + self.direction.sign * math.pi / 2)

    def contains(self, state: AgentState, tol: float = 1e-6) -> bool:
        """True when ``state`` lies on the orbit and points along it."""
        dx, dy = state.x - self.center[0], state.y - self.center[1]
        if abs(math.hypot(dx, dy) - self.radius) > tol * max(1.0, self.radius):
            return False
        tangent = math.atan2(dy, dx) + self.direction.sign * math.pi / 2
        return abs(wrap_angle(state.gamma - tangent)) <= tol


def cc_coefficients(start: OrientedPose, goal: OrientedPose) -> tuple[float, float, float]:
    """Coefficients (p1, p2, p3) of the hyperbola ``(r_b - p2)(r_a - p1) = p3``.

    Evaluated in the goal frame: goal at the origin, goal heading along +x.
    """
    alpha = start.heading - goal.heading
    denom = 1.0 - math.cos(alpha)
    if denom <= 1e-12:
        raise ParallelHeadingsError("start and goal headings are parallel; CC path undefined")
    dx = start.position[0] - goal.position[0]
    dy = start.position[1] - goal.position[1]
    cb, sb = math.cos(goal.heading), math.sin(goal.heading)
    ax = cb * dx + sb * dy
    ay = -sb * dx + cb * dy
    # beta = 0 in this frame
    p1 = -ay / denom
    p2 = (ax * math.sin(alpha) - ay * math.cos(alpha)) / denom
    p3 = ((ax * math.sin(alpha / 2) - ay * math.cos(alpha / 2)) / denom) ** 2
    return p1, p2, p3


@dataclass(frozen=True)
class CCPlan:
    start: OrientedPose
    goal: OrientedPose
    speed: float
    p: tuple[float, float, float]
    r_a: float
    r_b: float
    center_a: tuple[float, float]
    center_b: tuple[float, float]
    tangent_point: tuple[float, float]
    arc_a: float
    arc_b: float
    switch_time: float
    total_time: float

    @property
    def rate_a(self) -> float:
        """Turn rate on the first circle (clockwise for positive ``r_a``)."""
        return -self.speed / self.r_a

    @property
    def rate_b(self) -> float:
        return self.speed / self.r_b

    def turn_rate(self, t: float) -> float | None:
        """Scheduled rate at time ``t``; ``None`` once the plan is complete."""
        if t < self.switch_time:
            return self.rate_a
        if t < self.total_time:
            return self.rate_b
        return None

    @property
    def switch_times(self) -> tuple[float, float]:
        return (self.switch_time, self.total_time)

    def tangency_gap(self) -> float:
        """Distance between centres minus the nearest of ``|r_a - r_b|``, ``|r_a + r_b|``."""
        d = math.dist(self.center_a, self.center_b)
        return min(abs(d - abs(self.r_a - self.r_b)), abs(d - abs(self.r_a + self.r_b)))


def _sweep(direction: float, delta: float) -> float:
    """Signed sweep in ``direction`` covering the angle ``delta`` (mod 2*pi)."""
    swept = math.fmod(direction * delta, TWO_PI)
    if swept < 0.0:
        swept += TWO_PI
    if swept < ARC_SNAP or TWO_PI - swept < ARC_SNAP:
        swept = 0.0
    return direction * swept


def plan_cc(start: OrientedPose, goal: OrientedPose, r_a: float, speed: float = 1.0) -> CCPlan:
    """Build the CC path from ``start`` to ``goal`` whose first circle has signed radius ``r_a``."""
    if not (math.isfinite(speed) and speed > 0.0):
        raise GuidanceError(f"plan speed must be > 0, got {speed!r}")
    if not math.isfinite(r_a) or r_a == 0.0:
        raise SingularRadiusError(f"first radius must be finite and nonzero, got {r_a!r}")
    p1, p2, p3 = cc_coefficients(start, goal)
    gap = r_a - p1
    if abs(gap) <= 1e-12 * max(1.0, abs(p1)):
        raise SingularRadiusError(f"r_a = {r_a!r} coincides with the pole p1 = {p1!r}")
    r_b = p3 / gap + p2
    if not math.isfinite(r_b):
        raise GuidanceError("second radius is not finite")
    if r_b == 0.0:
        raise SingularRadiusError("second radius collapses to zero")

    alpha, beta = start.heading, goal.heading
    ax, ay = start.position
    bx, by = goal.position
    center_a = (ax + r_a * math.sin(alpha), ay - r_a * math.cos(alpha))
    center_b = (bx - r_b * math.sin(beta), by + r_b * math.cos(beta))

    # signed radii with counter-clockwise positive: centre = point + s * left normal
    s_a, s_b = -r_a, r_b
    dir_a = math.copysign(1.0, s_a)
    dir_b = math.copysign(1.0, s_b)
    ds = s_a - s_b
    if abs(ds) <= 1e-12 * max(abs(s_a), abs(s_b)):
        # same circle traversed twice over: finish the whole path on circle A
        theta_t = beta
        tangent_point = (bx, by)
    else:
        nx = (center_a[0] - center_b[0]) / ds
        ny = (center_a[1] - center_b[1]) / ds
        norm = math.hypot(nx, ny)
        nx, ny = nx / norm, ny / norm
        theta_t = math.atan2(-nx, ny)
        tangent_point = (center_a[0] - s_a * nx, center_a[1] - s_a * ny)

    arc_a = _sweep(dir_a, theta_t - alpha)
    arc_b = _sweep(dir_b, beta - (alpha + arc_a))
    switch_time = abs(arc_a) * abs(r_a) / speed
    total_time = switch_time + abs(arc_b) * abs(r_b) / speed
    return CCPlan(
        start=start,
        goal=goal,
        speed=speed,
        p=(p1, p2, p3),
        r_a=r_a,
        r_b=r_b,
        center_a=center_a,
        center_b=center_b,
        tangent_point=tangent_point,
        arc_a=arc_a,
        arc_b=arc_b,
        switch_time=switch_time,
        total_time=total_time,
    )


def check_turning_radius(plan: CCPlan, min_radius: float) -> CCPlan:
    """Reject plans whose circles are tighter than ``min_radius``."""
    for name, r in (("r_a", plan.r_a), ("r_b", plan.r_b)):
        if abs(r) < min_radius:
            raise TurningRadiusError(f"|{name}| = {abs(r):.6g} m is below the minimum turning radius {min_radius:.6g} m")
    return plan


def follow_plan(plan: CCPlan) -> AgentState:
    """Propagate the plan arc-exactly and return the final state."""
    state = AgentState(plan.start.position[0], plan.start.position[1], plan.start.heading, plan.speed)
    state = propagate_arc(state, plan.rate_a, plan.switch_time)
    return propagate_arc(state, plan.rate_b, plan.total_time - plan.switch_time)


def leader_control(plan: CCPlan | None, orbit: OrbitSpec, state: AgentState, t: float) -> float:
    """Piecewise-constant leader turn rate: arc A, arc B, then orbit hold."""
    if t < 0.0:
        raise GeometryError(f"time must be >= 0, got {t!r}")
    if plan is not None:
        rate = plan.turn_rate(t)
        if rate is not None:
            return rate
    return orbit.direction.sign * abs(state.v) / orbit.radius
