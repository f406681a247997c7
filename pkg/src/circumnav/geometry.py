"""Planar unicycle types and relative geometry between agents.

Headings live on the real line (unwrapped) inside states; angle
differences are wrapped only at the point where they are consumed.
Line-of-sight angles are measured from agent ``i`` towards agent ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class GeometryError(ValueError):
    """Raised for non-finite angles or degenerate relative geometry."""


class DegenerateGeometryError(GeometryError):
    """Two agents occupy the same point, so the LOS angle is undefined."""


def wrap_angle(theta: float) -> float:
    """Reduce ``theta`` to the half-open interval (-pi, pi]."""
    if not math.isfinite(theta):
        raise GeometryError(f"cannot wrap non-finite angle {theta!r}")
    wrapped = math.remainder(theta, 2.0 * math.pi)
    # remainder() rounds half to even, so -pi can come back; fold it onto +pi
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    gamma: float
    v: float

    def __post_init__(self):
        for name in ("x", "y", "gamma", "v"):
            if not math.isfinite(getattr(self, name)):
                raise GeometryError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.v == 0.0:
            raise GeometryError("speed v must be nonzero")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def velocity(self) -> tuple[float, float]:
        return (self.v * math.cos(self.gamma), self.v * math.sin(self.gamma))


@dataclass(frozen=True)
class OrientedPose:
    position: tuple[float, float]
    heading: float

    def __post_init__(self):
        x, y = self.position
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(self.heading)):
            raise GeometryError("oriented pose must be finite")
        object.__setattr__(self, "position", (float(x), float(y)))

    @classmethod
    def of(cls, state: AgentState) -> "OrientedPose":
        return cls((state.x, state.y), state.gamma)


@dataclass(frozen=True)
class RelativeGeometry:
    range: float
    los: float


def relative_geometry(i: AgentState, j: AgentState) -> RelativeGeometry:
    """Range and LOS angle of ``j`` as seen from ``i``."""
    dx = j.x - i.x
    dy = j.y - i.y
    r = math.hypot(dx, dy)
    if r == 0.0:
        raise DegenerateGeometryError("coincident agents: line of sight undefined")
    los = math.atan2(dy, dx)
    # atan2 returns [-pi, pi]; keep the documented (-pi, pi]
    if los == -math.pi:
        los = math.pi
    return RelativeGeometry(r, los)


def polar_rates(i: AgentState, j: AgentState) -> tuple[float, float]:
    """Closed-form (range_rate, los_rate) for the pair ``i -> j``."""
    rel = relative_geometry(i, j)
    lam = rel.los
    range_rate = j.v * math.cos(j.gamma - lam) - i.v * math.cos(i.gamma - lam)
    los_rate = (j.v * math.sin(j.gamma - lam) - i.v * math.sin(i.gamma - lam)) / rel.range
    return range_rate, los_rate


def propagate_arc(state: AgentState, turn_rate: float, duration: float) -> AgentState:
    """Exact unicycle motion under a constant turn rate.

    Used wherever an arc has to be followed without integration error
    (plan verification, leader orbit construction).
    """
    g0 = state.gamma
    g1 = g0 + turn_rate * duration
    if abs(turn_rate * duration) < 1e-12:
        # straight-line limit, with first-order curvature correction
        mid = g0 + 0.5 * turn_rate * duration
        dx = state.v * duration * math.cos(mid)
        dy = state.v * duration * math.sin(mid)
    else:
        k = state.v / turn_rate
        dx = k * (math.sin(g1) - math.sin(g0))
        dy = -k * (math.cos(g1) - math.cos(g0))
    return AgentState(state.x + dx, state.y + dy, g1, state.v)
