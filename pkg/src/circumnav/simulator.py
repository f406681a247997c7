"""Fixed-step RK4 simulation of the coupled leader/follower system.

Controls are computed from the states at the start of every step and held
over the step (zero-order hold).  Leader turn rates are open-loop and
piecewise constant in time; a step that contains a leader switch instant
is split there so that arcs begin and end exactly where they were planned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import AgentState, DegenerateGeometryError
from .guidance import CCPlan, GuidanceGains, OrbitSpec
from .topology import CommGraph, SensingGraph, build_comm_graph, components, validate_paths_to_leader

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, t: float, reason: str):
        super().__init__(f"simulation diverged at t = {t:.6g} s: {reason}")
        self.t = t
        self.reason = reason


@dataclass(frozen=True)
class LeaderSpec:
    """Target orbit of one leader, plus the CC plan that brings it there.

    ``plan is None`` means the leader starts on the orbit already.
    """

    orbit: OrbitSpec
    plan: CCPlan | None = None


@dataclass(frozen=True)
class Scenario:
    agents: tuple[AgentState, ...]
    leaders: frozenset[int]
    sensing: SensingGraph
    gains: GuidanceGains
    leader_specs: Mapping[int, LeaderSpec]
    target: tuple[float, float] = (0.0, 0.0)
    dt: float = 0.01
    t_end: float = 100.0
    unwrapped_heading_error: bool = False
    regraph_interval: float | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "leaders", frozenset(self.leaders))
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ScenarioError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ScenarioError(f"t_end must be > 0, got {self.t_end!r}")
        if len(self.agents) != self.sensing.n:
            raise ScenarioError(f"{len(self.agents)} agents but the sensing graph has {self.sensing.n} nodes")
        if not self.leaders:
            raise ScenarioError("at least one leader is required")
        if self.regraph_interval is not None and not self.regraph_interval > 0:
            raise ScenarioError("regraph_interval must be > 0 when set")
        for l in self.leaders:
            if l not in self.leader_specs:
                raise ScenarioError(f"leader {l} has no orbit specification")
            spec = self.leader_specs[l]
            agent = self.agents[l - 1]
            if math.dist(spec.orbit.center, self.target) > 1e-9:
                raise ScenarioError(f"leader {l} orbit is not centred on the target")
            if spec.plan is None:
                if not spec.orbit.contains(agent):
                    raise ScenarioError(f"leader {l} is not on its orbit at t = 0 and has no CC plan")
            else:
                start = spec.plan.start
                if math.dist(start.position, agent.position) > 1e-9 or abs(start.heading - agent.gamma) > 1e-9:
                    raise ScenarioError(f"leader {l} CC plan does not start at its initial pose")
                if abs(spec.plan.speed - abs(agent.v)) > 1e-12 * abs(agent.v):
                    raise ScenarioError(f"leader {l} CC plan speed differs from the agent speed")

    @property
    def n(self) -> int:
        return len(self.agents)


@dataclass
class SimLog:
    """Time-indexed record of one run.

    Arrays are shaped ``(samples, agents)`` or ``(samples, edges)``; agent
    ``k`` in column ``k - 1``.  ``u[s]`` is the control applied from
    ``t[s]`` to ``t[s + 1]``.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    gamma: np.ndarray
    u: np.ndarray
    r_target: np.ndarray
    edges: list[tuple[int, int]]
    r_edge: np.ndarray
    los_edge: np.ndarray
    speeds: np.ndarray
    leaders: frozenset[int]
    target: tuple[float, float] = (0.0, 0.0)
    dt: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_agents(self) -> int:
        return self.x.shape[1]

    def state(self, sample: int, agent: int) -> AgentState:
        k = agent - 1
        return AgentState(
            float(self.x[sample, k]), float(self.y[sample, k]), float(self.gamma[sample, k]), float(self.speeds[k])
        )


def wrap_array(a: np.ndarray) -> np.ndarray:
    """Vectorised wrap onto (-pi, pi]."""
    return -(np.remainder(-a + np.pi, 2.0 * np.pi) - np.pi)


@dataclass
class SimContext:
    """Per-run data derived from a scenario: graph, index arrays, leader schedules."""

    scenario: Scenario
    graph: CommGraph
    speeds: np.ndarray
    followers: np.ndarray = field(init=False)
    neighbors: np.ndarray = field(init=False)
    leader_idx: np.ndarray = field(init=False)
    leader_list: list[LeaderSpec] = field(init=False)
    switch_times: list[float] = field(init=False)

    def __post_init__(self):
        self.set_graph(self.graph)
        ids = sorted(self.scenario.leaders)
        self.leader_idx = np.array([l - 1 for l in ids], dtype=int)
        self.leader_list = [self.scenario.leader_specs[l] for l in ids]
        times = set()
        for spec in self.leader_list:
            if spec.plan is not None:
                times.update(spec.plan.switch_times)
        self.switch_times = sorted(times)

    def set_graph(self, graph: CommGraph) -> None:
        validate_paths_to_leader(graph)
        self.graph = graph
        edges = graph.edges
        self.followers = np.array([f - 1 for f, _ in edges], dtype=int)
        self.neighbors = np.array([j - 1 for _, j in edges], dtype=int)

    def leader_rates(self, t: float) -> np.ndarray:
        out = np.empty(len(self.leader_list))
        for k, spec in enumerate(self.leader_list):
            rate = spec.plan.turn_rate(t) if spec.plan is not None else None
            if rate is None:
                rate = spec.orbit.direction.sign * abs(self.speeds[self.leader_idx[k]]) / spec.orbit.radius
            out[k] = rate
        return out


def prepare(scenario: Scenario) -> SimContext:
    """Build and validate the communication graph at t = 0."""
    positions = [a.position for a in scenario.agents]
    graph = build_comm_graph(scenario.sensing, positions, scenario.leaders)
    speeds = np.array([a.v for a in scenario.agents], dtype=float)
    ctx = SimContext(scenario, graph, speeds)
    _warn_step_size(ctx)
    return ctx


def _expected_radii(ctx: SimContext) -> np.ndarray:
    radii = []
    for leader, members in components(ctx.graph).items():
        orbit = ctx.scenario.leader_specs[leader].orbit
        omega = abs(ctx.speeds[leader - 1]) / orbit.radius
        radii.extend(abs(ctx.speeds[m - 1]) / omega for m in members)
    return np.array(radii)


def _warn_step_size(ctx: SimContext) -> None:
    dt = ctx.scenario.dt
    vmax = float(np.max(np.abs(ctx.speeds)))
    rmin = float(np.min(_expected_radii(ctx)))
    if vmax * dt > 0.01 * rmin:
        log.warning(
            "step %.3g s moves the fastest agent %.3g m, more than 1%% of the smallest expected radius %.3g m",
            dt,
            vmax * dt,
            rmin,
        )


def controls(ctx: SimContext, X: np.ndarray, t: float) -> np.ndarray:
    """Turn rates for all agents at time ``t`` given the state array ``X`` (n, 3)."""
    u = np.zeros(X.shape[0])
    f, j = ctx.followers, ctx.neighbors
    if len(f):
        dx = X[j, 0] - X[f, 0]
        dy = X[j, 1] - X[f, 1]
        if np.any((dx == 0.0) & (dy == 0.0)):
            raise DegenerateGeometryError(f"coincident agents at t = {t:.6g} s")
        lam = np.arctan2(dy, dx)
        dgamma = X[j, 2] - X[f, 2]
        if not ctx.scenario.unwrapped_heading_error:
            dgamma = wrap_array(dgamma)
        g = ctx.scenario.gains
        u[f] = g.c1 * dgamma + g.c2 * np.sin(lam - X[f, 2])
    if len(ctx.leader_idx):
        u[ctx.leader_idx] = ctx.leader_rates(t)
    return u


def _deriv(X: np.ndarray, speeds: np.ndarray, u: np.ndarray) -> np.ndarray:
    g = X[:, 2]
    return np.column_stack((speeds * np.cos(g), speeds * np.sin(g), u))


def rk4(X: np.ndarray, speeds: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of the unicycle with turn rates ``u`` held fixed."""
    k1 = _deriv(X, speeds, u)
    k2 = _deriv(X + 0.5 * h * k1, speeds, u)
    k3 = _deriv(X + 0.5 * h * k2, speeds, u)
    k4 = _deriv(X + h * k3, speeds, u)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(ctx: SimContext, X: np.ndarray, t: float, dt: float, u: np.ndarray | None = None) -> np.ndarray:
    """Advance every agent from ``t`` to ``t + dt``.

    Follower rates are frozen at their value at ``t``.  Leader rates are
    re-read at every planned switch instant inside the step.
    """
    if not dt > 0:
        raise ScenarioError(f"dt must be > 0, got {dt!r}")
    if u is None:
        u = controls(ctx, X, t)
    cuts = [s for s in ctx.switch_times if t < s < t + dt]
    if not cuts:
        Xn = rk4(X, ctx.speeds, u, dt)
    else:
        Xn = X
        u = u.copy()
        bounds = [t, *cuts, t + dt]
        for a, b in zip(bounds[:-1], bounds[1:]):
            if len(ctx.leader_idx):
                u[ctx.leader_idx] = ctx.leader_rates(a)
            Xn = rk4(Xn, ctx.speeds, u, b - a)
    if not np.all(np.isfinite(Xn)):
        raise DivergenceError(t + dt, "non-finite state")
    return Xn


def initial_array(agents: Sequence[AgentState]) -> np.ndarray:
    return np.array([[a.x, a.y, a.gamma] for a in agents], dtype=float)


def run(scenario: Scenario, ctx: SimContext | None = None) -> SimLog:
    """Simulate ``scenario`` over ``[0, t_end]`` on a uniform grid."""
    ctx = ctx or prepare(scenario)
    dt = scenario.dt
    steps = int(round(scenario.t_end / dt))
    if steps < 1:
        raise ScenarioError("t_end is shorter than one step")
    n = scenario.n
    t = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, n, 3))
    u_log = np.empty((steps + 1, n))
    X = initial_array(scenario.agents)
    states[0] = X

    regraph_every = None
    if scenario.regraph_interval is not None:
        regraph_every = max(1, int(round(scenario.regraph_interval / dt)))

    try:
        for k in range(steps):
            if regraph_every and k and k % regraph_every == 0:
                positions = [tuple(p) for p in X[:, :2]]
                ctx.set_graph(build_comm_graph(scenario.sensing, positions, scenario.leaders))
            u = controls(ctx, X, t[k])
            u_log[k] = u
            X = step(ctx, X, t[k], dt, u)
            states[k + 1] = X
        u_log[steps] = controls(ctx, X, t[steps])
    except DegenerateGeometryError as exc:
        raise DivergenceError(float(t[k]), str(exc)) from exc

    tx, ty = scenario.target
    xs, ys, gs = states[:, :, 0], states[:, :, 1], states[:, :, 2]
    r_target = np.hypot(xs - tx, ys - ty)
    edges = ctx.graph.edges
    fi = np.array([f - 1 for f, _ in edges], dtype=int)
    nj = np.array([j - 1 for _, j in edges], dtype=int)
    if len(edges):
        dx = xs[:, nj] - xs[:, fi]
        dy = ys[:, nj] - ys[:, fi]
        r_edge = np.hypot(dx, dy)
        los_edge = wrap_array(np.arctan2(dy, dx))
    else:
        r_edge = np.empty((steps + 1, 0))
        los_edge = np.empty((steps + 1, 0))
    return SimLog(
        t=t,
        x=xs.copy(),
        y=ys.copy(),
        gamma=gs.copy(),
        u=u_log,
        r_target=r_target,
        edges=edges,
        r_edge=r_edge,
        los_edge=los_edge,
        speeds=ctx.speeds.copy(),
        leaders=scenario.leaders,
        target=scenario.target,
        dt=dt,
        meta={
            "name": scenario.name,
            "t_end": scenario.t_end,
            "dt": dt,
            "gains": (scenario.gains.c1, scenario.gains.c2),
            "unwrapped_heading_error": scenario.unwrapped_heading_error,
        },
    )
