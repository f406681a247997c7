"""Run summaries, CSV logs and static plots."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d, uniform_filter1d

from .simulator import SimLog, wrap_array
from .topology import CommGraph, components

SYNC_TOL = 1e-3


class ReportError(ValueError):
    pass


class EmptyLogError(ReportError):
    def __init__(self):
        super().__init__("log has no samples")


# ---------------------------------------------------------------- settling detector


@dataclass(frozen=True)
class Settling:
    settled: bool
    time: float | None
    value: float
    spread: float


def settle(t: np.ndarray, series: np.ndarray, window: float = 5.0, tol: float = 1e-3) -> Settling:
    """Moving-window settling test.

    A window is in band when its peak-to-peak variation is at most
    ``tol * |mean|``.  The series is settled when the final window is in
    band; the settling time is the start of the earliest window from
    which every later window is in band.  ``value`` and ``spread`` are
    the mean and peak-to-peak of the final window.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    if len(y) < 2:
        raise ReportError("settling needs at least two samples")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    w = int(round(window / dt)) + 1
    if w > len(y):
        tail = y
        return Settling(False, None, float(tail.mean()), float(np.ptp(tail)))
    # centred filters cover i - w//2 .. i - w//2 + w - 1; the window
    # starting at sample s is therefore centred at s + w//2
    sl = slice(w // 2, w // 2 + len(y) - w + 1)
    hi = maximum_filter1d(y, w)[sl]
    lo = minimum_filter1d(y, w)[sl]
    mean = uniform_filter1d(y, w)[sl]
    ok = (hi - lo) <= tol * np.abs(mean)
    value, spread = float(mean[-1]), float(hi[-1] - lo[-1])
    if not ok[-1]:
        return Settling(False, None, value, spread)
    bad = np.flatnonzero(~ok)
    first = 0 if len(bad) == 0 else int(bad[-1]) + 1
    return Settling(True, float(t[first]), value, spread)


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class AgentSummary:
    agent: int
    leader: int
    speed: float
    radius: Settling
    rate: Settling
    expected_radius: float | None

    @property
    def settled(self) -> bool:
        return self.radius.settled and self.rate.settled

    def as_dict(self) -> dict:
        return {
            "agent": self.agent,
            "component_leader": self.leader,
            "speed": self.speed,
            "settled": self.settled,
            "settled_radius": self.radius.value,
            "radius_settling_time": self.radius.time,
            "radius_spread": self.radius.spread,
            "expected_radius": self.expected_radius,
            "settled_rate": self.rate.value,
            "rate_settling_time": self.rate.time,
            "rate_spread": self.rate.spread,
        }


@dataclass(frozen=True)
class ComponentSummary:
    leader: int
    members: tuple[int, ...]
    omega: float | None
    rate_spread: float | None

    @property
    def synchronized(self) -> bool:
        return self.rate_spread is not None and self.rate_spread <= SYNC_TOL

    def as_dict(self) -> dict:
        return {
            "leader": self.leader,
            "members": list(self.members),
            "omega": self.omega,
            "rate_spread": self.rate_spread,
            "synchronized": self.synchronized,
        }


@dataclass(frozen=True)
class EdgeSummary:
    follower: int
    neighbor: int
    e1: float
    e2: float
    range: float
    condition_residual: float | None

    def as_dict(self) -> dict:
        return {
            "follower": self.follower,
            "neighbor": self.neighbor,
            "e1": self.e1,
            "e2": self.e2,
            "range": self.range,
            "condition_residual": self.condition_residual,
        }


@dataclass(frozen=True)
class RunReport:
    name: str
    t_end: float
    dt: float
    window: float
    tolerance: float
    agents: tuple[AgentSummary, ...]
    components: tuple[ComponentSummary, ...]
    edges: tuple[EdgeSummary, ...]
    radial_error: np.ndarray = field(repr=False, compare=False)
    certificates: tuple[dict, ...] = ()

    def __post_init__(self):
        for a in self.agents:
            if a.radius.settled and not a.radius.value > 0:
                raise ReportError(f"agent {a.agent}: settled radius must be positive")

    @property
    def all_settled(self) -> bool:
        return all(a.settled for a in self.agents)

    @property
    def unsettled(self) -> list[int]:
        return [a.agent for a in self.agents if not a.settled]

    def agent(self, k: int) -> AgentSummary:
        return self.agents[k - 1]

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "t_end": self.t_end,
            "dt": self.dt,
            "settling_window": self.window,
            "settling_tolerance": self.tolerance,
            "all_settled": self.all_settled,
            "unsettled_agents": self.unsettled,
            "agents": [a.as_dict() for a in self.agents],
            "components": [c.as_dict() for c in self.components],
            "edges": [e.as_dict() for e in self.edges],
            "final_radial_error": [float(v) for v in self.radial_error[-1]],
            "certificates": list(self.certificates),
        }

    def text(self) -> str:
        lines = [f"run {self.name!r}: t_end = {self.t_end:g} s, dt = {self.dt:g} s"]
        for a in self.agents:
            r, u = a.radius, a.rate
            status = "settled" if a.settled else "NOT settled"
            ts = f"{max(r.time, u.time):.2f} s" if a.settled else "-"
            lines.append(
                f"  agent {a.agent} (leader {a.leader}): R = {r.value:.6g} m, u = {u.value:.6g} rad/s, {status} at {ts}"
            )
        for c in self.components:
            om = "-" if c.omega is None else f"{c.omega:.6g} rad/s"
            sp = "-" if c.rate_spread is None else f"{c.rate_spread:.3g}"
            lines.append(f"  component {list(c.members)}: omega = {om}, spread = {sp}")
        for cert in self.certificates:
            lines.append(
                f"  certificate on {cert.get('domain')}: {'pass' if cert.get('passed') else 'fail'}"
                f" (worst z.f = {cert.get('worst_value', float('nan')):.3g})"
            )
        return "\n".join(lines)


def summarize(
    log: SimLog,
    graph: CommGraph,
    window: float = 5.0,
    tol: float = 1e-3,
    certificates: Sequence[dict] = (),
) -> RunReport:
    """Apply the settling detector to every radius and turn-rate series."""
    if len(log) == 0:
        raise EmptyLogError()
    blocks = components(graph)
    leader_of = {m: l for l, members in blocks.items() for m in members}
    n = log.n_agents

    radius = [settle(log.t, log.r_target[:, k], window, tol) for k in range(n)]
    rate = [settle(log.t, log.u[:, k], window, tol) for k in range(n)]

    comps = []
    omega_of: dict[int, float] = {}
    for leader, members in blocks.items():
        values = [rate[m - 1].value for m in members if rate[m - 1].settled]
        if len(values) == len(members):
            omega = float(np.mean(values))
            spread = float(max(values) - min(values))
            omega_of[leader] = omega
        else:
            omega, spread = None, None
        comps.append(ComponentSummary(leader, tuple(members), omega, spread))

    agents = []
    for k in range(1, n + 1):
        leader = leader_of[k]
        omega = omega_of.get(leader)
        v = float(abs(log.speeds[k - 1]))
        expected = v / abs(omega) if omega else None
        agents.append(AgentSummary(k, leader, v, radius[k - 1], rate[k - 1], expected))

    c1, c2 = log.meta.get("gains", (None, None))
    unwrapped = log.meta.get("unwrapped_heading_error", False)
    edges = []
    for f, j in graph.edges:
        me, nb = log.state(-1, f), log.state(-1, j)
        de = nb.gamma - me.gamma
        e1 = de if unwrapped else float(wrap_array(np.array(de)))
        lam = math.atan2(nb.y - me.y, nb.x - me.x)
        e2 = float(wrap_array(np.array(lam - me.gamma)))
        omega = omega_of.get(leader_of[f])
        residual = None
        if omega is not None and c1 is not None:
            residual = float(omega - c1 * e1 - c2 * math.sin(e2))
        edges.append(EdgeSummary(f, j, e1, e2, math.hypot(nb.x - me.x, nb.y - me.y), residual))

    settled_r = np.array([r.value for r in radius])
    return RunReport(
        name=str(log.meta.get("name", "")),
        t_end=float(log.t[-1]),
        dt=float(log.dt),
        window=window,
        tolerance=tol,
        agents=tuple(agents),
        components=tuple(comps),
        edges=tuple(edges),
        radial_error=log.r_target - settled_r[None, :],
        certificates=tuple(certificates),
    )


# ---------------------------------------------------------------- CSV


def csv_header(n_agents: int) -> list[str]:
    cols = ["t"]
    for k in range(1, n_agents + 1):
        cols += [f"x_{k}", f"y_{k}", f"gamma_{k}", f"u_{k}", f"r_target_{k}"]
    return cols


def emit_csv(log: SimLog, path: str | Path, stride: int = 1) -> Path:
    """Write one row per sample (every ``stride``-th) with ``repr`` floats, so values round-trip exactly."""
    if len(log) == 0:
        raise EmptyLogError()
    path = Path(path)
    n = log.n_agents
    idx = np.arange(0, len(log), stride)
    block = np.empty((len(idx), 1 + 5 * n))
    block[:, 0] = log.t[idx]
    for k in range(n):
        block[:, 1 + 5 * k] = log.x[idx, k]
        block[:, 2 + 5 * k] = log.y[idx, k]
        block[:, 3 + 5 * k] = log.gamma[idx, k]
        block[:, 4 + 5 * k] = log.u[idx, k]
        block[:, 5 + 5 * k] = log.r_target[idx, k]
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(n))
        w.writerows([repr(v) for v in row] for row in block.tolist())
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


# ---------------------------------------------------------------- plots

MAX_PLOT_POINTS = 4000


def _thin(n: int) -> np.ndarray:
    step = max(1, n // MAX_PLOT_POINTS)
    idx = np.arange(0, n, step)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def emit_plots(log: SimLog, report: RunReport, directory: str | Path) -> list[Path]:
    """Trajectories, distances to the target and turn rates as SVG files."""
    if len(log) == 0:
        raise EmptyLogError()
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    idx = _thin(len(log))
    t = log.t[idx]
    labels = [f"{k}{' (leader)' if k in log.leaders else ''}" for k in range(1, log.n_agents + 1)]
    span = f"horizon {report.t_end:g} s, dt {report.dt:g} s"
    out = []

    fig, ax = plt.subplots(figsize=(6, 6))
    for k in range(log.n_agents):
        (line,) = ax.plot(log.x[idx, k], log.y[idx, k], lw=1.0, label=f"agent {labels[k]}")
        ax.plot(log.x[0, k], log.y[0, k], "o", color=line.get_color(), ms=4)
    ax.plot(*log.target, "k*", ms=12, label="target")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"Trajectories ({span})")
    ax.legend(fontsize=8, loc="best")
    out.append(directory / "trajectories.svg")
    fig.savefig(out[-1], format="svg", bbox_inches="tight")
    plt.close(fig)

    for name, data, ylabel, title in (
        ("distances.svg", log.r_target, "distance to target [m]", "Distances from the target"),
        ("controls.svg", log.u, "turn rate u [rad/s]", "Control inputs"),
    ):
        fig, ax = plt.subplots(figsize=(7, 4))
        for k in range(log.n_agents):
            ax.plot(t, data[idx, k], lw=1.0, label=f"agent {labels[k]}")
        ax.set_xlabel("t [s]")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{title} ({span})")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8, loc="best")
        out.append(directory / name)
        fig.savefig(out[-1], format="svg", bbox_inches="tight")
        plt.close(fig)
    return out
