"""Scenario configuration files.

Scenarios are TOML documents.  A minimal file::

    name = "pair"

    [simulation]
    dt = 0.01
    t_end = 300.0

    [gains]
    c1 = 1.0
    c2 = 1.0

    [[agents]]            # agent 1
    x = 0.7
    y = 0.0
    gamma = 1.5707963267948966
    v = 0.105

    [[agents]]            # agent 2
    x = 0.87
    y = 0.16
    gamma_deg = 139.0
    v = 0.15

    [[leaders]]
    id = 1
    mode = "orbit"        # or "plan"
    radius = 0.7
    direction = "ccw"

    [sensing]
    edges = [[2, 1]]      # or: complete = true

Agents are numbered by their position in ``[[agents]]`` starting at 1.
Optional sections: ``[report]`` (settling detector), ``[pair]`` and
``[zubov]`` (pair analysis), ``[plan_cc]`` (stand-alone CC plan).
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import AgentState, OrientedPose
from .guidance import GuidanceGains, OrbitSpec, check_turning_radius, plan_cc
from .simulator import LeaderSpec, Scenario
from .stability import PairConfig, ZubovParams
from .topology import SensingGraph

BUNDLED = ("case1", "case2", "hw-analog")


class ConfigError(ValueError):
    """Unreadable or invalid scenario file; the message names the offending field."""


@dataclass(frozen=True)
class ReportOptions:
    window: float = 5.0
    tolerance: float = 1e-3
    csv_stride: int = 1

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("report.window must be > 0")
        if not self.tolerance > 0:
            raise ValueError("report.tolerance must be > 0")
        if self.csv_stride < 1:
            raise ValueError("report.csv_stride must be >= 1")


@dataclass(frozen=True)
class PlanRequest:
    start: OrientedPose
    goal: OrientedPose
    r_a: float
    speed: float = 1.0
    min_turn_radius: float = 0.0


@dataclass
class ScenarioConfig:
    """Everything a config file can describe; ``scenario`` is always present."""

    scenario: Scenario
    report: ReportOptions
    pair: PairConfig | None
    pair_follower: int | None
    zubov: ZubovParams
    plan_request: PlanRequest | None
    source: str
    raw: dict = field(repr=False)


# ---------------------------------------------------------------- raw document


def resolve_path(name: str | Path) -> Path:
    """A file path, or the name of a bundled scenario (``case1``, ``case2``, ``hw-analog``)."""
    p = Path(name)
    if p.exists():
        return p
    key = str(name)
    if key.endswith(".toml"):
        key = key[:-5]
    if key in BUNDLED:
        return Path(str(resources.files("circumnav") / "scenarios" / f"{key}.toml"))
    raise ConfigError(f"config file not found: {name}")


def read_document(path: str | Path) -> dict:
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries "(at line L, column C)"
        raise ConfigError(f"{p}: parse error: {exc}") from exc


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(doc: dict, overrides: Iterable[str]) -> dict:
    """Apply ``key.sub=value`` assignments.

    Values are parsed as TOML literals (falling back to a bare string).
    A numeric path segment selects an entry of an array of tables,
    counting from 1, so ``agents.3.v=50`` sets the speed of agent 3.
    """
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = [s for s in key.strip().split(".") if s]
        if not parts:
            raise ConfigError(f"override {item!r} has an empty key")
        node: Any = doc
        for depth, part in enumerate(parts[:-1]):
            node = _descend(node, part, parts[: depth + 1])
        last = parts[-1]
        value = _parse_value(text.strip())
        if isinstance(node, list):
            idx = _index(node, last, parts)
            node[idx] = value
        elif isinstance(node, dict):
            node[last] = value
        else:
            raise ConfigError(f"override {key!r}: {'.'.join(parts[:-1])} is not a table")
    return doc


def _index(seq: list, part: str, path: list[str]) -> int:
    try:
        k = int(part)
    except ValueError:
        raise ConfigError(f"override {'.'.join(path)}: expected an index into an array") from None
    if not 1 <= k <= len(seq):
        raise ConfigError(f"override {'.'.join(path)}: index {k} outside 1..{len(seq)}")
    return k - 1


def _descend(node: Any, part: str, path: list[str]) -> Any:
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if isinstance(node, dict):
        return node.setdefault(part, {})
    raise ConfigError(f"override {'.'.join(path)}: parent is not a table")


# ---------------------------------------------------------------- field access


class _Fields:
    """Typed access to one table, with the table's path for error messages."""

    def __init__(self, table: Any, path: str):
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: expected a table")
        self.table = table
        self.path = path

    def where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.table

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.table:
            if default is None:
                raise ConfigError(f"{self.where(key)}: missing required number")
            return default
        value = self.table[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{self.where(key)}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{self.where(key)}: must be finite")
        return float(value)

    def integer(self, key: str, default: int | None = None) -> int:
        if key not in self.table:
            if default is None:
                raise ConfigError(f"{self.where(key)}: missing required integer")
            return default
        value = self.table[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{self.where(key)}: expected an integer, got {value!r}")
        return value

    def boolean(self, key: str, default: bool) -> bool:
        value = self.table.get(key, default)
        if not isinstance(value, bool):
            raise ConfigError(f"{self.where(key)}: expected true or false, got {value!r}")
        return value

    def text(self, key: str, default: str | None = None) -> str:
        if key not in self.table:
            if default is None:
                raise ConfigError(f"{self.where(key)}: missing required string")
            return default
        value = self.table[key]
        if not isinstance(value, str):
            raise ConfigError(f"{self.where(key)}: expected a string, got {value!r}")
        return value

    def angle(self, key: str, default: float | None = None) -> float:
        """Radians from ``key`` or degrees from ``key_deg``; exactly one may be given."""
        deg = f"{key}_deg"
        if key in self.table and deg in self.table:
            raise ConfigError(f"{self.where(key)}: give either {key} or {deg}, not both")
        if deg in self.table:
            return math.radians(self.number(deg))
        return self.number(key, default)

    def pair(self, key: str, default: tuple[float, float] | None = None) -> tuple[float, float]:
        if key not in self.table:
            if default is None:
                raise ConfigError(f"{self.where(key)}: missing required [x, y] pair")
            return default
        value = self.table[key]
        if (
            not isinstance(value, list)
            or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        ):
            raise ConfigError(f"{self.where(key)}: expected [x, y], got {value!r}")
        return (float(value[0]), float(value[1]))

    def sub(self, key: str) -> "_Fields":
        return _Fields(self.table.get(key, {}), self.where(key))


def _guard(path: str, build):
    """Run ``build()`` and prefix invariant failures with ``path``."""
    try:
        return build()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- sections


def _agents(doc: dict) -> list[AgentState]:
    rows = doc.get("agents")
    if not isinstance(rows, list) or not rows:
        raise ConfigError("agents: at least one [[agents]] entry is required")
    out = []
    for k, row in enumerate(rows, start=1):
        f = _Fields(row, f"agents[{k}]")
        out.append(_guard(f.path, lambda: AgentState(f.number("x"), f.number("y"), f.angle("gamma"), f.number("v"))))
    return out


def _sensing(doc: dict, n: int) -> SensingGraph:
    f = _Fields(doc.get("sensing", {}), "sensing")
    complete = f.boolean("complete", False)
    if complete and f.has("edges"):
        raise ConfigError("sensing: give either complete = true or edges, not both")
    if complete:
        return SensingGraph.complete(n)
    edges = f.table.get("edges")
    if not isinstance(edges, list):
        raise ConfigError("sensing.edges: expected a list of [i, j] pairs (or complete = true)")
    pairs = []
    for k, e in enumerate(edges, start=1):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in e)):
            raise ConfigError(f"sensing.edges[{k}]: expected [i, j] with integer ids, got {e!r}")
        pairs.append((e[0], e[1]))
    return _guard("sensing", lambda: SensingGraph(n, frozenset(pairs)))


def _leader_specs(doc: dict, agents: list[AgentState], target: tuple[float, float]) -> dict[int, LeaderSpec]:
    rows = doc.get("leaders")
    if not isinstance(rows, list) or not rows:
        raise ConfigError("leaders: at least one [[leaders]] entry is required")
    specs: dict[int, LeaderSpec] = {}
    for k, row in enumerate(rows, start=1):
        f = _Fields(row, f"leaders[{k}]")
        lid = f.integer("id")
        if not 1 <= lid <= len(agents):
            raise ConfigError(f"{f.where('id')}: agent {lid} does not exist")
        if lid in specs:
            raise ConfigError(f"{f.where('id')}: leader {lid} listed twice")
        agent = agents[lid - 1]
        mode = f.text("mode", "plan")

        def build():
            orbit = OrbitSpec.for_speed(target, f.number("radius"), f.text("direction", "ccw"), agent.v)
            if mode == "orbit":
                return LeaderSpec(orbit)
            if mode != "plan":
                raise ConfigError(f"{f.where('mode')}: expected 'plan' or 'orbit', got {mode!r}")
            goal = orbit.boarding_pose(f.angle("board_angle"))
            plan = plan_cc(OrientedPose.of(agent), goal, f.number("r_a"), speed=abs(agent.v))
            min_radius = f.number("min_turn_radius", 0.0)
            if min_radius > 0:
                check_turning_radius(plan, min_radius)
            return LeaderSpec(orbit, plan)

        specs[lid] = _guard(f.path, build)
    return specs


def _pair(doc: dict, scenario: Scenario) -> tuple[PairConfig | None, int | None]:
    """Pair analysed by ``equilibrium`` / ``certify``.

    An explicit ``[pair]`` table wins.  Otherwise the pair is a follower
    (``pair.follower`` or the lowest-id follower that senses a leader)
    and the leader it senses, with the leader's orbit and the scenario gains.
    """
    f = _Fields(doc.get("pair", {}), "pair")
    if f.has("v_i") or f.has("v_j") or f.has("R_j"):
        gains = scenario.gains
        if f.has("c1") or f.has("c2"):
            gains = _guard("pair", lambda: GuidanceGains(f.number("c1", gains.c1), f.number("c2", gains.c2)))
        cfg = _guard(
            "pair",
            lambda: PairConfig.from_orbit(
                f.number("v_i"), f.number("v_j"), f.number("R_j"), f.text("direction", "ccw"), gains
            ),
        )
        return cfg, None
    candidates = [
        (i, j) for (i, j) in sorted(scenario.sensing.edges) if i not in scenario.leaders and j in scenario.leaders
    ]
    if f.has("follower"):
        fid = f.integer("follower")
        candidates = [(i, j) for (i, j) in candidates if i == fid]
        if not candidates:
            raise ConfigError(f"pair.follower: agent {fid} is not a follower that senses a leader")
    if not candidates:
        return None, None
    i, j = candidates[0]
    orbit = scenario.leader_specs[j].orbit
    a_i, a_j = scenario.agents[i - 1], scenario.agents[j - 1]
    cfg = _guard(
        "pair", lambda: PairConfig.from_orbit(abs(a_i.v), abs(a_j.v), orbit.radius, orbit.direction, scenario.gains)
    )
    return cfg, i


def _pose(f: _Fields, key: str) -> OrientedPose:
    value = f.table.get(key)
    if (
        not isinstance(value, list)
        or len(value) != 3
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"{f.where(key)}: expected [x, y, heading], got {value!r}")
    return _guard(f.where(key), lambda: OrientedPose((float(value[0]), float(value[1])), float(value[2])))


def _plan_request(doc: dict) -> PlanRequest | None:
    if "plan_cc" not in doc:
        return None
    f = _Fields(doc["plan_cc"], "plan_cc")
    return PlanRequest(
        start=_pose(f, "start"),
        goal=_pose(f, "goal"),
        r_a=f.number("r_a"),
        speed=f.number("speed", 1.0),
        min_turn_radius=f.number("min_turn_radius", 0.0),
    )


def build_config(doc: dict, source: str = "<memory>") -> ScenarioConfig:
    """Validate a parsed document and assemble every object it describes."""
    sim = _Fields(doc.get("simulation", {}), "simulation")
    target = sim.pair("target", (0.0, 0.0))
    agents = _agents(doc)
    sensing = _sensing(doc, len(agents))
    g = _Fields(doc.get("gains", {}), "gains")
    gains = _guard("gains", lambda: GuidanceGains(g.number("c1"), g.number("c2")))
    specs = _leader_specs(doc, agents, target)
    regraph = sim.number("regraph_interval", 0.0) or None
    scenario = _guard(
        "simulation",
        lambda: Scenario(
            agents=tuple(agents),
            leaders=frozenset(specs),
            sensing=sensing,
            gains=gains,
            leader_specs=specs,
            target=target,
            dt=sim.number("dt", 0.01),
            t_end=sim.number("t_end", 100.0),
            unwrapped_heading_error=sim.boolean("unwrapped_heading_error", False),
            regraph_interval=regraph,
            name=_Fields(doc, "").text("name", Path(source).stem),
        ),
    )
    rep = _Fields(doc.get("report", {}), "report")
    report = _guard(
        "report",
        lambda: ReportOptions(
            rep.number("window", 5.0), rep.number("tolerance", 1e-3), rep.integer("csv_stride", 1)
        ),
    )
    z = _Fields(doc.get("zubov", {}), "zubov")
    zubov = _guard(
        "zubov",
        lambda: ZubovParams(z.number("alpha", 1.0), z.number("half_width", 2.0), z.integer("resolution", 201)),
    )
    pair, follower = _pair(doc, scenario)
    return ScenarioConfig(
        scenario=scenario,
        report=report,
        pair=pair,
        pair_follower=follower,
        zubov=zubov,
        plan_request=_plan_request(doc),
        source=source,
        raw=doc,
    )


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> ScenarioConfig:
    p = resolve_path(path)
    doc = apply_overrides(read_document(p), overrides)
    return build_config(doc, str(p))


def load_scenario(path: str | Path, overrides: Iterable[str] = ()) -> Scenario:
    """Read, override and validate a scenario file (or bundled scenario name)."""
    return load_config(path, overrides).scenario
