"""Sensing and communication graphs.

Agents are identified by positive integer ids ``1..n``.  A follower talks
to exactly one out-neighbour, the nearest agent it can sense; leaders
are sinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class TopologyError(ValueError):
    pass


class IsolatedFollowerError(TopologyError):
    def __init__(self, follower: int):
        super().__init__(f"follower {follower} cannot sense any agent")
        self.follower = follower


class AssumptionViolation(TopologyError):
    """A follower chain never reaches a leader."""

    def __init__(self, cycle: Sequence[int]):
        super().__init__(
            "followers form a cycle with no path to a leader: "
            + " -> ".join(str(c) for c in cycle)
        )
        self.cycle = tuple(cycle)


@dataclass(frozen=True)
class SensingGraph:
    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError("graph needs at least one agent")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise TopologyError(f"self-loop on agent {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise TopologyError(f"edge ({i}, {j}) references an agent outside 1..{self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def complete(cls, n: int) -> "SensingGraph":
        return cls(n, frozenset((i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j))

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def sensed_by(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.edges if a == i)


@dataclass(frozen=True)
class CommGraph:
    n: int
    leaders: frozenset[int]
    out_neighbor: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        leaders = frozenset(int(l) for l in self.leaders)
        for l in leaders:
            if not 1 <= l <= self.n:
                raise TopologyError(f"leader {l} outside 1..{self.n}")
        out = {int(k): int(v) for k, v in dict(self.out_neighbor).items()}
        for f in range(1, self.n + 1):
            if f in leaders:
                if f in out:
                    raise TopologyError(f"leader {f} must be a sink")
            elif f not in out:
                raise TopologyError(f"follower {f} has no out-neighbour")
        for f, j in out.items():
            if f == j or not 1 <= j <= self.n:
                raise TopologyError(f"invalid edge {f} -> {j}")
        object.__setattr__(self, "leaders", leaders)
        object.__setattr__(self, "out_neighbor", out)

    @property
    def followers(self) -> list[int]:
        return [i for i in range(1, self.n + 1) if i not in self.leaders]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.out_neighbor.items())

    def out_degree(self, i: int) -> int:
        return 1 if i in self.out_neighbor else 0


def build_comm_graph(
    sensing: SensingGraph,
    positions: Sequence[tuple[float, float]],
    leaders: Iterable[int],
) -> CommGraph:
    """Each follower picks the closest agent it senses; ties go to the lowest id.

    ``positions[k]`` belongs to agent ``k + 1``.
    """
    leaders = frozenset(leaders)
    if len(positions) != sensing.n:
        raise TopologyError(f"expected {sensing.n} positions, got {len(positions)}")
    unknown = leaders - set(sensing.nodes)
    if unknown:
        raise TopologyError(f"leaders {sorted(unknown)} are not agents")

    out: dict[int, int] = {}
    for i in sensing.nodes:
        if i in leaders:
            continue
        candidates = sensing.sensed_by(i)
        if not candidates:
            raise IsolatedFollowerError(i)
        xi, yi = positions[i - 1]
        # candidates are sorted, and min() keeps the first minimum
        out[i] = min(
            candidates,
            key=lambda j: math.hypot(positions[j - 1][0] - xi, positions[j - 1][1] - yi),
        )
    return CommGraph(sensing.n, leaders, out)


@dataclass(frozen=True)
class PathReport:
    """Terminal leader and chain length for every follower."""

    terminal: Mapping[int, int]
    depth: Mapping[int, int]


def validate_paths_to_leader(g: CommGraph) -> PathReport:
    terminal: dict[int, int] = {l: l for l in g.leaders}
    depth: dict[int, int] = {l: 0 for l in g.leaders}
    for start in g.followers:
        chain = []
        seen = set()
        node = start
        while node not in terminal:
            if node in seen:
                k = chain.index(node)
                raise AssumptionViolation(chain[k:])
            seen.add(node)
            chain.append(node)
            node = g.out_neighbor[node]
        leader, d = terminal[node], depth[node]
        for offset, f in enumerate(reversed(chain), start=1):
            terminal[f] = leader
            depth[f] = d + offset
    followers = set(g.followers)
    return PathReport(
        {f: terminal[f] for f in sorted(followers)},
        {f: depth[f] for f in sorted(followers)},
    )


def components(g: CommGraph) -> dict[int, list[int]]:
    """Partition agents by the leader their chain terminates at.

    Keys are leader ids; each block lists the leader and its followers
    in ascending id order.
    """
    report = validate_paths_to_leader(g)
    blocks: dict[int, list[int]] = {l: [l] for l in sorted(g.leaders)}
    for f, leader in report.terminal.items():
        blocks[leader].append(f)
    return {l: sorted(members) for l, members in blocks.items()}
