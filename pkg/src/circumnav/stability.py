"""Equilibria and Zubov-type certificates for one follower/neighbour pair.

The neighbour ``j`` is assumed to orbit the target on a circle of radius
``R_j`` at angular rate ``omega``.  In steady state the follower rides a
concentric circle of radius ``v_i / |omega|`` with a constant phase lag
``delta`` behind the neighbour, which fixes the heading error
(``e1 = delta``), the bearing error ``e2`` and the inter-agent range.

Two reduced models of the error dynamics are provided:

* the 2-state model in ``(e1, e2)`` with the range frozen at a given value
  (this is the model the certificate is stated on);
* the exact 3-state model in ``(e1, e2, r)``, autonomous once the neighbour
  is on its orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .geometry import AgentState, DegenerateGeometryError, wrap_angle
from .guidance import Direction, ErrorState, GuidanceGains, OrbitSpec
from .simulator import LeaderSpec, Scenario, SimLog, run, wrap_array
from .topology import SensingGraph

GRID_POINTS = 4096
BISECT_TOL = 1e-12
FD_STEP = 1e-6
EIG_TOL = 1e-8
RESIDUAL_TOL = 1e-9


class StabilityError(ValueError):
    pass


class NoEquilibriumError(StabilityError):
    pass


@dataclass(frozen=True)
class PairConfig:
    v_i: float
    v_j: float
    R_j: float
    omega: float
    gains: GuidanceGains

    def __post_init__(self):
        if not self.R_j > 0:
            raise StabilityError(f"R_j must be > 0, got {self.R_j!r}")
        if self.v_i == 0 or self.v_j == 0:
            raise StabilityError("speeds must be nonzero")
        expected = abs(self.v_j) / self.R_j
        if abs(abs(self.omega) - expected) > 1e-9 * max(1.0, expected):
            raise StabilityError(f"|omega| must equal v_j / R_j = {expected:.12g}, got {self.omega!r}")

    @classmethod
    def from_orbit(cls, v_i: float, v_j: float, R_j: float, direction, gains: GuidanceGains) -> "PairConfig":
        d = direction if isinstance(direction, Direction) else Direction.parse(direction)
        return cls(v_i, v_j, R_j, d.sign * abs(v_j) / R_j, gains)

    @property
    def R_i(self) -> float:
        return abs(self.v_i) / abs(self.omega)

    @property
    def sign(self) -> float:
        return 1.0 if self.omega > 0 else -1.0

    def with_gains(self, gains: GuidanceGains) -> "PairConfig":
        return PairConfig(self.v_i, self.v_j, self.R_j, self.omega, gains)


class Stability(str, Enum):
    STABLE = "asymptotically stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


def classify(eigenvalues: np.ndarray, tol: float = EIG_TOL) -> Stability:
    worst = float(np.max(np.real(eigenvalues)))
    if worst < -tol:
        return Stability.STABLE
    if worst > tol:
        return Stability.UNSTABLE
    return Stability.MARGINAL


@dataclass(frozen=True)
class EquilibriumSolution:
    delta: float
    e1_bar: float
    e2_bar: float
    r_ij_bar: float
    R_i: float
    R_j: float
    stability: Stability
    eigenvalues: tuple[complex, ...]
    full_stability: Stability
    full_eigenvalues: tuple[complex, ...]
    condition_residual: float
    dynamics_residual: float

    @property
    def errors(self) -> ErrorState:
        return ErrorState(self.e1_bar, self.e2_bar)

    @property
    def stable(self) -> bool:
        return self.stability is Stability.STABLE

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "e1_bar": self.e1_bar,
            "e2_bar": self.e2_bar,
            "r_ij_bar": self.r_ij_bar,
            "R_i": self.R_i,
            "R_j": self.R_j,
            "stability": self.stability.value,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "full_stability": self.full_stability.value,
            "full_eigenvalues": [[z.real, z.imag] for z in self.full_eigenvalues],
            "condition_residual": self.condition_residual,
            "dynamics_residual": self.dynamics_residual,
        }


def error_dynamics(cfg: PairConfig, e: ErrorState, r_ij: float) -> tuple[float, float]:
    """Time derivative of ``(e1, e2)`` with the range supplied externally."""
    if not r_ij > 0:
        raise DegenerateGeometryError(f"range must be > 0, got {r_ij!r}")
    u = cfg.gains.c1 * e.e1 + cfg.gains.c2 * math.sin(e.e2)
    de1 = cfg.omega - u
    de2 = (cfg.v_j * math.sin(e.e1 - e.e2) + cfg.v_i * math.sin(e.e2)) / r_ij - u
    return de1, de2


def full_error_dynamics(cfg: PairConfig, e1: float, e2: float, r: float) -> tuple[float, float, float]:
    """Exact pair dynamics in ``(e1, e2, r)`` for a neighbour on its orbit."""
    de1, de2 = error_dynamics(cfg, ErrorState(e1, e2), r)
    dr = cfg.v_j * math.cos(e1 - e2) - cfg.v_i * math.cos(e2)
    return de1, de2, dr


def equilibrium_geometry(cfg: PairConfig, delta):
    """Bearing error, range and follower radius for a phase lag ``delta``.

    Works on scalars or arrays.  The neighbour sits at polar angle 0 and
    the follower at ``-delta`` on its own circle; headings are tangent in
    the direction of rotation.
    """
    delta = np.asarray(delta, dtype=float)
    R_i = cfg.R_i
    dx = cfg.R_j - R_i * np.cos(delta)
    dy = R_i * np.sin(delta)
    gamma_i = -delta + cfg.sign * math.pi / 2
    e2 = wrap_array(np.arctan2(dy, dx) - gamma_i)
    return e2, np.hypot(dx, dy), R_i


def _condition(cfg: PairConfig, delta):
    e2, _, _ = equilibrium_geometry(cfg, delta)
    return cfg.gains.c1 * delta + cfg.gains.c2 * np.sin(e2) - cfg.omega


def bisect(f: Callable[[float], float], a: float, b: float, tol: float = BISECT_TOL, max_iter: int = 200) -> float:
    """Plain bisection on a sign-changing bracket ``[a, b]``."""
    fa = f(a)
    if fa == 0.0:
        return a
    fb = f(b)
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise StabilityError("bisection bracket does not change sign")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        if b - a <= tol:
            return m
        fm = f(m)
        if fm == 0.0:
            return m
        if fa * fm < 0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def jacobian(func: Callable[[np.ndarray], np.ndarray], x: Sequence[float], h: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Jacobian."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    J = np.empty((n, n))
    for k in range(n):
        dx = np.zeros(n)
        dx[k] = h
        J[:, k] = (np.asarray(func(x + dx)) - np.asarray(func(x - dx))) / (2.0 * h)
    return J


def frozen_jacobian(cfg: PairConfig, e1: float, e2: float, r_ij: float) -> np.ndarray:
    return jacobian(lambda e: np.array(error_dynamics(cfg, ErrorState(*e), r_ij)), [e1, e2])


def analytic_frozen_jacobian(cfg: PairConfig, e1: float, e2: float, r_ij: float) -> np.ndarray:
    c1, c2 = cfg.gains.c1, cfg.gains.c2
    a = cfg.v_j * math.cos(e1 - e2) / r_ij
    b = cfg.v_i * math.cos(e2) / r_ij
    return np.array(
        [
            [-c1, -c2 * math.cos(e2)],
            [a - c1, -a + b - c2 * math.cos(e2)],
        ]
    )


def full_jacobian(cfg: PairConfig, e1: float, e2: float, r: float) -> np.ndarray:
    return jacobian(lambda s: np.array(full_error_dynamics(cfg, *s)), [e1, e2, r])


def solve_equilibrium(cfg: PairConfig, grid_points: int = GRID_POINTS) -> list[EquilibriumSolution]:
    """All steady phase lags on (-pi, pi], classified by local stability.

    Raises ``NoEquilibriumError`` when the heading-rate condition has no root.
    """
    deltas = -math.pi + 2.0 * math.pi * np.arange(1, grid_points + 1) / grid_points
    g = _condition(cfg, deltas)

    def scalar(d: float) -> float:
        return float(_condition(cfg, d))

    roots = []
    for k in range(grid_points - 1):
        if g[k] == 0.0:
            roots.append(float(deltas[k]))
        elif g[k] * g[k + 1] < 0.0:
            roots.append(bisect(scalar, float(deltas[k]), float(deltas[k + 1])))
    if g[-1] == 0.0:
        roots.append(float(deltas[-1]))

    out = []
    for delta in roots:
        e2, r, R_i = equilibrium_geometry(cfg, delta)
        e2, r = float(e2), float(r)
        if not r > 1e-9 * max(cfg.R_j, R_i):
            continue
        cond = abs(scalar(delta))
        # brackets across the coincident point are jumps, not roots
        if cond > RESIDUAL_TOL:
            continue
        f = error_dynamics(cfg, ErrorState(delta, e2), r)
        eig = np.linalg.eigvals(frozen_jacobian(cfg, delta, e2, r))
        full_eig = np.linalg.eigvals(full_jacobian(cfg, delta, e2, r))
        out.append(
            EquilibriumSolution(
                delta=delta,
                e1_bar=delta,
                e2_bar=e2,
                r_ij_bar=r,
                R_i=R_i,
                R_j=cfg.R_j,
                stability=classify(eig),
                eigenvalues=tuple(complex(z) for z in eig),
                full_stability=classify(full_eig),
                full_eigenvalues=tuple(complex(z) for z in full_eig),
                condition_residual=cond,
                dynamics_residual=max(abs(f[0]), abs(f[1])),
            )
        )
    if not out:
        raise NoEquilibriumError(
            f"no steady phase lag satisfies the heading-rate condition "
            f"(C1 = {cfg.gains.c1:g}, C2 = {cfg.gains.c2:g}, omega = {cfg.omega:g})"
        )
    return out


# ---------------------------------------------------------------- certificate


@dataclass(frozen=True)
class ZubovParams:
    alpha: float = 1.0
    half_width: float = 2.0
    resolution: int = 201

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise StabilityError(f"alpha must be > 0, got {self.alpha!r}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise StabilityError(f"half-width L must be > 0, got {self.half_width!r}")
        if self.resolution < 2:
            raise StabilityError("grid resolution must be at least 2")


def zubov_V(z, p: ZubovParams):
    """``V(z) = 1 - exp(-alpha |z|^2)``; ``z`` has a trailing axis of length 2."""
    z = np.asarray(z, dtype=float)
    return -np.expm1(-p.alpha * np.sum(z * z, axis=-1))


def shifted_dynamics(cfg: PairConfig, eq: EquilibriumSolution, z, r_ij: float | None = None):
    """Error dynamics with the equilibrium moved to the origin.

    The neighbour rate is eliminated through the steady condition, so the
    first component carries no explicit ``omega``.
    """
    z = np.asarray(z, dtype=float)
    z1, z2 = z[..., 0], z[..., 1]
    c1, c2 = cfg.gains.c1, cfg.gains.c2
    e1, e2 = eq.e1_bar, eq.e2_bar
    r = eq.r_ij_bar if r_ij is None else r_ij
    s2 = np.sin(z2 + e2)
    f1 = -c1 * z1 + c2 * (math.sin(e2) - s2)
    f2 = (cfg.v_j * np.sin(z1 - z2 + e1 - e2) + cfg.v_i * s2) / r - c1 * (z1 + e1) - c2 * s2
    return np.stack([f1, f2], axis=-1)


def zubov_h(cfg: PairConfig, eq: EquilibriumSolution, z, p: ZubovParams):
    z = np.asarray(z, dtype=float)
    return -2.0 * p.alpha * np.sum(z * shifted_dynamics(cfg, eq, z), axis=-1)


def zubov_pde_residual(cfg: PairConfig, eq: EquilibriumSolution, z, p: ZubovParams):
    """``dV/dz . f(z) + h(z) (1 - V(z))``; zero when the certificate pair is consistent."""
    z = np.asarray(z, dtype=float)
    grad = 2.0 * p.alpha * z * np.exp(-p.alpha * np.sum(z * z, axis=-1))[..., None]
    lhs = np.sum(grad * shifted_dynamics(cfg, eq, z), axis=-1)
    rhs = -zubov_h(cfg, eq, z, p) * (1.0 - zubov_V(z, p))
    return lhs - rhs


@dataclass(frozen=True)
class CertificateReport:
    passed: bool
    half_width: float
    resolution: int
    samples: int
    worst_value: float
    worst_z: tuple[float, float]
    alpha: float

    @property
    def domain(self) -> str:
        L = self.half_width
        return f"[-{L:g}, {L:g}]^2"

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "domain": self.domain,
            "half_width": self.half_width,
            "resolution": self.resolution,
            "samples": self.samples,
            "worst_value": self.worst_value,
            "worst_z": list(self.worst_z),
            "alpha": self.alpha,
        }


def certificate_grid(p: ZubovParams) -> np.ndarray:
    axis = np.linspace(-p.half_width, p.half_width, p.resolution)
    Z1, Z2 = np.meshgrid(axis, axis, indexing="ij")
    z = np.stack([Z1.ravel(), Z2.ravel()], axis=-1)
    return z[np.any(z != 0.0, axis=1)]


def certify_gains(cfg: PairConfig, eq: EquilibriumSolution, p: ZubovParams) -> CertificateReport:
    """Check ``z . f(z) < 0`` (so ``h > 0``) on a grid over ``[-L, L]^2`` minus the origin."""
    z = certificate_grid(p)
    s = np.sum(z * shifted_dynamics(cfg, eq, z), axis=-1)
    k = int(np.argmax(s))
    worst = float(s[k])
    return CertificateReport(
        passed=bool(worst < 0.0),
        half_width=p.half_width,
        resolution=p.resolution,
        samples=len(z),
        worst_value=worst,
        worst_z=(float(z[k, 0]), float(z[k, 1])),
        alpha=p.alpha,
    )


def search_certified_gains(
    base: PairConfig,
    c1_values: Sequence[float],
    c2_values: Sequence[float],
    p: ZubovParams,
) -> list[tuple[GuidanceGains, EquilibriumSolution, CertificateReport]]:
    """Every (gains, equilibrium) on the grid whose certificate passes."""
    found = []
    for c1 in c1_values:
        for c2 in c2_values:
            cfg = base.with_gains(GuidanceGains(float(c1), float(c2)))
            try:
                sols = solve_equilibrium(cfg)
            except NoEquilibriumError:
                continue
            for eq in sols:
                if not eq.stable:
                    continue
                rep = certify_gains(cfg, eq, p)
                if rep.passed:
                    found.append((cfg.gains, eq, rep))
    return found


# ---------------------------------------------------------------- simulation oracles


def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_reduced(
    cfg: PairConfig,
    eq: EquilibriumSolution,
    z0,
    t_end: float,
    dt: float = 0.01,
) -> np.ndarray:
    """Integrate the shifted 2-state model (range frozen at equilibrium).

    ``z0`` may be a batch of shape ``(m, 2)``; returns the final offsets.
    """
    z = np.array(z0, dtype=float)
    steps = int(round(t_end / dt))
    f = lambda s: shifted_dynamics(cfg, eq, s)
    for _ in range(steps):
        z = _rk4(f, z, dt)
        if not np.all(np.isfinite(z)):
            raise StabilityError("reduced model diverged")
    return z


def pair_scenario(cfg: PairConfig, follower: AgentState, dt: float, t_end: float) -> Scenario:
    """Two-agent scenario: neighbour (agent 1) already on its orbit, follower agent 2."""
    direction = Direction.CCW if cfg.omega > 0 else Direction.CW
    orbit = OrbitSpec.for_speed((0.0, 0.0), cfg.R_j, direction, cfg.v_j)
    leader = AgentState(cfg.R_j, 0.0, direction.sign * math.pi / 2, abs(cfg.v_j))
    return Scenario(
        agents=(leader, follower),
        leaders=frozenset({1}),
        sensing=SensingGraph(2, frozenset({(2, 1)})),
        gains=cfg.gains,
        leader_specs={1: LeaderSpec(orbit)},
        dt=dt,
        t_end=t_end,
        name="pair",
    )


def follower_at_offset(cfg: PairConfig, eq: EquilibriumSolution, z, r_ij: float | None = None) -> AgentState:
    """Follower state whose errors against the ``pair_scenario`` neighbour are ``eq + z``.

    The range starts at ``r_ij`` (default: the equilibrium range).
    """
    r = eq.r_ij_bar if r_ij is None else r_ij
    gamma_j = cfg.sign * math.pi / 2
    gamma_i = gamma_j - (eq.e1_bar + float(z[0]))
    los = gamma_i + eq.e2_bar + float(z[1])
    return AgentState(cfg.R_j - r * math.cos(los), -r * math.sin(los), gamma_i, abs(cfg.v_i))


def steady_errors(log: SimLog, follower: int = 2, neighbor: int = 1, unwrapped: bool = False) -> tuple[float, float, float]:
    """Heading error, bearing error and range at the last sample of ``log``."""
    me = log.state(-1, follower)
    nb = log.state(-1, neighbor)
    dx, dy = nb.x - me.x, nb.y - me.y
    de = nb.gamma - me.gamma
    e1 = de if unwrapped else wrap_angle(de)
    e2 = wrap_angle(math.atan2(dy, dx) - me.gamma)
    return e1, e2, math.hypot(dx, dy)


def simulate_pair(cfg: PairConfig, follower: AgentState, t_end: float, dt: float = 0.01) -> tuple[float, float, float]:
    log = run(pair_scenario(cfg, follower, dt, t_end))
    return steady_errors(log)


def match_equilibrium(
    errors: tuple[float, float, float], solutions: Sequence[EquilibriumSolution]
) -> tuple[EquilibriumSolution, float]:
    """Closest solution to simulated ``(e1, e2, r)`` and the max-norm distance."""
    e1, e2, r = errors
    best, dist = None, math.inf
    for s in solutions:
        d = max(abs(wrap_angle(e1 - s.e1_bar)), abs(wrap_angle(e2 - s.e2_bar)), abs(r - s.r_ij_bar))
        if d < dist:
            best, dist = s, d
    return best, dist


@dataclass(frozen=True)
class SoundnessReport:
    """Random starts inside the certified box, integrated on the frozen-range model."""

    trials: int
    t_end: float
    max_final_norm: float
    counterexamples: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return len(self.counterexamples) == 0


def check_soundness(
    cfg: PairConfig,
    eq: EquilibriumSolution,
    p: ZubovParams,
    trials: int = 100,
    rng: np.random.Generator | None = None,
    tol: float = 1e-6,
    dt: float | None = None,
) -> SoundnessReport:
    """Draw ``trials`` offsets uniformly in ``[-L, L]^2`` and check they reach the origin.

    Final offsets are compared with ``z2`` wrapped, since the bearing error
    is an angle.  The horizon is 40 time constants of the slowest local mode, so a
    converging start ends well inside ``tol``.
    """
    rng = rng or np.random.default_rng(0)
    decay = -max(z.real for z in eq.eigenvalues)
    if not decay > 0:
        raise StabilityError("equilibrium is not locally asymptotically stable")
    t_end = 40.0 / decay
    fastest = max(abs(z) for z in eq.eigenvalues)
    if dt is None:
        dt = min(0.05, 0.1 / fastest)
    z0 = rng.uniform(-p.half_width, p.half_width, size=(trials, 2))
    zf = simulate_reduced(cfg, eq, z0, t_end, dt)
    # e2 is an angle: offsets of 2*pi in z2 are the same physical state
    zf[:, 1] = wrap_array(zf[:, 1])
    norms = np.linalg.norm(zf, axis=1)
    return SoundnessReport(trials, t_end, float(norms.max()), z0[norms > tol])
