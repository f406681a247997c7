import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from circumnav.geometry import DegenerateGeometryError
from circumnav.guidance import GuidanceError, GuidanceGains, error_state
from circumnav.simulator import run
from circumnav.stability import (
    ErrorState,
    NoEquilibriumError,
    PairConfig,
    Stability,
    StabilityError,
    ZubovParams,
    analytic_frozen_jacobian,
    bisect,
    certificate_grid,
    certify_gains,
    check_soundness,
    classify,
    error_dynamics,
    follower_at_offset,
    frozen_jacobian,
    full_error_dynamics,
    match_equilibrium,
    pair_scenario,
    shifted_dynamics,
    simulate_pair,
    simulate_reduced,
    solve_equilibrium,
    steady_errors,
    zubov_h,
    zubov_pde_residual,
    zubov_V,
)

HW = PairConfig.from_orbit(0.15, 0.105, 0.7, "ccw", GuidanceGains(1.0, 1.0))


@st.composite
def pair_configs(draw):
    vi = draw(st.floats(0.1, 2.0))
    vj = draw(st.floats(0.1, 2.0))
    Rj = draw(st.floats(0.5, 5.0))
    d = draw(st.sampled_from(["ccw", "cw"]))
    w = vj / Rj
    c1 = draw(st.floats(0.1, 30.0)) * w
    c2 = draw(st.floats(0.1, 30.0)) * w
    return PairConfig.from_orbit(vi, vj, Rj, d, GuidanceGains(c1, c2))


def _solutions(cfg):
    try:
        return solve_equilibrium(cfg)
    except NoEquilibriumError:
        return []


def test_pair_config_invariants():
    with pytest.raises(StabilityError, match="R_j"):
        PairConfig(1, 1, 0.0, 1.0, GuidanceGains(1, 1))
    with pytest.raises(StabilityError, match="omega"):
        PairConfig(1, 1, 2.0, 1.0, GuidanceGains(1, 1))
    assert HW.omega == pytest.approx(0.15)
    assert HW.R_i == pytest.approx(1.0)
    assert PairConfig.from_orbit(1, 1, 2, "cw", GuidanceGains(1, 1)).omega == -0.5


def test_gains_at_zero_rejected():
    with pytest.raises(GuidanceError):
        GuidanceGains(0.0, 0.0)


def test_error_dynamics_examples():
    assert error_dynamics(HW, ErrorState(0.0, 0.0), 1.0) == pytest.approx((0.15, 0.0))
    with pytest.raises(DegenerateGeometryError):
        error_dynamics(HW, ErrorState(0.1, 0.1), 0.0)
    for eq in solve_equilibrium(HW):
        assert error_dynamics(HW, eq.errors, eq.r_ij_bar) == pytest.approx((0.0, 0.0), abs=1e-9)


def test_error_dynamics_match_simulated_trajectory():
    # oracle: finite differences of the errors measured on a full two-agent run
    cfg = HW
    f = follower_at_offset(cfg, solve_equilibrium(cfg)[0], (0.8, -0.6))
    dt = 1e-3
    log = run(pair_scenario(cfg, f, dt, 3.0))
    e = np.array([[*(lambda s: (s.e1, s.e2))(error_state(log.state(k, 2), log.state(k, 1)))] for k in range(len(log))])
    e = np.unwrap(e, axis=0)
    for k in (100, 1000, 2500):
        fd = (e[k + 1] - e[k - 1]) / (2 * dt)
        model = error_dynamics(cfg, ErrorState(*e[k]), log.r_edge[k, 0])
        assert fd == pytest.approx(model, abs=2e-3)


def test_full_dynamics_range_rate():
    e1, e2, r = 0.3, -0.4, 0.9
    dr = full_error_dynamics(HW, e1, e2, r)[2]
    assert dr == pytest.approx(HW.v_j * math.cos(e1 - e2) - HW.v_i * math.cos(e2))


def test_bisect():
    assert bisect(lambda x: x * x - 2, 0.0, 2.0) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert bisect(lambda x: x, 0.0, 1.0) == 0.0
    with pytest.raises(StabilityError):
        bisect(lambda x: x * x + 1, -1.0, 1.0)


def test_classify():
    assert classify(np.array([-1.0, -0.1 + 2j])) is Stability.STABLE
    assert classify(np.array([-1.0, 0.1])) is Stability.UNSTABLE
    assert classify(np.array([-1.0, 1e-12j])) is Stability.MARGINAL


def test_hardware_analog_radius_is_forced():
    sols = solve_equilibrium(HW)
    assert sols
    for s in sols:
        assert s.R_i == pytest.approx(1.0, abs=1e-12)


def test_equal_speeds_share_the_orbit():
    # v_i = v_j forces R_i = R_j; the phase lag must be nonzero because
    # delta = 0 would put both agents on the same point
    cfg = PairConfig.from_orbit(1.0, 1.0, 2.0, "ccw", GuidanceGains(0.5, 1.0))
    sols = solve_equilibrium(cfg)
    assert sols
    for s in sols:
        assert s.R_i == pytest.approx(s.R_j)
        assert abs(s.delta) > 1e-6 and s.r_ij_bar > 1e-6


def test_no_equilibrium_reported():
    # tiny gains cannot produce the required turn rate
    cfg = PairConfig.from_orbit(1.0, 1.0, 1.0, "ccw", GuidanceGains(1e-3, 1e-3))
    with pytest.raises(NoEquilibriumError):
        solve_equilibrium(cfg)


@given(pair_configs())
def test_equilibrium_invariants(cfg):
    for s in _solutions(cfg):
        c1, c2 = cfg.gains.c1, cfg.gains.c2
        assert abs(cfg.omega - c1 * s.e1_bar - c2 * math.sin(s.e2_bar)) <= 1e-9
        assert s.dynamics_residual <= 1e-9
        # law of cosines on the target / follower / neighbour triangle
        law = s.R_i**2 + s.R_j**2 - 2 * s.R_i * s.R_j * math.cos(s.delta)
        assert s.r_ij_bar**2 == pytest.approx(law, rel=1e-9, abs=1e-12)
        assert -math.pi < s.delta <= math.pi


@given(pair_configs(), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 10))
def test_fd_jacobian_matches_analytic(cfg, e1, e2, r):
    J = frozen_jacobian(cfg, e1, e2, r)
    A = analytic_frozen_jacobian(cfg, e1, e2, r)
    scale = max(1.0, np.max(np.abs(A)))
    assert np.allclose(J, A, atol=1e-6 * scale)


def test_simulation_oracle_small_gains():
    cfg = HW.with_gains(GuidanceGains(0.1, 0.1))
    sols = solve_equilibrium(cfg)
    stable = [s for s in sols if s.stable]
    eq = stable[0]
    errs = simulate_pair(cfg, follower_at_offset(cfg, eq, (0.3, -0.3)), 400.0, 0.02)
    best, dist = match_equilibrium(errs, stable)
    assert dist < 1e-3


def test_follower_at_offset_sets_errors():
    eq = solve_equilibrium(HW)[0]
    z = (0.25, -0.4)
    log = run(pair_scenario(HW, follower_at_offset(HW, eq, z, r_ij=0.8), 0.01, 0.01))
    # errors measured at t = 0
    me, nb = log.state(0, 2), log.state(0, 1)
    e = error_state(me, nb)
    assert e.e1 == pytest.approx(eq.e1_bar + z[0])
    assert e.e2 == pytest.approx(eq.e2_bar + z[1])
    assert math.dist(me.position, nb.position) == pytest.approx(0.8)


def test_steady_errors_reads_last_sample():
    log = run(pair_scenario(HW, follower_at_offset(HW, solve_equilibrium(HW)[0], (0, 0)), 0.01, 1.0))
    e1, e2, r = steady_errors(log)
    assert r == pytest.approx(log.r_edge[-1, 0])


# ---------------------------------------------------------------- Zubov pair


def test_zubov_V_examples():
    p = ZubovParams(alpha=1.0)
    assert zubov_V([0.0, 0.0], p) == 0.0
    assert zubov_V([1.0, 0.0], p) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert zubov_V([1.0, 0.0], p) == pytest.approx(0.63212, abs=1e-5)
    assert zubov_V([1e3, 1e3], p) == 1.0
    big = zubov_V(np.array([[10.0, 0.0], [30.0, 0.0]]), p)
    assert np.all(big < 1.0 + 1e-15) and big[1] >= big[0]


def test_zubov_params_invariants():
    with pytest.raises(StabilityError):
        ZubovParams(alpha=0.0)
    with pytest.raises(StabilityError):
        ZubovParams(half_width=-1.0)


def test_shifted_dynamics_vanish_at_origin():
    for eq in solve_equilibrium(HW):
        assert shifted_dynamics(HW, eq, [0.0, 0.0]) == pytest.approx([0.0, 0.0], abs=1e-9)


def test_shifted_dynamics_agree_with_error_dynamics():
    eq = solve_equilibrium(HW)[0]
    z = np.array([0.3, -0.7])
    raw = error_dynamics(HW, ErrorState(eq.e1_bar + z[0], eq.e2_bar + z[1]), eq.r_ij_bar)
    assert shifted_dynamics(HW, eq, z) == pytest.approx(raw, abs=1e-9)


def test_pde_residual_at_origin_and_small_alpha():
    eq = solve_equilibrium(HW)[0]
    assert zubov_pde_residual(HW, eq, [0.0, 0.0], ZubovParams()) == 0.0
    z = np.array([0.5, -0.4])
    r = [abs(float(zubov_pde_residual(HW, eq, z, ZubovParams(alpha=a)))) for a in (1e-2, 1e-4, 1e-8)]
    assert r[-1] <= 1e-15
    # each side is O(alpha), so it fades with alpha too
    lhs = [abs(float(zubov_h(HW, eq, z, ZubovParams(alpha=a)))) for a in (1e-2, 1e-4)]
    assert lhs[1] < lhs[0] * 1e-1


@given(pair_configs(), st.floats(1e-3, 10))
def test_pde_identity_random(cfg, alpha):
    sols = _solutions(cfg)
    assume(sols)
    z = np.random.default_rng(0).uniform(-3, 3, size=(20, 2))
    res = zubov_pde_residual(cfg, sols[0], z, ZubovParams(alpha=alpha))
    assert np.max(np.abs(res)) <= 1e-9


def test_certificate_grid_excludes_origin():
    z = certificate_grid(ZubovParams(half_width=1.0, resolution=5))
    assert len(z) == 24
    assert not np.any(np.all(z == 0.0, axis=1))


@given(pair_configs(), st.sampled_from([11, 21, 41]))
def test_certificate_refinement_is_consistent(cfg, n):
    sols = [s for s in _solutions(cfg) if s.stable]
    assume(sols)
    eq = sols[0]
    coarse = certify_gains(cfg, eq, ZubovParams(1.0, 0.5, n))
    fine = certify_gains(cfg, eq, ZubovParams(1.0, 0.5, 2 * n - 1))
    # the fine grid contains the coarse one
    assert fine.worst_value >= coarse.worst_value
    if coarse.passed and not fine.passed:
        axis = np.linspace(-0.5, 0.5, n)
        on_old = all(np.min(np.abs(axis - c)) < 1e-12 for c in fine.worst_z)
        assert not on_old


def test_certificate_report_fields():
    cfg = HW.with_gains(GuidanceGains(0.1, 0.1))
    eq = [s for s in solve_equilibrium(cfg) if s.stable][0]
    rep = certify_gains(cfg, eq, ZubovParams(1.0, 0.5, 101))
    assert rep.passed and rep.worst_value < 0
    assert rep.samples == 101 * 101 - 1
    assert rep.domain == "[-0.5, 0.5]^2"
    assert rep.as_dict()["passed"] is True


def test_hardware_gains_not_certifiable_locally():
    # the symmetric part of the local Jacobian is indefinite, so z . f(z) > 0 arbitrarily close to 0
    eq = solve_equilibrium(HW)[0]
    rep = certify_gains(HW, eq, ZubovParams(1.0, 0.05, 51))
    assert not rep.passed
    J = analytic_frozen_jacobian(HW, eq.e1_bar, eq.e2_bar, eq.r_ij_bar)
    assert np.max(np.linalg.eigvalsh(0.5 * (J + J.T))) > 0


def test_soundness_of_a_certified_pair():
    cfg = HW.with_gains(GuidanceGains(0.1, 0.1))
    eq = [s for s in solve_equilibrium(cfg) if s.stable][0]
    p = ZubovParams(1.0, 0.5, 101)
    assert certify_gains(cfg, eq, p).passed
    rep = check_soundness(cfg, eq, p, trials=100, rng=np.random.default_rng(3))
    assert rep.passed, rep.counterexamples


def test_reduced_model_batch_matches_single():
    cfg = HW.with_gains(GuidanceGains(0.1, 0.1))
    eq = solve_equilibrium(cfg)[0]
    z0 = np.array([[0.2, 0.1], [-0.3, 0.4]])
    both = simulate_reduced(cfg, eq, z0, 5.0, 0.01)
    one = simulate_reduced(cfg, eq, z0[1], 5.0, 0.01)
    assert np.allclose(both[1], one, atol=1e-15)
