import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from circumnav.geometry import AgentState
from circumnav.guidance import GuidanceGains
from circumnav.report import EmptyLogError, csv_header, emit_csv, emit_plots, read_csv, settle, summarize
from circumnav.simulator import SimLog, prepare, run
from circumnav.stability import PairConfig, follower_at_offset, pair_scenario, solve_equilibrium


def tiny_log(samples=3, agents=2, seed=0):
    rng = np.random.default_rng(seed)
    shape = (samples, agents)
    return SimLog(
        t=np.arange(samples) * 0.1,
        x=rng.normal(size=shape),
        y=rng.normal(size=shape),
        gamma=rng.normal(size=shape) * 10,
        u=rng.normal(size=shape),
        r_target=rng.random(shape) * 1e-7,
        edges=[],
        r_edge=np.empty((samples, 0)),
        los_edge=np.empty((samples, 0)),
        speeds=np.ones(agents),
        leaders=frozenset({1}),
    )


def test_settle_exponential_matches_closed_form():
    # y = 1 + exp(-t): window [s, s + W] is in band when
    # exp(-s)(1 - exp(-W)) <= tol * mean, which fixes the settling time
    dt, W, tol = 1e-3, 5.0, 1e-3
    t = np.arange(0, 40, dt)
    res = settle(t, 1 + np.exp(-t), W, tol)
    assert res.settled
    # mean over the window ~ 1 + exp(-s)(1 - exp(-W))/W, close to 1 at settling
    s = -math.log(tol / (1 - math.exp(-W)))
    assert res.time == pytest.approx(s, abs=0.01)


def test_settle_rejects_oscillation():
    t = np.arange(0, 50, 0.01)
    res = settle(t, 1 + 0.1 * np.sin(t), 5.0, 1e-3)
    assert not res.settled and res.time is None


def test_settle_too_short():
    t = np.arange(0, 2, 0.01)
    assert not settle(t, np.ones_like(t), 5.0).settled


@given(st.floats(0.5, 100), st.floats(-10, 10).filter(lambda c: abs(c) > 0.1))
def test_settle_constant_is_immediate(length, c):
    t = np.linspace(0, length + 6, 301)
    res = settle(t, np.full_like(t, c), 5.0)
    assert res.settled and res.time == 0.0 and res.value == pytest.approx(c)


def test_csv_shape_and_header(tmp_path):
    log = tiny_log()
    path = emit_csv(log, tmp_path / "log.csv")
    header, data = read_csv(path)
    assert header == csv_header(2)
    assert header[:6] == ["t", "x_1", "y_1", "gamma_1", "u_1", "r_target_1"]
    assert data.shape == (3, 11)


def test_csv_round_trip_is_bitwise(tmp_path):
    log = tiny_log(samples=50, agents=3, seed=4)
    _, data = read_csv(emit_csv(log, tmp_path / "log.csv"))
    assert np.array_equal(data[:, 0], log.t)
    for k in range(3):
        for j, name in enumerate(("x", "y", "gamma", "u", "r_target")):
            assert np.array_equal(data[:, 1 + 5 * k + j], getattr(log, name)[:, k])


def test_csv_stride(tmp_path):
    _, data = read_csv(emit_csv(tiny_log(samples=10), tmp_path / "log.csv", stride=4))
    assert data[:, 0].tolist() == pytest.approx([0.0, 0.4, 0.8])


def test_csv_empty_log(tmp_path):
    with pytest.raises(EmptyLogError):
        emit_csv(tiny_log(samples=0), tmp_path / "log.csv")


def _stationary_pair():
    cfg = PairConfig.from_orbit(0.15, 0.105, 0.7, "ccw", GuidanceGains(1.0, 1.0))
    eq = solve_equilibrium(cfg)[0]
    s = pair_scenario(cfg, follower_at_offset(cfg, eq, (0.0, 0.0)), 0.05, 60.0)
    ctx = prepare(s)
    return cfg, run(s, ctx), ctx


def test_stationary_pair_rides_concentric_circles(tmp_path):
    cfg, log, ctx = _stationary_pair()
    assert np.ptp(log.r_target[:, 0]) < 1e-9
    assert np.max(np.abs(log.r_target[:, 1] - cfg.R_i)) < 1e-6
    rep = summarize(log, ctx.graph)
    files = emit_plots(log, rep, tmp_path)
    assert [f.name for f in files] == ["trajectories.svg", "distances.svg", "controls.svg"]
    for f in files:
        root = ET.parse(f).getroot()
        assert root.tag.endswith("svg")


def test_plots_empty_log(tmp_path):
    with pytest.raises(EmptyLogError):
        emit_plots(tiny_log(samples=0), None, tmp_path)


def test_summary_is_pure():
    _, log, ctx = _stationary_pair()
    a = summarize(log, ctx.graph).as_dict()
    b = summarize(log, ctx.graph).as_dict()
    assert a == b


def test_summary_fields():
    cfg, log, ctx = _stationary_pair()
    rep = summarize(log, ctx.graph, certificates=[{"domain": "[-1, 1]^2", "passed": False, "worst_value": 0.1}])
    assert rep.all_settled and rep.unsettled == []
    (comp,) = rep.components
    assert comp.leader == 1 and comp.members == (1, 2) and comp.synchronized
    assert comp.omega == pytest.approx(0.15, abs=1e-9)
    assert rep.agent(2).expected_radius == pytest.approx(1.0)
    (edge,) = rep.edges
    assert abs(edge.condition_residual) < 1e-9
    assert rep.radial_error.shape == log.r_target.shape
    assert np.max(np.abs(rep.radial_error)) < 1e-6
    assert "certificate on [-1, 1]^2: fail" in rep.text()


def test_unsettled_agent_is_flagged():
    cfg = PairConfig.from_orbit(0.15, 0.105, 0.7, "ccw", GuidanceGains(1.0, 1.0))
    s = pair_scenario(cfg, AgentState(3.0, 3.0, 0.0, 0.15), 0.05, 20.0)
    ctx = prepare(s)
    rep = summarize(run(s, ctx), ctx.graph)
    assert 2 in rep.unsettled and 1 not in rep.unsettled
    assert rep.components[0].omega is None


def test_hardware_analog_report(hw_run):
    _, _, _, rep = hw_run
    assert rep.agent(2).settled
    assert rep.agent(2).radius.value == pytest.approx(1.0, abs=0.005)
