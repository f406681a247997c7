"""Command-line entry point: ``circumnav <subcommand> --config FILE [--set key=value ...]``.

Exit codes: 0 success, 2 config or invariant error, 3 topology
assumption violated (a follower chain never reaches a leader), 4 the
simulation diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, PlanRequest, ScenarioConfig, load_config
from .geometry import GeometryError, OrientedPose
from .guidance import GuidanceError, check_turning_radius, plan_cc
from .report import emit_csv, emit_plots, summarize
from .simulator import DivergenceError, ScenarioError, prepare, run
from .stability import (
    NoEquilibriumError,
    StabilityError,
    certify_gains,
    check_soundness,
    solve_equilibrium,
)
from .topology import AssumptionViolation, TopologyError, build_comm_graph, components, validate_paths_to_leader

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_DIVERGENCE = 4


def _write_json(out_dir: Path | None, name: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text + "\n", encoding="utf-8")


def _need_config(args) -> ScenarioConfig:
    if args.config is None:
        raise ConfigError("--config is required for this subcommand")
    return load_config(args.config, args.set or ())


# ---------------------------------------------------------------- subcommands


def cmd_run(args) -> int:
    cfg = _need_config(args)
    scenario = cfg.scenario
    ctx = prepare(scenario)
    log = run(scenario, ctx)
    certs = []
    if cfg.pair is not None:
        try:
            for eq in solve_equilibrium(cfg.pair):
                if eq.stable:
                    d = certify_gains(cfg.pair, eq, cfg.zubov).as_dict()
                    d["pair_follower"] = cfg.pair_follower
                    d["delta"] = eq.delta
                    certs.append(d)
        except NoEquilibriumError:
            pass
    report = summarize(log, ctx.graph, cfg.report.window, cfg.report.tolerance, certs)
    out = Path(args.out_dir) if args.out_dir else Path("runs") / (scenario.name or "run")
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(log, out / "log.csv", stride=cfg.report.csv_stride)
    emit_plots(log, report, out)
    (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
    print(report.text())
    print(f"wrote {out}/log.csv, report.json, trajectories.svg, distances.svg, controls.svg")
    return EXIT_OK


def _plan_request(args) -> PlanRequest | list[tuple[int, object]]:
    if args.start is not None or args.goal is not None:
        if args.start is None or args.goal is None or args.r_a is None:
            raise ConfigError("--start, --goal and --r-a must be given together")
        return PlanRequest(
            OrientedPose(tuple(args.start[:2]), args.start[2]),
            OrientedPose(tuple(args.goal[:2]), args.goal[2]),
            args.r_a,
            args.speed,
            args.min_turn_radius,
        )
    cfg = _need_config(args)
    if cfg.plan_request is not None:
        return cfg.plan_request
    plans = [(l, s.plan) for l, s in sorted(cfg.scenario.leader_specs.items()) if s.plan is not None]
    if not plans:
        raise ConfigError("config has no [plan_cc] table and no leader with mode = 'plan'")
    return plans


def _plan_dict(plan) -> dict:
    return {
        "start": {"position": list(plan.start.position), "heading": plan.start.heading},
        "goal": {"position": list(plan.goal.position), "heading": plan.goal.heading},
        "speed": plan.speed,
        "p1": plan.p[0],
        "p2": plan.p[1],
        "p3": plan.p[2],
        "r_a": plan.r_a,
        "r_b": plan.r_b,
        "center_a": list(plan.center_a),
        "center_b": list(plan.center_b),
        "tangent_point": list(plan.tangent_point),
        "arc_a": plan.arc_a,
        "arc_b": plan.arc_b,
        "rate_a": plan.rate_a,
        "rate_b": plan.rate_b,
        "switch_time": plan.switch_time,
        "total_time": plan.total_time,
        "tangency_gap": plan.tangency_gap(),
    }


def cmd_plan_cc(args) -> int:
    req = _plan_request(args)
    if isinstance(req, PlanRequest):
        plan = plan_cc(req.start, req.goal, req.r_a, req.speed)
        if req.min_turn_radius > 0:
            check_turning_radius(plan, req.min_turn_radius)
        payload = {"plan": _plan_dict(plan)}
    else:
        payload = {"plans": [{"leader": l, **_plan_dict(p)} for l, p in req]}
    _write_json(Path(args.out_dir) if args.out_dir else None, "plan.json", payload)
    return EXIT_OK


def _pair_or_fail(cfg: ScenarioConfig):
    if cfg.pair is None:
        raise ConfigError("no pair to analyse: add a [pair] table or a follower that senses a leader")
    return cfg.pair


def _pair_dict(cfg: ScenarioConfig) -> dict:
    p = cfg.pair
    return {
        "v_i": p.v_i,
        "v_j": p.v_j,
        "R_j": p.R_j,
        "omega": p.omega,
        "c1": p.gains.c1,
        "c2": p.gains.c2,
        "follower": cfg.pair_follower,
    }


def cmd_equilibrium(args) -> int:
    cfg = _need_config(args)
    pair = _pair_or_fail(cfg)
    sols = solve_equilibrium(pair)
    payload = {"pair": _pair_dict(cfg), "R_i": pair.R_i, "solutions": [s.as_dict() for s in sols]}
    _write_json(Path(args.out_dir) if args.out_dir else None, "equilibrium.json", payload)
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _need_config(args)
    pair = _pair_or_fail(cfg)
    results = []
    for eq in solve_equilibrium(pair):
        entry = {"equilibrium": eq.as_dict()}
        if eq.stable:
            rep = certify_gains(pair, eq, cfg.zubov)
            entry["certificate"] = rep.as_dict()
            if rep.passed and args.trials > 0:
                sound = check_soundness(pair, eq, cfg.zubov, trials=args.trials)
                entry["soundness"] = {
                    "trials": sound.trials,
                    "t_end": sound.t_end,
                    "max_final_norm": sound.max_final_norm,
                    "counterexamples": sound.counterexamples.tolist(),
                    "passed": sound.passed,
                }
        else:
            entry["certificate"] = None
        results.append(entry)
    payload = {"pair": _pair_dict(cfg), "alpha": cfg.zubov.alpha, "results": results}
    _write_json(Path(args.out_dir) if args.out_dir else None, "certificate.json", payload)
    return EXIT_OK


def cmd_check_topology(args) -> int:
    cfg = _need_config(args)
    s = cfg.scenario
    graph = build_comm_graph(s.sensing, [a.position for a in s.agents], s.leaders)
    paths = validate_paths_to_leader(graph)
    payload = {
        "leaders": sorted(graph.leaders),
        "edges": [list(e) for e in graph.edges],
        "terminal_leader": {str(k): v for k, v in paths.terminal.items()},
        "depth": {str(k): v for k, v in paths.depth.items()},
        "components": {str(k): v for k, v in components(graph).items()},
    }
    _write_json(Path(args.out_dir) if args.out_dir else None, "topology.json", payload)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _floats(n: int):
    def parse(text: str) -> list[float]:
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise argparse.ArgumentTypeError(f"not numbers: {text!r}") from None
        if not all(math.isfinite(v) for v in values):
            raise argparse.ArgumentTypeError(f"values must be finite: {text!r}")
        return values

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circumnav", description="Bearing-based multi-agent circumnavigation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario TOML file or bundled name (case1, case2, hw-analog)")
        p.add_argument("--out-dir", help="directory for output files")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE", help="override a config value, e.g. gains.c1=0.5"
        )
        return p

    common(sub.add_parser("run", help="simulate a scenario and write CSV, report and plots")).set_defaults(
        func=cmd_run
    )

    p = common(sub.add_parser("plan-cc", help="print circle-circle leader plans"))
    p.add_argument("--start", type=_floats(3), metavar="X,Y,HEADING")
    p.add_argument("--goal", type=_floats(3), metavar="X,Y,HEADING")
    p.add_argument("--r-a", type=float, help="signed radius of the first circle (positive turns clockwise)")
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--min-turn-radius", type=float, default=0.0)
    p.set_defaults(func=cmd_plan_cc)

    common(sub.add_parser("equilibrium", help="solve and classify follower/neighbour equilibria")).set_defaults(
        func=cmd_equilibrium
    )

    p = common(sub.add_parser("certify", help="grid certificate for the configured gains"))
    p.add_argument("--trials", type=int, default=100, help="random starts for the soundness check (0 to skip)")
    p.set_defaults(func=cmd_certify)

    common(sub.add_parser("check-topology", help="build the communication graph and validate leader paths")).set_defaults(
        func=cmd_check_topology
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except AssumptionViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except NoEquilibriumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, GeometryError, GuidanceError, TopologyError, ScenarioError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
