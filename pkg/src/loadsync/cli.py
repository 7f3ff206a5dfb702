"""Command-line surface: simulate, analyze, bound and sweep.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
The default output directory comes from LOADSYNC_OUT when set.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import balancer, harness, stability
from .balancer import HandoverEvent, HandoverRequest
from .dynamics import LinearModel
from .topology import laplacian

OUT_ENV = "LOADSYNC_OUT"


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "loadsync_out")


def _load_config(path: str) -> harness.ScenarioConfig:
    if os.path.isdir(path):
        path = os.path.join(path, harness.CONFIG_FILE)
    if not os.path.exists(path):
        raise harness.ConfigError(f"{path}: no such config file")
    return harness.parse_config(path)


def _ensure_destination(path: str, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise harness.ConfigError(
            f"{path}: destination not empty; pass --force to overwrite")


def _uniform_linear_model(config: harness.ScenarioConfig, f_prime: float,
                          coupling: float) -> LinearModel:
    scenario = harness.generate_scenario(config)
    a = scenario.graph.adjacency
    n = scenario.graph.n
    d_f = np.full(n, f_prime)
    h = np.where(a > 0, coupling, 0.0)
    q = a * h
    k = q.sum(axis=1)
    m = np.diag(d_f) + np.diag(k) - q
    return LinearModel(d_f=d_f, h=h, q=q, k=k, m=m, s=(m + m.T) / 2.0,
                       adjacency=a.copy())


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = harness.ScenarioConfig(**{**_config_dict(config), "seed": args.seed})
    if args.policy is not None:
        config = harness.ScenarioConfig(**{**_config_dict(config), "policy": args.policy})
    if args.rounds is not None:
        config = harness.ScenarioConfig(**{**_config_dict(config), "rounds": args.rounds})
    _ensure_destination(args.out, args.force)
    scenario = harness.generate_scenario(config)
    trace = harness.run_simulation(scenario)
    harness.export(trace, args.out)
    mean, sd, _ = trace.metrics[-1]
    total = len(trace.event_log)
    quiesced = (f"quiescent at round {trace.quiescent_round}"
                if trace.quiescent_round is not None else "round cap reached")
    print(f"rounds={trace.load_history.shape[0] - 1} handovers={total} "
          f"final_mean={mean:.6f} final_sd={sd:.6f} ({quiesced})")
    print(f"trace written to {args.out}")
    return 0


def _config_dict(config: harness.ScenarioConfig) -> dict:
    from dataclasses import fields
    return {f.name: getattr(config, f.name) for f in fields(config)}


def cmd_analyze(args) -> int:
    config = _load_config(args.config)
    scenario = harness.generate_scenario(config)
    lap = laplacian(scenario.graph)

    if args.mode == "discrete":
        eps = args.eps if args.eps is not None else config.accommodation_factor
        report = stability.check_discrete_step(lap, eps)
    elif args.mode == "conservative":
        model = _uniform_linear_model(config, args.f_prime, args.coupling)
        report = stability.check_conservative_hetero(model)
    elif args.mode == "nonconservative":
        model = _uniform_linear_model(config, args.f_prime, args.coupling)
        report = stability.check_nonconservative_hetero(model)
    else:
        raise harness.ConfigError(f"unknown analysis mode {args.mode!r}")

    text = report.render()
    print(text)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "analysis.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(f"report written to {out_path}")
    return 0


def cmd_bound(args) -> int:
    trace_dir = args.trace
    config = _load_config(trace_dir)
    loads, metric_rows = harness.read_history(os.path.join(trace_dir, harness.HISTORY_FILE))
    omega = harness.read_omega(os.path.join(trace_dir, harness.OMEGA_FILE))
    records = harness.read_events(os.path.join(trace_dir, harness.EVENTS_FILE))

    if omega.shape[0] == 0 or not np.any(omega):
        print("conservative trace: alpha=0, oscillation bound V~ = 0")
        return 0

    events = tuple(
        HandoverEvent(round=rec["round"],
                      request=HandoverRequest(user_id=rec["user"],
                                              source_bs=rec["source"],
                                              target_bs=rec["target"],
                                              load_out=rec["load_out"],
                                              load_in=rec["load_in"],
                                              rank_key=0.0))
        for rec in records)
    scenario = harness.generate_scenario(config)
    trace = harness.SimulationTrace(load_history=loads, event_log=events,
                                    omega_history=omega,
                                    metrics=tuple(metric_rows), stability=(),
                                    quiescent_round=None, config=config)
    bound = harness.trace_oscillation_bound(trace, scenario.graph)
    errors = loads - loads.mean(axis=1, keepdims=True)
    v_series = (errors * errors).sum(axis=1)
    tail = v_series[min(len(v_series) - 1, len(v_series) // 10):]
    print(f"gamma_sup={bound.gamma_max!r}")
    print(f"alpha_sup={bound.alpha_max!r}")
    if bound.bounded:
        print(f"v_tilde={bound.v_tilde!r}")
    else:
        print("v_tilde undefined (gamma >= 1); series reported only")
    print(f"empirical_tail_sup={float(tail.max())!r}")
    return 0


def _sweep_cell(cell_args: tuple) -> tuple:
    config_dict, users, policy, factor, seeds, out_dir = cell_args
    finals = []
    for seed in range(seeds):
        config = harness.ScenarioConfig(**{**config_dict, "user_count": users,
                                           "policy": policy,
                                           "accommodation_factor": factor,
                                           "seed": seed})
        scenario = harness.generate_scenario(config)
        trace = harness.run_simulation(scenario)
        dest = os.path.join(out_dir, f"users{users}_c{factor}_{policy}", f"seed{seed}")
        harness.export(trace, dest)
        mean, sd, _ = trace.metrics[-1]
        finals.append((mean, sd, len(trace.event_log)))
    mean_of = lambda idx: sum(f[idx] for f in finals) / len(finals)
    return (users, factor, policy, mean_of(0), mean_of(1), mean_of(2))


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    _ensure_destination(args.out, args.force)
    users_axis = [int(u) for u in args.users.split(",")] if args.users else [config.user_count]
    policy_axis = args.policies.split(",") if args.policies else [config.policy]
    factor_axis = ([float(c) for c in args.accommodations.split(",")]
                   if args.accommodations else [config.accommodation_factor])
    for policy in policy_axis:
        if policy not in balancer.POLICIES:
            raise harness.ConfigError(f"unknown policy {policy!r} in sweep axis")

    cells = [(_config_dict(config), users, policy, factor, args.seeds, args.out)
             for users in users_axis
             for factor in factor_axis
             for policy in policy_axis]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(cell) for cell in cells]

    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "aggregate.csv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("users,accommodation,policy,mean_load,sd,handovers\n")
        for users, factor, policy, mean, sd, count in rows:
            fh.write(f"{users},{factor},{policy},{repr(mean)},{repr(sd)},{repr(count)}\n")
    for users, factor, policy, mean, sd, count in rows:
        print(f"users={users} c={factor} policy={policy}: "
              f"mean={mean:.4f} sd={sd:.4f} handovers={count:.1f}")
    print(f"aggregate written to {table_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadsync",
        description="Simulate inter-station load balancing and analyze its stability.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one balancing simulation and export the trace")
    p.add_argument("config", help="path to a key=value configuration file")
    p.add_argument("--policy", choices=balancer.POLICIES, help="override the configured policy")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--rounds", type=int, help="override the round cap")
    p.add_argument("--out", default=_default_out(), help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="evaluate a stability criterion for a scenario")
    p.add_argument("config", help="config file or trace directory")
    p.add_argument("--mode", default="discrete",
                   choices=("discrete", "conservative", "nonconservative"),
                   help="which criterion to evaluate")
    p.add_argument("--eps", type=float, help="step size for the discrete criterion")
    p.add_argument("--f-prime", type=float, default=-0.5, dest="f_prime",
                   help="uniform self slope for the linear-model criteria")
    p.add_argument("--coupling", type=float, default=-1.0,
                   help="uniform coupling slope for the linear-model criteria")
    p.add_argument("--out", default=_default_out(), help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bound", help="compute the oscillation bound of a recorded trace")
    p.add_argument("trace", help="trace directory produced by simulate")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="run a cross product of scenarios")
    p.add_argument("config", help="base configuration file")
    p.add_argument("--users", help="comma-separated user counts")
    p.add_argument("--policies", help="comma-separated policies")
    p.add_argument("--accommodations", help="comma-separated accommodation factors")
    p.add_argument("--seeds", type=int, default=5, help="seeds per cell")
    p.add_argument("--workers", type=int, default=1, help="parallel cell workers")
    p.add_argument("--out", default=_default_out(), help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
