"""Scenario generation, user association, simulation orchestration and
trace persistence.

A scenario is a rectangular station grid with users placed uniformly over
the grid's bounding box plus a margin, drawn from a single seeded generator;
the same seed reproduces the trace byte for byte.  Association is
max-RSRP with zero offsets, ties to the lower station id.  The per-user PRB
demand at every station is precomputed once (the geometry never changes),
which makes rounds cheap and keeps every load derivable from the attachment
map.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import balancer, stability
from .balancer import (BalancerParams, HandoverEvent, LoadState, execute_round,
                       greedy_baseline_round, update_cio)
from .dynamics import DISCRETE_NONCONSERVATIVE, EpsilonMatrix, Trajectory
from .radio import BaseStation, RadioConstants, User, db_to_linear
from .topology import CoverageGraph, build_coverage_graph, laplacian


class UncoverableUserError(Exception):
    """A user has zero achievable rate at every station."""


class ConfigError(Exception):
    """Configuration file rejected; carries a line-anchored message."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, serializable description of one simulation setup."""

    grid_rows: int = 4
    grid_cols: int = 4
    spacing_m: float = 500.0
    coverage_radius_m: float = 300.0
    margin_m: float = 250.0
    user_count: int = 300
    user_demand_bps: float = 180e3
    seed: int = 0
    rounds: int | None = None
    tx_power_dbm: float = 46.0
    antenna_gain_dbi: float = 14.0
    rx_gain_dbi: float = 5.0
    total_prbs: int = 50
    prb_bandwidth_hz: float = 180e3
    noise_dbm: float | None = None
    hysteresis_db: float = 2.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    min_distance_km: float = 0.035
    policy: str = balancer.ALG1
    rho_th: float = 0.5
    accommodation_factor: float = 0.25
    cio_gain: float = 50.0
    cio_cap_db: float = 3.0

    def __post_init__(self):
        for name in ("grid_rows", "grid_cols", "user_count", "rounds", "total_prbs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def radio_constants(self) -> RadioConstants:
        return RadioConstants(prb_bandwidth_hz=self.prb_bandwidth_hz,
                              noise_dbm=self.noise_dbm,
                              hysteresis_db=self.hysteresis_db,
                              pathloss_intercept_db=self.pathloss_intercept_db,
                              pathloss_slope_db=self.pathloss_slope_db,
                              min_distance_km=self.min_distance_km)

    def balancer_params(self) -> BalancerParams:
        return BalancerParams(rho_th=self.rho_th,
                              accommodation_factor=self.accommodation_factor,
                              max_rounds=self.rounds,
                              policy=self.policy,
                              hysteresis_db=self.hysteresis_db,
                              cio_gain=self.cio_gain,
                              cio_cap_db=self.cio_cap_db)


@dataclass(frozen=True)
class Scenario:
    base_stations: tuple[BaseStation, ...]
    users: tuple[User, ...]
    constants: RadioConstants
    graph: CoverageGraph
    config: ScenarioConfig


@dataclass
class SimulationTrace:
    """Everything one run produced, in recomputable form."""

    load_history: np.ndarray
    event_log: tuple[HandoverEvent, ...]
    omega_history: np.ndarray
    metrics: tuple[tuple[float, float, int], ...]
    stability: tuple[stability.StabilityReport, ...]
    quiescent_round: int | None
    config: ScenarioConfig


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Station grid plus seeded uniform user placement."""
    constants = config.radio_constants()
    positions = [(c * config.spacing_m, r * config.spacing_m)
                 for r in range(config.grid_rows) for c in range(config.grid_cols)]
    base_stations = tuple(
        BaseStation(id=i, position=pos, tx_power_dbm=config.tx_power_dbm,
                    antenna_gain_dbi=config.antenna_gain_dbi,
                    total_prbs=config.total_prbs,
                    coverage_radius_m=config.coverage_radius_m)
        for i, pos in enumerate(positions))

    xs = [p[0] for p in positions]
    ys = [p[1] for p in positions]
    lo = min(min(xs), min(ys)) - config.margin_m
    hi = max(max(xs), max(ys)) + config.margin_m
    rng = np.random.default_rng(config.seed)
    user_pos = rng.uniform(lo, hi, size=(config.user_count, 2))
    users = tuple(
        User(id=u, position=(float(user_pos[u, 0]), float(user_pos[u, 1])),
             demand_rate_bps=config.user_demand_bps, rx_gain_dbi=config.rx_gain_dbi)
        for u in range(config.user_count))

    graph = build_coverage_graph([bs.position for bs in base_stations],
                                 [bs.coverage_radius_m for bs in base_stations])
    return Scenario(base_stations=base_stations, users=users, constants=constants,
                    graph=graph, config=config)


def associate_users(scenario: Scenario) -> LoadState:
    """Attach every user to its strongest station and tabulate demands.

    Computes the full RSRP and PRB-demand tables (users x stations) in one
    vectorized pass; the load state carries them for the balancer.
    """
    cfg = scenario.config
    constants = scenario.constants
    bs_pos = np.array([bs.position for bs in scenario.base_stations])
    user_pos = np.array([u.position for u in scenario.users])

    d_km = np.linalg.norm(user_pos[:, None, :] - bs_pos[None, :, :], axis=2) / 1000.0
    path_loss = (constants.pathloss_intercept_db
                 + constants.pathloss_slope_db
                 * np.log10(np.maximum(d_km, constants.min_distance_km)))
    rsrp = cfg.tx_power_dbm + cfg.antenna_gain_dbi + cfg.rx_gain_dbi - path_loss

    rx_mw = db_to_linear(rsrp)
    noise_mw = db_to_linear(constants.noise_dbm)
    total_mw = rx_mw.sum(axis=1, keepdims=True)
    sinr = rx_mw / (noise_mw + (total_mw - rx_mw))
    rate = constants.prb_bandwidth_hz * np.log2(1.0 + sinr)

    demand = np.zeros_like(rate, dtype=int)
    reachable = rate > 0
    demand[reachable] = np.ceil(cfg.user_demand_bps / rate[reachable]).astype(int)
    uncovered = np.nonzero(~reachable.any(axis=1))[0]
    if uncovered.size:
        raise UncoverableUserError(f"users {uncovered.tolist()} have no serving station")

    attachment = np.argmax(rsrp, axis=1)
    total_prbs = np.array([bs.total_prbs for bs in scenario.base_stations])
    return LoadState(attachment=attachment, demand_prbs=demand,
                     rsrp_dbm=rsrp, total_prbs=total_prbs)


def _round_omega(events: list[HandoverEvent], n_bs: int) -> np.ndarray:
    """Realized antisymmetric transfer residual of one round.

    Each handover perturbs source and target by different amounts; half the
    gap lands on each end, which reproduces the symmetric/antisymmetric
    split of the transfer fractions without dividing by load differences.
    """
    omega = np.zeros(n_bs)
    for event in events:
        r = event.request
        half_gap = (r.load_in - r.load_out) / 2.0
        omega[r.source_bs] += half_gap
        omega[r.target_bs] += half_gap
    return omega


def run_simulation(scenario: Scenario, params: BalancerParams | None = None,
                   rounds: int | None = None) -> SimulationTrace:
    """Drive balancing rounds to quiescence or the round cap.

    Records the load vector after every round, the accepted events, the
    per-round non-conservation residual, and a final stability analysis of
    the configured step on the coverage graph.
    """
    if params is None:
        params = scenario.config.balancer_params()
    if rounds is None:
        rounds = params.max_rounds

    state = associate_users(scenario)
    theta: dict[tuple[int, int], float] = {}
    n_bs = scenario.graph.n

    load_history = [state.loads.copy()]
    omega_history: list[np.ndarray] = []
    event_log: list[HandoverEvent] = []
    quiescent_round = None

    for r in range(rounds):
        if params.policy == balancer.GREEDY:
            state, events = greedy_baseline_round(state, scenario.graph, params,
                                                  round_index=r)
        else:
            state, events = execute_round(state, scenario.graph, params,
                                          round_index=r)
        if not events:
            quiescent_round = r
            break
        theta = update_cio(events, state, theta, params.hysteresis_db)
        event_log.extend(events)
        omega_history.append(_round_omega(events, n_bs))
        load_history.append(state.loads.copy())

    history = np.array(load_history)
    metric_rows = []
    counts = _per_round_counts(event_log, history.shape[0] - 1)
    for idx in range(history.shape[0]):
        row = history[idx]
        handovers = 0 if idx == 0 else counts[idx - 1]
        metric_rows.append((float(row.mean()), float(row.std()), handovers))

    lap = laplacian(scenario.graph)
    reports = (stability.check_discrete_step(lap, params.accommodation_factor),)
    return SimulationTrace(load_history=history,
                           event_log=tuple(event_log),
                           omega_history=(np.array(omega_history)
                                          if omega_history else np.empty((0, n_bs))),
                           metrics=tuple(metric_rows),
                           stability=reports,
                           quiescent_round=quiescent_round,
                           config=scenario.config)


def _per_round_counts(event_log: list[HandoverEvent], rounds_recorded: int) -> list[int]:
    counts = [0] * rounds_recorded
    for event in event_log:
        counts[event.round] += 1
    return counts


def metrics(trace: SimulationTrace) -> tuple[tuple[float, float, int], ...]:
    """Per-row (mean, sd, handovers); recomputed from the load history."""
    if trace.load_history.shape[0] == 0:
        raise ValueError("empty trace")
    counts = _per_round_counts(list(trace.event_log), trace.load_history.shape[0] - 1)
    rows = []
    for idx in range(trace.load_history.shape[0]):
        row = trace.load_history[idx]
        rows.append((float(row.mean()), float(row.std()),
                     0 if idx == 0 else counts[idx - 1]))
    return tuple(rows)


def implied_epsilon_history(trace: SimulationTrace, graph: CoverageGraph) -> list[EpsilonMatrix]:
    """Per-round transfer fractions implied by the event log.

    Fractions follow from each round's opening loads; transfers against the
    gradient or beyond it are clipped into [0, 1), so this is a diagnostic
    reconstruction rather than an exact inverse.
    """
    n = graph.n
    by_round: dict[int, list[HandoverEvent]] = {}
    for event in trace.event_log:
        by_round.setdefault(event.round, []).append(event)
    history = []
    for idx in range(trace.omega_history.shape[0]):
        loads = trace.load_history[idx]
        eps = np.zeros((n, n))
        round_key = sorted(by_round)[idx]
        for event in by_round[round_key]:
            r = event.request
            denom = loads[r.source_bs] - loads[r.target_bs]
            if abs(denom) < 1e-9:
                continue
            eps[r.target_bs, r.source_bs] += r.load_in / denom
            eps[r.source_bs, r.target_bs] += r.load_out / denom
        eps = np.clip(eps, 0.0, 1.0 - 1e-9)
        np.fill_diagonal(eps, 0.0)
        history.append(EpsilonMatrix(values=eps))
    return history


def trace_oscillation_bound(trace: SimulationTrace, graph: CoverageGraph) -> stability.OscillationBound:
    """Oscillation bound of a recorded run, via the implied transfer
    fractions."""
    trajectory = Trajectory(states=trace.load_history, omegas=trace.omega_history,
                            step_kind=DISCRETE_NONCONSERVATIVE)
    eps_history = implied_epsilon_history(trace, graph)
    return stability.oscillation_bound(trajectory, eps_history, graph)


# --- configuration files -----------------------------------------------

_CONFIG_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_INT_KEYS = {"grid_rows", "grid_cols", "user_count", "seed", "rounds", "total_prbs"}
_STR_KEYS = {"policy"}
_OPTIONAL_FLOAT_KEYS = {"noise_dbm"}


def parse_config(path: str) -> ScenarioConfig:
    """Read a key = value configuration file; unknown keys are rejected
    with the offending line number."""
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                if key in _STR_KEYS:
                    values[key] = value
                elif key in _INT_KEYS:
                    values[key] = int(value)
                elif key in _OPTIONAL_FLOAT_KEYS and value.lower() in ("none", "auto"):
                    values[key] = None
                else:
                    values[key] = float(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}")
    try:
        return ScenarioConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")


def write_config(config: ScenarioConfig, path: str) -> None:
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(config, f.name)
        if value is None:
            value = "auto"
        lines.append(f"{f.name} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# --- trace persistence --------------------------------------------------

HISTORY_FILE = "history.csv"
EVENTS_FILE = "events.log"
OMEGA_FILE = "omega.csv"
STABILITY_FILE = "stability.txt"
CONFIG_FILE = "config.txt"


def export(trace: SimulationTrace, destination: str, fmt: str = "csv") -> list[str]:
    """Write the trace as plain-text files; byte-identical for equal seeds.

    history.csv carries the loads and per-row metrics, events.log one
    key=value record per handover, omega.csv the per-round residuals,
    stability.txt the rendered reports, config.txt the resolved scenario.
    """
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    try:
        os.makedirs(destination, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create destination {destination}: {exc}")

    n_bs = trace.load_history.shape[1]
    written = []

    path = os.path.join(destination, HISTORY_FILE)
    with open(path, "w", encoding="utf-8") as fh:
        header = ["round"] + [f"bs_{i}" for i in range(n_bs)] + ["mean", "sd", "handovers"]
        fh.write(",".join(header) + "\n")
        for idx in range(trace.load_history.shape[0]):
            mean, sd, count = trace.metrics[idx]
            cells = ([str(idx)]
                     + [repr(float(x)) for x in trace.load_history[idx]]
                     + [repr(mean), repr(sd), str(count)])
            fh.write(",".join(cells) + "\n")
    written.append(path)

    path = os.path.join(destination, EVENTS_FILE)
    with open(path, "w", encoding="utf-8") as fh:
        for event in trace.event_log:
            r = event.request
            fh.write(f"round={event.round} user={r.user_id} source={r.source_bs} "
                     f"target={r.target_bs} load_out={repr(float(r.load_out))} "
                     f"load_in={repr(float(r.load_in))}\n")
    written.append(path)

    path = os.path.join(destination, OMEGA_FILE)
    with open(path, "w", encoding="utf-8") as fh:
        header = ["round"] + [f"bs_{i}" for i in range(n_bs)]
        fh.write(",".join(header) + "\n")
        for idx in range(trace.omega_history.shape[0]):
            cells = [str(idx + 1)] + [repr(float(x)) for x in trace.omega_history[idx]]
            fh.write(",".join(cells) + "\n")
    written.append(path)

    path = os.path.join(destination, STABILITY_FILE)
    with open(path, "w", encoding="utf-8") as fh:
        for report in trace.stability:
            fh.write(report.render() + "\n---\n")
        if trace.quiescent_round is not None:
            fh.write(f"quiescent_round: {trace.quiescent_round}\n")
    written.append(path)

    path = os.path.join(destination, CONFIG_FILE)
    write_config(trace.config, path)
    written.append(path)
    return written


def read_history(path: str) -> tuple[np.ndarray, list[tuple[float, float, int]]]:
    """Parse a history.csv back into loads and metric rows."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    n_bs = len([h for h in header if h.startswith("bs_")])
    loads = []
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        loads.append([float(c) for c in cells[1:1 + n_bs]])
        rows.append((float(cells[1 + n_bs]), float(cells[2 + n_bs]), int(cells[3 + n_bs])))
    return np.array(loads), rows


def read_events(path: str) -> list[dict]:
    """Parse an events.log back into dict records."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = {}
            for token in line.split():
                key, _, value = token.partition("=")
                if key in ("round", "user", "source", "target"):
                    record[key] = int(value)
                else:
                    record[key] = float(value)
            records.append(record)
    return records


def read_omega(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    rows = [[float(c) for c in ln.split(",")[1:]] for ln in lines[1:]]
    if not rows:
        header = lines[0].split(",")
        return np.empty((0, len(header) - 1))
    return np.array(rows)
