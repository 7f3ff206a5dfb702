"""Threshold-triggered handover balancing and the greedy CIO baseline.

A balancing round follows the request/accept flow: stations above the load
threshold that also sit above their neighborhood average become sources,
under-threshold stations with positive accommodation accept, and each accept
immediately refreshes loads, budgets and the candidate lists.  Accepted
users are struck from all future request lists, so a run performs finitely
many handovers and always reaches a quiescent round.

The greedy baseline has none of that machinery: every unequal neighbor pair
hands over its best boundary user each round, with the offset window opened
in proportion to the load difference.  It deliberately overshoots and keeps
trading users forever; it exists to exhibit the oscillation the capped
algorithm eliminates.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .topology import CoverageGraph

ALG1 = "alg1"
ALG2 = "alg2"
ALG3 = "alg3"
GREEDY = "greedy"
POLICIES = (ALG1, ALG2, ALG3, GREEDY)

CIO_MARGIN_DB = 0.001


@dataclass(frozen=True)
class BalancerParams:
    """Knobs of the balancing loop.

    ``accommodation_factor`` scales each station's per-round transfer budget;
    ``cio_gain``/``cio_cap_db`` shape the greedy baseline's offset window
    (dB per unit load difference, capped).
    """

    rho_th: float = 0.5
    accommodation_factor: float = 0.25
    max_rounds: int = 100
    policy: str = ALG1
    hysteresis_db: float = 2.0
    alg2_descending: bool = True
    alg3_ascending: bool = True
    cio_gain: float = 50.0
    cio_cap_db: float = 3.0

    def __post_init__(self):
        if not 0 < self.rho_th <= 1:
            raise ValueError("rho_th must lie in (0, 1]")
        if not 0 < self.accommodation_factor <= 1:
            raise ValueError("accommodation_factor must lie in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass(frozen=True)
class HandoverRequest:
    user_id: int
    source_bs: int
    target_bs: int
    load_out: float
    load_in: float
    rank_key: float

    def __post_init__(self):
        if self.source_bs == self.target_bs:
            raise ValueError("source and target must differ")
        if self.load_out <= 0 or self.load_in <= 0:
            raise ValueError("load shares must be positive")


@dataclass(frozen=True)
class HandoverEvent:
    round: int
    request: HandoverRequest

    @property
    def delta_source(self) -> float:
        return -self.request.load_out

    @property
    def delta_target(self) -> float:
        return self.request.load_in


@dataclass
class LoadState:
    """Attachment map plus the static demand and measurement tables.

    ``demand_prbs[u, b]`` is the whole-PRB demand of user u at station b,
    zero when the user is unreachable there.  ``handed`` collects users
    already handed over in this run; they are removed from every later
    request list.
    """

    attachment: np.ndarray
    demand_prbs: np.ndarray
    rsrp_dbm: np.ndarray
    total_prbs: np.ndarray
    handed: set[int] = field(default_factory=set)

    def __post_init__(self):
        self.attachment = np.asarray(self.attachment, dtype=int)
        self.demand_prbs = np.asarray(self.demand_prbs, dtype=int)
        self.rsrp_dbm = np.asarray(self.rsrp_dbm, dtype=float)
        self.total_prbs = np.asarray(self.total_prbs, dtype=int)
        self._loads = self.recompute_loads()

    @property
    def n_users(self) -> int:
        return self.attachment.shape[0]

    @property
    def n_bs(self) -> int:
        return self.total_prbs.shape[0]

    @property
    def loads(self) -> np.ndarray:
        return self._loads

    def recompute_loads(self) -> np.ndarray:
        prbs = np.zeros(self.n_bs)
        for u, b in enumerate(self.attachment):
            prbs[b] += self.demand_prbs[u, b]
        return prbs / self.total_prbs

    def share(self, user: int, bs: int) -> float:
        """Load fraction user would impose on the station; 0 if unreachable."""
        return self.demand_prbs[user, bs] / self.total_prbs[bs]

    def users_at(self, bs: int) -> list[int]:
        return [int(u) for u in np.nonzero(self.attachment == bs)[0]]

    def move_user(self, user: int, target: int) -> None:
        source = self.attachment[user]
        self._loads[source] -= self.share(user, source)
        self._loads[target] += self.share(user, target)
        self.attachment[user] = target

    def copy(self) -> "LoadState":
        clone = LoadState(attachment=self.attachment.copy(),
                          demand_prbs=self.demand_prbs,
                          rsrp_dbm=self.rsrp_dbm,
                          total_prbs=self.total_prbs,
                          handed=set(self.handed))
        # carry the evolved loads: a fresh summation can disagree with the
        # incrementally updated values in the last bit, and budget signs at
        # exact neighborhood ties must not depend on which copy is asked
        clone._loads = self._loads.copy()
        return clone


def accommodation(i: int, loads: np.ndarray, graph: CoverageGraph,
                  params: BalancerParams) -> float:
    """Opening transfer budget of station i for one round.

    Magnitude is the capped neighborhood imbalance; the sign says which way
    the station is allowed to trade: negative above its neighborhood (must
    shed), positive below it (can absorb).  execute_round draws the budget
    down as accepts occur.
    """
    a = graph.adjacency[i]
    diffs = loads - loads[i]
    signed = float(np.dot(a, diffs))
    magnitude = params.accommodation_factor * float(np.dot(a, np.abs(diffs)))
    return float(np.sign(signed)) * magnitude


def a3_trigger(m_target_dbm: float, m_serving_dbm: float, theta_db: float,
               hysteresis_db: float) -> bool:
    """Handover trigger: offset-boosted target measurement must beat the
    serving measurement plus hysteresis."""
    return m_target_dbm + theta_db > hysteresis_db + m_serving_dbm


def _rank_key(params: BalancerParams, load_out: float, load_in: float) -> float:
    if params.policy == ALG1:
        return abs(load_in - load_out)
    if params.policy == ALG2:
        return -load_out if params.alg2_descending else load_out
    if params.policy == ALG3:
        return load_in if params.alg3_ascending else -load_in
    raise ValueError(f"policy {params.policy!r} has no ranking")


def _opening_budgets(loads: np.ndarray, graph: CoverageGraph,
                     params: BalancerParams) -> np.ndarray:
    return np.array([accommodation(i, loads, graph, params) for i in range(graph.n)])


def build_requests(state: LoadState, graph: CoverageGraph, params: BalancerParams,
                   loads: np.ndarray | None = None,
                   budgets: np.ndarray | None = None) -> dict[int, list[HandoverRequest]]:
    """Ranked candidate lists per overloaded source.

    A source lists every reachable attached user toward every eligible
    neighbor (under threshold, positive budget), ranked by the policy key
    with user id as the tie break.  Pass live ``loads``/``budgets`` to build
    mid-round lists; by default the opening values are used.
    """
    if loads is None:
        loads = state.loads.copy()
    if budgets is None:
        budgets = _opening_budgets(loads, graph, params)
    requests: dict[int, list[HandoverRequest]] = {}
    for i in range(graph.n):
        if loads[i] <= params.rho_th or budgets[i] >= 0:
            continue
        candidates = []
        for j in graph.neighbors(i):
            if loads[j] >= params.rho_th or budgets[j] <= 0:
                continue
            for u in state.users_at(i):
                if u in state.handed or state.demand_prbs[u, j] == 0:
                    continue
                load_out = state.share(u, i)
                load_in = state.share(u, j)
                candidates.append(HandoverRequest(
                    user_id=u, source_bs=i, target_bs=j,
                    load_out=load_out, load_in=load_in,
                    rank_key=_rank_key(params, load_out, load_in)))
        candidates.sort(key=lambda r: (r.rank_key, r.user_id))
        if candidates:
            requests[i] = candidates
    return requests


def execute_round(state: LoadState, graph: CoverageGraph, params: BalancerParams,
                  round_index: int = 0) -> tuple[LoadState, list[HandoverEvent]]:
    """One balancing round; returns the new state and the accepted events.

    Sources are fixed at round start (overloaded and above their
    neighborhood); each accept pass lets every eligible target take its
    best admissible request.  An accept must fit the target's remaining
    budget, keep the target under the threshold, and must not leave the
    target more loaded than the source.  Loads, budgets and candidate lists
    refresh after every accept; accepted users never re-enter a list.
    """
    new_state = state.copy()
    loads = new_state.loads
    budgets = _opening_budgets(loads, graph, params)
    sources = [i for i in range(graph.n)
               if loads[i] > params.rho_th and budgets[i] < 0]
    events: list[HandoverEvent] = []

    while True:
        accepted_this_pass = False
        for j in range(graph.n):
            if loads[j] >= params.rho_th or budgets[j] <= 0:
                continue
            best: tuple[tuple[float, int], HandoverRequest] | None = None
            for i in sources:
                if not graph.adjacency[i, j] or budgets[i] >= 0:
                    continue
                for u in new_state.users_at(i):
                    if u in new_state.handed or new_state.demand_prbs[u, j] == 0:
                        continue
                    load_in = new_state.share(u, j)
                    load_out = new_state.share(u, i)
                    if load_in > budgets[j]:
                        continue
                    if loads[j] + load_in > loads[i] - load_out:
                        continue
                    key = (_rank_key(params, load_out, load_in), u)
                    if best is None or key < best[0]:
                        request = HandoverRequest(
                            user_id=u, source_bs=i, target_bs=j,
                            load_out=load_out, load_in=load_in, rank_key=key[0])
                        best = (key, request)
            if best is None:
                continue
            request = best[1]
            new_state.move_user(request.user_id, j)
            budgets[j] -= request.load_in
            # a shed draws the negative budget toward zero but never banks a
            # positive balance: accommodation is consumed, not earned back
            budgets[request.source_bs] = min(0.0, budgets[request.source_bs]
                                             + request.load_out)
            new_state.handed.add(request.user_id)
            events.append(HandoverEvent(round=round_index, request=request))
            accepted_this_pass = True
        if not accepted_this_pass:
            break
    return new_state, events


def update_cio(events: list[HandoverEvent], state: LoadState,
               theta_map: dict[tuple[int, int], float],
               hysteresis_db: float) -> dict[tuple[int, int], float]:
    """Set the per-pair offsets so every executed handover is trigger
    consistent.

    For each (target, source) pair seen in the events, the offset becomes
    the worst required margin over its handed users plus a small slack that
    turns the boundary equality into a strict trigger.  Pairs without
    events keep their offsets.
    """
    updated = dict(theta_map)
    required: dict[tuple[int, int], float] = {}
    for event in events:
        r = event.request
        u = r.user_id
        need = (state.rsrp_dbm[u, r.source_bs] + hysteresis_db
                - state.rsrp_dbm[u, r.target_bs])
        pair = (r.target_bs, r.source_bs)
        required[pair] = max(required.get(pair, -np.inf), need)
    for pair, need in required.items():
        updated[pair] = need + CIO_MARGIN_DB
    return updated


def greedy_baseline_round(state: LoadState, graph: CoverageGraph,
                          params: BalancerParams,
                          round_index: int = 0) -> tuple[LoadState, list[HandoverEvent]]:
    """One round of the uncapped pairwise baseline.

    Every unequal adjacent pair opens a trigger window proportional to its
    load difference and hands over the boundary user with the strongest
    signal toward the quieter station.  No accommodation budget, no
    threshold, no quiescence: pairs overshoot by whole users and keep
    trading, which is the oscillation this baseline exists to show.
    """
    new_state = state.copy()
    loads = new_state.loads
    moved: set[int] = set()
    events: list[HandoverEvent] = []
    hys = params.hysteresis_db
    for p, q in graph.edges():
        if loads[p] > loads[q]:
            src, tgt = p, q
        elif loads[q] > loads[p]:
            src, tgt = q, p
        else:
            continue
        window = hys + min(params.cio_gain * (loads[src] - loads[tgt]), params.cio_cap_db)
        best: tuple[tuple[float, int], int] | None = None
        for u in new_state.users_at(src):
            if u in moved or new_state.demand_prbs[u, tgt] == 0:
                continue
            if not a3_trigger(new_state.rsrp_dbm[u, tgt], new_state.rsrp_dbm[u, src],
                              window, hys):
                continue
            key = (-(new_state.rsrp_dbm[u, tgt] - new_state.rsrp_dbm[u, src]), u)
            if best is None or key < best[0]:
                best = (key, u)
        if best is None:
            continue
        u = best[1]
        request = HandoverRequest(
            user_id=u, source_bs=src, target_bs=tgt,
            load_out=new_state.share(u, src), load_in=new_state.share(u, tgt),
            rank_key=best[0][0])
        new_state.move_user(u, tgt)
        moved.add(u)
        events.append(HandoverEvent(round=round_index, request=request))
    return new_state, events
