"""Radio-layer arithmetic: path loss, RSRP, SINR, per-PRB rate, and PRB load.

Every quantity downstream of the balancer (PRB demands, cell loads, handover
measurements) bottoms out in the functions here.  The link model is
deterministic: log-distance path loss plus fixed antenna gains, no fading.
All dB/linear conversions go through ``db_to_linear``/``linear_to_db`` so the
two scales cannot drift apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

THERMAL_NOISE_DBM_PER_HZ = -174.0
DEFAULT_NOISE_FIGURE_DB = 9.0


class UnreachableUserError(Exception):
    """Raised when a user has zero achievable rate at a base station."""


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    if value <= 0.0:
        raise ValueError(f"cannot convert non-positive value {value} to dB")
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class RadioConstants:
    """Link-budget constants shared by every base station.

    ``noise_dbm`` is the noise power over one PRB.  When left as None it is
    derived from thermal noise over ``prb_bandwidth_hz`` plus a receiver
    noise figure, which lands near -112.4 dBm for a 180 kHz PRB.
    """

    prb_bandwidth_hz: float = 180e3
    noise_dbm: float | None = None
    hysteresis_db: float = 2.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    min_distance_km: float = 0.035

    def __post_init__(self):
        if self.prb_bandwidth_hz <= 0:
            raise ValueError("prb_bandwidth_hz must be positive")
        if self.min_distance_km <= 0:
            raise ValueError("min_distance_km must be positive")
        if self.noise_dbm is None:
            derived = (THERMAL_NOISE_DBM_PER_HZ
                       + 10.0 * math.log10(self.prb_bandwidth_hz)
                       + DEFAULT_NOISE_FIGURE_DB)
            object.__setattr__(self, "noise_dbm", derived)


@dataclass(frozen=True)
class BaseStation:
    """A cell site: position, transmit budget and PRB capacity."""

    id: int
    position: tuple[float, float]
    tx_power_dbm: float = 46.0
    antenna_gain_dbi: float = 14.0
    total_prbs: int = 50
    coverage_radius_m: float = 300.0
    cio_db: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.total_prbs <= 0:
            raise ValueError("total_prbs must be positive")
        if not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")
        if self.coverage_radius_m <= 0:
            raise ValueError("coverage_radius_m must be positive")

    def cio_toward(self, other_id: int) -> float:
        return self.cio_db.get(other_id, 0.0)


@dataclass(frozen=True)
class User:
    """A subscriber with a constant bit-rate requirement."""

    id: int
    position: tuple[float, float]
    demand_rate_bps: float
    rx_gain_dbi: float = 5.0

    def __post_init__(self):
        if self.demand_rate_bps <= 0:
            raise ValueError("demand_rate_bps must be positive")


def distance_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1]) / 1000.0


def path_loss_db(d_km: float, constants: RadioConstants) -> float:
    """Log-distance path loss; distances below the model floor are clamped."""
    if d_km < 0:
        raise ValueError("distance must be non-negative")
    d_eff = max(d_km, constants.min_distance_km)
    return constants.pathloss_intercept_db + constants.pathloss_slope_db * math.log10(d_eff)


def rsrp_dbm(bs: BaseStation, user: User, constants: RadioConstants) -> float:
    """Received reference-signal power at the user from one base station."""
    d = distance_km(bs.position, user.position)
    return (bs.tx_power_dbm + bs.antenna_gain_dbi + user.rx_gain_dbi
            - path_loss_db(d, constants))


def sinr(user: User, serving: BaseStation, all_bs: list[BaseStation],
         constants: RadioConstants) -> float:
    """Linear SINR at the user: serving power over noise plus the summed
    received power of every other station."""
    p_serving = None
    interference_mw = 0.0
    for bs in all_bs:
        p_mw = db_to_linear(rsrp_dbm(bs, user, constants))
        if bs.id == serving.id:
            p_serving = p_mw
        else:
            interference_mw += p_mw
    if p_serving is None:
        raise ValueError(f"serving station {serving.id} not in station list")
    noise_mw = db_to_linear(constants.noise_dbm)
    return p_serving / (noise_mw + interference_mw)


def prb_rate(sinr_linear: float, constants: RadioConstants) -> float:
    """Achievable rate over one PRB, bit/s."""
    if sinr_linear < 0:
        raise ValueError("sinr must be non-negative")
    return constants.prb_bandwidth_hz * math.log2(1.0 + sinr_linear)


def prb_demand(demand_rate_bps: float, per_prb_rate_bps: float) -> int:
    """Smallest whole number of PRBs covering the demanded rate.

    PRBs are indivisible, so the rate quotient is ceiled.
    """
    if per_prb_rate_bps <= 0:
        raise UnreachableUserError(
            f"per-PRB rate {per_prb_rate_bps} leaves the user unreachable")
    return max(1, math.ceil(demand_rate_bps / per_prb_rate_bps))


def bs_load(bs: BaseStation, attached: list[tuple[User, int]]) -> float:
    """Fraction of the station's PRBs demanded by its attached users.

    May exceed 1: overload is representable, not an error.
    """
    total = 0
    for _, prbs in attached:
        if prbs < 0:
            raise ValueError("PRB counts must be non-negative")
        total += prbs
    return total / bs.total_prbs


def user_load_share(user: User, bs: BaseStation, all_bs: list[BaseStation],
                    constants: RadioConstants) -> float:
    """Load fraction the user would impose on a station if attached to it."""
    rate = prb_rate(sinr(user, bs, all_bs, constants), constants)
    return prb_demand(user.demand_rate_bps, rate) / bs.total_prbs
