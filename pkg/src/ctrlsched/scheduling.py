"""Schedule actions, latency constraints, transmission simulation, baselines.

A schedule is a binary channel-assignment matrix (rows = channels,
columns = systems) plus a per-system data rate. Transmissions within a
channel run back to back, so the channel's latency is the sum of its
airtimes; the window budget ``t_max`` may only be missed with
probability ``delta``.
"""

from dataclasses import dataclass

import numpy as np

from . import phy as phy_mod
from .plants import lyapunov
from .validation import check_channel_matrix, check_positive, check_probability


@dataclass
class Schedule:
    """Channel assignments (n x m, binary) and data rates (length m, Mb/s).

    ``raw_rates`` optionally carries the pre-clamp rate samples a
    stochastic policy drew; the training code needs them to evaluate the
    action's exact log-density. Serialization drops them.
    """

    assign: np.ndarray
    rates: np.ndarray
    raw_rates: np.ndarray = None

    def __post_init__(self):
        self.assign = np.asarray(self.assign)
        if self.assign.ndim != 2:
            raise ValueError("assign must be an n x m matrix")
        if not np.isin(self.assign, (0, 1)).all():
            raise ValueError("assign entries must be 0 or 1")
        self.assign = self.assign.astype(np.int8)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.rates.shape != (self.assign.shape[1],):
            raise ValueError(
                f"rates must have one entry per system; got {self.rates.shape} "
                f"for m={self.assign.shape[1]}"
            )
        if self.raw_rates is not None:
            self.raw_rates = np.asarray(self.raw_rates, dtype=float)

    @property
    def n(self):
        return self.assign.shape[0]

    @property
    def m(self):
        return self.assign.shape[1]


def schedule_to_json(schedule):
    """Row-major JSON form used in logs and replay files."""
    return {
        "n": schedule.n,
        "m": schedule.m,
        "assign": [int(v) for v in schedule.assign.ravel()],
        "rates": [float(r) for r in schedule.rates],
    }


def schedule_from_json(obj):
    assign = np.asarray(obj["assign"], dtype=np.int8).reshape(obj["n"], obj["m"])
    return Schedule(assign=assign, rates=np.asarray(obj["rates"], dtype=float))


@dataclass
class LatencyConstraint:
    """Window budget t_max (seconds) and violation tolerance delta."""

    t_max: float = 5e-4
    delta: float = 0.05

    def __post_init__(self):
        self.t_max = check_positive(self.t_max, "t_max")
        self.delta = float(self.delta)
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta={self.delta} must lie in (0, 1)")


@dataclass
class BaselineParams:
    """Rate selection target and tie-breaking for the heuristic schedulers."""

    target_pdr: float = 0.95

    def __post_init__(self):
        self.target_pdr = float(self.target_pdr)
        if not 0.0 < self.target_pdr < 1.0:
            raise ValueError(f"target_pdr={self.target_pdr} must lie in (0, 1)")


def constraint_from_times(times, lat):
    """Constraint samples from airtime totals: delta where the budget is
    met, delta - 1 where it is blown. Batch means therefore live in
    [delta-1, delta], and a nonnegative mean is the
    satisfied-at-tolerance condition.
    """
    return np.where(np.asarray(times, dtype=float) <= lat.t_max,
                    lat.delta, lat.delta - 1.0)


def constraint_values(schedule, phy, lat):
    """Per-channel constraint samples of one schedule (length-n vector)."""
    return constraint_from_times(phy_mod.channel_times(schedule, phy), lat)


def baseline_rate(h_value, phy, params):
    """Fastest MCS rate still meeting the target PDR at gain ``h_value``.

    Falls back to the slowest table rate when no rate qualifies (the
    heuristics always transmit at something).
    """
    if h_value < 0:
        raise ValueError("fading gain must be nonnegative")
    best = None
    for rate in phy.mcs_table:
        if phy_mod.pdr(phy, h_value, rate) >= params.target_pdr:
            best = rate  # table is ascending, keep the fastest qualifier
    return best if best is not None else phy.mcs_table[0]


def _greedy_assign(order, channels, phy, lat, params):
    """Shared greedy core of both baselines.

    Systems are visited in ``order``; each takes its best-gain channel
    whose budget still has room for it, at the PDR-targeted rate, one
    channel per system. Systems that fit nowhere stay unscheduled.
    """
    m, n = channels.shape
    assign = np.zeros((n, m), dtype=np.int8)
    rates = np.full(m, phy.rate_min)
    used = np.zeros(n)
    for i in order:
        for j in np.argsort(-channels[i], kind="stable"):  # best gain, low index on ties
            rate = baseline_rate(channels[i, j], phy, params)
            tau = phy_mod.tx_time(rate, phy.packet_bits)
            if used[j] + tau <= lat.t_max:
                assign[j, i] = 1
                rates[i] = rate
                used[j] += tau
                break
    return Schedule(assign=assign, rates=rates)


def round_robin(cycle_index, states, channels, phy, lat, params):
    """Control-agnostic baseline: rotate which system gets first pick."""
    channels = check_channel_matrix(channels)
    m = channels.shape[0]
    start = cycle_index % m
    order = [(start + k) % m for k in range(m)]
    return _greedy_assign(order, channels, phy, lat, params)


def priority_ranking(states, channels, phy, lat, params, lyaps=None):
    """Control-aware baseline: largest Lyapunov value transmits first.

    ``lyaps`` supplies per-system Lyapunov matrices; identity (squared
    state norm) when omitted. Ties break toward the lower system index.
    """
    channels = check_channel_matrix(channels)
    m = channels.shape[0]
    if lyaps is None:
        values = [float(np.dot(x, x)) for x in states]
    else:
        values = [lyapunov(x, P) for x, P in zip(states, lyaps)]
    order = sorted(range(m), key=lambda i: (-values[i], i))
    return _greedy_assign(order, channels, phy, lat, params)


def simulate_transmissions(schedule, channels, phy, lat, rng):
    """Execute one scheduling window and report who got through.

    Within each channel, transmissions run in ascending system order.
    Any transmission that would finish past ``t_max`` is cut off and
    counted as failed (the budget is enforced physically); the rest
    succeed independently with their link PDR. A system is received if
    at least one of its transmissions succeeds.

    Returns ``(received, realized_times)``: a length-m boolean array and
    the per-channel busy times, which never exceed ``t_max``.
    """
    channels = check_channel_matrix(
        channels, m=schedule.m, n=schedule.n
    )
    received = np.zeros(schedule.m, dtype=bool)
    realized = np.zeros(schedule.n)
    tau = phy_mod.tx_time(schedule.rates, phy.packet_bits)
    # One uniform per assigned transmission, drawn in a fixed order so the
    # stream stays aligned no matter how truncation plays out.
    draws = rng.random(int(schedule.assign.sum()))
    k = 0
    for j in range(schedule.n):
        t = 0.0
        for i in range(schedule.m):
            if not schedule.assign[j, i]:
                continue
            u = draws[k]
            k += 1
            finish = t + tau[i]
            if finish > lat.t_max + 1e-15:
                t = lat.t_max  # truncated mid-air; channel busy to the budget
                continue
            t = finish
            if u < phy_mod.pdr(phy, channels[i, j], schedule.rates[i]):
                received[i] = True
        realized[j] = min(t, lat.t_max)
    return received, realized
