"""Closed-loop rollouts and paired scheduler comparisons.

A rollout advances the whole plant ensemble for a fixed number of
control cycles: draw fading, ask the scheduler for a schedule, simulate
the transmissions, then step every plant with fresh noise. Every random
consumer (fading, plant noise, transmission outcomes, scheduler
sampling, initial states) gets its own named stream derived from one
seed, so two schedulers rolled out under the same seed face byte-for-
byte identical channels, noise, and initial states; blake2b digests of
the fading and noise draws make that pairing checkable instead of
assumed.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from . import phy as phy_mod
from .policy import sample_action
from .scheduling import (
    BaselineParams,
    Schedule,
    priority_ranking,
    round_robin,
    simulate_transmissions,
)
from .seeding import substream

# Past this magnitude a state is declared diverged and frozen, so one
# runaway plant cannot overflow the others' summary metrics.
DIVERGENCE_SENTINEL = 1e12


@dataclass
class RolloutConfig:
    """Horizon, stability rule, and execution options for evaluation."""

    horizon: int = 2000
    initial_state_box: tuple = (-10.0, 10.0)
    stability_threshold: float = 100.0
    eval_window: float = 0.25
    num_seeds: int = 10
    quantize_rates: bool = True
    execution: str = "mean"  # "mean" or "sample" for learned policies

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        lo, hi = map(float, self.initial_state_box)
        if lo > hi:
            raise ValueError("initial_state_box must satisfy lo <= hi")
        self.initial_state_box = (lo, hi)
        if self.stability_threshold <= 0:
            raise ValueError("stability_threshold must be positive")
        if not 0.0 < self.eval_window <= 1.0:
            raise ValueError("eval_window must lie in (0, 1]")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be at least 1")
        if self.execution not in ("mean", "sample"):
            raise ValueError(
                f"execution must be 'mean' or 'sample', got {self.execution!r}"
            )


@dataclass
class RolloutResult:
    """Everything one rollout produced, plus pairing digests."""

    trajectories: np.ndarray  # (horizon, m, p) states after each cycle
    initial_states: np.ndarray  # (m, p)
    assigns: np.ndarray  # (horizon, n, m) executed assignments
    rates: np.ndarray  # (horizon, m) executed rates
    received: np.ndarray  # (horizon, m) bool
    nominal_times: np.ndarray  # (horizon, n) scheduled airtime totals
    realized_times: np.ndarray  # (horizon, n) truncation-enforced times
    diverged: np.ndarray  # (m,) bool
    mean_cost: float
    violation_rate: float
    fading_digest: str
    noise_digest: str


def policy_scheduler(policy, mode="mean"):
    """Wrap a trained policy as a rollout scheduler.

    "mean" executes the distribution means (assign where prob >= 0.5,
    rate at the Gaussian mean); "sample" draws from the distribution
    with the scheduler's own stream.
    """
    if mode not in ("mean", "sample"):
        raise ValueError(f"mode must be 'mean' or 'sample', got {mode!r}")

    def schedule(cycle, states, channels, rng):
        output = policy.forward(channels, states)
        if mode == "sample":
            return sample_action(output, rng)
        assign = (output.assign_prob[0] >= 0.5).astype(np.int8)
        return Schedule(assign=assign, rates=output.rate_mean[0].copy())

    return schedule


def baseline_scheduler(kind, phy, lat, params=None, lyaps=None):
    """Wrap a heuristic as a rollout scheduler ("round_robin" or
    "priority_ranking")."""
    params = params if params is not None else BaselineParams()
    if kind == "round_robin":
        return lambda cycle, states, channels, rng: round_robin(
            cycle, states, channels, phy, lat, params
        )
    if kind == "priority_ranking":
        return lambda cycle, states, channels, rng: priority_ranking(
            states, channels, phy, lat, params, lyaps=lyaps
        )
    raise ValueError(f"unknown baseline {kind!r}")


def rollout(scheduler, ensemble, phy, lat, config, seed, index=0):
    """Simulate ``config.horizon`` control cycles under one scheduler.

    ``seed`` and ``index`` name the random streams; two rollouts with
    the same pair see identical fading, noise, and initial states no
    matter what the scheduler does, because every consumer draws from
    its own stream.
    """
    m = len(ensemble)
    p = ensemble[0].p
    fading_rng = substream(seed, "fading", index)
    noise_rng = substream(seed, "noise", index)
    tx_rng = substream(seed, "rollout", index)
    sched_rng = substream(seed, "policy", index)
    init_rng = substream(seed, "state", index)
    fading_hash = hashlib.blake2b(digest_size=16)
    noise_hash = hashlib.blake2b(digest_size=16)

    lo, hi = config.initial_state_box
    states = init_rng.uniform(lo, hi, size=(m, p))
    initial = states.copy()
    chols = [model.noise_chol for model in ensemble]

    traj = np.empty((config.horizon, m, p))
    assigns = np.empty((config.horizon, phy.n, m), dtype=np.int8)
    rates_log = np.empty((config.horizon, m))
    received_log = np.zeros((config.horizon, m), dtype=bool)
    nominal = np.empty((config.horizon, phy.n))
    realized = np.empty((config.horizon, phy.n))
    diverged = np.zeros(m, dtype=bool)

    for t in range(config.horizon):
        channels = phy_mod.sample_fading(fading_rng, m, phy.n, phy.fading_mean)
        fading_hash.update(channels.tobytes())
        schedule = scheduler(t, states, channels, sched_rng)
        if config.quantize_rates:
            schedule = Schedule(
                assign=schedule.assign,
                rates=phy_mod.mcs_floor(schedule.rates, phy.mcs_table),
            )
        received, times = simulate_transmissions(
            schedule, channels, phy, lat, tx_rng
        )
        # Noise is drawn for every system every cycle, frozen or not, so
        # the stream position never depends on the scheduler.
        z = noise_rng.standard_normal((m, p))
        noise_hash.update(z.tobytes())
        for i in range(m):
            if diverged[i]:
                continue
            gain = ensemble[i].a_closed if received[i] else ensemble[i].a_open
            states[i] = gain @ states[i] + chols[i] @ z[i]
            if np.abs(states[i]).max() > DIVERGENCE_SENTINEL:
                states[i] = np.clip(
                    states[i], -DIVERGENCE_SENTINEL, DIVERGENCE_SENTINEL
                )
                diverged[i] = True
        traj[t] = states
        assigns[t] = schedule.assign
        rates_log[t] = schedule.rates
        received_log[t] = received
        nominal[t] = phy_mod.channel_times(schedule, phy)
        realized[t] = times

    costs = np.einsum(
        "tmp,mpq,tmq->tm", traj,
        np.stack([model.lyap for model in ensemble]), traj,
    )
    return RolloutResult(
        trajectories=traj,
        initial_states=initial,
        assigns=assigns,
        rates=rates_log,
        received=received_log,
        nominal_times=nominal,
        realized_times=realized,
        diverged=diverged,
        mean_cost=float(costs.mean()),
        violation_rate=float((nominal > lat.t_max).mean()),
        fading_digest=fading_hash.hexdigest(),
        noise_digest=noise_hash.hexdigest(),
    )


def stability_count(result, config):
    """Systems whose states stay below the threshold over the final
    eval_window fraction of the horizon and never hit the sentinel."""
    horizon = result.trajectories.shape[0]
    window = max(1, int(np.ceil(config.eval_window * horizon)))
    tail = result.trajectories[horizon - window :]
    peak = np.abs(tail).max(axis=(0, 2))
    return int(((peak < config.stability_threshold) & ~result.diverged).sum())


def compare(schedulers, ensemble, phy, lat, config, seed):
    """Paired evaluation of named schedulers over ``config.num_seeds``.

    ``schedulers`` is a list of (name, scheduler) pairs. Every scheduler
    sees identical fading, noise, and initial states per seed index;
    the stream digests are asserted equal, not trusted. Returns one row
    dict per (scheduler, seed index).
    """
    if len(schedulers) < 2:
        raise ValueError("compare needs at least two schedulers")
    rows = []
    for idx in range(config.num_seeds):
        digests = None
        for name, scheduler in schedulers:
            result = rollout(scheduler, ensemble, phy, lat, config, seed, idx)
            pair = (result.fading_digest, result.noise_digest)
            if digests is None:
                digests = pair
            elif digests != pair:
                raise AssertionError(
                    f"stream pairing broken at seed index {idx}: "
                    f"{name} saw different fading or noise"
                )
            rows.append({
                "scheduler": name,
                "seed": idx,
                "stable_count": stability_count(result, config),
                "mean_cost": result.mean_cost,
                "violation_rate": result.violation_rate,
            })
    return rows
