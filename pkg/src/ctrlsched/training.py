"""Model-free primal-dual policy-gradient training.

The constrained scheduling problem (minimize expected control cost
subject to per-channel latency-satisfaction constraints) is solved at a
saddle point of the Lagrangian

    L(theta, lambda) = E[f] - lambda' E[g]

by alternating stochastic descent in the policy parameters with
projected ascent in the nonnegative multipliers. Nothing here
differentiates through the plants or the channel: gradients come from
the score-function identity, with observed costs and constraint
indicators weighting the action log-likelihood gradient.

States and channels are sampled i.i.d. each iteration (states uniform
in a box, fading exponential), so training never rolls plants forward.
"""

from dataclasses import dataclass, field

import numpy as np

from . import phy as phy_mod
from .plants import batch_expected_cost, ensemble_cost_terms
from .policy import GnnPolicy, MlpPolicy, sample_schedules
from .scheduling import LatencyConstraint, constraint_from_times
from .seeding import substream


@dataclass
class TrainConfig:
    """Knobs of the primal-dual loop.

    ``latency_margin`` tightens the airtime budget seen by the learner
    (constraints are evaluated against t_max * (1 - margin)) while all
    logged diagnostics use the true budget. Training to a slightly
    stricter target keeps the true satisfaction rate above tolerance
    instead of oscillating exactly at it.
    """

    iterations: int = 50_000
    batch_size: int = 32
    primal_step: float = 1e-4
    dual_step: float = 0.1
    variance_baseline: bool = True
    baseline_decay: float = 0.9
    seed: int = 0
    arch: str = "gnn"
    policy_options: dict = field(default_factory=dict)
    state_box: tuple = (-10.0, 10.0)
    latency_margin: float = 0.2
    log_interval: int = 1
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.primal_step <= 0 or self.dual_step <= 0:
            raise ValueError("step sizes must be positive")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")
        if self.arch not in ("mlp", "gnn"):
            raise ValueError(f"arch must be 'mlp' or 'gnn', got {self.arch!r}")
        lo, hi = map(float, self.state_box)
        if not lo < hi:
            raise ValueError("state_box must satisfy lo < hi")
        self.state_box = (lo, hi)
        if not 0.0 <= self.latency_margin < 1.0:
            raise ValueError("latency_margin must lie in [0, 1)")
        if self.log_interval < 1:
            raise ValueError("log_interval must be at least 1")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be nonnegative")


@dataclass
class TrainState:
    """Mutable loop state plus the append-only metric history."""

    policy: object
    lam: np.ndarray
    iteration: int = 0
    baseline: float = 0.0
    history: list = field(default_factory=list)


class TrainingDivergedError(RuntimeError):
    """Raised when parameters or multipliers stop being finite.

    Carries the last finite TrainState so callers can keep partial work.
    """

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


def metrics_header(n):
    cols = ["iter", "objective", "lagrangian"]
    cols += [f"lambda_{j + 1}" for j in range(n)]
    cols += [f"time_ch_{j + 1}" for j in range(n)]
    cols += [f"sat_rate_{j + 1}" for j in range(n)]
    return cols


def sample_states(rng, m, n, p, state_box, fading_mean, batch=None):
    """Draw (channels, states): fading first, then uniform box states.

    One rng serves both draws in a fixed order so a seeded stream is
    reproducible regardless of batch size.
    """
    lo, hi = state_box
    if not lo < hi:
        raise ValueError("state_box must satisfy lo < hi")
    channels = phy_mod.sample_fading(rng, m, n, fading_mean, batch=batch)
    shape = (m, p) if batch is None else (batch, m, p)
    states = rng.uniform(lo, hi, size=shape)
    return channels, states


def lagrangian_estimate(objectives, constraints, lam):
    """Batch-mean Lagrangian: mean(f) - lambda' mean(g)."""
    objectives = np.atleast_1d(np.asarray(objectives, dtype=float))
    constraints = np.atleast_2d(np.asarray(constraints, dtype=float))
    return float(objectives.mean() - constraints.mean(axis=0) @ np.asarray(lam))


def estimate_gradients(policy, cache, output, assign, raw_rates, objectives,
                       constraints, lam, baseline=0.0):
    """Score-function estimates of both Lagrangian gradients.

    Returns (primal, dual): the primal estimate is the batch mean of
    (f - lambda'g - baseline) * grad log pi, the dual estimate the
    plain batch mean of the constraint samples.
    """
    b = objectives.shape[0]
    weights = (objectives - constraints @ lam - baseline) / b
    primal = policy.score_backward(cache, output, assign, raw_rates, weights)
    return primal, constraints.mean(axis=0)


def primal_update(theta, grad, alpha):
    """Plain gradient descent step on the policy parameters."""
    return theta - alpha * grad


def dual_update(lam, g_estimate, beta):
    """Projected ascent step: multipliers grow where constraints fail."""
    return np.maximum(0.0, lam - beta * np.asarray(g_estimate, dtype=float))


def build_policy(ensemble, phy, config):
    """Instantiate the configured architecture sized to the problem.

    Input scales default to the fading mean and the state-box half
    width, so the network starts unsaturated on the sampled inputs.
    """
    m = len(ensemble)
    p = ensemble[0].p
    lo, hi = config.state_box
    state_scale = max(abs(lo), abs(hi)) or 1.0
    common = {
        "rate_min": phy.rate_min,
        "rate_max": phy.rate_max,
        "input_scale": (phy.fading_mean, state_scale),
    }
    common.update(dict(config.policy_options))
    if config.arch == "mlp":
        return MlpPolicy(m=m, n=phy.n, p=p, **common)
    return GnnPolicy(n=phy.n, p=p, **common)


def train(ensemble, phy, lat, config, checkpoint_fn=None):
    """Run the primal-dual loop and return the final TrainState.

    ``checkpoint_fn(state)``, when given, is called every
    ``config.checkpoint_interval`` iterations. Non-finite parameters or
    multipliers abort with TrainingDivergedError carrying the last
    finite state; periodic checkpoints written before that point stay
    on disk.
    """
    m = len(ensemble)
    p = ensemble[0].p
    policy = build_policy(ensemble, phy, config).init(
        substream(config.seed, "init")
    )
    state_rng = substream(config.seed, "state")
    policy_rng = substream(config.seed, "policy")
    lam = np.zeros(phy.n)
    terms = ensemble_cost_terms(ensemble)
    train_lat = LatencyConstraint(
        t_max=lat.t_max * (1.0 - config.latency_margin), delta=lat.delta
    )
    state = TrainState(policy=policy, lam=lam)
    theta = policy.get_theta()
    for t in range(1, config.iterations + 1):
        channels, states = sample_states(
            state_rng, m, phy.n, p, config.state_box, phy.fading_mean,
            batch=config.batch_size,
        )
        output, cache = policy.forward_batch(channels, states)
        assign, raw, rates = sample_schedules(output, policy_rng)
        delivered = phy_mod.batch_combined_pdr(phy, channels, assign, rates)
        objectives = batch_expected_cost(terms, states, delivered)
        times = phy_mod.batch_channel_times(assign, rates, phy)
        constraints = constraint_from_times(times, train_lat)
        baseline = state.baseline if config.variance_baseline else 0.0
        primal, dual = estimate_gradients(
            policy, cache, output, assign, raw, objectives, constraints,
            state.lam, baseline,
        )
        lagr = lagrangian_estimate(objectives, constraints, state.lam)
        mean_obj = float(objectives.mean())
        new_theta = primal_update(theta, primal, config.primal_step)
        new_lam = dual_update(state.lam, dual, config.dual_step)
        if not (np.isfinite(new_theta).all() and np.isfinite(new_lam).all()):
            # state still holds the last finite parameters and multipliers
            raise TrainingDivergedError(
                f"non-finite update at iteration {t}", state
            )
        theta = new_theta
        state.lam = new_lam
        assert (state.lam >= 0.0).all()
        policy.set_theta(theta)
        state.iteration = t
        if config.variance_baseline:
            # The control variate tracks the objective alone, never the
            # multiplier term, so constraint pressure survives even when
            # every batch sample violates (g constant would otherwise be
            # cancelled by the baseline). Previous batches only, which
            # keeps the estimator unbiased.
            d = config.baseline_decay
            state.baseline = (
                mean_obj if t == 1 else d * state.baseline + (1 - d) * mean_obj
            )
        if t % config.log_interval == 0:
            # Diagnostics use the true budget even when training to a
            # tightened one.
            sat = (times <= lat.t_max).mean(axis=0)
            row = [float(t), float(objectives.mean()), lagr]
            row += [float(v) for v in state.lam]
            row += [float(v) for v in times.mean(axis=0)]
            row += [float(v) for v in sat]
            state.history.append(row)
        if (checkpoint_fn is not None and config.checkpoint_interval
                and t % config.checkpoint_interval == 0):
            checkpoint_fn(state)
    return state
