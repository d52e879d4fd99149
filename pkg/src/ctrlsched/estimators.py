"""Estimator-style wrappers: constructor holds hyperparameters, fit
binds a problem instance, predict emits schedules.

These follow the scikit-learn API conventions (get_params/set_params,
trailing-underscore fitted attributes, NotFittedError) so schedulers
can be configured, cloned, and grid-searched with the usual tooling.
The fit inputs are a plant ensemble and a channel model rather than a
data matrix; there is nothing tabular about the problem.
"""

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .rollout import policy_scheduler
from .scheduling import (
    BaselineParams,
    LatencyConstraint,
    priority_ranking,
    round_robin,
)
from .training import TrainConfig, train


def _check_fitted(estimator, attr):
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"{type(estimator).__name__} must be fitted before predict"
        )


class PrimalDualScheduler(BaseEstimator):
    """Learned scheduler trained by primal-dual policy gradient."""

    def __init__(self, iterations=50_000, batch_size=32, primal_step=1e-4,
                 dual_step=1e-2, variance_baseline=True, baseline_decay=0.9,
                 arch="gnn", policy_options=None, state_box=(-10.0, 10.0),
                 latency_margin=0.1, t_max=5e-4, delta=0.05, seed=0):
        self.iterations = iterations
        self.batch_size = batch_size
        self.primal_step = primal_step
        self.dual_step = dual_step
        self.variance_baseline = variance_baseline
        self.baseline_decay = baseline_decay
        self.arch = arch
        self.policy_options = policy_options
        self.state_box = state_box
        self.latency_margin = latency_margin
        self.t_max = t_max
        self.delta = delta
        self.seed = seed

    def fit(self, ensemble, phy):
        """Train on a plant ensemble sharing the given channel model."""
        lat = LatencyConstraint(t_max=self.t_max, delta=self.delta)
        config = TrainConfig(
            iterations=self.iterations, batch_size=self.batch_size,
            primal_step=self.primal_step, dual_step=self.dual_step,
            variance_baseline=self.variance_baseline,
            baseline_decay=self.baseline_decay, seed=self.seed,
            arch=self.arch, policy_options=dict(self.policy_options or {}),
            state_box=self.state_box, latency_margin=self.latency_margin,
        )
        state = train(ensemble, phy, lat, config)
        self.policy_ = state.policy
        self.lam_ = state.lam
        self.history_ = state.history
        self.phy_ = phy
        return self

    def predict(self, channels, states):
        """Mean-execution schedule for one (channels, states) snapshot.

        Rates are the continuous distribution means; quantize with
        mcs_floor before execution on a discrete-rate channel.
        """
        _check_fitted(self, "policy_")
        return policy_scheduler(self.policy_, mode="mean")(
            0, states, channels, None
        )


class RoundRobinScheduler(BaseEstimator):
    """Control-agnostic baseline with a rotating first pick."""

    def __init__(self, target_pdr=0.95, t_max=5e-4, delta=0.05):
        self.target_pdr = target_pdr
        self.t_max = t_max
        self.delta = delta

    def fit(self, ensemble, phy):
        self.phy_ = phy
        self.lat_ = LatencyConstraint(t_max=self.t_max, delta=self.delta)
        self.params_ = BaselineParams(target_pdr=self.target_pdr)
        return self

    def predict(self, channels, states, cycle=0):
        _check_fitted(self, "phy_")
        return round_robin(cycle, states, channels, self.phy_, self.lat_,
                           self.params_)


class PriorityRankingScheduler(BaseEstimator):
    """Control-aware baseline: largest Lyapunov value transmits first."""

    def __init__(self, target_pdr=0.95, t_max=5e-4, delta=0.05):
        self.target_pdr = target_pdr
        self.t_max = t_max
        self.delta = delta

    def fit(self, ensemble, phy):
        self.phy_ = phy
        self.lat_ = LatencyConstraint(t_max=self.t_max, delta=self.delta)
        self.params_ = BaselineParams(target_pdr=self.target_pdr)
        self.lyaps_ = [model.lyap for model in ensemble]
        return self

    def predict(self, channels, states, cycle=0):
        _check_fitted(self, "phy_")
        return priority_ranking(states, channels, self.phy_, self.lat_,
                                self.params_, lyaps=self.lyaps_)
