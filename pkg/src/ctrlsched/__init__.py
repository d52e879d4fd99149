"""Control-aware low-latency wireless scheduling: simulation, baselines,
and primal-dual policy learning."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, parse_config, parse_config_dict
from .estimators import (
    PrimalDualScheduler,
    PriorityRankingScheduler,
    RoundRobinScheduler,
)
from .phy import (
    AnalyticPdr,
    PhyModel,
    TabulatedPdr,
    combined_pdr,
    mcs_floor,
    pdr,
    sample_fading,
    tx_time,
)
from .plants import (
    EnsembleConfig,
    PlantModel,
    expected_cost,
    lyapunov,
    sample_ensemble,
    step_plant,
)
from .policy import (
    GnnPolicy,
    MlpPolicy,
    build_gso,
    grad_log_prob,
    log_prob,
    make_policy,
    sample_action,
)
from .rollout import (
    RolloutConfig,
    RolloutResult,
    baseline_scheduler,
    compare,
    policy_scheduler,
    rollout,
    stability_count,
)
from .scheduling import (
    BaselineParams,
    LatencyConstraint,
    Schedule,
    baseline_rate,
    constraint_values,
    priority_ranking,
    round_robin,
    simulate_transmissions,
)
from .seeding import substream
from .training import (
    TrainConfig,
    TrainingDivergedError,
    TrainState,
    dual_update,
    estimate_gradients,
    lagrangian_estimate,
    primal_update,
    sample_states,
    train,
)

__version__ = "0.1.0"
