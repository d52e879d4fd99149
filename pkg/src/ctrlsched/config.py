"""Run configuration: JSON in, validated dataclasses out.

A run file is a JSON object with up to five sections (ensemble, phy,
latency, train, rollout) plus a top-level seed. Every omitted field
falls back to the documented default, so the empty object {} is a
complete configuration: 9 scalar plants with gains in (0.85, 0.95) /
(1.01, 1.2), 2 channels, a 0.5 ms budget at 5% tolerance, 800-bit
packets, rates in [1.6, 13].

Unknown keys are rejected, not ignored; a typo in a config should fail
loudly rather than silently train with a default.
"""

import json
from dataclasses import dataclass

from .phy import DEFAULT_MCS_TABLE, AnalyticPdr, PhyModel, TabulatedPdr
from .plants import EnsembleConfig
from .rollout import RolloutConfig
from .scheduling import LatencyConstraint
from .training import TrainConfig

_TOP_KEYS = {"seed", "ensemble", "phy", "latency", "train", "rollout"}
_ENSEMBLE_KEYS = {"m", "p", "closed_gain_range", "open_gain_range",
                  "noise_var", "lyap"}
_PHY_KEYS = {"n", "packet_bits", "rate_min", "rate_max", "mcs_table",
             "fading_mean", "pdr"}
_PDR_KEYS = {"analytic": {"kind", "eta0", "mu0"}, "table": {"kind", "path"}}
_LATENCY_KEYS = {"t_max", "delta"}
_TRAIN_KEYS = {"iterations", "batch_size", "primal_step", "dual_step",
               "variance_baseline", "baseline_decay", "arch",
               "policy_options", "state_box", "latency_margin",
               "log_interval", "checkpoint_interval"}
_POLICY_OPTION_KEYS = {"hidden", "features", "taps", "rate_std", "prob_clamp",
                       "input_scale"}
_ROLLOUT_KEYS = {"horizon", "initial_state_box", "stability_threshold",
                 "eval_window", "num_seeds", "quantize_rates", "execution"}


class ConfigError(ValueError):
    """A configuration file problem, always naming the offending key."""


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"section '{where}' must be a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}.{key}'" if where
                              else f"unknown key '{key}'")


def _listish(value):
    return tuple(value) if isinstance(value, (list, tuple)) else value


@dataclass
class RunConfig:
    """Validated union of all module configurations plus the seed."""

    seed: int
    ensemble: EnsembleConfig
    phy: PhyModel
    latency: LatencyConstraint
    train: TrainConfig
    rollout: RolloutConfig

    def to_dict(self):
        """Canonical JSON-ready snapshot; parse_config_dict inverts it."""
        ens = self.ensemble
        lyap = ens.lyap if isinstance(ens.lyap, str) else [
            [float(v) for v in row] for row in ens.lyap
        ]
        return {
            "seed": self.seed,
            "ensemble": {
                "m": ens.m, "p": ens.p,
                "closed_gain_range": list(ens.closed_gain_range),
                "open_gain_range": list(ens.open_gain_range),
                "noise_var": ens.noise_var, "lyap": lyap,
            },
            "phy": {
                "n": self.phy.n, "packet_bits": self.phy.packet_bits,
                "rate_min": self.phy.rate_min, "rate_max": self.phy.rate_max,
                "mcs_table": list(self.phy.mcs_table),
                "fading_mean": self.phy.fading_mean,
                "pdr": self.phy.pdr_model.descriptor(),
            },
            "latency": {"t_max": self.latency.t_max,
                        "delta": self.latency.delta},
            "train": {
                "iterations": self.train.iterations,
                "batch_size": self.train.batch_size,
                "primal_step": self.train.primal_step,
                "dual_step": self.train.dual_step,
                "variance_baseline": self.train.variance_baseline,
                "baseline_decay": self.train.baseline_decay,
                "arch": self.train.arch,
                "policy_options": dict(self.train.policy_options),
                "state_box": list(self.train.state_box),
                "latency_margin": self.train.latency_margin,
                "log_interval": self.train.log_interval,
                "checkpoint_interval": self.train.checkpoint_interval,
            },
            "rollout": {
                "horizon": self.rollout.horizon,
                "initial_state_box": list(self.rollout.initial_state_box),
                "stability_threshold": self.rollout.stability_threshold,
                "eval_window": self.rollout.eval_window,
                "num_seeds": self.rollout.num_seeds,
                "quantize_rates": self.rollout.quantize_rates,
                "execution": self.rollout.execution,
            },
        }


def _build_pdr(obj):
    _check_keys(obj, {"kind"} | set().union(*_PDR_KEYS.values()), "phy.pdr")
    kind = obj.get("kind", "analytic")
    if kind not in _PDR_KEYS:
        raise ConfigError(f"unknown key 'phy.pdr.kind' value {kind!r}")
    _check_keys(obj, _PDR_KEYS[kind], "phy.pdr")
    if kind == "analytic":
        return AnalyticPdr(eta0=obj.get("eta0", 1.0), mu0=obj.get("mu0", 13.0))
    if "path" not in obj:
        raise ConfigError("phy.pdr.path is required for the table backend")
    return TabulatedPdr.from_csv(obj["path"])


def parse_config_dict(obj, where="config"):
    """Validate a parsed JSON object into a RunConfig."""
    _check_keys(obj, _TOP_KEYS, "")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("'seed' must be a nonnegative integer")

    ens_obj = obj.get("ensemble", {})
    _check_keys(ens_obj, _ENSEMBLE_KEYS, "ensemble")
    ens_kwargs = {k: _listish(v) for k, v in ens_obj.items()}
    phy_obj = dict(obj.get("phy", {}))
    _check_keys(phy_obj, _PHY_KEYS, "phy")
    pdr_obj = phy_obj.pop("pdr", {"kind": "analytic"})
    phy_kwargs = {k: _listish(v) for k, v in phy_obj.items()}
    lat_obj = obj.get("latency", {})
    _check_keys(lat_obj, _LATENCY_KEYS, "latency")
    train_obj = dict(obj.get("train", {}))
    _check_keys(train_obj, _TRAIN_KEYS, "train")
    opts = train_obj.get("policy_options", {})
    _check_keys(opts, _POLICY_OPTION_KEYS, "train.policy_options")
    train_obj["policy_options"] = {k: _listish(v) for k, v in opts.items()}
    train_obj = {k: _listish(v) for k, v in train_obj.items()}
    roll_obj = obj.get("rollout", {})
    _check_keys(roll_obj, _ROLLOUT_KEYS, "rollout")
    roll_kwargs = {k: _listish(v) for k, v in roll_obj.items()}

    try:
        return RunConfig(
            seed=seed,
            ensemble=EnsembleConfig(**ens_kwargs),
            phy=PhyModel(pdr_model=_build_pdr(pdr_obj), **phy_kwargs),
            latency=LatencyConstraint(**lat_obj),
            train=TrainConfig(seed=seed, **train_obj),
            rollout=RolloutConfig(**roll_kwargs),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(path):
    """Load and validate a JSON run configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config root in {path} must be a JSON object")
    return parse_config_dict(obj, where=str(path))


def with_seed(config, seed):
    """Copy of a RunConfig under a different master seed."""
    obj = config.to_dict()
    obj["seed"] = int(seed)
    return parse_config_dict(obj)
