"""Checkpoint persistence: one JSON header line plus raw parameters.

The header carries everything needed to rebuild the training context
(format version, run configuration snapshot, architecture descriptor,
multipliers, iteration counter, and the exact plant ensemble); the
parameters follow as a flat little-endian float64 array in declared
layer order. The header states the parameter count, so truncation is
detected by a plain length check before anything is deserialized.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .plants import PlantModel
from .policy import make_policy

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint."""


@dataclass
class Checkpoint:
    """Parsed checkpoint: header fields plus the raw parameter vector."""

    version: int
    config: dict
    arch: dict
    lam: np.ndarray
    iteration: int
    ensemble: list
    theta: np.ndarray

    def restore_policy(self):
        """Rebuild the policy with the stored architecture and weights."""
        policy = make_policy(self.arch)
        if policy.param_count != self.theta.size:
            raise CheckpointError(
                f"parameter count {self.theta.size} does not match the "
                f"declared architecture ({policy.param_count})"
            )
        return policy.set_theta(self.theta)

    def restore_ensemble(self):
        """Rebuild the exact plant ensemble the policy was trained on."""
        return [
            PlantModel(
                a_closed=np.asarray(mo["a_closed"], dtype=float),
                a_open=np.asarray(mo["a_open"], dtype=float),
                noise_cov=np.asarray(mo["noise_cov"], dtype=float),
                lyap=np.asarray(mo["lyap"], dtype=float),
            )
            for mo in self.ensemble
        ]


def _ensemble_snapshot(ensemble):
    return [
        {
            "a_closed": mo.a_closed.tolist(),
            "a_open": mo.a_open.tolist(),
            "noise_cov": mo.noise_cov.tolist(),
            "lyap": mo.lyap.tolist(),
        }
        for mo in ensemble
    ]


def save_checkpoint(path, policy, lam, iteration, config_snapshot, ensemble):
    """Write atomically: the target file is either old or complete."""
    theta = policy.get_theta()
    header = {
        "version": FORMAT_VERSION,
        "config": config_snapshot,
        "arch": policy.descriptor(),
        "lambda": [float(v) for v in np.asarray(lam)],
        "iteration": int(iteration),
        "ensemble": _ensemble_snapshot(ensemble),
        "param_count": int(theta.size),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        fh.write(theta.astype("<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Parse and integrity-check a checkpoint file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from exc
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    count = int(header["param_count"])
    blob = raw[newline + 1 :]
    if len(blob) != 8 * count:
        raise CheckpointError(
            f"{path}: expected {8 * count} parameter bytes, found {len(blob)}"
        )
    theta = np.frombuffer(blob, dtype="<f8").astype(float)
    return Checkpoint(
        version=version,
        config=header["config"],
        arch=header["arch"],
        lam=np.asarray(header["lambda"], dtype=float),
        iteration=int(header["iteration"]),
        ensemble=header["ensemble"],
        theta=theta,
    )
