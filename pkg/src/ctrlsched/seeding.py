"""Named random substreams derived from a single 64-bit seed.

Every source of randomness in a run (ensemble generation, fading draws,
plant noise, policy sampling, rollouts) pulls from its own named stream.
Changing how one consumer draws therefore never perturbs the others,
which is what makes paired scheduler comparisons and exact replays work.
"""

import numpy as np

# Fixed stream identifiers; order is part of the on-disk reproducibility
# contract, so only append.
_STREAMS = {
    "ensemble": 0,
    "fading": 1,
    "state": 2,
    "noise": 3,
    "policy": 4,
    "rollout": 5,
    "init": 6,
}

_MASK64 = (1 << 64) - 1


def substream(seed, name, index=0):
    """Return a Generator for the named substream of ``seed``.

    ``index`` distinguishes repeated uses of one stream (e.g. one fading
    stream per rollout seed).
    """
    if name not in _STREAMS:
        raise ValueError(f"unknown random stream {name!r}; known: {sorted(_STREAMS)}")
    ss = np.random.SeedSequence((int(seed) & _MASK64, _STREAMS[name], int(index)))
    return np.random.default_rng(ss)


def stream_names():
    return tuple(_STREAMS)
