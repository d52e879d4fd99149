"""Stochastic scheduling policies: MLP and graph-convolutional parameterizations.

Both networks map the flattened observation w0 = [vec(H); vec(X)] to the
parameters of a schedule distribution: a Bernoulli mean per
(channel, system) assignment entry and a Gaussian mean per system rate,
with a shared fixed rate standard deviation. Gradients of the action
log-likelihood are computed by hand in reverse mode; batches share one
pass with per-sample weights folded into the output cotangent, which is
all the score-function estimator needs.

Layers carry weight matrices only (no bias terms). Hidden activations
are ReLU; the final layer is linear and feeds the two output heads:
plain sigmoid for assignment probabilities, scaled sigmoid mapping into
[rate_min, rate_max] for rate means.
"""

import math
from dataclasses import dataclass

import numpy as np

from .scheduling import Schedule
from .validation import as_float_array

# Assignment probabilities live in [PROB_CLAMP, 1 - PROB_CLAMP] via a
# smooth squash. Well above float safety, deliberately: the floor keeps
# every link occasionally sampled both ways, so constraint pressure
# always has live samples to act on and saturated heads cannot freeze
# learning.
PROB_CLAMP = 0.05


@dataclass
class PolicyOutput:
    """Distribution parameters over schedules, batch-leading shapes."""

    assign_prob: np.ndarray  # (B, n, m), entries in (0, 1)
    rate_mean: np.ndarray  # (B, m), entries in [rate_min, rate_max]
    rate_std: float
    rate_min: float
    rate_max: float

    @property
    def batch(self):
        return self.assign_prob.shape[0]


def pack_input(channels, states):
    """Concatenate [vec(H); vec(X)] row-major, batched or single."""
    channels = np.asarray(channels, dtype=float)
    states = np.asarray(states, dtype=float)
    if channels.ndim == 2:
        return np.concatenate([channels.ravel(), states.ravel()])
    b = channels.shape[0]
    return np.concatenate(
        [channels.reshape(b, -1), states.reshape(b, -1)], axis=1
    )


def build_gso(channels):
    """Graph shift operator S = H Hᵀ scaled by its largest eigenvalue.

    Edge (i, j) measures how similar systems i and j look across the
    channels; normalization keeps the powers S^k bounded across fading
    draws. Accepts a batch of channel matrices.
    """
    h = np.asarray(channels, dtype=float)
    single = h.ndim == 2
    if single:
        h = h[None]
    s = h @ np.swapaxes(h, -1, -2)
    top = np.linalg.eigvalsh(s)[..., -1]
    scale = np.where(top > 1e-12, top, 1.0)
    s = s / scale[..., None, None]
    return s[0] if single else s


def _gso_powers(s, k_max):
    """Stack [I, S, S², ..., S^{k_max-1}] along a new axis after batch."""
    b, m, _ = s.shape
    powers = np.empty((b, k_max, m, m))
    powers[:, 0] = np.eye(m)
    for k in range(1, k_max):
        powers[:, k] = powers[:, k - 1] @ s
    return powers


def _relu(a):
    return np.maximum(a, 0.0)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def bernoulli_log_mass(prob, outcome):
    """Elementwise log Bernoulli mass; prob must already be clamped."""
    return np.where(outcome, np.log(prob), np.log1p(-prob))


def gaussian_log_density(value, mean, std):
    """Elementwise log density of Normal(mean, std) at value."""
    z = (value - mean) / std
    return -0.5 * z * z - math.log(std) - 0.5 * math.log(2.0 * math.pi)


def log_probs(output, assign, raw_rates):
    """Batched action log-likelihoods, shape (B,).

    The Gaussian factor is evaluated at the pre-clamp rate sample, so
    the density is exact; the clamp only affects what the environment
    executes.
    """
    bern = bernoulli_log_mass(output.assign_prob, assign)
    gauss = gaussian_log_density(raw_rates, output.rate_mean, output.rate_std)
    return bern.sum(axis=(1, 2)) + gauss.sum(axis=1)


def log_prob(output, schedule):
    """Single-schedule log-likelihood against a batch-of-one output."""
    raw = schedule.raw_rates if schedule.raw_rates is not None else schedule.rates
    return float(
        log_probs(output, schedule.assign[None].astype(bool), raw[None])[0]
    )


def sample_schedules(output, rng):
    """Draw a batch of actions: (assign, raw_rates, rates).

    Draw order is fixed (all assignment uniforms, then all rate
    normals) so consumers of the stream stay aligned. ``rates`` is the
    executable clamp of the raw Gaussian samples.
    """
    assign = rng.random(output.assign_prob.shape) < output.assign_prob
    raw = rng.normal(output.rate_mean, output.rate_std)
    return assign, raw, np.clip(raw, output.rate_min, output.rate_max)


def sample_action(output, rng):
    """Draw one Schedule from a batch-of-one output."""
    assign, raw, rates = sample_schedules(output, rng)
    return Schedule(
        assign=assign[0].astype(np.int8), rates=rates[0], raw_rates=raw[0]
    )


def _apply_heads(pre, n, m, rate_min, rate_max, rate_std, prob_clamp):
    """Split the final linear output into the two schedule heads.

    ``pre`` is (B, n*m + m): assignment logits first (row-major over
    channels then systems), rate logits last. Assignment probabilities
    use the affine squash c + (1 - 2c) * sigmoid, a smooth map into
    [c, 1 - c]: the floor keeps rare flips in every batch and, unlike a
    hard clip, leaves the score gradient nonzero at every logit.
    """
    b = pre.shape[0]
    c = prob_clamp
    p_sig = _sigmoid(pre[:, : n * m].reshape(b, n, m))
    prob = c + (1.0 - 2.0 * c) * p_sig
    s = _sigmoid(pre[:, n * m :])
    mean = rate_min + (rate_max - rate_min) * s
    out = PolicyOutput(assign_prob=prob, rate_mean=mean, rate_std=rate_std,
                       rate_min=rate_min, rate_max=rate_max)
    return out, {"p_sig": p_sig, "s": s}


def _head_cotangent(output, head_cache, assign, raw_rates, rate_min, rate_max,
                    weights, prob_clamp):
    """Cotangent of sum_b weights[b] * log_prob[b] w.r.t. the final logits."""
    b, n, m = output.assign_prob.shape
    c = prob_clamp
    p_sig = head_cache["p_sig"]
    prob = output.assign_prob
    # d(log mass)/d(logit) = (outcome - p)/(p(1-p)) * dp/dlogit with
    # dp/dlogit = (1-2c) * sig * (1-sig); at c = 0 this reduces to the
    # classic outcome - sigmoid. pq can only vanish when c = 0 and the
    # sigmoid saturates exactly, where the classic form is the limit.
    pq = prob * (1.0 - prob)
    slope = (1.0 - 2.0 * c) * p_sig * (1.0 - p_sig)
    factor = np.divide(slope, pq, out=np.ones_like(pq), where=pq > 0.0)
    d_assign = (assign - prob) * factor
    s = head_cache["s"]
    d_mean = (raw_rates - output.rate_mean) / output.rate_std**2
    d_rate = d_mean * (rate_max - rate_min) * s * (1.0 - s)
    cot = np.concatenate([d_assign.reshape(b, n * m), d_rate], axis=1)
    return cot * weights[:, None]


def _glorot(rng, shape, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _check_input_scale(scale):
    h_scale, x_scale = map(float, scale)
    if h_scale <= 0 or x_scale <= 0:
        raise ValueError("input_scale entries must be positive")
    return (h_scale, x_scale)


class MlpPolicy:
    """Fully connected policy: fixed to one ensemble size m.

    Layer widths run [m*(n+p), *hidden, n*m + m]; the last width is the
    head dimension and is not configurable.
    """

    kind = "mlp"

    def __init__(self, m, n, p=1, hidden=(32, 32), rate_min=1.6,
                 rate_max=13.0, rate_std=0.5, prob_clamp=PROB_CLAMP,
                 input_scale=(1.0, 1.0)):
        self.m = int(m)
        self.n = int(n)
        self.p = int(p)
        self.hidden = tuple(int(h) for h in hidden)
        self.rate_min = float(rate_min)
        self.rate_max = float(rate_max)
        if not self.rate_min < self.rate_max:
            raise ValueError("rate_min must be below rate_max")
        self.rate_std = float(rate_std)
        self.prob_clamp = float(prob_clamp)
        if not 0.0 <= self.prob_clamp < 0.5:
            raise ValueError("prob_clamp must lie in [0, 0.5)")
        self.input_scale = _check_input_scale(input_scale)
        self.dims = (self.m * (self.n + self.p), *self.hidden,
                     self.n * self.m + self.m)
        self.layers = [np.zeros((a, b)) for a, b in zip(self.dims, self.dims[1:])]

    @property
    def param_count(self):
        return sum(w.size for w in self.layers)

    def init(self, rng):
        self.layers = [
            _glorot(rng, (a, b), a, b) for a, b in zip(self.dims, self.dims[1:])
        ]
        return self

    def get_theta(self):
        return np.concatenate([w.ravel() for w in self.layers])

    def set_theta(self, theta):
        theta = as_float_array(theta, "theta", shape=(self.param_count,))
        k = 0
        for i, w in enumerate(self.layers):
            self.layers[i] = theta[k : k + w.size].reshape(w.shape).copy()
            k += w.size
        return self

    def descriptor(self):
        return {
            "kind": self.kind, "m": self.m, "n": self.n, "p": self.p,
            "hidden": list(self.hidden), "rate_min": self.rate_min,
            "rate_max": self.rate_max, "rate_std": self.rate_std,
            "input_scale": list(self.input_scale),
        }

    def forward_batch(self, channels, states):
        """Forward pass over a batch; returns (output, cache)."""
        # Gains and states are divided by their configured scales so the
        # network sees O(1) features and starts unsaturated.
        channels = np.asarray(channels, dtype=float) / self.input_scale[0]
        states = np.asarray(states, dtype=float) / self.input_scale[1]
        z = pack_input(channels, states)
        if z.ndim == 1:
            z = z[None]
        if z.shape[1] != self.dims[0]:
            raise ValueError(
                f"input width {z.shape[1]} does not match first layer "
                f"{self.dims[0]}"
            )
        inputs, preacts = [], []
        for i, w in enumerate(self.layers):
            inputs.append(z)
            a = z @ w
            if i < len(self.layers) - 1:
                preacts.append(a)
                z = _relu(a)
            else:
                z = a
        out, head_cache = _apply_heads(
            z, self.n, self.m, self.rate_min, self.rate_max, self.rate_std,
            self.prob_clamp,
        )
        return out, {"inputs": inputs, "preacts": preacts, "head": head_cache}

    def forward(self, channels, states):
        out, _ = self.forward_batch(channels[None], np.asarray(states)[None])
        return out

    def score_backward(self, cache, output, assign, raw_rates, weights):
        """Gradient of sum_b weights[b] * log_prob[b] over flat theta."""
        g = _head_cotangent(
            output, cache["head"], assign, raw_rates, self.rate_min,
            self.rate_max, weights, self.prob_clamp,
        )
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            grads[i] = cache["inputs"][i].T @ g
            if i > 0:
                g = (g @ self.layers[i].T) * (cache["preacts"][i - 1] > 0)
        return np.concatenate([gr.ravel() for gr in grads])


class GnnPolicy:
    """Graph-convolutional policy over the fading-similarity graph.

    Each layer maps node features z to relu(sum_k S^k z A_k) with taps
    A_k of shape (features_in, features_out); a final linear graph layer
    reads out n assignment logits plus one rate logit per node. The
    parameterization never sees m, so one trained policy applies to any
    ensemble size.
    """

    kind = "gnn"

    def __init__(self, n, p=1, features=(10, 20, 50, 50, 20), taps=5,
                 rate_min=1.6, rate_max=13.0, rate_std=0.5,
                 prob_clamp=PROB_CLAMP, input_scale=(1.0, 1.0)):
        self.n = int(n)
        self.p = int(p)
        self.features = tuple(int(f) for f in features)
        self.taps = int(taps)
        if self.taps < 1:
            raise ValueError("taps must be at least 1")
        self.rate_min = float(rate_min)
        self.rate_max = float(rate_max)
        if not self.rate_min < self.rate_max:
            raise ValueError("rate_min must be below rate_max")
        self.rate_std = float(rate_std)
        self.prob_clamp = float(prob_clamp)
        if not 0.0 <= self.prob_clamp < 0.5:
            raise ValueError("prob_clamp must lie in [0, 0.5)")
        self.input_scale = _check_input_scale(input_scale)
        self.widths = (self.n + self.p, *self.features, self.n + 1)
        self.filters = [
            np.zeros((self.taps, a, b)) for a, b in zip(self.widths, self.widths[1:])
        ]

    @property
    def param_count(self):
        return sum(t.size for t in self.filters)

    def init(self, rng):
        self.filters = [
            _glorot(rng, (self.taps, a, b), self.taps * a, self.taps * b)
            for a, b in zip(self.widths, self.widths[1:])
        ]
        return self

    def get_theta(self):
        return np.concatenate([t.ravel() for t in self.filters])

    def set_theta(self, theta):
        theta = as_float_array(theta, "theta", shape=(self.param_count,))
        k = 0
        for i, t in enumerate(self.filters):
            self.filters[i] = theta[k : k + t.size].reshape(t.shape).copy()
            k += t.size
        return self

    def descriptor(self):
        return {
            "kind": self.kind, "n": self.n, "p": self.p,
            "features": list(self.features), "taps": self.taps,
            "rate_min": self.rate_min, "rate_max": self.rate_max,
            "rate_std": self.rate_std,
            "input_scale": list(self.input_scale),
        }

    def forward_batch(self, channels, states, gso=None):
        """Forward pass over a batch of (H, X); returns (output, cache).

        ``gso`` optionally supplies precomputed shift operators (B, m, m);
        by default they are built from the channel matrices.
        """
        channels = np.asarray(channels, dtype=float)
        states = np.asarray(states, dtype=float)
        if channels.ndim == 2:
            channels, states = channels[None], states[None]
        b, m, n = channels.shape
        if n != self.n or states.shape != (b, m, self.p):
            raise ValueError(
                f"inputs ({channels.shape}, {states.shape}) do not match "
                f"n={self.n}, p={self.p}"
            )
        # The GSO is invariant to the feature scaling (HH' is normalized
        # by its own largest eigenvalue), so raw gains build the graph
        # while scaled gains feed the filters.
        s = build_gso(channels) if gso is None else np.asarray(gso, dtype=float)
        powers = _gso_powers(s, self.taps)
        z = np.concatenate(
            [channels / self.input_scale[0], states / self.input_scale[1]],
            axis=2,
        )  # node features
        k = self.taps
        shifted, preacts = [], []
        for i, taps in enumerate(self.filters):
            f_in, f_out = taps.shape[1:]
            # S^k z for all k, flattened so the tap contraction is one matmul
            zs = np.matmul(powers, z[:, None])  # (B, K, m, f_in)
            zs = zs.transpose(0, 2, 1, 3).reshape(b, m, k * f_in)
            shifted.append(zs)
            a = zs @ taps.reshape(k * f_in, f_out)
            if i < len(self.filters) - 1:
                preacts.append(a)
                z = _relu(a)
            else:
                z = a
        # Node layout: n assignment logits then the rate logit.
        pre = np.concatenate(
            [np.swapaxes(z[:, :, : self.n], 1, 2).reshape(b, self.n * m),
             z[:, :, self.n]], axis=1,
        )
        out, head_cache = _apply_heads(
            pre, self.n, m, self.rate_min, self.rate_max, self.rate_std,
            self.prob_clamp,
        )
        cache = {"powers": powers, "shifted": shifted, "preacts": preacts,
                 "head": head_cache, "m": m}
        return out, cache

    def forward(self, channels, states):
        out, _ = self.forward_batch(channels[None], np.asarray(states)[None])
        return out

    def score_backward(self, cache, output, assign, raw_rates, weights):
        """Gradient of sum_b weights[b] * log_prob[b] over flat theta."""
        m = cache["m"]
        b = output.batch
        cot = _head_cotangent(
            output, cache["head"], assign, raw_rates, self.rate_min,
            self.rate_max, weights, self.prob_clamp,
        )
        g = np.empty((b, m, self.n + 1))
        g[:, :, : self.n] = np.swapaxes(
            cot[:, : self.n * m].reshape(b, self.n, m), 1, 2
        )
        g[:, :, self.n] = cot[:, self.n * m :]
        powers = cache["powers"]
        k = self.taps
        grads = [None] * len(self.filters)
        for i in range(len(self.filters) - 1, -1, -1):
            f_in, f_out = self.filters[i].shape[1:]
            zs = cache["shifted"][i]
            grads[i] = (
                zs.reshape(b * m, k * f_in).T @ g.reshape(b * m, f_out)
            ).reshape(k, f_in, f_out)
            if i > 0:
                # S^k is symmetric, so the adjoint shift reuses the powers.
                gs = np.matmul(powers, g[:, None])  # (B, K, m, f_out)
                gs = gs.transpose(0, 2, 1, 3).reshape(b, m, k * f_out)
                g = gs @ self.filters[i].transpose(0, 2, 1).reshape(k * f_out, f_in)
                g *= cache["preacts"][i - 1] > 0
        return np.concatenate([gr.ravel() for gr in grads])


def grad_log_prob(policy, channels, states, schedule):
    """Exact gradient of one action's log-likelihood over flat theta."""
    out, cache = policy.forward_batch(
        np.asarray(channels)[None], np.asarray(states)[None]
    )
    raw = schedule.raw_rates if schedule.raw_rates is not None else schedule.rates
    return policy.score_backward(
        cache, out, schedule.assign[None].astype(bool), raw[None], np.ones(1)
    )


def make_policy(descriptor):
    """Instantiate a policy from its architecture descriptor."""
    d = dict(descriptor)
    kind = d.pop("kind")
    if kind == "mlp":
        return MlpPolicy(**d)
    if kind == "gnn":
        return GnnPolicy(**d)
    raise ValueError(f"unknown policy kind {kind!r}")
