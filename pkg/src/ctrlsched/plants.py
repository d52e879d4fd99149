"""Switched linear plant models and Lyapunov-based control costs.

Each wireless control loop is a discrete-time plant that runs its
closed-loop gain when the state packet arrives and its open-loop gain
when it does not:

    x' = A_closed x + w   (packet received)
    x' = A_open   x + w   (packet dropped)

with zero-mean noise w of covariance W. Control performance is measured
by the quadratic Lyapunov value x'Px and by the one-step expected cost
under a given delivery probability.
"""

from dataclasses import dataclass

import numpy as np

from .validation import (
    as_float_array,
    check_probability,
    check_symmetric_psd,
    spectral_radius,
)


@dataclass
class PlantModel:
    """One control loop: gains, noise covariance, and Lyapunov matrix.

    The closed-loop gain must have strictly smaller spectral radius than
    the open-loop gain; receiving the packet is always the better branch.
    """

    a_closed: np.ndarray
    a_open: np.ndarray
    noise_cov: np.ndarray
    lyap: np.ndarray

    def __post_init__(self):
        self.a_closed = as_float_array(self.a_closed, "a_closed")
        p = self.a_closed.shape[0]
        if self.a_closed.shape != (p, p):
            raise ValueError(f"a_closed must be square, got shape {self.a_closed.shape}")
        self.a_open = as_float_array(self.a_open, "a_open", shape=(p, p))
        self.noise_cov = check_symmetric_psd(
            as_float_array(self.noise_cov, "noise_cov", shape=(p, p)), "noise_cov"
        )
        self.lyap = check_symmetric_psd(
            as_float_array(self.lyap, "lyap", shape=(p, p)), "lyap", strict=True
        )
        if not spectral_radius(self.a_closed) < spectral_radius(self.a_open):
            raise ValueError(
                "spectral radius of a_closed must be smaller than that of a_open"
            )

    @property
    def p(self):
        return self.a_closed.shape[0]

    @property
    def noise_chol(self):
        """Cholesky factor of the noise covariance (cached)."""
        if not hasattr(self, "_noise_chol"):
            # PSD but possibly singular: add nothing, fall back to eigh if needed
            try:
                self._noise_chol = np.linalg.cholesky(self.noise_cov)
            except np.linalg.LinAlgError:
                vals, vecs = np.linalg.eigh(self.noise_cov)
                self._noise_chol = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))
        return self._noise_chol


@dataclass
class EnsembleConfig:
    """How to draw an ensemble of plants with diagonal gains."""

    m: int = 9
    p: int = 1
    closed_gain_range: tuple = (0.85, 0.95)
    open_gain_range: tuple = (1.01, 1.2)
    noise_var: float = 1.0
    lyap: object = "identity"  # "identity" or an explicit p x p matrix

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m={self.m} must be at least 1")
        if self.p < 1:
            raise ValueError(f"p={self.p} must be at least 1")
        c_lo, c_hi = map(float, self.closed_gain_range)
        o_lo, o_hi = map(float, self.open_gain_range)
        if not (c_lo <= c_hi and o_lo <= o_hi):
            raise ValueError("gain ranges must satisfy lo <= hi")
        if not c_hi < o_lo:
            raise ValueError(
                "closed_gain_range.hi must be below open_gain_range.lo "
                f"(got {c_hi} vs {o_lo}); the spectral ordering would not be guaranteed"
            )
        if self.noise_var < 0:
            raise ValueError(f"noise_var={self.noise_var} must be nonnegative")

    def lyap_matrix(self):
        if isinstance(self.lyap, str):
            if self.lyap != "identity":
                raise ValueError(f"unknown lyap choice {self.lyap!r}")
            return np.eye(self.p)
        return check_symmetric_psd(
            as_float_array(self.lyap, "lyap", shape=(self.p, self.p)), "lyap", strict=True
        )


def step_plant(model, x, received, noise):
    """Advance one control cycle; the input state is left untouched."""
    x = as_float_array(x, "x", shape=(model.p,))
    noise = as_float_array(noise, "noise", shape=(model.p,))
    gain = model.a_closed if received else model.a_open
    return gain @ x + noise


def lyapunov(x, lyap):
    """Quadratic Lyapunov value x'Px (nonnegative, zero only at the origin)."""
    x = np.asarray(x, dtype=float)
    return float(x @ np.asarray(lyap, dtype=float) @ x)


def expected_cost(model, x, pdr):
    """One-step expected Lyapunov cost under delivery probability ``pdr``.

    pdr * (Ac x)'P(Ac x) + (1 - pdr) * (Ao x)'P(Ao x) + tr(P W).
    Affine in pdr, so it interpolates exactly between the received and
    dropped branches.
    """
    pdr = check_probability(pdr, "pdr")
    x = as_float_array(x, "x", shape=(model.p,))
    closed = model.a_closed @ x
    open_ = model.a_open @ x
    trace_term = float(np.trace(model.lyap @ model.noise_cov))
    return (
        pdr * float(closed @ model.lyap @ closed)
        + (1.0 - pdr) * float(open_ @ model.lyap @ open_)
        + trace_term
    )


def ensemble_cost_terms(models):
    """Precompute the quadratic forms behind expected_cost for a whole
    ensemble: (closed (m,p,p), open (m,p,p), drift (m,)) with
    closed_i = Ac'PAc, open_i = Ao'PAo, drift_i = tr(P W).
    """
    closed = np.stack([mo.a_closed.T @ mo.lyap @ mo.a_closed for mo in models])
    open_ = np.stack([mo.a_open.T @ mo.lyap @ mo.a_open for mo in models])
    drift = np.array([float(np.trace(mo.lyap @ mo.noise_cov)) for mo in models])
    return closed, open_, drift


def batch_expected_cost(terms, states, pdr):
    """Ensemble-summed expected cost for a batch, shape (B,).

    ``states`` is (B, m, p), ``pdr`` (B, m); agrees with summing
    expected_cost over systems.
    """
    closed, open_, drift = terms
    states = np.asarray(states, dtype=float)
    quad_c = np.einsum("bmp,mpq,bmq->bm", states, closed, states)
    quad_o = np.einsum("bmp,mpq,bmq->bm", states, open_, states)
    per_system = pdr * quad_c + (1.0 - pdr) * quad_o + drift
    return per_system.sum(axis=1)


def sample_ensemble(config, rng):
    """Draw ``config.m`` plants with i.i.d. diagonal gains from the ranges."""
    lyap = config.lyap_matrix()
    noise_cov = config.noise_var * np.eye(config.p)
    models = []
    for _ in range(config.m):
        closed = np.diag(rng.uniform(*config.closed_gain_range, size=config.p))
        open_ = np.diag(rng.uniform(*config.open_gain_range, size=config.p))
        models.append(
            PlantModel(a_closed=closed, a_open=open_, noise_cov=noise_cov, lyap=lyap)
        )
    return models
