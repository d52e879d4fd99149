"""Small input-validation helpers shared across the package.

All checks raise ``ValueError`` with a message naming the offending
argument, so callers get a usable diagnostic instead of a numpy shape
error three frames deep.
"""

import numpy as np


def as_float_array(x, name, shape=None):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def check_channel_matrix(h, m=None, n=None):
    """Validate a fading-gain matrix (rows = systems, columns = channels)."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2:
        raise ValueError(f"channel matrix must be 2-D, got ndim={h.ndim}")
    if m is not None and h.shape[0] != m:
        raise ValueError(f"channel matrix has {h.shape[0]} rows, expected m={m}")
    if n is not None and h.shape[1] != n:
        raise ValueError(f"channel matrix has {h.shape[1]} columns, expected n={n}")
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix must be finite")
    if np.any(h < 0):
        raise ValueError("channel matrix entries must be nonnegative")
    return h


def check_probability(p, name):
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name}={p} must lie in [0, 1]")
    return p


def check_positive(x, name):
    x = float(x)
    if not x > 0:
        raise ValueError(f"{name}={x} must be positive")
    return x


def check_symmetric_psd(mat, name, strict=False):
    """Validate symmetry and (semi)definiteness via eigenvalues."""
    mat = as_float_array(mat, name)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    floor = 1e-12 * max(1.0, abs(eigs).max())
    if strict and eigs.min() <= floor:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {eigs.min():g})")
    if not strict and eigs.min() < -floor:
        raise ValueError(f"{name} must be positive semidefinite (min eigenvalue {eigs.min():g})")
    return mat


def spectral_radius(mat):
    return float(np.abs(np.linalg.eigvals(np.asarray(mat, dtype=float))).max())
