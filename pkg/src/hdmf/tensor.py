"""Dense float64 primitives used by the network and the loss.

Products accumulate over the inner dimension strictly left to right, so every
output cell is ``((a0*b0 + a1*b1) + a2*b2) + ...``, the same sequence a naive
triple loop produces. That makes fixed-seed training bit-reproducible without
depending on the BLAS build or thread count.

:func:`blas_products` switches :func:`matmul` to ``numpy.matmul`` for large
runs where the ordered path is too slow. BLAS results are still repeatable on
one machine but no longer match the naive loop bit for bit.
"""
from __future__ import annotations

import contextlib
import contextvars
import math

import numpy as np

_USE_BLAS = contextvars.ContextVar("hdmf_use_blas", default=False)


@contextlib.contextmanager
def blas_products():
    token = _USE_BLAS.set(True)
    try:
        yield
    finally:
        _USE_BLAS.reset(token)


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b):
    """Matrix product ``a @ b`` with a fixed per-cell summation order."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    if _USE_BLAS.get():
        with np.errstate(over="ignore", invalid="ignore"):
            out = a @ b
    else:
        out = np.zeros((a.shape[0], b.shape[1]))
        # column/row slices of C-ordered copies keep each step contiguous
        at = np.ascontiguousarray(a.T)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(a.shape[1]):
                out += np.multiply.outer(at[k], b[k])
    if not np.isfinite(out).all():
        raise FloatingPointError("matmul produced non-finite values")
    return out


def add_bias(m, b):
    """Add one bias per row (output unit), broadcast across columns."""
    m = as_matrix(m)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != m.shape[0]:
        raise ValueError(f"bias of shape {b.shape} does not fit {m.shape[0]} rows")
    return m + b[:, None]


def tanh_map(m):
    return np.tanh(np.asarray(m, dtype=np.float64))


def tanh_grad_from_output(h):
    """Derivative of tanh expressed through its output: ``1 - h**2``."""
    return 1.0 - h * h


def l2_norm(v) -> float:
    v = np.asarray(v, dtype=np.float64).ravel()
    return math.sqrt(float(np.dot(v, v)))


def frobenius_sq(m) -> float:
    """Squared Frobenius norm (sum of squared entries)."""
    m = np.asarray(m, dtype=np.float64).ravel()
    return float(np.dot(m, m))
