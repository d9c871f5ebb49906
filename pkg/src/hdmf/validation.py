"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

from .folksonomy import Folksonomy, SplitFolksonomy


def check_folksonomy_input(X) -> tuple[Folksonomy, Folksonomy | None]:
    """Accept a :class:`SplitFolksonomy` or a training :class:`Folksonomy`.

    Returns ``(train, valid)``; ``valid`` is ``None`` when there is no
    validation data.
    """
    if isinstance(X, SplitFolksonomy):
        return X.train, (X.valid if len(X.valid) else None)
    if isinstance(X, Folksonomy):
        return X, None
    raise TypeError(f"expected Folksonomy or SplitFolksonomy, got {type(X).__name__}")


def check_profiles(profiles, n_tags: int) -> np.ndarray:
    m = np.asarray(profiles, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.shape[1] != n_tags:
        raise ValueError(f"profiles must have shape (n, {n_tags}), got {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("profiles contain NaN or infinity")
    if (m < 0).any():
        raise ValueError("profiles must be nonnegative")
    return m


def check_indices(idx, n: int, name: str) -> np.ndarray:
    a = np.asarray(idx)
    if a.dtype.kind not in "iu":
        raise TypeError(f"{name} indices must be integers")
    a = a.astype(np.int64)
    if a.size and (a.min() < 0 or a.max() >= n):
        raise IndexError(f"{name} index out of range [0, {n})")
    return a


def check_cutoffs(cutoffs) -> tuple[int, ...]:
    if isinstance(cutoffs, str):
        cutoffs = [c for c in cutoffs.split(",") if c.strip()]
    try:
        out = tuple(int(c) for c in cutoffs)
    except (TypeError, ValueError):
        raise ValueError(f"cutoffs must be integers, got {cutoffs!r}") from None
    if not out or min(out) < 1:
        raise ValueError("cutoffs must be positive integers")
    return out
