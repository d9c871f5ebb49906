"""Hybrid loss (factorization error + reconstruction error + L2) and its gradients.

Every loss/gradient entry point takes ``params`` for the user tower and an
optional ``item_params``. When ``item_params`` is omitted both towers share
one parameter set and gradients from user and item columns accumulate into a
single :class:`GradientSet`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError
from .network import Architecture, ForwardTrace, ModelParams, encode, forward_full
from .tensor import frobenius_sq, matmul, tanh_grad_from_output


@dataclass(frozen=True)
class HyperParams:
    lambda_theta: float = 0.01
    lambda_e: float = 0.2

    def __post_init__(self):
        if not (0 <= self.lambda_theta < 1 and 0 <= self.lambda_e < 1):
            raise ConfigError("lambda_theta and lambda_e must lie in [0, 1)")
        if self.lambda_theta + self.lambda_e >= 1:
            raise ConfigError(
                f"lambda_theta + lambda_e must be < 1, got {self.lambda_theta + self.lambda_e}")

    @property
    def dmf_weight(self) -> float:
        return 1.0 - self.lambda_theta - self.lambda_e


@dataclass
class BatchSpec:
    """Observed pairs of one mini-batch plus the profile columns they touch.

    ``user_pos``/``item_pos`` index columns of ``user_columns``/``item_columns``;
    ``user_ids``/``item_ids`` map those columns back to global indices.
    """
    user_pos: np.ndarray
    item_pos: np.ndarray
    ratings: np.ndarray
    user_columns: np.ndarray
    item_columns: np.ndarray
    user_ids: np.ndarray | None = None
    item_ids: np.ndarray | None = None

    def __post_init__(self):
        self.user_pos = np.asarray(self.user_pos, dtype=np.int64)
        self.item_pos = np.asarray(self.item_pos, dtype=np.int64)
        self.ratings = np.asarray(self.ratings, dtype=np.float64)
        if not (self.user_pos.shape == self.item_pos.shape == self.ratings.shape):
            raise ValueError("pair arrays must have equal length")
        for pos, cols, name in ((self.user_pos, self.user_columns, "user"),
                                (self.item_pos, self.item_columns, "item")):
            if len(pos) and (pos.min() < 0 or pos.max() >= cols.shape[1]):
                raise IndexError(f"{name} pair index out of range")

    @classmethod
    def from_pairs(cls, users, items, ratings, user_profiles, item_profiles) -> BatchSpec:
        """Assemble a batch from global pair indices and row-per-entity profiles.

        Each distinct user and item appears once as a column, in ascending
        index order.
        """
        user_ids, user_pos = np.unique(np.asarray(users, dtype=np.int64), return_inverse=True)
        item_ids, item_pos = np.unique(np.asarray(items, dtype=np.int64), return_inverse=True)
        return cls(user_pos, item_pos, ratings,
                   np.ascontiguousarray(user_profiles[user_ids].T),
                   np.ascontiguousarray(item_profiles[item_ids].T),
                   user_ids, item_ids)

    def __len__(self):
        return len(self.ratings)


@dataclass
class GradientSet:
    dW: list[np.ndarray]
    db: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> GradientSet:
        return cls([np.zeros_like(w) for w in params.W], [np.zeros_like(v) for v in params.b])

    def arrays(self):
        yield from self.dW
        yield from self.db

    def norm(self) -> float:
        return math.sqrt(sum(frobenius_sq(g) for g in self.arrays()))

    def scale(self, factor: float) -> None:
        for g in self.arrays():
            g *= factor

    def add(self, other: GradientSet) -> GradientSet:
        return GradientSet([a + c for a, c in zip(self.dW, other.dW)],
                           [a + c for a, c in zip(self.db, other.db)])


def _towers(params, item_params):
    return params, (params if item_params is None else item_params)


def _param_sets(params, item_params):
    return [params] if item_params is None or item_params is params else [params, item_params]


def pair_scores(codes_u, codes_v, user_pos, item_pos) -> np.ndarray:
    """Dot products of the code columns named by each pair."""
    return (codes_u[:, user_pos] * codes_v[:, item_pos]).sum(axis=0)


def factorization_error(codes_u, codes_v, user_pos, item_pos, ratings) -> float:
    """Sum of squared residuals ``(r - u.v)**2`` over observed pairs."""
    resid = np.asarray(ratings, dtype=np.float64) - pair_scores(codes_u, codes_v, user_pos, item_pos)
    return float(np.dot(resid, resid))


def regularizer(param_sets, n_biases: int | None = None) -> float:
    """Squared L2 of all weights plus the first ``n_biases`` biases (all if None)."""
    total = 0.0
    for p in param_sets:
        total += sum(frobenius_sq(w) for w in p.W)
        total += sum(frobenius_sq(v) for v in p.b[:n_biases])
    return total


def reconstruction_loss(batch_inputs, reconstructions) -> float:
    """Sum over columns of the unsquared L2 norm of ``reconstruction - input``."""
    x = np.asarray(batch_inputs, dtype=np.float64)
    r = np.asarray(reconstructions, dtype=np.float64)
    if x.shape != r.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {r.shape}")
    diff = r - x
    return float(np.sqrt((diff * diff).sum(axis=0)).sum())


def dmf_loss(codes_u, codes_v, pairs, params: ModelParams, hp: HyperParams,
             item_params: ModelParams | None = None) -> float:
    """Factorization-only objective: encoder biases regularized, no reconstruction.

    ``pairs`` is ``(user_pos, item_pos, ratings)`` into the code columns.
    """
    user_pos, item_pos, ratings = (np.asarray(p) for p in pairs)
    for pos, codes in ((user_pos, codes_u), (item_pos, codes_v)):
        if len(pos) and (pos.min() < 0 or pos.max() >= codes.shape[1]):
            raise IndexError("pair index out of range")
    K = params.arch.depth
    return ((1.0 - hp.lambda_theta) * factorization_error(codes_u, codes_v, user_pos, item_pos, ratings)
            + hp.lambda_theta * regularizer(_param_sets(params, item_params), K))


def hdmf_loss(batch: BatchSpec, params: ModelParams, hp: HyperParams,
              item_params: ModelParams | None = None
              ) -> tuple[float, tuple[ForwardTrace, ForwardTrace]]:
    """Hybrid loss of one batch and the forward traces needed for backprop."""
    pu, pv = _towers(params, item_params)
    _, recon_u, tu = forward_full(pu, batch.user_columns)
    _, recon_v, tv = forward_full(pv, batch.item_columns)
    fact = factorization_error(tu.codes, tv.codes, batch.user_pos, batch.item_pos, batch.ratings)
    recon = (reconstruction_loss(batch.user_columns, recon_u)
             + reconstruction_loss(batch.item_columns, recon_v))
    reg = regularizer(_param_sets(params, item_params))
    loss = hp.dmf_weight * fact + hp.lambda_e * recon + hp.lambda_theta * reg
    return loss, (tu, tv)


def dmf_batch_loss(batch: BatchSpec, params: ModelParams, hp: HyperParams,
                   item_params: ModelParams | None = None
                   ) -> tuple[float, tuple[ForwardTrace, ForwardTrace]]:
    """:func:`dmf_loss` evaluated on a batch, encoder only."""
    pu, pv = _towers(params, item_params)
    cu, tu = encode(pu, batch.user_columns)
    cv, tv = encode(pv, batch.item_columns)
    loss = dmf_loss(cu, cv, (batch.user_pos, batch.item_pos, batch.ratings), params, hp, item_params)
    return loss, (tu, tv)


def _code_grads(batch: BatchSpec, codes_u, codes_v, weight):
    resid = batch.ratings - pair_scores(codes_u, codes_v, batch.user_pos, batch.item_pos)
    coef = -2.0 * weight * resid
    gu = np.zeros_like(codes_u)
    gv = np.zeros_like(codes_v)
    np.add.at(gu.T, batch.user_pos, (coef * codes_v[:, batch.item_pos]).T)
    np.add.at(gv.T, batch.item_pos, (coef * codes_u[:, batch.user_pos]).T)
    return gu, gv


def _recon_grad(inputs, recon, weight):
    diff = recon - inputs
    norms = np.sqrt((diff * diff).sum(axis=0))
    # subgradient 0 where the column is reconstructed exactly
    safe = np.where(norms > 0, norms, 1.0)
    return weight * np.where(norms > 0, diff / safe, 0.0)


def backprop(params: ModelParams, trace: ForwardTrace, grad_codes,
             grad_output=None, *, tied_decoder=True) -> GradientSet:
    """Gradient of a loss w.r.t. one tower's parameters, excluding regularization.

    ``grad_output`` is dL/d(reconstruction) and requires a decoded trace.
    Each ``W[j]`` accumulates its encoder use and its transposed decoder use;
    ``tied_decoder=False`` drops the decoder contribution to weights and
    exists only to demonstrate that the gradient check catches it.
    """
    K = params.arch.depth
    grads = GradientSet.zeros_like(params)
    if grad_output is not None:
        if not trace.decoded:
            raise ValueError("reconstruction gradient given but trace was not decoded")
        g = grad_output
        for layer in range(2 * K, K, -1):
            delta = g * tanh_grad_from_output(trace.h[layer])
            w = params.W[2 * K - layer]
            if tied_decoder:
                grads.dW[2 * K - layer] += matmul(trace.h[layer - 1], delta.T)
            grads.db[layer - 1] += delta.sum(axis=1)
            g = matmul(w, delta)
        g = g + grad_codes
    else:
        g = grad_codes
    for layer in range(K, 0, -1):
        delta = g * tanh_grad_from_output(trace.h[layer])
        grads.dW[layer - 1] += matmul(delta, trace.h[layer - 1].T)
        grads.db[layer - 1] += delta.sum(axis=1)
        if layer > 1:
            g = matmul(params.W[layer - 1].T, delta)
    return grads


def _add_regularizer(grads: GradientSet, params: ModelParams, weight: float, n_biases=None):
    for g, w in zip(grads.dW, params.W):
        g += 2.0 * weight * w
    for g, v in list(zip(grads.db, params.b))[:n_biases]:
        g += 2.0 * weight * v


def hdmf_gradients(batch: BatchSpec, params: ModelParams, hp: HyperParams,
                   traces: tuple[ForwardTrace, ForwardTrace],
                   item_params: ModelParams | None = None, *, tied_decoder=True):
    """Exact gradient of :func:`hdmf_loss`.

    Returns one :class:`GradientSet` for shared towers, or a ``(user, item)``
    pair when ``item_params`` is a separate parameter set.
    """
    pu, pv = _towers(params, item_params)
    tu, tv = traces
    if not (tu.decoded and tv.decoded):
        raise ValueError("traces must come from hdmf_loss (decoder outputs missing)")
    if tu.h[1].shape[0] != pu.arch.encoder_sizes[0] or tv.h[1].shape[0] != pv.arch.encoder_sizes[0]:
        raise ValueError("traces do not match parameters")
    gu_code, gv_code = _code_grads(batch, tu.codes, tv.codes, hp.dmf_weight)
    gu_out = _recon_grad(batch.user_columns, tu.reconstruction, hp.lambda_e)
    gv_out = _recon_grad(batch.item_columns, tv.reconstruction, hp.lambda_e)
    grads_u = backprop(pu, tu, gu_code, gu_out, tied_decoder=tied_decoder)
    grads_v = backprop(pv, tv, gv_code, gv_out, tied_decoder=tied_decoder)
    return _finish(grads_u, grads_v, params, item_params, hp.lambda_theta, None)


def dmf_gradients(batch: BatchSpec, params: ModelParams, hp: HyperParams,
                  traces: tuple[ForwardTrace, ForwardTrace],
                  item_params: ModelParams | None = None):
    """Exact gradient of :func:`dmf_batch_loss` (decoder biases get zero)."""
    pu, pv = _towers(params, item_params)
    tu, tv = traces
    gu_code, gv_code = _code_grads(batch, tu.codes, tv.codes, 1.0 - hp.lambda_theta)
    grads_u = backprop(pu, tu, gu_code)
    grads_v = backprop(pv, tv, gv_code)
    return _finish(grads_u, grads_v, params, item_params, hp.lambda_theta, params.arch.depth)


def _finish(grads_u, grads_v, params, item_params, reg_weight, n_biases):
    if item_params is None or item_params is params:
        grads = grads_u.add(grads_v)
        _add_regularizer(grads, params, reg_weight, n_biases)
        return grads
    _add_regularizer(grads_u, params, reg_weight, n_biases)
    _add_regularizer(grads_v, item_params, reg_weight, n_biases)
    return grads_u, grads_v


# --------------------------------------------------------------------------
# finite-difference harness


@dataclass
class GradientCheckReport:
    n_checked: int
    max_rel_error: float
    max_abs_error: float
    failures: list[tuple[str, tuple[int, ...], float, float]]
    rtol: float
    atol: float

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({len(self.failures)} coordinates)"
        return (f"{status}: {self.n_checked} coordinates, max rel err {self.max_rel_error:.3e}, "
                f"max abs err {self.max_abs_error:.3e} (rtol {self.rtol:g}, atol {self.atol:g})")


def random_instance(arch: Architecture, seed: int, n_users=3, n_items=4, n_pairs=5,
                    stddev=1.0, hp: HyperParams | None = None):
    """A small random batch with nonzero biases, for gradient and loss checks."""
    rng = np.random.default_rng(seed)
    params = ModelParams(arch,
                         [rng.normal(0.0, stddev, size=s) for s in arch.weight_shapes()],
                         [rng.normal(0.0, stddev, size=n) for n in arch.bias_sizes()],
                         rng_seed=seed)
    cells = rng.choice(n_users * n_items, size=n_pairs, replace=False)
    profiles = []
    for n in (n_users, n_items):
        m = rng.integers(0, 4, size=(n, arch.input_dim)).astype(float)
        m[:, 0] += 1  # keep rows nonzero
        profiles.append(m / m.max(axis=1, keepdims=True))
    batch = BatchSpec(cells // n_items, cells % n_items,
                      rng.integers(1, 4, size=n_pairs).astype(float),
                      profiles[0].T.copy(), profiles[1].T.copy(),
                      np.arange(n_users), np.arange(n_items))
    return params, batch, hp or HyperParams()


def check_gradients(arch: Architecture | Sequence[int] = (8, 5, 3), seed: int = 1, *,
                    input_dim: int = 12, n_users: int = 3, n_items: int = 4, n_pairs: int = 5,
                    eps: float = 1e-4, rtol: float = 1e-5, atol: float = 1e-8,
                    hp: HyperParams | None = None,
                    gradient_fn: Callable = hdmf_gradients,
                    max_params: int = 500) -> GradientCheckReport:
    """Compare analytic hybrid-loss gradients with central differences on every coordinate.

    A coordinate passes when ``|analytic - numeric| <= atol`` or
    ``|analytic - numeric| <= rtol * max(|analytic|, |numeric|)``.
    """
    if not isinstance(arch, Architecture):
        arch = Architecture(input_dim, tuple(arch))
    if arch.n_params() > max_params:
        raise ConfigError(f"architecture has {arch.n_params()} parameters; "
                          f"gradient checks are limited to {max_params}")
    params, batch, hp = random_instance(arch, seed, n_users, n_items, n_pairs, hp=hp)
    _, traces = hdmf_loss(batch, params, hp)
    analytic = gradient_fn(batch, params, hp, traces)
    grad_arrays = list(analytic.arrays())

    failures = []
    max_rel = max_abs = 0.0
    n = 0
    for (name, arr), garr in zip(params.arrays(), grad_arrays):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            up, _ = hdmf_loss(batch, params, hp)
            arr[idx] = orig - eps
            down, _ = hdmf_loss(batch, params, hp)
            arr[idx] = orig
            numeric = (up - down) / (2 * eps)
            a = float(garr[idx])
            err = abs(a - numeric)
            scale = max(abs(a), abs(numeric))
            rel = err / scale if scale > 0 else 0.0
            max_abs = max(max_abs, err)
            if err > atol:
                max_rel = max(max_rel, rel)
                if err > rtol * scale:
                    failures.append((name, idx, a, numeric))
            n += 1
    return GradientCheckReport(n, max_rel, max_abs, failures, rtol, atol)
