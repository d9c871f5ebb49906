"""SGD training for the hybrid autoencoder model and the plain MF baseline."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .evaluation import ScoreMatrix, mean_reciprocal_rank, predict_scores_hdmf
from .exceptions import ConfigError, DivergenceError
from .folksonomy import (SplitFolksonomy, build_profiles, build_rating_matrix,
                         normalize_profiles, user_item_sets)
from .network import Architecture, ModelParams, init_params
from .objective import (BatchSpec, GradientSet, HyperParams, dmf_batch_loss, dmf_gradients,
                        hdmf_gradients, hdmf_loss)

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_SIZES = (2000, 300, 128, 300, 2000)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.002
    max_epochs: int = 500
    batch_pairs: int = 32
    early_stop_patience: int = 5
    eval_every: int = 1
    seed: int = 0
    hp: HyperParams = field(default_factory=HyperParams)
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES
    init_stddev: float = 0.1
    hybrid: bool = True
    untied_towers: bool = False
    binarize_ratings: bool = False
    clip_norm: float = 1e3
    convergence_tol: float = 1e-6
    latent_dim: int = 128
    lambda_mf: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(s) for s in self.hidden_sizes))
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_pairs < 1 or self.early_stop_patience < 1 or self.eval_every < 1:
            raise ConfigError("batch_pairs, early_stop_patience and eval_every must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.latent_dim < 1 or self.lambda_mf < 0 or not self.clip_norm > 0:
            raise ConfigError("latent_dim must be >= 1, lambda_mf >= 0, clip_norm > 0")
        Architecture.from_hidden_sizes(1, self.hidden_sizes)

    def architecture(self, input_dim: int) -> Architecture:
        return Architecture.from_hidden_sizes(input_dim, self.hidden_sizes)

    def with_(self, **changes) -> TrainConfig:
        return replace(self, **changes)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mrr: float | None
    seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int | None = None
    best_val_mrr: float | None = None
    clip_events: int = 0

    @property
    def losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path


@dataclass
class MfModel:
    user_factors: np.ndarray
    item_factors: np.ndarray

    def __post_init__(self):
        if self.user_factors.ndim != 2 or self.item_factors.ndim != 2 \
                or self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("factor matrices must be 2-D with equal latent dimension")

    @property
    def k(self) -> int:
        return self.user_factors.shape[1]

    def copy(self) -> MfModel:
        return MfModel(self.user_factors.copy(), self.item_factors.copy())

    def equals(self, other: MfModel) -> bool:
        return (self.user_factors.tobytes() == other.user_factors.tobytes()
                and self.item_factors.tobytes() == other.item_factors.tobytes()
                and self.user_factors.shape == other.user_factors.shape)


@dataclass
class TrainingData:
    """Matrices derived from a split; profiles are row-normalized training profiles."""
    user_profiles: np.ndarray
    item_profiles: np.ndarray
    ratings: sp.csr_array
    exclusions: list[set[int]]
    valid_relevance: dict[int, set[int]]

    @classmethod
    def from_split(cls, split: SplitFolksonomy, binarize: bool = False) -> TrainingData:
        from .evaluation import heldout_relevance

        X, Y = build_profiles(split.train)
        return cls(normalize_profiles(X, allow_zero_rows=True),
                   normalize_profiles(Y, allow_zero_rows=True),
                   build_rating_matrix(split.train, binarize=binarize),
                   user_item_sets(split.train),
                   heldout_relevance(split.train, split.valid) if len(split.valid) else {})

    def pairs(self):
        coo = self.ratings.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return (coo.row[order].astype(np.int64), coo.col[order].astype(np.int64),
                coo.data[order].astype(np.float64))


class _EarlyStopper:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = None
        self.snapshot = None
        self.bad = 0

    def update(self, epoch, score, snapshot_fn) -> bool:
        """Record a validation score; return True when patience is exhausted."""
        if score > self.best:
            self.best, self.best_epoch, self.bad = score, epoch, 0
            self.snapshot = snapshot_fn()
            return False
        self.bad += 1
        return self.bad >= self.patience


def _clip(grads: list[GradientSet], limit: float, log: TrainLog) -> None:
    norm = math.sqrt(sum(g.norm() ** 2 for g in grads))
    if norm > limit:
        log.clip_events += 1
        logger.info("gradient norm %.3g clipped to %.3g", norm, limit)
        for g in grads:
            g.scale(limit / norm)


def _sgd_step(params: ModelParams, grads: GradientSet, lr: float) -> None:
    for w, g in zip(params.W, grads.dW):
        w -= lr * g
    for v, g in zip(params.b, grads.db):
        v -= lr * g


def _converged(prev, total, tol) -> bool:
    return prev is not None and abs(prev - total) <= tol * max(abs(prev), 1e-300)


def _finish_epoch(log, epoch, total, started, val_mrr):
    rec = EpochRecord(epoch, total, val_mrr, time.perf_counter() - started)
    log.records.append(rec)
    logger.debug("epoch %d loss %.6g val_mrr %s", epoch, total, val_mrr)


def train_hdmf(data: SplitFolksonomy | TrainingData, cfg: TrainConfig = TrainConfig()):
    """Train the autoencoder model; returns ``(params, log)``.

    ``params`` is a :class:`ModelParams`, or a ``(user, item)`` pair when
    ``cfg.untied_towers``. With a validation split the snapshot with the best
    validation MRR is returned, otherwise the final parameters.
    """
    if isinstance(data, SplitFolksonomy):
        data = TrainingData.from_split(data, cfg.binarize_ratings)
    users, items, ratings = data.pairs()
    if len(ratings) == 0:
        raise ValueError("no observed training pairs")
    arch = cfg.architecture(data.user_profiles.shape[1])
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.integers(0, 2**31, size=2)
    towers = [init_params(arch, int(seeds[0]), cfg.init_stddev)]
    if cfg.untied_towers:
        towers.append(init_params(arch, int(seeds[1]), cfg.init_stddev))
    item_params = towers[1] if cfg.untied_towers else None
    loss_fn, grad_fn = (hdmf_loss, hdmf_gradients) if cfg.hybrid else (dmf_batch_loss, dmf_gradients)

    def snapshot():
        return tuple(p.copy() for p in towers)

    log = TrainLog()
    stopper = _EarlyStopper(cfg.early_stop_patience)
    prev = None
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        perm = rng.permutation(len(ratings))
        total = 0.0
        for start in range(0, len(perm), cfg.batch_pairs):
            idx = perm[start:start + cfg.batch_pairs]
            batch = BatchSpec.from_pairs(users[idx], items[idx], ratings[idx],
                                         data.user_profiles, data.item_profiles)
            try:
                loss, traces = loss_fn(batch, towers[0], cfg.hp, item_params)
            except FloatingPointError as exc:
                raise DivergenceError(f"epoch {epoch}: forward pass overflowed ({exc})") from exc
            if not math.isfinite(loss):
                raise DivergenceError(f"epoch {epoch}: loss became {loss}")
            grads = grad_fn(batch, towers[0], cfg.hp, traces, item_params)
            grads = list(grads) if isinstance(grads, tuple) else [grads]
            _clip(grads, cfg.clip_norm, log)
            for p, g in zip(towers, grads):
                _sgd_step(p, g, cfg.learning_rate)
            total += loss
        if not all(p.is_finite() for p in towers):
            raise DivergenceError(f"epoch {epoch}: parameters became non-finite")

        val_mrr = None
        stop = ""
        if data.valid_relevance and epoch % cfg.eval_every == 0:
            scores = predict_scores_hdmf(towers[0], data.user_profiles, data.item_profiles,
                                         item_params)
            val_mrr = mean_reciprocal_rank(scores, data.valid_relevance, data.exclusions)
            if stopper.update(epoch, val_mrr, snapshot):
                stop = "early_stopping"
        _finish_epoch(log, epoch, total, started, val_mrr)
        if not stop and _converged(prev, total, cfg.convergence_tol):
            stop = "converged"
        prev = total
        if stop:
            log.stop_reason = stop
            break
    else:
        log.stop_reason = "max_epochs"

    result = stopper.snapshot if stopper.snapshot is not None else snapshot()
    log.best_epoch, log.best_val_mrr = stopper.best_epoch, (
        stopper.best if stopper.best_epoch is not None else None)
    logger.info("training stopped (%s) after %d epochs; best epoch %s",
                log.stop_reason, len(log.records), log.best_epoch)
    return (result[0] if len(result) == 1 else result), log


def mf_batch_loss(mf: MfModel, users, items, ratings, lambda_mf: float) -> float:
    resid = ratings - (mf.user_factors[users] * mf.item_factors[items]).sum(axis=1)
    uu, ui = np.unique(users), np.unique(items)
    reg = float((mf.user_factors[uu] ** 2).sum() + (mf.item_factors[ui] ** 2).sum())
    return float(np.dot(resid, resid)) + lambda_mf * reg


def mf_batch_gradients(mf: MfModel, users, items, ratings, lambda_mf: float):
    """Gradients for the users/items in the batch: ``(uu, gU, ui, gV)``."""
    X, Y = mf.user_factors, mf.item_factors
    resid = ratings - (X[users] * Y[items]).sum(axis=1)
    uu, upos = np.unique(users, return_inverse=True)
    ui, ipos = np.unique(items, return_inverse=True)
    gU = 2.0 * lambda_mf * X[uu]
    gV = 2.0 * lambda_mf * Y[ui]
    np.add.at(gU, upos, -2.0 * resid[:, None] * Y[items])
    np.add.at(gV, ipos, -2.0 * resid[:, None] * X[users])
    return uu, gU, ui, gV


def train_mf(ratings, k: int | None = None, cfg: TrainConfig = TrainConfig(), *,
             valid_relevance: dict[int, set[int]] | None = None):
    """Plain matrix factorization by SGD over observed cells; returns ``(MfModel, log)``.

    Minimizes squared residuals plus ``lambda_mf`` times the squared norms of
    the factor rows present in each batch. Early stopping uses validation MRR
    with each user's observed items excluded from ranking.
    """
    ratings = sp.csr_array(ratings)
    k = cfg.latent_dim if k is None else int(k)
    coo = ratings.tocoo()
    order = np.lexsort((coo.col, coo.row))
    users = coo.row[order].astype(np.int64)
    items = coo.col[order].astype(np.int64)
    values = coo.data[order].astype(np.float64)
    if len(values) == 0:
        raise ValueError("no observed ratings")
    n_users, n_items = ratings.shape
    rng = np.random.default_rng(cfg.seed)
    scale = 0.1 / math.sqrt(k)
    mf = MfModel(rng.normal(0.0, scale, size=(n_users, k)),
                 rng.normal(0.0, scale, size=(n_items, k)))
    exclusions = [set(ratings.indices[ratings.indptr[u]:ratings.indptr[u + 1]].tolist())
                  for u in range(n_users)]

    log = TrainLog()
    stopper = _EarlyStopper(cfg.early_stop_patience)
    prev = None
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        perm = rng.permutation(len(values))
        total = 0.0
        for start in range(0, len(perm), cfg.batch_pairs):
            idx = perm[start:start + cfg.batch_pairs]
            u, i, r = users[idx], items[idx], values[idx]
            loss = mf_batch_loss(mf, u, i, r, cfg.lambda_mf)
            if not math.isfinite(loss):
                raise DivergenceError(f"epoch {epoch}: loss became {loss}")
            uu, gU, ui, gV = mf_batch_gradients(mf, u, i, r, cfg.lambda_mf)
            norm = math.sqrt(float((gU ** 2).sum() + (gV ** 2).sum()))
            if norm > cfg.clip_norm:
                log.clip_events += 1
                gU *= cfg.clip_norm / norm
                gV *= cfg.clip_norm / norm
            mf.user_factors[uu] -= cfg.learning_rate * gU
            mf.item_factors[ui] -= cfg.learning_rate * gV
            total += loss
        if not (np.isfinite(mf.user_factors).all() and np.isfinite(mf.item_factors).all()):
            raise DivergenceError(f"epoch {epoch}: factors became non-finite")

        val_mrr = None
        stop = ""
        if valid_relevance and epoch % cfg.eval_every == 0:
            val_mrr = mean_reciprocal_rank(ScoreMatrix(mf.user_factors, mf.item_factors),
                                           valid_relevance, exclusions)
            if stopper.update(epoch, val_mrr, mf.copy):
                stop = "early_stopping"
        _finish_epoch(log, epoch, total, started, val_mrr)
        if not stop and _converged(prev, total, cfg.convergence_tol):
            stop = "converged"
        prev = total
        if stop:
            log.stop_reason = stop
            break
    else:
        log.stop_reason = "max_epochs"

    log.best_epoch = stopper.best_epoch
    log.best_val_mrr = stopper.best if stopper.best_epoch is not None else None
    return (stopper.snapshot if stopper.snapshot is not None else mf), log
