"""scikit-learn style front end for the autoencoder model and the MF baseline.

Both estimators are fit on a :class:`~hdmf.folksonomy.SplitFolksonomy` (the
validation part drives early stopping) or on a bare training
:class:`~hdmf.folksonomy.Folksonomy`. ``get_params``/``set_params``/``clone``
come from :class:`sklearn.base.BaseEstimator`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import (DEFAULT_CUTOFFS, EvalReport, ScoreMatrix, evaluate_split,
                         predict_scores_hdmf, predict_scores_mf, rank_for_user)
from .folksonomy import Folksonomy, SplitFolksonomy, normalize_profiles
from .network import ModelParams, encode
from .objective import HyperParams
from .training import (DEFAULT_HIDDEN_SIZES, MfModel, TrainConfig, TrainingData, train_hdmf,
                       train_mf)
from .validation import check_folksonomy_input, check_indices, check_profiles


def _training_data(X, binarize: bool) -> tuple[TrainingData, Folksonomy]:
    train, valid = check_folksonomy_input(X)
    empty = train.with_assignments(np.empty((0, 3), dtype=np.int64))
    split = SplitFolksonomy(train, valid if valid is not None else empty, empty)
    return TrainingData.from_split(split, binarize), train


class _RecommenderMixin:
    """Ranking and evaluation on top of ``score_matrix()``."""

    def score_matrix(self) -> ScoreMatrix:
        raise NotImplementedError

    def predict(self, users, items) -> np.ndarray:
        """Predicted ratings for aligned arrays of user and item indices."""
        check_is_fitted(self)
        users = check_indices(users, self.n_users_, "user")
        items = check_indices(items, self.n_items_, "item")
        users, items = np.broadcast_arrays(users, items)
        sm = self.score_matrix()
        return (sm.user_factors[users] * sm.item_factors[items]).sum(axis=-1)

    def recommend(self, user: int, k: int = 10, exclude_seen: bool = True) -> np.ndarray:
        """Top-``k`` item indices for one user, training items excluded by default."""
        check_is_fitted(self)
        user = int(check_indices(np.array(user), self.n_users_, "user"))
        exclude = self.exclusions_[user] if exclude_seen else ()
        return rank_for_user(self.score_matrix(), user, exclude, limit=k)

    def evaluate(self, heldout: Folksonomy, cutoffs=DEFAULT_CUTOFFS) -> EvalReport:
        """Held-out evaluation against the training folksonomy used in ``fit``."""
        check_is_fitted(self)
        return evaluate_split(self.score_matrix(), self.train_, heldout, cutoffs)


class HDMFRecommender(_RecommenderMixin, BaseEstimator):
    """Tag-aware recommender trained with the hybrid autoencoder objective.

    Parameters mirror :class:`~hdmf.training.TrainConfig`; ``random_state``
    seeds initialization and batch order.

    Attributes set by ``fit``: ``params_`` (user tower, or both towers when
    shared), ``item_params_`` (``None`` when shared), ``train_log_``,
    ``user_codes_`` and ``item_codes_`` (one row per entity),
    ``exclusions_``, ``train_``, ``n_users_``, ``n_items_``,
    ``n_features_in_`` (tag vocabulary size).
    """

    def __init__(self, hidden_sizes=DEFAULT_HIDDEN_SIZES, learning_rate=0.002,
                 lambda_theta=0.01, lambda_e=0.2, max_epochs=500, batch_pairs=32,
                 early_stop_patience=5, eval_every=1, init_stddev=0.1, hybrid=True,
                 untied_towers=False, binarize_ratings=False, clip_norm=1e3,
                 convergence_tol=1e-6, random_state=0):
        self.hidden_sizes = hidden_sizes
        self.learning_rate = learning_rate
        self.lambda_theta = lambda_theta
        self.lambda_e = lambda_e
        self.max_epochs = max_epochs
        self.batch_pairs = batch_pairs
        self.early_stop_patience = early_stop_patience
        self.eval_every = eval_every
        self.init_stddev = init_stddev
        self.hybrid = hybrid
        self.untied_towers = untied_towers
        self.binarize_ratings = binarize_ratings
        self.clip_norm = clip_norm
        self.convergence_tol = convergence_tol
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, max_epochs=self.max_epochs,
            batch_pairs=self.batch_pairs, early_stop_patience=self.early_stop_patience,
            eval_every=self.eval_every, seed=self.random_state,
            hp=HyperParams(self.lambda_theta, self.lambda_e),
            hidden_sizes=tuple(self.hidden_sizes), init_stddev=self.init_stddev,
            hybrid=self.hybrid, untied_towers=self.untied_towers,
            binarize_ratings=self.binarize_ratings, clip_norm=self.clip_norm,
            convergence_tol=self.convergence_tol)

    def fit(self, X, y=None):
        cfg = self.train_config()
        data, train = _training_data(X, cfg.binarize_ratings)
        params, self.train_log_ = train_hdmf(data, cfg)
        if isinstance(params, tuple):
            self.params_, self.item_params_ = params
        else:
            self.params_, self.item_params_ = params, None
        self._set_data(data, train)
        return self

    @classmethod
    def from_params(cls, params, train: Folksonomy, item_params: ModelParams | None = None,
                    **kwargs) -> HDMFRecommender:
        """A fitted estimator around existing parameters, e.g. from a checkpoint."""
        if params.arch.input_dim != train.n_tags:
            raise ValueError(f"model expects {params.arch.input_dim} tags, "
                             f"folksonomy has {train.n_tags}")
        est = cls(hidden_sizes=params.arch.hidden_sizes, untied_towers=item_params is not None,
                  **kwargs)
        est.params_, est.item_params_, est.train_log_ = params, item_params, None
        data, train = _training_data(train, est.binarize_ratings)
        est._set_data(data, train)
        return est

    def _set_data(self, data: TrainingData, train: Folksonomy):
        self.train_ = train
        self.exclusions_ = data.exclusions
        self.user_profiles_ = data.user_profiles
        self.item_profiles_ = data.item_profiles
        self.n_users_, self.n_features_in_ = data.user_profiles.shape
        self.n_items_ = data.item_profiles.shape[0]
        sm = predict_scores_hdmf(self.params_, data.user_profiles, data.item_profiles,
                                 self.item_params_)
        self.user_codes_, self.item_codes_ = sm.user_factors, sm.item_factors

    def transform(self, profiles, kind: str = "user") -> np.ndarray:
        """Code-layer representations of raw tag-count profiles (one row each).

        Rows are max-normalized first, as during training. ``kind`` selects
        the tower and only matters with ``untied_towers``.
        """
        check_is_fitted(self)
        if kind not in ("user", "item"):
            raise ValueError("kind must be 'user' or 'item'")
        m = normalize_profiles(check_profiles(profiles, self.n_features_in_), allow_zero_rows=True)
        params = self.item_params_ if kind == "item" and self.item_params_ is not None else self.params_
        codes, _ = encode(params, m.T)
        return codes.T

    def score_matrix(self) -> ScoreMatrix:
        check_is_fitted(self)
        return ScoreMatrix(self.user_codes_, self.item_codes_)


class MFRecommender(_RecommenderMixin, BaseEstimator):
    """Plain matrix-factorization baseline over the user-item rating matrix."""

    def __init__(self, latent_dim=128, lambda_mf=0.01, learning_rate=0.002, max_epochs=500,
                 batch_pairs=32, early_stop_patience=5, eval_every=1, binarize_ratings=False,
                 clip_norm=1e3, convergence_tol=1e-6, random_state=0):
        self.latent_dim = latent_dim
        self.lambda_mf = lambda_mf
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_pairs = batch_pairs
        self.early_stop_patience = early_stop_patience
        self.eval_every = eval_every
        self.binarize_ratings = binarize_ratings
        self.clip_norm = clip_norm
        self.convergence_tol = convergence_tol
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, max_epochs=self.max_epochs,
            batch_pairs=self.batch_pairs, early_stop_patience=self.early_stop_patience,
            eval_every=self.eval_every, seed=self.random_state,
            binarize_ratings=self.binarize_ratings, clip_norm=self.clip_norm,
            convergence_tol=self.convergence_tol, latent_dim=self.latent_dim,
            lambda_mf=self.lambda_mf)

    def fit(self, X, y=None):
        cfg = self.train_config()
        data, train = _training_data(X, cfg.binarize_ratings)
        self.model_, self.train_log_ = train_mf(data.ratings, cfg.latent_dim, cfg,
                                                valid_relevance=data.valid_relevance)
        self._set_data(data, train)
        return self

    @classmethod
    def from_model(cls, model: MfModel, train: Folksonomy, **kwargs) -> MFRecommender:
        if model.user_factors.shape[0] != train.n_users or model.item_factors.shape[0] != train.n_items:
            raise ValueError("MF model does not match the folksonomy's users/items")
        est = cls(latent_dim=model.k, **kwargs)
        est.model_, est.train_log_ = model, None
        data, train = _training_data(train, est.binarize_ratings)
        est._set_data(data, train)
        return est

    def _set_data(self, data: TrainingData, train: Folksonomy):
        self.train_ = train
        self.exclusions_ = data.exclusions
        self.n_users_, self.n_items_ = data.ratings.shape
        self.n_features_in_ = train.n_tags

    def score_matrix(self) -> ScoreMatrix:
        check_is_fitted(self)
        return predict_scores_mf(self.model_)
