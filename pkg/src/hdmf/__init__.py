"""Hybrid deep-semantic matrix factorization for tag-aware recommendation."""
from .estimator import HDMFRecommender, MFRecommender
from .evaluation import EvalReport, evaluate, evaluate_split
from .folksonomy import (Assignment, Folksonomy, SplitFolksonomy, build_profiles,
                         build_rating_matrix, filter_infrequent_tags, load_assignments,
                         normalize_profiles, split_assignments)
from .network import Architecture, ModelParams, decode, encode, forward_full, init_params
from .objective import HyperParams, check_gradients, hdmf_gradients, hdmf_loss
from .training import MfModel, TrainConfig, TrainLog, train_hdmf, train_mf

__version__ = "0.1.0"

__all__ = [
    "Architecture", "Assignment", "EvalReport", "Folksonomy", "HDMFRecommender",
    "HyperParams", "MFRecommender", "MfModel", "ModelParams", "SplitFolksonomy",
    "TrainConfig", "TrainLog", "build_profiles", "build_rating_matrix", "check_gradients",
    "decode", "encode", "evaluate", "evaluate_split", "filter_infrequent_tags",
    "forward_full", "hdmf_gradients", "hdmf_loss", "init_params", "load_assignments",
    "normalize_profiles", "split_assignments", "train_hdmf", "train_mf",
]
