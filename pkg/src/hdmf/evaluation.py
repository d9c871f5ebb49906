"""Top-k ranking and P@k / R@k / F@k / MAP / MRR evaluation.

Protocol: a user's candidates are all items minus those they annotated in
training; relevant items are the held-out items they annotated that are not
in training. Users without relevant items are skipped. AP and RR use the full
ranking, not a truncated one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .folksonomy import Folksonomy, user_item_sets
from .tensor import matmul

logger = logging.getLogger(__name__)

DEFAULT_CUTOFFS = (5, 15, 30, 50)


class ScoreMatrix:
    """Scores ``users @ items.T`` for factor rows, computed in user chunks.

    Calling an instance with ``(user, item)`` returns one score; ``row(user)``
    returns that user's scores for every item.
    """

    def __init__(self, user_factors, item_factors, chunk=256):
        self.user_factors = np.asarray(user_factors, dtype=np.float64)
        self.item_factors = np.asarray(item_factors, dtype=np.float64)
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("user and item factors have different dimensions")
        self._item_t = np.ascontiguousarray(self.item_factors.T)
        self._chunk = chunk
        self._cache: dict[int, np.ndarray] = {}

    @property
    def shape(self):
        return self.user_factors.shape[0], self.item_factors.shape[0]

    def rows(self, users) -> np.ndarray:
        return matmul(self.user_factors[np.asarray(users)], self._item_t)

    def row(self, user: int) -> np.ndarray:
        start = (user // self._chunk) * self._chunk
        block = self._cache.get(start)
        if block is None:
            self._cache = {start: self.rows(np.arange(start, min(start + self._chunk, self.shape[0])))}
            block = self._cache[start]
        return block[user - start]

    def __call__(self, user: int, item: int) -> float:
        return float(self.row(user)[item])


def predict_scores_hdmf(params, user_profiles, item_profiles, item_params=None) -> ScoreMatrix:
    """Score function of a trained autoencoder: dot products of code vectors.

    Profiles are row-per-entity and must be normalized like the training
    inputs. Codes are computed once here.
    """
    from .network import encode

    pu = params
    pv = params if item_params is None else item_params
    user_profiles = np.asarray(user_profiles, dtype=np.float64)
    item_profiles = np.asarray(item_profiles, dtype=np.float64)
    if user_profiles.shape[1] != pu.arch.input_dim or item_profiles.shape[1] != pv.arch.input_dim:
        raise ValueError(f"profiles have {user_profiles.shape[1]} tags, "
                         f"model expects {pu.arch.input_dim}")
    user_codes, _ = encode(pu, user_profiles.T)
    item_codes, _ = encode(pv, item_profiles.T)
    return ScoreMatrix(user_codes.T, item_codes.T)


def predict_scores_mf(mf) -> ScoreMatrix:
    return ScoreMatrix(mf.user_factors, mf.item_factors)


def rank_items(scores, exclude: Iterable[int] = (), limit: int | None = None) -> np.ndarray:
    """Item indices by descending score, ties by ascending index, exclusions dropped."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    exclude = np.fromiter(exclude, dtype=np.int64)
    if len(exclude):
        mask = np.ones(len(scores), dtype=bool)
        mask[exclude] = False
        order = order[mask[order]]
    return order if limit is None else order[:limit]


def rank_for_user(score_fn, user: int, exclude: Iterable[int] = (), limit: int | None = None,
                  n_items: int | None = None) -> np.ndarray:
    """Ranked list for one user from a :class:`ScoreMatrix` or a ``(user, item)`` callable."""
    if hasattr(score_fn, "row"):
        scores = score_fn.row(user)
    else:
        if n_items is None:
            raise ValueError("n_items is required for a plain score callable")
        scores = np.array([score_fn(user, j) for j in range(n_items)], dtype=np.float64)
    ranked = rank_items(scores, exclude, limit)
    if len(ranked) == 0:
        logger.warning("user %d has every item excluded; empty ranking", user)
    return ranked


@dataclass
class UserMetrics:
    precision: dict[int, float]
    recall: dict[int, float]
    f1: dict[int, float]
    average_precision: float
    reciprocal_rank: float
    hits: dict[int, int] = field(default_factory=dict)


def user_metrics(ranked: Sequence[int], relevant: set[int], cutoffs=DEFAULT_CUTOFFS) -> UserMetrics:
    if not relevant:
        raise ValueError("user has no relevant items")
    ranked = np.asarray(ranked, dtype=np.int64)
    is_rel = np.fromiter((int(i) in relevant for i in ranked), dtype=bool, count=len(ranked))
    cum = np.cumsum(is_rel)
    P, R, F, H = {}, {}, {}, {}
    for k in cutoffs:
        hits = int(cum[min(k, len(cum)) - 1]) if len(cum) else 0
        p = hits / k
        r = hits / len(relevant)
        P[k], R[k], H[k] = p, r, hits
        F[k] = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    positions = np.flatnonzero(is_rel) + 1
    ap = 0.0
    for hits, pos in enumerate(positions.tolist(), 1):
        ap += hits / pos
    ap /= len(relevant)
    rr = 1.0 / int(positions[0]) if len(positions) else 0.0
    return UserMetrics(P, R, F, ap, rr, H)


@dataclass
class EvalReport:
    cutoffs: tuple[int, ...]
    precision: dict[int, float]
    recall: dict[int, float]
    f1: dict[int, float]
    map: float
    mrr: float
    user_count: int

    def columns(self) -> list[tuple[str, float]]:
        """Metrics in reporting order: P@k..., R@k..., F@k..., MAP, MRR."""
        cols = [(f"P@{k}", self.precision[k]) for k in self.cutoffs]
        cols += [(f"R@{k}", self.recall[k]) for k in self.cutoffs]
        cols += [(f"F@{k}", self.f1[k]) for k in self.cutoffs]
        return cols + [("MAP", self.map), ("MRR", self.mrr)]

    def to_text(self) -> str:
        lines = [f"users = {self.user_count}", f"cutoffs = {','.join(map(str, self.cutoffs))}"]
        lines += [f"{name} = {value:.10g}" for name, value in self.columns()]
        return "\n".join(lines) + "\n"

    def to_tsv(self) -> str:
        """Header plus one row, values as percentages with 4 significant digits."""
        cols = self.columns()
        return ("\t".join(n for n, _ in cols) + "\n"
                + "\t".join(format_percent(v) for _, v in cols) + "\n")

    def as_dict(self) -> dict[str, float]:
        return dict(self.columns())


def format_percent(value: float, digits: int = 4) -> str:
    s = f"{value * 100:#.{digits}g}"
    return s.rstrip(".") if "e" not in s else s


def evaluate(ranked_lists: Mapping[int, Sequence[int]], relevance: Mapping[int, set[int]],
             cutoffs=DEFAULT_CUTOFFS) -> EvalReport:
    """Mean metrics over users present in both mappings, in ascending user order."""
    cutoffs = tuple(sorted(set(int(k) for k in cutoffs)))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    users = sorted(u for u in ranked_lists if relevance.get(u))
    if not users:
        raise ValueError("no users to evaluate")
    P = dict.fromkeys(cutoffs, 0.0)
    R = dict.fromkeys(cutoffs, 0.0)
    F = dict.fromkeys(cutoffs, 0.0)
    ap = rr = 0.0
    for u in users:
        m = user_metrics(ranked_lists[u], relevance[u], cutoffs)
        for k in cutoffs:
            P[k] += m.precision[k]
            R[k] += m.recall[k]
            F[k] += m.f1[k]
        ap += m.average_precision
        rr += m.reciprocal_rank
    n = len(users)
    return EvalReport(cutoffs, {k: v / n for k, v in P.items()}, {k: v / n for k, v in R.items()},
                      {k: v / n for k, v in F.items()}, ap / n, rr / n, n)


def heldout_relevance(train: Folksonomy, heldout: Folksonomy) -> dict[int, set[int]]:
    """Per user, held-out items not already annotated in training (users with none omitted)."""
    seen = user_item_sets(train)
    rel = user_item_sets(heldout)
    return {u: items - seen[u] for u, items in enumerate(rel) if items - seen[u]}


def rank_users(score_fn: ScoreMatrix, users: Iterable[int], exclusions: Sequence[set[int]],
               limit: int | None = None) -> dict[int, np.ndarray]:
    return {u: rank_for_user(score_fn, u, exclusions[u], limit) for u in users}


def evaluate_split(score_fn: ScoreMatrix, train: Folksonomy, heldout: Folksonomy,
                   cutoffs=DEFAULT_CUTOFFS) -> EvalReport:
    """Full protocol: rank every user with relevant held-out items and score them."""
    relevance = heldout_relevance(train, heldout)
    if not relevance:
        raise ValueError("no user has held-out items outside training")
    ranked = rank_users(score_fn, sorted(relevance), user_item_sets(train))
    return evaluate(ranked, relevance, cutoffs)


def mean_reciprocal_rank(score_fn: ScoreMatrix, relevance: Mapping[int, set[int]],
                         exclusions: Sequence[set[int]]) -> float:
    """MRR without materializing full rankings (used for early stopping).

    The rank of an item is one plus the number of non-excluded items scoring
    higher, or equal with a smaller index, matching :func:`rank_items`.
    """
    if not relevance:
        return 0.0
    total = 0.0
    for u in sorted(relevance):
        scores = score_fn.row(u)
        mask = np.ones(len(scores), dtype=bool)
        if exclusions[u]:
            mask[list(exclusions[u])] = False
        best = None
        idx = np.arange(len(scores))
        for j in relevance[u]:
            s = scores[j]
            rank = 1 + int(np.count_nonzero(mask & ((scores > s) | ((scores == s) & (idx < j)))))
            best = rank if best is None else min(best, rank)
        total += 1.0 / best
    return total / len(relevance)


def random_ranker_mrr(relevance: Mapping[int, set[int]], exclusions: Sequence[set[int]],
                      n_items: int, trials: int = 10_000, seed: int = 0) -> float:
    """Monte-Carlo expected MRR of a uniformly random ranking over each user's candidates."""
    rng = np.random.default_rng(seed)
    users = sorted(relevance)
    total = 0.0
    for u in users:
        n_cand = n_items - len(exclusions[u])
        n_rel = len(relevance[u])
        # position of the first relevant item among n_cand shuffled candidates
        keys = rng.random((trials, n_cand))
        rel_keys = keys[:, :n_rel]
        first = (keys < rel_keys.min(axis=1, keepdims=True)).sum(axis=1) + 1
        total += float(np.mean(1.0 / first))
    return total / len(users)
