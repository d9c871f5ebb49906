"""Synthetic folksonomies with planted user/item/tag clusters."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .folksonomy import Assignment, Folksonomy


def make_planted_folksonomy(n_users=60, n_items=40, n_tags=30, n_clusters=5,
                            n_assignments=1200, tags_per_cell=3.0, p_cluster_item=0.95,
                            p_cluster_tag=0.9, seed=0) -> Folksonomy:
    """Annotate (user, item) cells with cluster-typical tags until ``n_assignments`` exist.

    Users, items and tags are dealt round-robin into ``n_clusters`` groups.
    Each step picks a user uniformly and an item from the user's cluster
    with probability ``p_cluster_item`` (else any item), then draws a
    geometric number of tags with mean ``tags_per_cell``, each from the
    item's cluster with probability ``p_cluster_tag`` (else any tag).
    Duplicate triples are ignored; the last cell is cut short so the result
    has exactly ``n_assignments`` triples. Identifiers are ``u<i>``, ``t<i>``
    and ``d<i>``.
    """
    if n_assignments > n_users * n_items * n_tags:
        raise ValueError("more assignments requested than distinct triples exist")
    if tags_per_cell < 1:
        raise ValueError("tags_per_cell must be >= 1")
    rng = np.random.default_rng(seed)
    item_groups = [np.arange(c, n_items, n_clusters) for c in range(n_clusters)]
    tag_groups = [np.arange(c, n_tags, n_clusters) for c in range(n_clusters)]
    seen: dict[tuple[int, int, int], None] = {}
    while len(seen) < n_assignments:
        u = int(rng.integers(n_users))
        if rng.random() < p_cluster_item:
            d = int(rng.choice(item_groups[u % n_clusters]))
        else:
            d = int(rng.integers(n_items))
        for _ in range(int(rng.geometric(1.0 / tags_per_cell))):
            if rng.random() < p_cluster_tag:
                t = int(rng.choice(tag_groups[d % n_clusters]))
            else:
                t = int(rng.integers(n_tags))
            seen.setdefault((u, t, d), None)
            if len(seen) == n_assignments:
                break
    stream = (Assignment(f"u{u}", f"t{t}", f"d{d}") for u, t, d in seen)
    return Folksonomy.from_assignments(stream)


def write_tsv(f: Folksonomy, path, header: bool = False) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("user\ttag\titem\n")
        for a in f.iter_tokens():
            fh.write("\t".join(a) + "\n")
    return path
