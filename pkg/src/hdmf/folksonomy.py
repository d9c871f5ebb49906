"""Folksonomy ingestion: (user, tag, item) assignments to model matrices.

A :class:`Folksonomy` keeps three ordered vocabularies and a deduplicated
array of index triples. Splits share the parent's vocabularies, so row ``i``
of every matrix derived from any split refers to the same user.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import DataError

logger = logging.getLogger(__name__)

#: HetRec 2011 ``user_taggedbookmarks`` layout: userID, bookmarkID, tagID, ...
HETREC_COLUMNS = {"user": 0, "item": 1, "tag": 2}
DEFAULT_COLUMNS = {"user": 0, "tag": 1, "item": 2}

MAX_MALFORMED_FRACTION = 0.10


class Assignment(NamedTuple):
    user_id: str
    tag_id: str
    item_id: str


@dataclass(frozen=True)
class Folksonomy:
    users: tuple[str, ...]
    tags: tuple[str, ...]
    items: tuple[str, ...]
    assignments: np.ndarray  # (n, 3) int64 rows of (user, tag, item) indices

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "assignments", a)
        a.flags.writeable = False
        for name, vocab, col in (("users", self.users, 0), ("tags", self.tags, 1),
                                 ("items", self.items, 2)):
            if len(set(vocab)) != len(vocab):
                raise DataError(f"duplicate entries in {name} vocabulary")
            if len(a) and (a[:, col].min() < 0 or a[:, col].max() >= len(vocab)):
                raise DataError(f"{name} index out of range")

    @classmethod
    def from_assignments(cls, stream: Iterable[Assignment]) -> Folksonomy:
        """Build vocabularies in first-seen order and drop duplicate triples."""
        users: dict[str, int] = {}
        tags: dict[str, int] = {}
        items: dict[str, int] = {}
        seen: dict[tuple[int, int, int], None] = {}
        for u, t, d in stream:
            key = (users.setdefault(u, len(users)),
                   tags.setdefault(t, len(tags)),
                   items.setdefault(d, len(items)))
            seen.setdefault(key, None)
        triples = np.array(list(seen), dtype=np.int64).reshape(-1, 3)
        return cls(tuple(users), tuple(tags), tuple(items), triples)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def __len__(self) -> int:
        return len(self.assignments)

    def with_assignments(self, triples: np.ndarray) -> Folksonomy:
        """A view sharing this folksonomy's vocabularies."""
        return Folksonomy(self.users, self.tags, self.items, triples)

    def iter_tokens(self) -> Iterator[Assignment]:
        for u, t, d in self.assignments:
            yield Assignment(self.users[u], self.tags[t], self.items[d])

    def summary(self) -> dict[str, int]:
        return {"users": self.n_users, "tags": self.n_tags,
                "items": self.n_items, "assignments": len(self)}


@dataclass(frozen=True)
class SplitFolksonomy:
    train: Folksonomy
    valid: Folksonomy
    test: Folksonomy

    @property
    def vocabulary(self) -> Folksonomy:
        return self.train

    def merged(self) -> Folksonomy:
        triples = np.concatenate([self.train.assignments, self.valid.assignments,
                                  self.test.assignments])
        return self.train.with_assignments(triples)


# --------------------------------------------------------------------------
# loading


def _resolve_columns(columns, header_fields):
    resolved = {}
    for role in ("user", "tag", "item"):
        if role not in columns:
            raise DataError(f"column mapping has no entry for {role!r}")
        col = columns[role]
        if isinstance(col, str) and not col.isdigit():
            if header_fields is None or col not in header_fields:
                raise DataError(f"column {col!r} for {role!r} not found in header")
            col = header_fields.index(col)
        resolved[role] = int(col)
    return resolved


def _looks_numeric(fields, idx):
    try:
        return all(fields[i].strip().lstrip("-").isdigit() for i in idx)
    except IndexError:
        return False


def load_assignments(path, columns=None, *, header=None, delimiter="\t",
                     errors: list | None = None) -> Iterator[Assignment]:
    """Yield one :class:`Assignment` per data row of a delimited file.

    ``columns`` maps ``user``/``tag``/``item`` to column indices or header
    names; extra columns are ignored. ``header=None`` auto-detects a header:
    line 1 is a header when the mapping uses names, or when its mapped fields
    are non-numeric while line 2's are numeric.

    Malformed rows are appended to ``errors`` as ``(line_number, reason)``
    and skipped. If more than 10% of data rows are malformed a
    :class:`DataError` is raised once the file is exhausted.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"assignment file not found: {path}")
    columns = dict(DEFAULT_COLUMNS if columns is None else columns)
    if errors is None:
        errors = []

    with path.open(encoding="utf-8") as fh:
        lines = iter(fh)
        first = next(lines, None)
        if first is None:
            return
        first_fields = first.rstrip("\r\n").split(delimiter)
        by_name = any(isinstance(c, str) and not c.isdigit() for c in columns.values())
        pending = None
        if header is None:
            if by_name:
                header = True
            else:
                idx = [int(c) for c in columns.values()]
                pending = next(lines, None)
                second = None if pending is None else pending.rstrip("\r\n").split(delimiter)
                header = (not _looks_numeric(first_fields, idx)
                          and second is not None and _looks_numeric(second, idx))
        col = _resolve_columns(columns, first_fields if header else None)
        ui, ti, di = col["user"], col["tag"], col["item"]
        width = max(ui, ti, di) + 1

        def rows():
            if not header:
                yield 1, first
            n = 2
            if pending is not None:
                yield n, pending
                n += 1
            for line in lines:
                yield n, line
                n += 1

        n_rows = 0
        n_bad = 0
        for lineno, line in rows():
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            n_rows += 1
            fields = line.split(delimiter)
            if len(fields) < width:
                n_bad += 1
                errors.append((lineno, f"expected at least {width} columns, got {len(fields)}"))
                continue
            u, t, d = fields[ui].strip(), fields[ti].strip(), fields[di].strip()
            if not (u and t and d):
                n_bad += 1
                errors.append((lineno, "empty identifier"))
                continue
            yield Assignment(u, t, d)

    if errors:
        logger.warning("%s: skipped %d malformed rows (first at line %d)",
                       path, n_bad, errors[0][0])
    if n_rows and n_bad > MAX_MALFORMED_FRACTION * n_rows:
        raise DataError(f"{path}: {n_bad} of {n_rows} rows malformed (more than 10%)")


def read_folksonomy(path, columns=None, **kwargs) -> Folksonomy:
    return Folksonomy.from_assignments(load_assignments(path, columns, **kwargs))


# --------------------------------------------------------------------------
# filtering and splitting


def _reindex(f: Folksonomy, triples: np.ndarray, keep_tags: np.ndarray) -> Folksonomy:
    """Drop vocabulary entries with no remaining assignment, keeping order."""
    keep = [np.zeros(n, dtype=bool) for n in (f.n_users, f.n_tags, f.n_items)]
    keep[0][triples[:, 0]] = True
    keep[1] = keep_tags
    keep[2][triples[:, 2]] = True
    remap = []
    for mask in keep:
        m = np.full(mask.shape[0], -1, dtype=np.int64)
        m[mask] = np.arange(mask.sum())
        remap.append(m)
    new = np.column_stack([remap[c][triples[:, c]] for c in range(3)]) if len(triples) else triples
    vocab = [tuple(v for v, k in zip(names, mask) if k)
             for names, mask in zip((f.users, f.tags, f.items), keep)]
    return Folksonomy(*vocab, new)


def tag_counts(f: Folksonomy) -> np.ndarray:
    return np.bincount(f.assignments[:, 1], minlength=f.n_tags)


def filter_infrequent_tags(f: Folksonomy, min_uses: int) -> Folksonomy:
    """Keep tags used at least ``min_uses`` times; prune emptied users/items."""
    if min_uses < 1:
        raise ValueError("min_uses must be >= 1")
    keep_tags = tag_counts(f) >= min_uses
    if not keep_tags.any():
        raise DataError(f"no tag is used {min_uses} or more times; filter removes everything")
    triples = f.assignments[keep_tags[f.assignments[:, 1]]]
    return _reindex(f, triples, keep_tags)


def apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items; ties go to the earlier slot."""
    quotas = [n * r for r in ratios]
    sizes = [int(np.floor(q)) for q in quotas]
    short = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    return ratios


def split_assignments(f: Folksonomy, ratios=(0.8, 0.05, 0.15), seed: int = 0) -> SplitFolksonomy:
    """Seeded assignment-level split into train/valid/test.

    Each part keeps the parent's vocabularies and the parent's row order.
    """
    ratios = _check_ratios(ratios)
    n = len(f)
    if n < 3:
        raise DataError(f"need at least 3 assignments to split, got {n}")
    sizes = apportion(n, ratios)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = [np.sort(perm[bounds[i]:bounds[i + 1]]) for i in range(3)]
    return SplitFolksonomy(*(f.with_assignments(f.assignments[p]) for p in parts))


# --------------------------------------------------------------------------
# matrices


def build_profiles(f: Folksonomy) -> tuple[np.ndarray, np.ndarray]:
    """Tag-count profiles: users (|U| x |T|) and items (|D| x |T|), one row each."""
    if len(f) == 0:
        raise DataError("cannot build profiles from an empty assignment set")
    a = f.assignments
    users = np.zeros((f.n_users, f.n_tags))
    items = np.zeros((f.n_items, f.n_tags))
    np.add.at(users, (a[:, 0], a[:, 1]), 1.0)
    np.add.at(items, (a[:, 2], a[:, 1]), 1.0)
    return users, items


def normalize_profiles(m, *, allow_zero_rows: bool = False) -> np.ndarray:
    """Divide each row by its maximum so values lie in [0, 1].

    Zero rows raise unless ``allow_zero_rows``, in which case they stay zero.
    Profiles built from a training split can contain such rows for users or
    items whose assignments all fell into validation or test.
    """
    m = np.asarray(m, dtype=np.float64)
    if (m < 0).any():
        raise ValueError("profiles must be nonnegative")
    peak = m.max(axis=1, initial=0.0)
    zero = peak == 0
    if zero.any() and not allow_zero_rows:
        raise DataError(f"{int(zero.sum())} profile rows are all zero (first: row {int(np.argmax(zero))})")
    return m / np.where(zero, 1.0, peak)[:, None]


def build_rating_matrix(f: Folksonomy, *, binarize: bool = False) -> sp.csr_array:
    """Sparse |U| x |D| matrix of distinct-tag counts per (user, item)."""
    if len(f) == 0:
        raise DataError("cannot build ratings from an empty assignment set")
    a = f.assignments
    r = sp.coo_array((np.ones(len(a)), (a[:, 0], a[:, 2])),
                     shape=(f.n_users, f.n_items)).tocsr()
    r.sum_duplicates()
    r.sort_indices()
    if binarize:
        r.data[:] = 1.0
    return r


def user_item_sets(f: Folksonomy) -> list[set[int]]:
    """Per user, the set of items they annotated in ``f``."""
    sets: list[set[int]] = [set() for _ in range(f.n_users)]
    for u, d in f.assignments[:, [0, 2]]:
        sets[u].add(int(d))
    return sets


# --------------------------------------------------------------------------
# prepared-dataset cache

_VOCAB_FILES = {"users": "users.txt", "tags": "tags.txt", "items": "items.txt"}
_SPLIT_FILES = {"train": "train.tsv", "valid": "valid.tsv", "test": "test.tsv"}


def prepare(path, *, min_uses=15, ratios=(0.8, 0.05, 0.15), seed=0,
            columns=None, **load_kwargs) -> SplitFolksonomy:
    f = read_folksonomy(path, columns, **load_kwargs)
    if len(f) == 0:
        raise DataError(f"{path}: no assignments")
    f = filter_infrequent_tags(f, min_uses)
    return split_assignments(f, ratios, seed)


def save_prepared(split: SplitFolksonomy, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    voc = split.vocabulary
    for name, fname in _VOCAB_FILES.items():
        tokens = getattr(voc, name)
        (out / fname).write_text("".join(t + "\n" for t in tokens), encoding="utf-8")
    for name, fname in _SPLIT_FILES.items():
        part = getattr(split, name)
        with open(out / fname, "w", encoding="utf-8", newline="\n") as fh:
            for a in part.iter_tokens():
                fh.write("\t".join(a) + "\n")
    return out


def _read_vocab(path: Path) -> tuple[str, ...]:
    return tuple(path.read_text(encoding="utf-8").splitlines())


def load_prepared(cache_dir) -> SplitFolksonomy:
    d = Path(cache_dir)
    missing = [f for f in (*_VOCAB_FILES.values(), *_SPLIT_FILES.values())
               if not (d / f).is_file()]
    if missing:
        raise DataError(f"{d}: not a prepared dataset (missing {', '.join(missing)})")
    vocab = {name: _read_vocab(d / fname) for name, fname in _VOCAB_FILES.items()}
    index = {name: {tok: i for i, tok in enumerate(v)} for name, v in vocab.items()}
    parts = {}
    for name, fname in _SPLIT_FILES.items():
        rows = []
        with open(d / fname, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                fields = line.rstrip("\n").split("\t")
                try:
                    rows.append((index["users"][fields[0]], index["tags"][fields[1]],
                                 index["items"][fields[2]]))
                except (KeyError, IndexError):
                    raise DataError(f"{d / fname}:{lineno}: token not in vocabulary") from None
        parts[name] = Folksonomy(vocab["users"], vocab["tags"], vocab["items"],
                                 np.array(rows, dtype=np.int64).reshape(-1, 3))
    return SplitFolksonomy(**parts)


def is_prepared(cache_dir) -> bool:
    return all(os.path.isfile(os.path.join(cache_dir, f))
               for f in (*_VOCAB_FILES.values(), *_SPLIT_FILES.values()))
