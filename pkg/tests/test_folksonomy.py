from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdmf.exceptions import DataError
from hdmf.folksonomy import (HETREC_COLUMNS, Assignment, Folksonomy, apportion,
                             build_profiles, build_rating_matrix, filter_infrequent_tags,
                             is_prepared, load_assignments, load_prepared, normalize_profiles,
                             read_folksonomy, save_prepared, split_assignments, tag_counts,
                             user_item_sets)


def _folk(triples):
    return Folksonomy.from_assignments(Assignment(*t) for t in triples)


def _random_folk(seed, n=50, n_users=6, n_tags=8, n_items=7):
    rng = np.random.default_rng(seed)
    return _folk((f"u{rng.integers(n_users)}", f"t{rng.integers(n_tags)}",
                  f"d{rng.integers(n_items)}") for _ in range(n))


def _write(tmp_path, text, name="a.tsv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --------------------------------------------------------------------------
# loading


def test_three_line_file(tmp_path):
    p = _write(tmp_path, "u1\tt1\td1\nu1\tt2\td1\nu2\tt1\td2\n")
    rows = list(load_assignments(p))
    assert rows == [("u1", "t1", "d1"), ("u1", "t2", "d1"), ("u2", "t1", "d2")]
    f = read_folksonomy(p)
    assert f.summary() == {"users": 2, "tags": 2, "items": 2, "assignments": 3}


def test_header_only_file_is_empty(tmp_path):
    p = _write(tmp_path, "user\ttag\titem\n")
    assert list(load_assignments(p, header=True)) == []


def test_empty_file(tmp_path):
    assert list(load_assignments(_write(tmp_path, ""))) == []


def test_header_is_detected(tmp_path):
    p = _write(tmp_path, "userID\ttagID\titemID\n1\t2\t3\n4\t5\t6\n")
    assert list(load_assignments(p)) == [("1", "2", "3"), ("4", "5", "6")]


def test_numeric_first_line_is_data(tmp_path):
    p = _write(tmp_path, "1\t2\t3\n4\t5\t6\n")
    assert len(list(load_assignments(p))) == 2


def test_columns_by_name_and_extra_columns(tmp_path):
    p = _write(tmp_path, "userID\tbookmarkID\ttagID\tday\n8\t1\t1\t10\n8\t2\t1\t10\n")
    rows = list(load_assignments(p, {"user": "userID", "tag": "tagID", "item": "bookmarkID"}))
    assert rows == [("8", "1", "1"), ("8", "1", "2")]
    assert list(load_assignments(p, HETREC_COLUMNS)) == rows


def test_malformed_rows_are_reported_and_skipped(tmp_path):
    lines = [f"u{i}\tt{i}\td{i}" for i in range(19)] + ["broken"]
    p = _write(tmp_path, "\n".join(lines) + "\n")
    errors = []
    rows = list(load_assignments(p, errors=errors))
    assert len(rows) == 19
    assert errors and errors[0][0] == 20


def test_too_many_malformed_rows_is_fatal(tmp_path):
    lines = [f"u{i}\tt{i}\td{i}" for i in range(8)] + ["bad", "x\t\ty"]
    p = _write(tmp_path, "\n".join(lines) + "\n")
    with pytest.raises(DataError):
        list(load_assignments(p))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        list(load_assignments(tmp_path / "nope.tsv"))


def test_unknown_column_name(tmp_path):
    p = _write(tmp_path, "a\tb\tc\n1\t2\t3\n")
    with pytest.raises(DataError):
        list(load_assignments(p, {"user": "a", "tag": "b", "item": "zzz"}))


def test_duplicate_triples_collapse():
    f = _folk([("u", "t", "d"), ("u", "t", "d"), ("u", "s", "d")])
    assert len(f) == 2


# --------------------------------------------------------------------------
# filtering


def test_filter_min_uses_one_is_identity():
    f = _random_folk(0)
    g = filter_infrequent_tags(f, 1)
    assert g.summary() == f.summary()
    assert list(g.iter_tokens()) == list(f.iter_tokens())


def test_filter_drops_rare_tag():
    triples = [(f"u{i}", "a", f"d{i % 4}") for i in range(20)]
    triples += [("u0", "b", "d9"), ("u1", "b", "d1"), ("u2", "b", "d2")]
    g = filter_infrequent_tags(_folk(triples), 15)
    assert g.tags == ("a",)
    assert len(g) == 20
    assert "d9" not in g.items  # only annotated with the dropped tag


def test_filter_everything_is_an_error():
    with pytest.raises(DataError):
        filter_infrequent_tags(_random_folk(1), 10_000)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 8))
def test_filter_postconditions(seed, min_uses):
    f = _random_folk(seed)
    if tag_counts(f).max() < min_uses:
        return
    g = filter_infrequent_tags(f, min_uses)
    assert tag_counts(g).min() >= min_uses
    assert set(g.assignments[:, 0]) == set(range(g.n_users))
    assert set(g.assignments[:, 2]) == set(range(g.n_items))
    assert filter_infrequent_tags(g, min_uses).summary() == g.summary()


# --------------------------------------------------------------------------
# splitting


def test_apportion_by_hand():
    assert apportion(100, (0.8, 0.05, 0.15)) == [80, 5, 15]
    # quotas 8, 0.5, 1.5: one seat left, equal remainders, earlier slot wins
    assert apportion(10, (0.8, 0.05, 0.15)) == [8, 1, 1]
    assert apportion(7, (1 / 3, 1 / 3, 1 / 3)) == [3, 2, 2]


def test_split_sizes_and_determinism():
    f = _random_folk(3, n=200, n_users=30, n_tags=30, n_items=30)
    f = f.with_assignments(f.assignments[:100])
    s1 = split_assignments(f, seed=7)
    s2 = split_assignments(f, seed=7)
    assert (len(s1.train), len(s1.valid), len(s1.test)) == (80, 5, 15)
    for part in ("train", "valid", "test"):
        assert np.array_equal(getattr(s1, part).assignments, getattr(s2, part).assignments)
    assert not np.array_equal(split_assignments(f, seed=8).train.assignments,
                              s1.train.assignments)


def test_split_is_a_partition_over_many_seeds():
    f = _random_folk(4, n=700, n_users=40, n_tags=40, n_items=40)
    f = f.with_assignments(f.assignments[:500])
    whole = sorted(map(tuple, f.assignments.tolist()))
    for seed in range(1000):
        s = split_assignments(f, seed=seed)
        assert (len(s.train), len(s.valid), len(s.test)) == (400, 25, 75)
        assert sorted(map(tuple, s.merged().assignments.tolist())) == whole


def test_split_errors():
    with pytest.raises(DataError):
        split_assignments(_folk([("u", "t", "d"), ("u", "s", "d")]))
    with pytest.raises(ValueError):
        split_assignments(_random_folk(0), ratios=(0.5, 0.5, 0.5))


# --------------------------------------------------------------------------
# matrices


def test_profiles_worked_example():
    f = _folk([("u1", "t1", "d1"), ("u1", "t1", "d2")])
    users, items = build_profiles(f)
    assert users.tolist() == [[2.0]]
    assert items.tolist() == [[1.0], [1.0]]


@pytest.mark.parametrize("seed", range(5))
def test_profile_row_sums_match_counter(seed):
    f = _random_folk(seed)
    users, items = build_profiles(f)
    per_user = Counter(u for u, _, _ in f.iter_tokens())
    per_item = Counter(d for _, _, d in f.iter_tokens())
    assert users.sum(axis=1).tolist() == [per_user[u] for u in f.users]
    assert items.sum(axis=1).tolist() == [per_item[d] for d in f.items]


def test_normalize_examples():
    assert normalize_profiles([[2, 0, 4]]).tolist() == [[0.5, 0.0, 1.0]]
    assert normalize_profiles([[1]]).tolist() == [[1.0]]
    with pytest.raises(DataError):
        normalize_profiles([[0, 0], [1, 2]])
    assert normalize_profiles([[0, 0], [1, 2]], allow_zero_rows=True).tolist() == [[0, 0], [0.5, 1]]
    with pytest.raises(ValueError):
        normalize_profiles([[-1, 2]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_normalize_properties(seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(0, 6, size=(5, 7)).astype(float)
    m[:, int(rng.integers(7))] += 1
    n = normalize_profiles(m)
    assert (n.max(axis=1) == 1.0).all()
    assert (n >= 0).all()
    assert np.array_equal(n == 0, m == 0)
    assert np.array_equal(n.argmax(axis=1), m.argmax(axis=1))


def test_rating_examples():
    r = build_rating_matrix(_folk([("u1", "t1", "d1"), ("u1", "t2", "d1")]))
    assert r.toarray().tolist() == [[2.0]]
    r = build_rating_matrix(_folk([("u1", "t1", "d1")]))
    assert r.nnz == 1 and r.toarray().tolist() == [[1.0]]


@pytest.mark.parametrize("seed", range(5))
def test_rating_sum_equals_distinct_triples(seed):
    f = _random_folk(seed)
    triples = {tuple(t) for t in f.iter_tokens()}
    r = build_rating_matrix(f)
    assert r.sum() == len(triples)
    cells = Counter((u, d) for u, _, d in triples)
    for (u, d), c in cells.items():
        assert r[f.users.index(u), f.items.index(d)] == c
    b = build_rating_matrix(f, binarize=True)
    assert b.nnz == len(cells) and (b.data == 1).all()


def test_user_item_sets():
    f = _folk([("a", "t", "x"), ("a", "s", "y"), ("b", "t", "x")])
    assert user_item_sets(f) == [{0, 1}, {0}]


# --------------------------------------------------------------------------
# cache


def test_cache_round_trip(tmp_path):
    split = split_assignments(_random_folk(9, n=120), seed=2)
    save_prepared(split, tmp_path / "c")
    assert is_prepared(tmp_path / "c")
    back = load_prepared(tmp_path / "c")
    for part in ("train", "valid", "test"):
        a, b = getattr(split, part), getattr(back, part)
        assert (a.users, a.tags, a.items) == (b.users, b.tags, b.items)
        assert np.array_equal(a.assignments, b.assignments)


def test_cache_missing_files(tmp_path):
    assert not is_prepared(tmp_path)
    with pytest.raises(DataError):
        load_prepared(tmp_path)
