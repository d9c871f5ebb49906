"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists one
PASS / FAIL / NOT RUN line per criterion.
"""
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from hdmf import HDMFRecommender, MFRecommender
from hdmf.checkpoint import decode_params, encode_params, load_checkpoint, save_checkpoint
from hdmf.cli import main
from hdmf.datasets import make_planted_folksonomy, write_tsv
from hdmf.evaluation import evaluate, heldout_relevance, random_ranker_mrr
from hdmf.exceptions import CheckpointError
from hdmf.folksonomy import HETREC_COLUMNS, prepare, split_assignments, user_item_sets
from hdmf.network import Architecture
from hdmf.objective import HyperParams, hdmf_loss, random_instance
from hdmf.training import TrainConfig, train_mf
from oracles import hybrid_loss, mean_metrics


@pytest.mark.acceptance(id=1, title="analytic gradients match central differences")
def test_gradient_check(capsys, record):
    start = time.perf_counter()
    rc = main(["check-gradients", "--hidden", "8,5,3", "--input-dim", "12", "--users", "3",
               "--items", "4", "--pairs", "5", "--seeds", "1,2,3", "--eps", "1e-4",
               "--tolerance", "1e-5", "--atol", "1e-8"])
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    record(f"{out.count('PASS')}/3 seeds pass, {elapsed:.2f} s")
    assert rc == 0, out
    assert out.count("192 coordinates") == 3
    assert elapsed < 10


@pytest.mark.acceptance(id=2, title="hybrid loss equals scalar reimplementation")
def test_loss_oracle(record):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        depth = int(rng.integers(1, 4))
        arch = Architecture(int(rng.integers(3, 13)), tuple(rng.integers(1, 9, size=depth)))
        hp = HyperParams(float(rng.uniform(0, 0.2)), float(rng.uniform(0, 0.5)))
        params, batch, hp = random_instance(arch, seed, n_users=3, n_items=4, n_pairs=5, hp=hp)
        got, _ = hdmf_loss(batch, params, hp)
        pairs = list(zip(batch.user_pos.tolist(), batch.item_pos.tolist(),
                         batch.ratings.tolist()))
        ref = hybrid_loss([w.tolist() for w in params.W], [v.tolist() for v in params.b],
                          batch.user_columns.T.tolist(), batch.item_columns.T.tolist(),
                          pairs, hp.lambda_theta, hp.lambda_e)
        worst = max(worst, abs(got - ref) / abs(ref))
    elapsed = time.perf_counter() - start
    record(f"max rel err {worst:.2e} over 20 instances, {elapsed:.2f} s")
    assert worst <= 1e-10
    assert elapsed < 5


@pytest.mark.acceptance(id=3, title="ranking metrics equal definitional oracle")
def test_metric_oracle(record):
    start = time.perf_counter()
    cutoffs = (1, 2, 5, 10, 20)
    mismatches = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ranked, relevance = {}, {}
        for u in range(int(rng.integers(1, 8))):
            n_items = int(rng.integers(1, 21))
            ranked[u] = rng.permutation(n_items).tolist()
            n_rel = int(rng.integers(1, min(5, n_items) + 1))
            relevance[u] = set(rng.choice(n_items, size=n_rel, replace=False).tolist())
        if evaluate(ranked, relevance, cutoffs).as_dict() != mean_metrics(ranked, relevance, cutoffs):
            mismatches += 1
    elapsed = time.perf_counter() - start
    record(f"{100 - mismatches}/100 instances identical, {elapsed:.2f} s")
    assert mismatches == 0
    assert elapsed < 5


def _cli(*args, env):
    return subprocess.run([sys.executable, "-m", "hdmf.cli", *args], env=env,
                          capture_output=True, text=True, check=True)


def _strip_timing(log_path):
    rows = [json.loads(line) for line in Path(log_path).read_text().splitlines()]
    for r in rows:
        r.pop("seconds")
    return rows


@pytest.mark.acceptance(id=4, title="prepare + train is bitwise deterministic")
def test_determinism(tmp_path, record):
    env = dict(os.environ, OMP_NUM_THREADS="1", OPENBLAS_NUM_THREADS="1", MKL_NUM_THREADS="1")
    data = write_tsv(make_planted_folksonomy(seed=0), tmp_path / "planted.tsv")
    cfg = tmp_path / "run.toml"
    cfg.write_text("hidden_sizes = [64, 128, 64]\nmax_epochs = 15\nseed = 0\n")
    runs = []
    for name in ("a", "b"):
        cache, out = tmp_path / f"cache_{name}", tmp_path / f"run_{name}"
        _cli("prepare", str(data), "--out", str(cache), "--min-uses", "1", env=env)
        _cli("train", "--config", str(cfg), "--cache", str(cache), "--out", str(out), env=env)
        runs.append((cache, out))
    (ca, ra), (cb, rb) = runs
    caches_equal = all((ca / f).read_bytes() == (cb / f).read_bytes()
                       for f in ("users.txt", "tags.txt", "items.txt",
                                 "train.tsv", "valid.tsv", "test.tsv"))
    ckpt_equal = (ra / "model.ckpt").read_bytes() == (rb / "model.ckpt").read_bytes()
    log_a = _strip_timing(ra / "train_log.jsonl")
    logs_equal = log_a == _strip_timing(rb / "train_log.jsonl")
    record(f"cache identical={caches_equal}, checkpoint identical={ckpt_equal}, "
           f"loss log identical={logs_equal} ({len(log_a)} epochs)")
    assert caches_equal and ckpt_equal and logs_equal


@pytest.mark.acceptance(id=5, title="planted clusters: HDMF >= 3x random and >= MF")
def test_synthetic_superiority(record):
    start = time.perf_counter()
    folk = make_planted_folksonomy(n_users=60, n_items=40, n_tags=30, n_clusters=5,
                                   n_assignments=1200, seed=0)
    split = split_assignments(folk, (0.8, 0.05, 0.15), seed=0)
    hdmf = HDMFRecommender(hidden_sizes=(64, 128, 64), random_state=0).fit(split)
    mf = MFRecommender(latent_dim=128, random_state=0).fit(split)
    hdmf_mrr = hdmf.evaluate(split.test).mrr
    mf_mrr = mf.evaluate(split.test).mrr
    relevance = heldout_relevance(split.train, split.test)
    random_mrr = random_ranker_mrr(relevance, user_item_sets(split.train), folk.n_items)
    elapsed = time.perf_counter() - start
    record(f"test MRR hdmf {hdmf_mrr:.4f}, mf {mf_mrr:.4f}, random {random_mrr:.4f} "
           f"(ratio {hdmf_mrr / random_mrr:.2f}), {elapsed:.1f} s")
    assert hdmf_mrr >= 3 * random_mrr
    assert hdmf_mrr >= mf_mrr
    assert elapsed < 300


@pytest.mark.acceptance(id=6, title="MF recovers a rank-1 matrix")
def test_mf_rank_one(record):
    rng = np.random.default_rng(0)
    r = np.outer(rng.uniform(0.5, 1.5, 10), rng.uniform(0.5, 1.5, 8))
    cfg = TrainConfig(learning_rate=0.01, max_epochs=3000, batch_pairs=8, lambda_mf=0.0,
                      convergence_tol=0.0)
    mf, _ = train_mf(sp.csr_array(r), 1, cfg)
    rmse = math.sqrt(float(((mf.user_factors @ mf.item_factors.T - r) ** 2).mean()))
    record(f"RMSE {rmse:.2e}")
    assert rmse < 0.05


@pytest.mark.acceptance(id=7, title="checkpoint round trip and CRC corruption check")
def test_checkpoint_round_trip(tmp_path, record):
    start = time.perf_counter()
    params, _, _ = random_instance(Architecture(12, (8, 5, 3)), 0)
    back = load_checkpoint(save_checkpoint(params, tmp_path / "m.ckpt"))
    data = encode_params(params)
    detected = 0
    for pos in range(len(data)):
        bad = bytearray(data)
        bad[pos] ^= 0xFF
        try:
            decode_params(bytes(bad))
        except CheckpointError:
            detected += 1
    elapsed = time.perf_counter() - start
    record(f"bitwise equal={back.equals(params)}, {detected}/{len(data)} corruptions "
           f"detected, {elapsed:.2f} s")
    assert back.equals(params)
    assert detected == len(data)
    assert elapsed < 1


@pytest.mark.acceptance(id=8, title="HetRec Delicious counts after min_uses=15")
def test_hetrec_table(record):
    path = os.environ.get("HDMF_DELICIOUS_PATH")
    if not path or not Path(path).is_file():
        pytest.skip("HetRec 2011 user_taggedbookmarks file not available "
                    "(set HDMF_DELICIOUS_PATH to run)")
    split = prepare(path, min_uses=15, columns=HETREC_COLUMNS)
    voc = split.vocabulary
    counts = (voc.n_users, voc.n_tags, voc.n_items, len(split.merged()))
    record("users/tags/items/assignments = " + "/".join(f"{c:,}" for c in counts))
    assert counts == (1843, 3508, 65877, 339744)
