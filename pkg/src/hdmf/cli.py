"""Command-line entry point: ``hdmf {prepare,train,evaluate,recommend,check-gradients}``.

Exit codes: 0 success, 1 failed gradient check, 2 configuration error,
3 data error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .config import load_run_config
from .datasets import make_planted_folksonomy, write_tsv
from .estimator import HDMFRecommender, MFRecommender
from .evaluation import evaluate_split
from .exceptions import ConfigError, DataError, DivergenceError
from .folksonomy import DEFAULT_COLUMNS, HETREC_COLUMNS, load_prepared, prepare, save_prepared
from .network import Architecture
from .objective import check_gradients
from .tensor import blas_products
from .training import MfModel, TrainingData, train_hdmf, train_mf
from .validation import check_cutoffs

logger = logging.getLogger("hdmf")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _columns(text: str) -> dict:
    if text == "hetrec":
        return dict(HETREC_COLUMNS)
    out = {}
    for part in text.split(","):
        role, _, col = part.partition("=")
        if role not in ("user", "tag", "item") or not col:
            raise argparse.ArgumentTypeError(f"bad column spec {part!r} (use user=0,tag=1,item=2)")
        out[role] = int(col) if col.isdigit() else col
    return out


def _print_summary(split, out=None):
    out = out or sys.stdout
    voc = split.vocabulary
    n = len(split.train) + len(split.valid) + len(split.test)
    out.write(f"{'users':>10} {'tags':>10} {'items':>10} {'assignments':>12}\n")
    out.write(f"{voc.n_users:>10,} {voc.n_tags:>10,} {voc.n_items:>10,} {n:>12,}\n")
    out.write(f"split: train {len(split.train):,} / valid {len(split.valid):,} "
              f"/ test {len(split.test):,}\n")


def cmd_prepare(args) -> int:
    run = load_run_config(args.config, overrides={"seed": args.seed})
    split = prepare(args.input, min_uses=args.min_uses, ratios=tuple(args.ratios),
                    seed=run.seed, columns=args.columns, header=args.header)
    save_prepared(split, args.out)
    _print_summary(split)
    return EXIT_OK


def _run_config(args):
    overrides = {k: getattr(args, k, None) for k in ("seed", "out", "model", "cache", "max_epochs")}
    if getattr(args, "cutoffs", None) is not None:
        overrides["cutoffs"] = args.cutoffs
    return load_run_config(args.config, overrides=overrides)


def cmd_train(args) -> int:
    run = _run_config(args)
    cfg = run.train_config()  # validates before anything is written
    if run.cache is None:
        raise ConfigError("no prepared dataset given (set 'cache' or pass --cache)")
    split = load_prepared(run.cache)
    data = TrainingData.from_split(split, cfg.binarize_ratings)
    blas = blas_products() if run.blas else contextlib.nullcontext()
    with blas:
        if run.model == "hdmf":
            params, log = train_hdmf(data, cfg)
            user, item = params if isinstance(params, tuple) else (params, None)
        else:
            model, log = train_mf(data.ratings, cfg.latent_dim, cfg,
                                  valid_relevance=data.valid_relevance)
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.ckpt"
    if run.model == "hdmf":
        ckpt.save_checkpoint(user, path, item_params=item)
    else:
        ckpt.save_checkpoint(model, path)
    log.write(out / "train_log.jsonl")
    print(f"{run.model}: {len(log.records)} epochs ({log.stop_reason}), "
          f"best epoch {log.best_epoch}, checkpoint {path}")
    return EXIT_OK


def _load_estimator(checkpoint_path, split):
    model = ckpt.load_checkpoint(checkpoint_path)
    train = split.train
    if isinstance(model, MfModel):
        if model.user_factors.shape[0] != train.n_users or model.item_factors.shape[0] != train.n_items:
            raise DataError(f"checkpoint has {model.user_factors.shape[0]} users / "
                            f"{model.item_factors.shape[0]} items, dataset has "
                            f"{train.n_users} / {train.n_items}")
        return MFRecommender.from_model(model, train)
    user, item = model if isinstance(model, tuple) else (model, None)
    if user.arch.input_dim != train.n_tags:
        raise DataError(f"checkpoint expects {user.arch.input_dim} tags, dataset has {train.n_tags}")
    return HDMFRecommender.from_params(user, train, item)


def cmd_evaluate(args) -> int:
    run = _run_config(args)
    cutoffs = check_cutoffs(run.cutoffs)
    if run.cache is None:
        raise ConfigError("no prepared dataset given (set 'cache' or pass --cache)")
    split = load_prepared(run.cache)
    est = _load_estimator(args.checkpoint, split)
    heldout = getattr(split, args.split)
    try:
        report = evaluate_split(est.score_matrix(), split.train, heldout, cutoffs)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_recommend(args) -> int:
    run = _run_config(args)
    if run.cache is None:
        raise ConfigError("no prepared dataset given (set 'cache' or pass --cache)")
    split = load_prepared(run.cache)
    users = split.vocabulary.users
    try:
        u = users.index(args.user)
    except ValueError:
        raise DataError(f"unknown user id {args.user!r}") from None
    if args.k < 0:
        raise ConfigError("k must be >= 0")
    est = _load_estimator(args.checkpoint, split)
    sm = est.score_matrix()
    ranked = est.recommend(u, k=args.k) if args.k else []
    items = split.vocabulary.items
    for rank, j in enumerate(ranked, 1):
        print(f"{rank}\t{items[j]}\t{sm(u, int(j)):.6g}")
    return EXIT_OK


def cmd_check_gradients(args) -> int:
    ok = True
    arch = Architecture(args.input_dim, tuple(args.hidden))
    for seed in args.seeds:
        report = check_gradients(arch, seed, n_users=args.users, n_items=args.items,
                                 n_pairs=args.pairs, eps=args.eps, rtol=args.tolerance,
                                 atol=args.atol)
        print(f"seed {seed}: {report.summary()}")
        for name, idx, a, n in report.failures[:10]:
            print(f"  {name}{list(idx)}: analytic {a:.9g} numeric {n:.9g}")
        ok &= report.passed
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_synthesize(args) -> int:
    f = make_planted_folksonomy(n_assignments=args.assignments, seed=args.seed)
    write_tsv(f, args.out)
    print(f"wrote {len(f)} assignments ({f.n_users} users, {f.n_tags} tags, "
          f"{f.n_items} items) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdmf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", type=Path, help="TOML run configuration")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("prepare", help="filter, split and cache an assignment file")
    common(sp, out=False)
    sp.add_argument("input", type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--min-uses", type=int, default=15)
    sp.add_argument("--ratios", type=_float_list, default=[0.8, 0.05, 0.15])
    sp.add_argument("--columns", type=_columns, default=dict(DEFAULT_COLUMNS),
                    help="'hetrec' or user=I,tag=J,item=K (indices or header names)")
    hdr = sp.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_true", default=None)
    hdr.add_argument("--no-header", dest="header", action="store_false")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train a model on a prepared dataset")
    common(sp)
    sp.add_argument("--cache", help="prepared dataset directory")
    sp.add_argument("--model", choices=["hdmf", "mf"])
    sp.add_argument("--max-epochs", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a checkpoint on held-out data")
    common(sp)
    sp.add_argument("--checkpoint", required=True, type=Path)
    sp.add_argument("--cache")
    sp.add_argument("--cutoffs", type=_int_list)
    sp.add_argument("--split", choices=["test", "valid"], default="test")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("recommend", help="print top-k items for one user")
    common(sp, out=False)
    sp.add_argument("--checkpoint", required=True, type=Path)
    sp.add_argument("--cache")
    sp.add_argument("--user", required=True)
    sp.add_argument("-k", type=int, default=10)
    sp.set_defaults(func=cmd_recommend)

    sp = sub.add_parser("check-gradients", help="finite-difference check of the hybrid loss")
    sp.add_argument("--hidden", type=_int_list, default=[8, 5, 3], help="encoder layer sizes")
    sp.add_argument("--input-dim", type=int, default=12)
    sp.add_argument("--users", type=int, default=3)
    sp.add_argument("--items", type=int, default=4)
    sp.add_argument("--pairs", type=int, default=5)
    sp.add_argument("--seeds", type=_int_list, default=[1, 2, 3])
    sp.add_argument("--eps", type=float, default=1e-4)
    sp.add_argument("--tolerance", type=float, default=1e-5)
    sp.add_argument("--atol", type=float, default=1e-8)
    sp.set_defaults(func=cmd_check_gradients)

    sp = sub.add_parser("synthesize", help="write a planted-cluster folksonomy TSV")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--assignments", type=int, default=1200)
    sp.set_defaults(func=cmd_synthesize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
