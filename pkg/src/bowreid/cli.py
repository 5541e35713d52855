"""Command-line entry point.

Subcommands: train-codebook, embed, index, search, rerank, evaluate,
run (full pipeline), bench (gallery-scan timing, both kernel backends).

Exit codes: 0 success, 1 config error, 2 data error, 3 internal invariant
violation.
"""

import argparse
import logging
import sys
import time

import numpy as np

from bowreid import pipeline
from bowreid.config import load_config
from bowreid.errors import ConfigError, DataError


def _add_common(sub):
    sub.add_argument("--config", help="INI config file with a [defaults] block")
    sub.add_argument("--data-root", dest="data_root")
    sub.add_argument("--layout", choices=["market", "flat-csv"])
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--cn-table", dest="cn_table")
    sub.add_argument("--k", type=int)
    sub.add_argument("--stripes", dest="M", type=int)
    sub.add_argument("--ma", type=int)
    sub.add_argument("--mask", choices=["on", "off"])
    sub.add_argument("--sigma-x", dest="sigma_x", type=float)
    sub.add_argument("--sigma-y", dest="sigma_y", type=float)
    sub.add_argument("--idf", choices=["standard", "avg"])
    sub.add_argument("--multi-query", dest="multi_query",
                     choices=["off", "avg", "max"])
    sub.add_argument("--rerank-t", dest="rerank_t", type=int)
    sub.add_argument("--channels", choices=["cn", "hs", "cn+hs"])
    sub.add_argument("--seed", type=int)
    sub.add_argument("--threads", type=int)


def _config_from(args):
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "func", "n", "dim")
                 and v is not None}
    if "mask" in overrides:
        overrides["mask"] = overrides["mask"] == "on"
    return load_config(args.config, overrides)


def cmd_train_codebook(args):
    pipeline.train_codebook_stage(_config_from(args))


def cmd_embed(args):
    pipeline.embed_stage(_config_from(args))


def cmd_index(args):
    cfg = _config_from(args)
    from bowreid import dataset
    manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    index = pipeline.load_index(cfg, manifest)
    print(f"index: {index.size} gallery items, "
          f"channels {sorted(index.channels)}, "
          f"{index.memory_bytes() / 1e6:.1f} MB")


def cmd_search(args):
    cfg = _config_from(args)
    # plain search; rerank is its own subcommand
    pipeline.search_stage(cfg, rerank_t=0)


def cmd_rerank(args):
    pipeline.rerank_stage(_config_from(args))


def cmd_evaluate(args):
    report = pipeline.evaluate_stage(_config_from(args))
    _print_report(report)


def cmd_run(args):
    report, timings = pipeline.run_experiment(_config_from(args))
    _print_report(report)
    print(f"Feature extraction (s): {timings['feature_extraction']:.3f}")
    print(f"Search (s): {timings['search']:.3f}")
    print(f"Rerank (s): {timings['rerank']:.3f}")


def _print_report(report):
    print(f"mAP: {report.mAP * 100:.2f}%")
    for k in (1, 5, 10, 20):
        print(f"rank-{k}: {report.rank_k(k) * 100:.2f}%")
    if report.n_excluded:
        print(f"excluded queries: {report.n_excluded}")


def cmd_bench(args):
    """Time one full gallery scan per backend on synthetic data."""
    from bowreid import kernels

    rng = np.random.default_rng(0)
    gallery = rng.standard_normal((args.n, args.dim)).astype(np.float32)
    gallery /= np.linalg.norm(gallery, axis=1, keepdims=True)
    q = gallery[0].copy()
    backends = [("numpy", kernels.score_gallery_numpy)]
    if kernels.BACKEND == "cython":
        backends.append(("cython", kernels.score_gallery))
    print(f"gallery {args.n} x {args.dim} (float32)")
    for name, fn in backends:
        fn(gallery, q)  # warm-up
        reps = 5
        t0 = time.perf_counter()
        for _ in range(reps):
            fn(gallery, q)
        ms = (time.perf_counter() - t0) / reps * 1000.0
        print(f"{name:>6}: {ms:8.2f} ms per query")
    if kernels.BACKEND != "cython":
        print("compiled extension not available; numpy backend only")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bowreid",
        description="Bag-of-words person re-identification toolchain")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("train-codebook", cmd_train_codebook),
                     ("embed", cmd_embed),
                     ("index", cmd_index),
                     ("search", cmd_search),
                     ("rerank", cmd_rerank),
                     ("evaluate", cmd_evaluate),
                     ("run", cmd_run)]:
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    b = sub.add_parser("bench", help="time the gallery-scan kernel backends")
    b.add_argument("--n", type=int, default=20000)
    b.add_argument("--dim", type=int, default=5600)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - invariant violations -> exit 3
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
