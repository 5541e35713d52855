"""End-to-end orchestration behind the CLI subcommands.

Artifacts under out_dir:
  codebook_<ch>.bin / .txt    trained vocabulary per channel
  sigs_<role>_<ch>.bin        final signature stores (gallery, query)
  idf_<ch>.bin, mean_<ch>.bin weighting sidecars
  ranklists/<probe_id>.txt/.bin  per-query rankings
  report.txt, per_query.csv   evaluation output
  timings.txt                 per-stage wall time
"""

import logging
import time
from pathlib import Path

import numpy as np

from bowreid import codebook as cb_mod
from bowreid import dataset, descriptor, embedding, evaluation, search
from bowreid.errors import DataError

log = logging.getLogger(__name__)


def _out(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cn_table(cfg):
    if cfg.cn_table:
        return descriptor.load_cn_table(cfg.cn_table)
    return descriptor.synthetic_cn_table()


def _grids(cfg, metas, table, channel):
    mask = cfg.mask_params()
    for m in metas:
        img = descriptor.load_image(m.path, cfg.height, cfg.width)
        yield m, descriptor.extract_patch_grid(
            img, table=table, channel=channel, mask=mask,
            patch_size=cfg.patch_size, patch_step=cfg.patch_step)


def train_codebook_stage(cfg, manifest=None):
    out = _out(cfg)
    if manifest is None:
        manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    train = manifest.by_role("train")
    if not train:
        raise DataError("no training images for codebook training")
    table = _cn_table(cfg)
    books = {}
    for channel in cfg.channel_list():
        descs = []
        for _, grid in _grids(cfg, train, table, channel):
            descs.append(grid.descriptors.reshape(-1, grid.descriptors.shape[2]))
        descs = np.concatenate(descs)
        if len(descs) > cfg.max_train_descriptors:
            rng = np.random.default_rng(cfg.seed)
            keep = rng.choice(len(descs), cfg.max_train_descriptors,
                              replace=False)
            descs = descs[np.sort(keep)]
        book = cb_mod.train_codebook(descs, cfg.k, seed=cfg.seed,
                                     max_iter=cfg.kmeans_max_iter,
                                     tol=cfg.kmeans_tol)
        cb_mod.save_codebook(book, out / f"codebook_{channel}.bin")
        cb_mod.export_codebook_text(book, out / f"codebook_{channel}.txt")
        log.info("codebook %s: k=%d iterations=%d objective=%.4f",
                 channel, book.k, book.n_iter, book.objective)
        books[channel] = book
    return books


def embed_stage(cfg, manifest=None, books=None):
    """Raw tf for train/gallery/query, IDF from the gallery, mean from the
    training set, then final signatures for gallery and query images."""
    out = _out(cfg)
    if manifest is None:
        manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    table = _cn_table(cfg)
    for channel in cfg.channel_list():
        if books and channel in books:
            book = books[channel]
        else:
            book = cb_mod.load_codebook(out / f"codebook_{channel}.bin")
        raw = {}
        for role in ("train", "gallery", "query"):
            raw[role] = [
                embedding.embed_raw(grid, book, cfg.ma, cfg.M, cfg.height,
                                    image_id=m.image_id)
                for m, grid in _grids(cfg, manifest.by_role(role), table,
                                      channel)]
        if not raw["gallery"]:
            raise DataError("no gallery images to embed")
        idf = embedding.compute_idf(raw["gallery"], variant=cfg.idf)
        weighted_train = [embedding.weight_signature(s, idf)
                          for s in raw["train"]]
        if not weighted_train:
            raise DataError("no training images for the mean vector")
        mean = embedding.compute_training_mean(weighted_train)
        for role in ("gallery", "query"):
            final = [embedding.finalize(embedding.weight_signature(s, idf),
                                        mean)
                     for s in raw[role]]
            embedding.save_signatures(final, out / f"sigs_{role}_{channel}.bin")
        embedding.save_idf(idf, out / f"idf_{channel}.bin")
        embedding.save_mean(mean, out / f"mean_{channel}.bin")


def load_index(cfg, manifest):
    out = _out(cfg)
    by_id = manifest.by_id()
    channel_sigs = {}
    metas = None
    for channel in cfg.channel_list():
        sigs = embedding.load_signatures(out / f"sigs_gallery_{channel}.bin")
        channel_sigs[channel] = sigs
        if metas is None:
            metas = [by_id[s.image_id] for s in sigs]
    return search.build_index(channel_sigs, metas)


def _query_vectors(cfg, out, specs):
    """Per-channel pooled query signature for every QuerySpec."""
    per_channel = {}
    for channel in cfg.channel_list():
        sigs = embedding.load_signatures(out / f"sigs_query_{channel}.bin")
        by_id = {s.image_id: s for s in sigs}
        vectors = []
        for spec in specs:
            pool = [by_id[i] for i in spec.query_image_ids if i in by_id]
            if not pool:
                raise DataError(
                    f"no embedded query images for person {spec.person_id} "
                    f"camera {spec.camera_id}")
            if cfg.multi_query == "off" or len(pool) == 1:
                vectors.append(pool[0])
            else:
                vectors.append(embedding.pool_queries(pool, cfg.multi_query))
        per_channel[channel] = vectors
    return per_channel


def search_stage(cfg, manifest=None, rerank_t=None):
    """Rank every query against the gallery; writes ranklists/<probe>.txt/.bin."""
    out = _out(cfg)
    if manifest is None:
        manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    index = load_index(cfg, manifest)
    specs = dataset.select_queries(manifest,
                                  multi_query=cfg.multi_query != "off")
    if not specs:
        raise DataError("no queries selected")
    per_channel = _query_vectors(cfg, out, specs)
    channels = cfg.channel_list()
    t = cfg.rerank_t if rerank_t is None else rerank_t
    rank_dir = out / "ranklists"
    rank_dir.mkdir(exist_ok=True)
    ranklists = []
    t_search = 0.0
    t_rerank = 0.0
    for qi, spec in enumerate(specs):
        t0 = time.perf_counter()
        if len(channels) == 1:
            rl = search.query(index, per_channel[channels[0]][qi],
                              channel=channels[0], query_spec=spec)
        else:
            rl = search.query_fused(
                index, {ch: per_channel[ch][qi] for ch in channels},
                query_spec=spec)
        t1 = time.perf_counter()
        rl = search.rerank(index, rl, t, channel=channels)
        t2 = time.perf_counter()
        t_search += t1 - t0
        t_rerank += t2 - t1
        search.save_ranklist_text(rl, rank_dir / f"{spec.probe_image_id}.txt")
        search.save_ranklist_binary(rl, rank_dir / f"{spec.probe_image_id}.bin")
        ranklists.append(rl)
    return specs, ranklists, index, {"search": t_search, "rerank": t_rerank}


def rerank_stage(cfg, manifest=None):
    """Re-read stored rank lists and apply query expansion on top of them."""
    out = _out(cfg)
    if manifest is None:
        manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    index = load_index(cfg, manifest)
    row_of = {int(iid): row for row, iid in enumerate(index.image_ids)}
    specs = dataset.select_queries(manifest,
                                  multi_query=cfg.multi_query != "off")
    rank_dir = out / "ranklists"
    channels = cfg.channel_list()
    ranklists = []
    for spec in specs:
        stored = search.load_ranklist_binary(
            rank_dir / f"{spec.probe_image_id}.bin")
        positions = np.array([row_of[int(i)] for i in stored.image_ids])
        initial = search.RankList(stored.image_ids, stored.scores, positions,
                                  spec)
        rl = search.rerank(index, initial, cfg.rerank_t, channel=channels)
        search.save_ranklist_text(rl, rank_dir / f"{spec.probe_image_id}.txt")
        search.save_ranklist_binary(rl, rank_dir / f"{spec.probe_image_id}.bin")
        ranklists.append(rl)
    return specs, ranklists


def evaluate_stage(cfg, manifest=None, specs=None, ranklists=None):
    out = _out(cfg)
    if manifest is None:
        manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    if specs is None or ranklists is None:
        specs = dataset.select_queries(manifest,
                                      multi_query=cfg.multi_query != "off")
        rank_dir = out / "ranklists"
        ranklists = [search.load_ranklist_binary(
            rank_dir / f"{s.probe_image_id}.bin") for s in specs]
    report = evaluation.evaluate(ranklists, specs, manifest.by_id())
    evaluation.save_report(report, out / "report.txt", out / "per_query.csv")
    return report


def run_experiment(cfg):
    """Full pipeline; returns the EvalReport and writes timings.txt with the
    three per-stage wall times (feature extraction, search, rerank)."""
    out = _out(cfg)
    manifest = dataset.load_manifest(cfg.data_root, cfg.layout)
    t0 = time.perf_counter()
    books = train_codebook_stage(cfg, manifest)
    embed_stage(cfg, manifest, books)
    t_feat = time.perf_counter() - t0
    specs, ranklists, _, times = search_stage(cfg, manifest)
    report = evaluate_stage(cfg, manifest, specs, ranklists)
    timings = {"feature_extraction": t_feat,
               "search": times["search"],
               "rerank": times["rerank"]}
    with open(out / "timings.txt", "w") as fh:
        for stage, seconds in timings.items():
            fh.write(f"{stage} {seconds:.3f}\n")
    return report, timings
