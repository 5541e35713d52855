"""Cross-camera evaluation protocol: junk-aware average precision, mAP and
CMC curves.

Junk items (labeled junk, same identity seen by the probe camera, or the
query images themselves) are removed from a rank list before scoring, so
they have zero influence on AP and CMC.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bowreid.errors import DataError

MATCH = 1
NONMATCH = 0
JUNK = -1


@dataclass(frozen=True)
class QueryResult:
    query_image_id: int
    person_id: int
    camera_id: int
    ap: float
    first_match_rank: int  # 1-based, on the junk-free list
    n_gt: int
    n_junk_skipped: int


@dataclass(frozen=True)
class EvalReport:
    mAP: float
    cmc: np.ndarray  # cmc[r-1] = fraction of queries with a match in top r
    per_query: tuple = field(default=())
    n_excluded: int = 0

    def rank_k(self, k):
        return float(self.cmc[min(k, len(self.cmc)) - 1])


def classify_gallery(item, query):
    """match / nonmatch / junk for one gallery item against one query.

    Junk: labeled junk, same identity under the probe camera, or one of the
    query's own images. Distractors are nonmatches.
    """
    if item.image_id in query.query_image_ids:
        return "junk"
    if item.quality == "junk":
        return "junk"
    if item.person_id == query.person_id:
        if item.camera_id == query.camera_id:
            return "junk"
        return "match" if item.quality == "good" else "junk"
    return "nonmatch"


def classify_ranklist(ranklist, metas_by_id, query):
    """Per-entry flags (MATCH/NONMATCH/JUNK) in rank order."""
    codes = {"match": MATCH, "nonmatch": NONMATCH, "junk": JUNK}
    return np.array([codes[classify_gallery(metas_by_id[int(i)], query)]
                     for i in ranklist.image_ids], dtype=np.int64)


def average_precision(flags):
    """AP over a flagged rank list; junk entries are deleted first.

    Returns (ap, first_match_rank, n_gt, n_junk) or None when the query has
    no match at all (excluded-query signal).
    """
    flags = np.asarray(flags)
    n_junk = int((flags == JUNK).sum())
    kept = flags[flags != JUNK]
    hits = np.flatnonzero(kept == MATCH) + 1  # 1-based ranks
    n_gt = len(hits)
    if n_gt == 0:
        return None
    precision_at_hits = np.arange(1, n_gt + 1) / hits
    ap = float(precision_at_hits.mean())
    return ap, int(hits[0]), n_gt, n_junk


def cmc_curve(first_match_ranks, depth):
    """CMC(r) = fraction of queries whose first match lands at rank <= r."""
    ranks = np.asarray(first_match_ranks)
    if len(ranks) == 0:
        raise DataError("no queries to evaluate")
    hits = np.zeros(depth)
    for r in ranks:
        if r <= depth:
            hits[r - 1] += 1
    return np.cumsum(hits) / len(ranks)


def mean_ap(aps):
    if len(aps) == 0:
        raise DataError("no average precisions to average")
    return float(np.mean(aps))


def evaluate(ranklists, queries, metas_by_id, cmc_depth=50):
    """Aggregate per-query APs into an EvalReport.

    ranklists and queries are aligned; queries without any cross-camera
    match are excluded from the denominators and counted.
    """
    if len(ranklists) != len(queries):
        raise DataError("one rank list per query required")
    per_query = []
    excluded = 0
    for rl, q in zip(ranklists, queries):
        flags = classify_ranklist(rl, metas_by_id, q)
        res = average_precision(flags)
        if res is None:
            excluded += 1
            continue
        ap, first, n_gt, n_junk = res
        per_query.append(QueryResult(q.probe_image_id, q.person_id,
                                     q.camera_id, ap, first, n_gt, n_junk))
    if not per_query:
        raise DataError("every query was excluded (no cross-camera matches)")
    cmc = cmc_curve([r.first_match_rank for r in per_query], cmc_depth)
    return EvalReport(mean_ap([r.ap for r in per_query]), cmc,
                      tuple(per_query), excluded)


def save_report(report, path, per_query_csv=None):
    lines = [f"mAP {report.mAP:.6f}"]
    for k in (1, 5, 10, 20):
        lines.append(f"rank-{k} {report.rank_k(k):.6f}")
    lines.append(f"queries {len(report.per_query)}")
    lines.append(f"excluded {report.n_excluded}")
    Path(path).write_text("\n".join(lines) + "\n")
    if per_query_csv is not None:
        with open(per_query_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["query_id", "ap", "first_match_rank", "n_gt",
                        "n_junk_skipped"])
            for r in report.per_query:
                w.writerow([r.query_image_id, f"{r.ap:.6f}",
                            r.first_match_rank, r.n_gt, r.n_junk_skipped])
