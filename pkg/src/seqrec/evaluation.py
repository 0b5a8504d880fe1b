"""Next-item evaluation: every position j >= 2 of every session is one event.

The prefix ``s[1..j-1]`` (truncated to the ranker's max length) is scored
over the full item space and the rank of ``s[j]`` is recorded under the
deterministic (score desc, id asc) order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataError
from .models.base import target_ranks


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple = (1, 3)
    max_len: int | None = None  # defaults to the ranker's own max length

    def __post_init__(self):
        ks = tuple(int(k) for k in self.ks)
        if not ks or any(k < 1 for k in ks) or list(ks) != sorted(set(ks)):
            raise ValueError("ks must be positive and strictly ascending")
        object.__setattr__(self, "ks", ks)


@dataclass
class EvalReport:
    recall: dict
    ndcg: dict
    events: int
    model: str = ""
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "events": self.events,
            "ks": sorted(self.recall),
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "ndcg": {str(k): v for k, v in sorted(self.ndcg.items())},
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj) -> "EvalReport":
        return cls({int(k): v for k, v in obj["recall"].items()},
                   {int(k): v for k, v in obj["ndcg"].items()},
                   obj["events"], obj.get("model", ""), obj.get("meta", {}))


def recall_at_k(rank, k) -> int:
    return 1 if rank <= k else 0


def ndcg_at_k(rank, k) -> float:
    """Single relevant item, so the ideal DCG is 1."""
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def iter_events(ranker, split, max_len=None):
    """Yield ``(prefix_tokens, target_token, hero_id)`` for every evaluation event."""
    max_len = ranker.max_len if max_len is None else max_len
    for s in split.sessions():
        tok = ranker.index.tokens(s.items)
        for j in range(1, len(tok)):
            yield ranker.truncate(tok[max(0, j - max_len):j]), int(tok[j]), s.hero_id


def event_ranks(ranker, split, max_len=None, chunk=4096) -> np.ndarray:
    """1-based rank of the target item for every event, in session order."""
    ranks, buf = [], []

    def flush():
        prefixes = [b[0] for b in buf]
        targets = np.array([b[1] for b in buf]) - 1
        heroes = np.array([b[2] for b in buf])
        scores = ranker.score_tokens(prefixes, heroes)
        ranks.append(target_ranks(scores, targets, ranker.item_ids))
        buf.clear()

    for event in iter_events(ranker, split, max_len):
        buf.append(event)
        if len(buf) >= chunk:
            flush()
    if buf:
        flush()
    return np.concatenate(ranks) if ranks else np.zeros(0, dtype=np.int64)


def metrics_from_ranks(ranks, ks):
    """Mean Recall@k and NDCG@k over events."""
    ranks = np.asarray(ranks)
    n = len(ranks)
    gains = 1.0 / np.log2(ranks + 1.0)
    recall = {k: float(np.count_nonzero(ranks <= k)) / n for k in ks}
    ndcg = {k: float(np.where(ranks <= k, gains, 0.0).sum()) / n for k in ks}
    if 1 in ks:
        # rank 1 earns gain exactly 1, so the two coincide; avoid summation-order drift
        ndcg[1] = recall[1]
    return recall, ndcg


def evaluate(ranker, split, cfg: EvalConfig = EvalConfig(), name=None) -> EvalReport:
    if not split.matches:
        raise DataError("empty split")
    ranks = event_ranks(ranker, split, cfg.max_len)
    if not len(ranks):
        raise DataError("split has no evaluation events")
    recall, ndcg = metrics_from_ranks(ranks, cfg.ks)
    return EvalReport(recall, ndcg, int(len(ranks)), name or ranker.kind,
                      {"kind": ranker.kind, "max_len": cfg.max_len or ranker.max_len})


LEADERBOARD_HEADER = ["model", "rec@1", "ndcg@1", "rec@3", "ndcg@3", "events"]


def compare_reports(reports) -> str:
    """Leaderboard CSV sorted by Rec@3 desc, then NDCG@3 desc, then name."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports")
    ks = {tuple(sorted(r.recall)) for r in reports}
    lens = {r.meta.get("max_len") for r in reports}
    if len(ks) > 1 or len(lens) > 1:
        raise ValueError("reports were produced with different evaluation configs")
    for k in (1, 3):
        if k not in reports[0].recall:
            raise ValueError(f"reports lack k={k}")
    rows = sorted(reports, key=lambda r: (-r.recall[3], -r.ndcg[3], r.model))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEADERBOARD_HEADER)
    for r in rows:
        w.writerow([r.model, f"{r.recall[1]:.4f}", f"{r.ndcg[1]:.4f}", f"{r.recall[3]:.4f}",
                    f"{r.ndcg[3]:.4f}", r.events])
    return buf.getvalue()


def save_report(path, report: EvalReport):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_json(json.load(fh))
