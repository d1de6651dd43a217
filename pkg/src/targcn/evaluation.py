"""Filtered ranking evaluation: per-query ranks, MRR and Hits@1/3/10."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch

from targcn.kg import add_reciprocals, as_quad_array
from targcn.sampler import STREAM_EVAL, derive_rng

TIE_MODES = ("pessimistic", "mean")
FILTER_MODES = ("time-aware", "static")
METRIC_COLUMNS = ("mrr", "hits1", "hits3", "hits10")


@dataclass(frozen=True)
class RankResult:
    query: tuple[int, int, int, int]  # (s, r, t, o)
    filtered_rank: float
    num_filtered: int


@dataclass
class MetricsReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    num_queries: int
    split: str = ""
    tie_mode: str = "pessimistic"
    filter_mode: str = "time-aware"
    meta: dict = field(default_factory=dict)
    ranks: list[RankResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("ranks")
        return d

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["split", "num_queries", *METRIC_COLUMNS, "tie_mode", "filter_mode"])
            w.writerow([self.split, self.num_queries, *(getattr(self, c) for c in METRIC_COLUMNS),
                        self.tie_mode, self.filter_mode])

    def write_ranks(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for rr in self.ranks:
                s, r, t, o = rr.query
                fh.write(f"{s}\t{r}\t{o}\t{t}\t{rr.filtered_rank:g}\n")


def metrics_from_ranks(ranks: Iterable[float]) -> dict[str, float]:
    r = np.asarray(list(ranks), dtype=np.float64)
    if r.size == 0:
        return {c: 0.0 for c in METRIC_COLUMNS}
    return {
        "mrr": float(np.mean(1.0 / r)),
        "hits1": float(np.mean(r <= 1)),
        "hits3": float(np.mean(r <= 3)),
        "hits10": float(np.mean(r <= 10)),
    }


def filtered_rank(scores, o_q: int, filter_set=(), tie_mode: str = "pessimistic") -> RankResult:
    """Rank of ``o_q`` after removing ``filter_set`` from the candidates.

    Pessimistic mode ranks every tied candidate above the ground truth; mean
    mode counts half of them.
    """
    if tie_mode not in TIE_MODES:
        raise ValueError(f"unknown tie mode {tie_mode!r}")
    s = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(s), dtype=bool)
    filt = [f for f in filter_set if f != o_q]
    keep[filt] = False
    keep[o_q] = False
    target = s[o_q]
    greater = int(np.count_nonzero(keep & (s > target)))
    ties = int(np.count_nonzero(keep & (s == target)))
    rank = 1 + greater + (ties if tie_mode == "pessimistic" else ties / 2)
    return RankResult((-1, -1, -1, int(o_q)), float(rank), len(set(filt)))


def build_filter(quads_list, mode: str = "time-aware") -> dict[tuple, set[int]]:
    """Known answers per query key: ``(s, r, t)`` (time-aware) or ``(s, r)`` (static)."""
    if mode not in FILTER_MODES:
        raise ValueError(f"unknown filter mode {mode!r}")
    known: dict[tuple, set[int]] = defaultdict(set)
    for quads in quads_list:
        for s, r, o, t in as_quad_array(quads).tolist():
            key = (s, r, t) if mode == "time-aware" else (s, r)
            known[key].add(o)
    return known


def _batch_ranks(scores: torch.Tensor, queries: np.ndarray, known, mode: str, tie_mode: str):
    sc = scores.detach().to(torch.float64).numpy()
    out = []
    for i, (s, r, o, t) in enumerate(queries.tolist()):
        key = (s, r, t) if mode == "time-aware" else (s, r)
        filt = known.get(key, ())
        res = filtered_rank(sc[i], o, filt, tie_mode)
        out.append(RankResult((s, r, t, o), res.filtered_rank, res.num_filtered))
    return out


def evaluate(
    model,
    kg,
    dataset,
    split: str = "test",
    tie_mode: Optional[str] = None,
    filter_mode: Optional[str] = None,
    filter_scope: str = "all",
    batch_size: Optional[int] = None,
    seed: Optional[int] = None,
    tag: int = 0,
) -> MetricsReport:
    """Rank both reciprocal queries of every raw fact in ``split``.

    ``kg`` is the (training) graph that supplies temporal neighbors. Query ``i``
    samples its TNG with ``derive_rng(seed, STREAM_EVAL, tag, i)``, so results do
    not depend on batching.
    """
    cfg = model.config
    tie_mode = tie_mode or cfg.tie_mode
    filter_mode = filter_mode or cfg.filter_mode
    batch_size = batch_size or cfg.eval_batch_size
    seed = cfg.seed if seed is None else seed
    R = dataset.num_relations
    queries = add_reciprocals(dataset.split(split), R)
    if filter_scope == "all":
        sources = [dataset.augmented(n) for n in ("train", "valid", "test")]
    elif filter_scope == "eval":
        sources = [queries]
    else:
        raise ValueError(f"unknown filter scope {filter_scope!r}")
    known = build_filter(sources, filter_mode)

    ranks: list[RankResult] = []
    was_training = model.training
    model.eval()
    cache: dict = {}
    with torch.no_grad():
        for lo in range(0, len(queries), batch_size):
            batch = queries[lo : lo + batch_size]
            rngs = [derive_rng(seed, STREAM_EVAL, tag, lo + i) for i in range(len(batch))]
            scores = model(kg, batch[:, [0, 1, 3]], rngs, cache=cache)
            ranks.extend(_batch_ranks(scores, batch, known, filter_mode, tie_mode))
    model.train(was_training)
    m = metrics_from_ranks(rr.filtered_rank for rr in ranks)
    return MetricsReport(
        num_queries=len(ranks),
        split=split,
        tie_mode=tie_mode,
        filter_mode=filter_mode,
        meta={"filter_scope": filter_scope, "sampler_variant": cfg.sampler_variant,
              "time_encoder_variant": cfg.time_encoder_variant, "score_fn": cfg.score_fn},
        ranks=ranks,
        **m,
    )
