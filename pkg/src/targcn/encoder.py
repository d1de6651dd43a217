"""TARGCN encoder.

A neighbor ``(e, r, t)`` of the query node ``(s_q, t_q)`` is represented as
``f(h_e || phi(t - t_q))`` where ``f`` is one affine layer plus activation and
``phi`` is a cosine encoding with trainable frequencies and phases. The query
node representation is the mean of ``W(h_(e,t) || h_r)`` over the sampled TNG.
Nodes with no temporal neighbors fall back to their zero-difference
representation, the same rule used for candidate objects.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from targcn.config import RunConfig
from targcn.kg import TemporalKG
from targcn.sampler import TngSample, sample_many
from targcn.scoring import score_matrix

PARAMETER_ORDER = (
    "entity_table",
    "relation_table",
    "time_omega",
    "time_phase",
    "combiner.weight",
    "combiner.bias",
    "aggregator.weight",
    "aggregator.bias",
)


def time_encoding(delta, omega: torch.Tensor, phase: torch.Tensor) -> torch.Tensor:
    """``sqrt(1/d_t) * cos(omega * delta + phase)``; ``delta`` may be a scalar or a vector."""
    delta = torch.as_tensor(delta, dtype=omega.dtype)
    scale = math.sqrt(1.0 / omega.shape[0])
    return scale * torch.cos(delta.unsqueeze(-1) * omega + phase)


def _activation(name: str):
    return {"tanh": torch.tanh, "relu": torch.relu}[name]


class TARGCN(nn.Module):
    def __init__(self, num_entities: int, num_base_relations: int, num_timestamps: int, config: RunConfig):
        super().__init__()
        d, dt = config.embedding_size, config.d_time
        self.config = config
        self.num_entities = num_entities
        self.num_base_relations = num_base_relations
        self.num_timestamps = num_timestamps
        self.entity_table = nn.Parameter(torch.empty(num_entities, d))
        self.relation_table = nn.Parameter(torch.empty(2 * num_base_relations, d))
        self.time_omega = nn.Parameter(torch.empty(dt))
        self.time_phase = nn.Parameter(torch.empty(dt))
        self.combiner = nn.Linear(d + dt, d)
        self.aggregator = nn.Linear(2 * d, d)
        self.act = _activation(config.activation)
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int = 0) -> None:
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for w in (self.entity_table, self.relation_table, self.combiner.weight, self.aggregator.weight):
                nn.init.xavier_uniform_(w, generator=g)
            self.combiner.bias.zero_()
            self.aggregator.bias.zero_()
            dt = self.time_omega.shape[0]
            # geometric frequencies from 1 down to 1/|T|
            expo = torch.arange(dt, dtype=torch.float64) / max(dt - 1, 1)
            self.time_omega.copy_(torch.pow(1.0 / max(self.num_timestamps, 1), expo))
            self.time_phase.zero_()

    @property
    def absolute_time(self) -> bool:
        return self.config.time_encoder_variant == "absolute"

    def phi(self, delta) -> torch.Tensor:
        return time_encoding(delta, self.time_omega, self.time_phase)

    def _time_argument(self, t: np.ndarray, t_q: np.ndarray) -> torch.Tensor:
        # integer subtraction first: a zero difference is exactly 0.0
        arg = np.asarray(t, dtype=np.int64) if self.absolute_time else np.asarray(t, dtype=np.int64) - t_q
        return torch.as_tensor(arg, dtype=self.time_omega.dtype)

    def time_aware_rep(self, entities, time_args) -> torch.Tensor:
        """``act(W_f (h_e || phi(arg)) + b_f)``; ``time_args`` are differences (or absolute times)."""
        ents = torch.as_tensor(entities, dtype=torch.long)
        h = self.entity_table[ents]
        return self.act(self.combiner(torch.cat([h, self.phi(time_args)], dim=-1)))

    def self_rep(self, entities, times) -> torch.Tensor:
        """Zero-difference representation of ``(entity, t)``, used for candidates and empty TNGs."""
        times = np.asarray(times, dtype=np.int64)
        return self.time_aware_rep(entities, self._time_argument(times, times))

    def candidate_table(self, t_q: Optional[int] = None) -> torch.Tensor:
        """Representations of every entity at ``t_q``; independent of ``t_q`` unless times are absolute."""
        ents = np.arange(self.num_entities)
        t = np.full(self.num_entities, 0 if t_q is None else t_q, dtype=np.int64)
        return self.self_rep(ents, t)

    def aggregate_samples(
        self, samples: Sequence[TngSample], neighbor_reps: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        """Mean of ``W(h_(e,t) || h_r)`` per sample, with the self-representation for empty ones."""
        n = len(samples)
        counts = np.array([len(s) for s in samples], dtype=np.int64)
        centers = np.array([s.center for s in samples], dtype=np.int64).reshape(n, 2)
        d = self.entity_table.shape[1]
        out = torch.zeros(n, d, dtype=self.entity_table.dtype)
        if counts.sum() > 0:
            seg = np.repeat(np.arange(n), counts)
            nb_r = np.concatenate([s.relations for s in samples])
            if neighbor_reps is None:
                nb_e = np.concatenate([s.entities for s in samples])
                nb_t = np.concatenate([s.times for s in samples])
                neighbor_reps = self.time_aware_rep(nb_e, self._time_argument(nb_t, centers[seg, 1]))
            rel = self.relation_table[torch.as_tensor(nb_r, dtype=torch.long)]
            msg = self.aggregator(torch.cat([neighbor_reps, rel], dim=-1))
            out = out.index_add(0, torch.as_tensor(seg), msg)
            denom = torch.as_tensor(np.maximum(counts, 1), dtype=out.dtype).unsqueeze(-1)
            out = out / denom
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            fb = self.self_rep(centers[empty, 0], centers[empty, 1])
            out = out.index_copy(0, torch.as_tensor(empty), fb)
        return out

    def encode(
        self,
        kg: TemporalKG,
        subjects,
        times,
        rngs: Sequence[np.random.Generator],
        excludes=None,
        steps: Optional[int] = None,
    ) -> torch.Tensor:
        """Time-aware representations ``h_(s_q, t_q)`` for a batch of query nodes."""
        cfg = self.config
        steps = cfg.agg_steps if steps is None else steps
        subjects = np.asarray(subjects, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        samples = sample_many(
            kg,
            list(zip(subjects.tolist(), times.tolist())),
            rngs,
            cap=cfg.max_neighbors,
            search_range=cfg.search_range,
            variant=cfg.sampler_variant,
            include_same_time=cfg.include_same_time,
            excludes=excludes,
        )
        if steps <= 1:
            return self.aggregate_samples(samples)
        counts = [len(s) for s in samples]
        if sum(counts) == 0:
            return self.aggregate_samples(samples)
        nb_e = np.concatenate([s.entities for s in samples])
        nb_t = np.concatenate([s.times for s in samples])
        nb_rngs = [rngs[i] for i, c in enumerate(counts) for _ in range(c)]
        inner = self.encode(kg, nb_e, nb_t, nb_rngs, steps=steps - 1)
        return self.aggregate_samples(samples, neighbor_reps=inner)

    def score_queries(self, h_s: torch.Tensor, relations, times, cache: Optional[dict] = None) -> torch.Tensor:
        """Scores of encoded subjects against every candidate object -> ``(batch, |E|)``."""
        rel = self.relation_table[torch.as_tensor(np.asarray(relations, dtype=np.int64))]
        fn = self.config.score_fn
        if not self.absolute_time:
            cand = cache.get(None) if cache is not None else None
            if cand is None:
                cand = self.candidate_table()
                if cache is not None:
                    cache[None] = cand
            return score_matrix(h_s, rel, cand, fn)
        times = np.asarray(times, dtype=np.int64)
        rows = []
        order = []
        for t in np.unique(times):
            idx = np.flatnonzero(times == t)
            cand = cache.get(int(t)) if cache is not None else None
            if cand is None:
                cand = self.candidate_table(int(t))
                if cache is not None:
                    cache[int(t)] = cand
            rows.append(score_matrix(h_s[idx], rel[idx], cand, fn))
            order.append(idx)
        perm = torch.as_tensor(np.argsort(np.concatenate(order), kind="stable"))
        return torch.cat(rows, dim=0)[perm]

    def forward(self, kg: TemporalKG, queries, rngs, excludes=None, cache=None) -> torch.Tensor:
        """``queries``: ``(batch, >=2)`` int array whose columns are ``s, r, [o], t`` (time last)."""
        q = np.asarray(queries, dtype=np.int64)
        s, r, t = q[:, 0], q[:, 1], q[:, -1]
        h = self.encode(kg, s, t, rngs, excludes=excludes)
        return self.score_queries(h, r, t, cache)


def build_model(num_entities: int, num_base_relations: int, num_timestamps: int, config: RunConfig) -> TARGCN:
    return TARGCN(num_entities, num_base_relations, num_timestamps, config)


def aggregate(model: TARGCN, sample: TngSample) -> torch.Tensor:
    return model.aggregate_samples([sample])[0]


def encode_query(model: TARGCN, kg: TemporalKG, s_q: int, t_q: int, rng: np.random.Generator) -> torch.Tensor:
    return model.encode(kg, [s_q], [t_q], [rng])[0]


def query_excludes(batch: np.ndarray, num_base_relations: int) -> list[tuple[int, int, int]]:
    """Reciprocal edge of each training quadruple, ``(o, r^-1, t)`` filed under ``s``."""
    out = []
    for s, r, o, t in np.asarray(batch, dtype=np.int64).tolist():
        inv = r + num_base_relations if r < num_base_relations else r - num_base_relations
        out.append((o, inv, t))
    return out
