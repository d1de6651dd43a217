"""Parameter-free temporal neighboring graph (TNG) sampler.

Every temporal neighbor ``(e, r, t)`` of a query node ``(s_q, t_q)`` is drawn
with probability proportional to ``exp(-|t - t_q|)``. Multi-draw sampling is
sequential without replacement, renormalising after each draw; it is realised
with Gumbel top-k keys, which has exactly that distribution and never
exponentiates large negative numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from targcn.kg import TemporalKG, TemporalNeighbor, neighbor_slice

VARIANTS = ("weighted", "uniform", "all")

# seed-derivation streams
STREAM_SHUFFLE = 0
STREAM_TRAIN = 1
STREAM_EVAL = 2


def derive_rng(base_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(base_seed, *keys)``; e.g. ``(seed, STREAM_EVAL, epoch, query_index)``."""
    return np.random.default_rng([int(base_seed), *(int(k) for k in keys)])


def neighbor_probabilities(deltas, t_q: Optional[int] = None) -> np.ndarray:
    """Softmax of ``-|t - t_q|`` over the candidate set.

    ``deltas`` are signed differences ``t - t_q``; pass timestamps together with
    ``t_q`` to have the differences taken here.
    """
    d = np.asarray(deltas, dtype=np.float64)
    if d.size == 0:
        raise ValueError("neighbor_probabilities needs at least one neighbor")
    if t_q is not None:
        d = d - t_q
    dist = np.abs(d)
    w = np.exp(-(dist - dist.min()))
    return w / w.sum()


@dataclass
class TngSample:
    center: tuple[int, int]
    entities: np.ndarray
    relations: np.ndarray
    times: np.ndarray
    weights: np.ndarray  # probabilities over the candidate set
    candidates: int

    @property
    def deltas(self) -> np.ndarray:
        return self.times - self.center[1]

    @property
    def neighbors(self) -> list[TemporalNeighbor]:
        t_q = self.center[1]
        return [
            TemporalNeighbor(int(e), int(r), int(t), int(t) - t_q)
            for e, r, t in zip(self.entities, self.relations, self.times)
        ]

    def __len__(self) -> int:
        return len(self.entities)


def sample_tng(
    kg: TemporalKG,
    s_q: int,
    t_q: int,
    cap: int = 100,
    search_range: Optional[int] = None,
    variant: str = "weighted",
    rng: Optional[np.random.Generator] = None,
    include_same_time: bool = True,
    exclude: Optional[tuple[int, int, int]] = None,
) -> TngSample:
    """Sample up to ``cap`` distinct neighbors of ``(s_q, t_q)``.

    ``exclude`` removes one ``(e, r, t)`` edge from the candidates; training uses it
    to hide the reciprocal of the quadruple being predicted.
    Sampled neighbors come back sorted by ``(t, e, r)``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown sampler variant {variant!r}")
    e, r, t = neighbor_slice(kg, s_q, t_q, search_range, unique=True, include_same_time=include_same_time)
    if exclude is not None:
        m = ~((e == exclude[0]) & (r == exclude[1]) & (t == exclude[2]))
        if not m.all():
            e, r, t = e[m], r[m], t[m]
    n = len(e)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return TngSample((s_q, t_q), empty, empty, empty, np.zeros(0), 0)

    dist = np.abs(t - t_q).astype(np.float64)
    if variant == "uniform":
        weights = np.full(n, 1.0 / n)
    else:
        weights = neighbor_probabilities(dist)

    if variant == "all" or n <= cap:
        idx = np.arange(n)
    else:
        if cap < 1:
            raise ValueError("cap must be >= 1")
        if rng is None:
            raise ValueError("an rng is required when the neighborhood exceeds the cap")
        keys = rng.gumbel(size=n)
        if variant == "weighted":
            keys -= dist
        idx = np.argpartition(-keys, cap - 1)[:cap]
        # neighbors arrive sorted by (t, e, r); restore that order for a fixed summation order
        idx.sort()
    return TngSample((s_q, t_q), e[idx], r[idx], t[idx], weights, n)


def sample_many(
    kg: TemporalKG,
    centers: Sequence[tuple[int, int]],
    rngs: Sequence[np.random.Generator],
    cap: int = 100,
    search_range: Optional[int] = None,
    variant: str = "weighted",
    include_same_time: bool = True,
    excludes: Optional[Sequence[Optional[tuple[int, int, int]]]] = None,
) -> list[TngSample]:
    out = []
    for i, (s, t) in enumerate(centers):
        ex = excludes[i] if excludes is not None else None
        out.append(sample_tng(kg, s, t, cap, search_range, variant, rngs[i], include_same_time, ex))
    return out
