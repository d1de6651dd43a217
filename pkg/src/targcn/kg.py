"""Temporal knowledge graph substrate.

Quadruples are stored as an ``(n, 4)`` int64 array with columns
``subject, relation, object, time``. The incoming-edge index is a CSR layout
keyed by object entity, each row sorted by ``(time, source, relation)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np


class Quadruple(NamedTuple):
    s: int
    r: int
    o: int
    t: int


class TemporalNeighbor(NamedTuple):
    e: int
    r: int
    t: int
    delta: int


class ValidationError(ValueError):
    pass


def as_quad_array(quads: Iterable[Sequence[int]] | np.ndarray) -> np.ndarray:
    arr = np.asarray(quads if isinstance(quads, np.ndarray) else list(quads), dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValidationError(f"expected quadruples of shape (n, 4), got {arr.shape}")
    return arr


def add_reciprocals(raw, num_base_relations: int) -> np.ndarray:
    """Append ``(o, r + R, s, t)`` for every ``(s, r, o, t)``."""
    quads = as_quad_array(raw)
    if len(quads) == 0:
        return quads
    bad = np.flatnonzero((quads[:, 1] < 0) | (quads[:, 1] >= num_base_relations))
    if len(bad):
        i = int(bad[0])
        raise ValidationError(
            f"line {i + 1}: relation id {quads[i, 1]} outside [0, {num_base_relations})"
        )
    inverse = quads[:, [2, 1, 0, 3]].copy()
    inverse[:, 1] += num_base_relations
    return np.concatenate([quads, inverse], axis=0)


def inverse_relation(r: int, num_base_relations: int) -> int:
    return r + num_base_relations if r < num_base_relations else r - num_base_relations


def _validate(quads: np.ndarray, num_entities: int, num_relations: int, num_timestamps: int) -> None:
    limits = (num_entities, num_relations, num_entities, num_timestamps)
    names = ("subject", "relation", "object", "time")
    for col, (limit, name) in enumerate(zip(limits, names)):
        bad = np.flatnonzero((quads[:, col] < 0) | (quads[:, col] >= limit))
        if len(bad):
            i = int(bad[0])
            raise ValidationError(f"line {i + 1}: {name} id {quads[i, col]} outside [0, {limit})")


@dataclass(frozen=True, eq=False)
class TemporalKG:
    """Immutable quadruple store with an incoming-edge index.

    ``num_relations`` counts every relation id present in the store; after
    reciprocal augmentation it is ``2 * num_base_relations``.
    """

    quadruples: np.ndarray
    num_entities: int
    num_base_relations: int
    num_timestamps: int
    split: str = "train"
    offsets: np.ndarray = field(repr=False, default=None)
    sources: np.ndarray = field(repr=False, default=None)
    relations: np.ndarray = field(repr=False, default=None)
    times: np.ndarray = field(repr=False, default=None)
    # deduplicated view consumed by the sampler
    uniq_offsets: np.ndarray = field(repr=False, default=None)
    uniq_sources: np.ndarray = field(repr=False, default=None)
    uniq_relations: np.ndarray = field(repr=False, default=None)
    uniq_times: np.ndarray = field(repr=False, default=None)

    @property
    def num_relations(self) -> int:
        return 2 * self.num_base_relations

    def __len__(self) -> int:
        return len(self.quadruples)

    def incoming(self, entity: int) -> list[tuple[int, int, int]]:
        lo, hi = self.offsets[entity], self.offsets[entity + 1]
        return list(zip(self.sources[lo:hi].tolist(), self.relations[lo:hi].tolist(), self.times[lo:hi].tolist()))

    def index_keys(self) -> list[int]:
        return np.flatnonzero(np.diff(self.offsets) > 0).tolist()


def build_index(
    quadruples,
    num_entities: int,
    num_base_relations: int,
    num_timestamps: int,
    split: str = "train",
) -> TemporalKG:
    """Build the incoming-edge index: quadruple ``(e, r, s, t)`` is filed under ``s`` as ``(e, r, t)``."""
    quads = as_quad_array(quadruples)
    quads.setflags(write=False)
    _validate(quads, num_entities, 2 * num_base_relations, num_timestamps)

    src, rel, obj, tim = quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3]
    order = np.lexsort((rel, src, tim, obj))
    counts = np.bincount(obj, minlength=num_entities)
    offsets = np.zeros(num_entities + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    sources, relations, times = src[order], rel[order], tim[order]

    # sorted by (obj, t, src, rel): duplicates are adjacent
    keep = np.ones(len(order), dtype=bool)
    if len(order) > 1:
        same = (
            (obj[order][1:] == obj[order][:-1])
            & (times[1:] == times[:-1])
            & (sources[1:] == sources[:-1])
            & (relations[1:] == relations[:-1])
        )
        keep[1:] = ~same
    uniq_counts = np.bincount(obj[order][keep], minlength=num_entities)
    uniq_offsets = np.zeros(num_entities + 1, dtype=np.int64)
    np.cumsum(uniq_counts, out=uniq_offsets[1:])

    arrays = [offsets, sources, relations, times, uniq_offsets, sources[keep], relations[keep], times[keep]]
    for a in arrays:
        a.setflags(write=False)
    return TemporalKG(quads, num_entities, num_base_relations, num_timestamps, split, *arrays)


def neighbor_slice(
    kg: TemporalKG,
    s_q: int,
    t_q: int,
    search_range: Optional[int] = None,
    unique: bool = False,
    include_same_time: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of :func:`temporal_neighbors`: ``(sources, relations, times)``."""
    if unique:
        off, src, rel, tim = kg.uniq_offsets, kg.uniq_sources, kg.uniq_relations, kg.uniq_times
    else:
        off, src, rel, tim = kg.offsets, kg.sources, kg.relations, kg.times
    lo, hi = int(off[s_q]), int(off[s_q + 1])
    if search_range is not None:
        if search_range < 0:
            raise ValueError("search_range must be >= 0")
        row = tim[lo:hi]
        a = lo + int(np.searchsorted(row, t_q - search_range, side="left"))
        b = lo + int(np.searchsorted(row, t_q + search_range, side="right"))
        lo, hi = a, b
    e, r, t = src[lo:hi], rel[lo:hi], tim[lo:hi]
    if not include_same_time:
        m = t != t_q
        e, r, t = e[m], r[m], t[m]
    return e, r, t


def temporal_neighbors(
    kg: TemporalKG,
    s_q: int,
    t_q: int,
    search_range: Optional[int] = None,
    include_same_time: bool = True,
) -> list[TemporalNeighbor]:
    """All incoming-edge neighbors of ``(s_q, t_q)`` with ``|t - t_q| <= search_range``.

    ``search_range=None`` searches the whole timeline.
    """
    e, r, t = neighbor_slice(kg, s_q, t_q, search_range, include_same_time=include_same_time)
    return [TemporalNeighbor(int(a), int(b), int(c), int(c) - t_q) for a, b, c in zip(e, r, t)]
