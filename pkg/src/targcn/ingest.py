"""Reading quadruple TSV files, dataset statistics and robustness splits."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from targcn.kg import add_reciprocals, as_quad_array

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetStats:
    n_train: int
    n_valid: int
    n_test: int
    n_entities: int
    n_relations: int
    n_timestamps: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Vocab:
    """String/id maps. Time tokens map to dense indices through ``time_origin``/``time_step``."""

    entities: dict[str, int]
    relations: dict[str, int]
    time_kind: str  # "date" or "int"
    time_origin: object  # date for "date", int for "int"
    time_step: int = 1
    entity_names: list[str] = field(init=False, repr=False)
    relation_names: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        self.entity_names = sorted(self.entities, key=self.entities.__getitem__)
        self.relation_names = sorted(self.relations, key=self.relations.__getitem__)

    def time_token(self, index: int) -> str:
        if self.time_kind == "date":
            return (self.time_origin + timedelta(days=int(index))).isoformat()
        return str(self.time_origin + int(index) * self.time_step)

    def calendar(self, num_timestamps: int) -> dict[int, tuple[int, int]]:
        """TimeIndex -> (month, day of month). Only defined for date-stamped data."""
        if self.time_kind != "date":
            raise DataFormatError("calendar requires ISO-date timestamps")
        out = {}
        for i in range(num_timestamps):
            d = self.time_origin + timedelta(days=i)
            out[i] = (d.month, d.day)
        return out

    def to_strings(self, quads: np.ndarray) -> list[tuple[str, str, str, str]]:
        return [
            (self.entity_names[s], self.relation_names[r], self.entity_names[o], self.time_token(t))
            for s, r, o, t in quads.tolist()
        ]


@dataclass
class Dataset:
    """Raw (pre-reciprocal) splits plus vocabularies."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    vocab: Vocab
    stats: DatasetStats
    name: str = ""

    @property
    def num_entities(self) -> int:
        return self.stats.n_entities

    @property
    def num_relations(self) -> int:
        return self.stats.n_relations

    @property
    def num_timestamps(self) -> int:
        return self.stats.n_timestamps

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)

    def augmented(self, name: str) -> np.ndarray:
        return add_reciprocals(self.split(name), self.num_relations)


def _read_rows(path: Path) -> list[tuple[str, str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4 or not all(p.strip() for p in parts):
                raise DataFormatError(
                    f"{path.name}:{lineno}: expected 4 non-empty tab-separated fields, got {len(parts)}"
                )
            rows.append(tuple(p.strip() for p in parts))
    return rows


def _parse_date(token: str) -> Optional[date]:
    try:
        return date.fromisoformat(token)
    except ValueError:
        return None


def _time_mapping(tokens: set[str]) -> tuple[str, object, int, Callable[[str], int]]:
    sample = next(iter(tokens))
    if _parse_date(sample) is not None:
        parsed = {}
        for tok in tokens:
            d = _parse_date(tok)
            if d is None:
                raise DataFormatError(f"unrecognised timestamp {tok!r}")
            parsed[tok] = d
        origin = min(parsed.values())
        return "date", origin, 1, lambda tok: (parsed[tok] - origin).days
    values = {}
    for tok in tokens:
        try:
            v = int(tok)
        except ValueError:
            raise DataFormatError(f"unrecognised timestamp {tok!r}") from None
        if v < 0:
            raise DataFormatError(f"unrecognised timestamp {tok!r}")
        values[tok] = v
    distinct = np.unique(np.fromiter(values.values(), dtype=np.int64))
    origin = int(distinct[0])
    gaps = np.diff(distinct)
    step = int(np.gcd.reduce(gaps)) if len(gaps) else 1
    if len(gaps) and step != int(gaps.min()):
        logger.warning("integer timestamps are not multiples of their minimal gap; using gcd %d", step)
    return "int", origin, step, lambda tok: (values[tok] - origin) // step


def compute_stats(train, valid, test, n_timestamps: Optional[int] = None) -> DatasetStats:
    """Counts over raw quadruples; entity/relation counts are distinct ids used in any split."""
    parts = [as_quad_array(x) for x in (train, valid, test)]
    allq = np.concatenate(parts, axis=0)
    if len(allq) == 0:
        return DatasetStats(0, 0, 0, 0, 0, 0)
    ents = np.union1d(allq[:, 0], allq[:, 2])
    if n_timestamps is None:
        n_timestamps = int(allq[:, 3].max()) + 1
    return DatasetStats(
        len(parts[0]), len(parts[1]), len(parts[2]), len(ents), len(np.unique(allq[:, 1])), n_timestamps
    )


def parse_dataset(train_path, valid_path, test_path, name: str = "") -> Dataset:
    paths = [Path(p) for p in (train_path, valid_path, test_path)]
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"dataset file not found: {p}")
    rows = [_read_rows(p) for p in paths]
    ents, rels, times = set(), set(), set()
    for split in rows:
        for s, r, o, t in split:
            ents.add(s)
            ents.add(o)
            rels.add(r)
            times.add(t)
    if not times:
        raise DataFormatError("dataset contains no quadruples")
    entities = {k: i for i, k in enumerate(sorted(ents))}
    relations = {k: i for i, k in enumerate(sorted(rels))}
    kind, origin, step, to_index = _time_mapping(times)
    tmap = {tok: to_index(tok) for tok in times}
    arrays = []
    for split in rows:
        arr = np.array(
            [(entities[s], relations[r], entities[o], tmap[t]) for s, r, o, t in split], dtype=np.int64
        ).reshape(-1, 4)
        arrays.append(arr)
    vocab = Vocab(entities, relations, kind, origin, step)
    stats = DatasetStats(
        len(arrays[0]), len(arrays[1]), len(arrays[2]), len(entities), len(relations), max(tmap.values()) + 1
    )
    return Dataset(*arrays, vocab=vocab, stats=stats, name=name)


def load_dataset(data_dir) -> Dataset:
    """Read ``train.txt``, ``valid.txt``, ``test.txt`` from a directory."""
    d = Path(data_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"data directory not found: {d}")
    return parse_dataset(d / "train.txt", d / "valid.txt", d / "test.txt", name=d.name)


def write_quadruples(path, rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(str(x) for x in row) + "\n")


def write_vocab(path, mapping: Mapping[str, int]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in sorted(mapping.items(), key=lambda kv: kv[1]):
            fh.write(f"{k}\t{v}\n")


def write_split_dir(out_dir, train, valid, test, vocab: Vocab, stats: DatasetStats) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, quads in zip(SPLITS, (train, valid, test)):
        write_quadruples(out / f"{name}.txt", vocab.to_strings(as_quad_array(quads)))
    (out / "stats.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n")


UNSEEN_DAYS = (5, 15, 25)


def make_unseen_split(
    train, calendar: Mapping[int, tuple[int, int]], seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hold out every training quadruple dated on day 5, 15 or 25 of a month.

    The held-out set is shuffled with ``seed`` and halved (first ``n // 2`` to
    valid, the rest to test); afterwards valid/test quadruples mentioning an
    entity absent from the reduced training set are dropped.
    """
    quads = as_quad_array(train)
    held_days = np.array([calendar[int(t)][1] in UNSEEN_DAYS for t in quads[:, 3]], dtype=bool)
    if not held_days.any():
        raise DataFormatError("no quadruples fall on days 5/15/25; check the calendar mapping")
    new_train = quads[~held_days]
    excluded = quads[held_days]
    perm = np.random.default_rng(seed).permutation(len(excluded))
    excluded = excluded[perm]
    half = len(excluded) // 2
    valid, test = excluded[:half], excluded[half:]
    seen = np.zeros(int(quads[:, [0, 2]].max()) + 1, dtype=bool)
    seen[new_train[:, 0]] = True
    seen[new_train[:, 2]] = True

    def keep(q):
        return q[seen[q[:, 0]] & seen[q[:, 2]]]

    return new_train, keep(valid), keep(test)


def select_snapshots(num_timestamps: int, seed: int = 0, gap_choices: Sequence[int] = (1, 2, 3, 4)) -> np.ndarray:
    """Snapshot indices from 0 with successive gaps drawn uniformly from ``gap_choices``."""
    rng = np.random.default_rng(seed)
    choices = np.asarray(gap_choices, dtype=np.int64)
    picked = [0]
    while True:
        nxt = picked[-1] + int(choices[rng.integers(len(choices))])
        if nxt >= num_timestamps:
            break
        picked.append(nxt)
    return np.array(picked, dtype=np.int64)


def make_irregular_split(
    dataset: Dataset, seed: int = 0, gap_choices: Sequence[int] = (1, 2, 3, 4)
) -> tuple[np.ndarray, np.ndarray, np.ndarray, DatasetStats]:
    """Keep only quadruples at irregularly spaced snapshots; split membership is preserved.

    The reported ``n_timestamps`` is the number of retained snapshots.
    """
    snaps = select_snapshots(dataset.num_timestamps, seed, gap_choices)
    mask = np.zeros(dataset.num_timestamps, dtype=bool)
    mask[snaps] = True
    parts = [q[mask[q[:, 3]]] for q in (dataset.train, dataset.valid, dataset.test)]
    stats = compute_stats(*parts, n_timestamps=len(snaps))
    return parts[0], parts[1], parts[2], stats


def file_digest(paths) -> str:
    import hashlib

    h = hashlib.sha256()
    for p in paths:
        p = Path(p)
        h.update(p.name.encode())
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def dataset_digest(data_dir) -> str:
    d = Path(data_dir)
    return file_digest([d / f"{s}.txt" for s in SPLITS])


def data_dir_default() -> Optional[str]:
    return os.environ.get("TARGCN_DATA_DIR")
