"""Synthetic temporal KGs used for smoke runs and tests."""

from __future__ import annotations

from datetime import date

import numpy as np

from targcn.ingest import Dataset, Vocab, compute_stats

CLUE, TARGET = 0, 1


def _vocab(num_entities: int, num_relations: int) -> Vocab:
    return Vocab(
        {f"e{i}": i for i in range(num_entities)},
        {f"r{i}": i for i in range(num_relations)},
        "date",
        date(2014, 1, 1),
    )


def _dataset(train, valid, test, num_entities, num_relations, num_timestamps, name) -> Dataset:
    stats = compute_stats(train, valid, test, n_timestamps=num_timestamps)
    # vocab sizes are fixed by construction even if an id happens to be unused
    stats = type(stats)(stats.n_train, stats.n_valid, stats.n_test, num_entities, num_relations, num_timestamps)
    return Dataset(train, valid, test, _vocab(num_entities, num_relations), stats, name)


def copy_pattern_dataset(
    num_entities: int = 30,
    num_pairs: int = 150,
    num_timestamps: int = 60,
    num_valid: int = 25,
    num_test: int = 25,
    seed: int = 0,
) -> Dataset:
    """Facts come in pairs: a clue ``(o, CLUE, s, t-1)`` and a target ``(s, TARGET, o, t)``.

    Neither entity of a pair takes part in any other fact within ``[t-2, t+1]``,
    so for the target query ``(s, TARGET, ?, t)`` the answer is the only
    temporal neighbor of ``s`` at distance 1 (and the same holds for the
    reciprocal query). Held-out facts are targets; their clues stay in training.
    """
    rng = np.random.default_rng(seed)
    busy = np.zeros((num_entities, num_timestamps + 2), dtype=bool)
    clues, targets = [], []
    attempts = 0
    while len(targets) < num_pairs:
        attempts += 1
        if attempts > 200_000:
            raise RuntimeError("could not place all pairs; increase num_timestamps")
        t = int(rng.integers(2, num_timestamps - 1))
        s, o = (int(x) for x in rng.choice(num_entities, size=2, replace=False))
        window = slice(t - 2, t + 2)
        if busy[s, window].any() or busy[o, window].any():
            continue
        busy[s, window] = True
        busy[o, window] = True
        clues.append((o, CLUE, s, t - 1))
        targets.append((s, TARGET, o, t))
    clues = np.array(clues, dtype=np.int64)
    targets = np.array(targets, dtype=np.int64)
    order = rng.permutation(num_pairs)
    valid = targets[order[:num_valid]]
    test = targets[order[num_valid : num_valid + num_test]]
    train = np.concatenate([clues, targets[order[num_valid + num_test :]]])
    return _dataset(train, valid, test, num_entities, 2, num_timestamps, "copy-pattern")


def random_dataset(
    num_entities: int = 20,
    num_relations: int = 5,
    num_timestamps: int = 12,
    num_train: int = 60,
    num_valid: int = 10,
    num_test: int = 10,
    seed: int = 0,
) -> Dataset:
    rng = np.random.default_rng(seed)

    def draw(n):
        q = np.empty((n, 4), dtype=np.int64)
        q[:, 0] = rng.integers(num_entities, size=n)
        q[:, 1] = rng.integers(num_relations, size=n)
        q[:, 2] = rng.integers(num_entities, size=n)
        q[:, 3] = rng.integers(num_timestamps, size=n)
        return q

    return _dataset(draw(num_train), draw(num_valid), draw(num_test), num_entities, num_relations,
                    num_timestamps, "random")
