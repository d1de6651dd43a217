import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from targcn.kg import (
    ValidationError,
    add_reciprocals,
    build_index,
    temporal_neighbors,
)


def test_add_reciprocals_single():
    out = add_reciprocals([(0, 1, 2, 5)], 3)
    assert out.tolist() == [[0, 1, 2, 5], [2, 4, 0, 5]]


def test_add_reciprocals_empty():
    assert add_reciprocals([], 3).shape == (0, 4)


def test_add_reciprocals_rejects_bad_relation():
    with pytest.raises(ValidationError, match="line 2"):
        add_reciprocals([(0, 1, 2, 5), (0, 3, 1, 0)], 3)


def test_reciprocal_doubling_at_icews14_scale():
    rng = np.random.default_rng(0)
    raw = np.column_stack(
        [rng.integers(7128, size=72826), rng.integers(230, size=72826),
         rng.integers(7128, size=72826), rng.integers(365, size=72826)]
    )
    aug = add_reciprocals(raw, 230)
    assert len(aug) == 145652
    assert aug[:, 1].max() < 460


def test_single_edge_index():
    kg = build_index([(0, 1, 2, 5)], 3, 2, 6)
    assert kg.index_keys() == [2]
    assert kg.incoming(2) == [(0, 1, 5)]


def test_index_sorted_by_time():
    kg = build_index([(0, 0, 2, 3), (1, 0, 2, 1)], 3, 1, 4)
    assert [t for _, _, t in kg.incoming(2)] == [1, 3]


def test_index_is_idempotent(toy):
    q = toy.augmented("train")
    a = build_index(q, toy.num_entities, toy.num_relations, toy.num_timestamps)
    b = build_index(q, toy.num_entities, toy.num_relations, toy.num_timestamps)
    for name in ("offsets", "sources", "relations", "times"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_index_is_immutable(toy_kg):
    with pytest.raises(ValueError):
        toy_kg.times[0] = 99


def test_validation_of_ids():
    with pytest.raises(ValidationError):
        build_index([(0, 0, 5, 0)], 3, 1, 1)


STAR_TQ, STAR_T = 50, 101


def five_neighbor_kg():
    # neighbors of s_q=0 at t_q-1, t_q+1, t_q-3, t_1 and t_T-1
    quads = [(1, 0, 0, STAR_TQ - 1), (2, 0, 0, STAR_TQ + 1), (3, 0, 0, STAR_TQ - 3), (4, 0, 0, 0), (5, 0, 0, STAR_T - 1)]
    return build_index(quads, 6, 1, STAR_T)


def test_five_neighbor_whole_timeline():
    nb = temporal_neighbors(five_neighbor_kg(), 0, STAR_TQ)
    assert sorted(n.e for n in nb) == [1, 2, 3, 4, 5]


def test_five_neighbor_range_one():
    nb = temporal_neighbors(five_neighbor_kg(), 0, STAR_TQ, search_range=1)
    assert sorted((n.e, n.delta) for n in nb) == [(1, -1), (2, 1)]


def test_same_time_neighbors_included_and_excludable():
    kg = build_index([(1, 0, 0, 4), (2, 0, 0, 5)], 3, 1, 6)
    assert {n.e for n in temporal_neighbors(kg, 0, 4)} == {1, 2}
    assert {n.e for n in temporal_neighbors(kg, 0, 4, include_same_time=False)} == {2}


def _brute(quads, s_q, t_q, rng_):
    return sorted(
        (int(e), int(r), int(t)) for e, r, o, t in quads if o == s_q and (rng_ is None or abs(t - t_q) <= rng_)
    )


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    s_q=st.integers(0, 5),
    t_q=st.integers(0, 9),
    rng_=st.one_of(st.none(), st.integers(0, 10)),
)
def test_neighbors_match_linear_scan(seed, s_q, t_q, rng_):
    g = np.random.default_rng(seed)
    quads = np.column_stack([g.integers(6, size=10), g.integers(2, size=10), g.integers(6, size=10), g.integers(10, size=10)])
    kg = build_index(quads, 6, 1, 10)
    got = sorted((n.e, n.r, n.t) for n in temporal_neighbors(kg, s_q, t_q, rng_))
    assert got == _brute(quads.tolist(), s_q, t_q, rng_)
    # every returned neighbor corresponds to an actual quadruple
    qs = {tuple(q) for q in quads.tolist()}
    assert all((e, r, s_q, t) in qs for e, r, t in got)


def test_round_trip_and_symmetry(toy, toy_kg):
    R = toy.num_relations
    aug = {tuple(q) for q in toy.augmented("train").tolist()}
    for s, r, o, t in aug:
        assert (o, r + R if r < R else r - R, s, t) in aug
    for e, r, s, t in list(aug)[:50]:
        assert (e, r, t) in {(n.e, n.r, n.t) for n in temporal_neighbors(toy_kg, s, 0)}


def test_one_index_entry_per_quadruple(toy, toy_kg):
    assert toy_kg.offsets[-1] == len(toy.augmented("train"))
    for key in range(toy.num_entities):
        times = [t for _, _, t in toy_kg.incoming(key)]
        assert times == sorted(times)
