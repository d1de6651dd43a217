import math

import numpy as np
import pytest
import torch

from targcn.encoder import aggregate, encode_query, time_encoding
from targcn.kg import build_index
from targcn.sampler import TngSample, derive_rng, sample_tng

from conftest import make_model, perturb


def test_phi_at_zero_is_scaled_cosine_of_phase():
    omega = torch.tensor([0.3, 2.0, -1.0], dtype=torch.float64)
    phase = torch.tensor([0.1, -0.5, 2.0], dtype=torch.float64)
    expected = math.sqrt(1 / 3) * torch.cos(phase)
    assert torch.equal(time_encoding(0.0, omega, phase), expected)


def test_phi_cos_pi():
    out = time_encoding(1.0, torch.tensor([math.pi], dtype=torch.float64), torch.zeros(1, dtype=torch.float64))
    assert out.tolist() == [-1.0]


def test_phi_sign_sensitivity():
    g = torch.Generator().manual_seed(0)
    omega = torch.rand(6, generator=g, dtype=torch.float64)
    phase = torch.rand(6, generator=g, dtype=torch.float64) + 0.1
    plus, minus = time_encoding(3.0, omega, phase), time_encoding(-3.0, omega, phase)
    expected = [math.sqrt(1 / 6) * math.cos(w * 3 + p) for w, p in zip(omega.tolist(), phase.tolist())]
    np.testing.assert_allclose(plus.numpy(), expected, atol=1e-15)
    assert not torch.allclose(plus, minus)


def test_phi_norm_bounded():
    omega = torch.linspace(0.01, 5, 16, dtype=torch.float64)
    phase = torch.linspace(-3, 3, 16, dtype=torch.float64)
    deltas = torch.arange(-500, 501, dtype=torch.float64)
    assert (time_encoding(deltas, omega, phase).norm(dim=-1) <= 1 + 1e-12).all()


def test_zero_delta_identical_for_all_query_times(toy):
    model = perturb(make_model(toy))
    ts = np.arange(toy.num_timestamps)
    reps = model._time_argument(ts, ts)
    enc = model.phi(reps)
    assert all(torch.equal(enc[0], enc[i]) for i in range(len(ts)))


def test_time_aware_rep_zero_combiner(toy):
    model = make_model(toy)
    with torch.no_grad():
        model.combiner.weight.zero_()
        model.combiner.bias.zero_()
    assert torch.equal(model.time_aware_rep([0, 3], torch.tensor([1.0, -2.0], dtype=torch.float64)),
                       torch.zeros(2, 8, dtype=torch.float64))


def test_time_aware_rep_identity_block(toy):
    model = make_model(toy)
    with torch.no_grad():
        model.entity_table.mul_(1e-4)
        model.combiner.weight.zero_()
        model.combiner.weight[:, :8] = torch.eye(8)
        model.combiner.bias.zero_()
    out = model.time_aware_rep([2], torch.tensor([5.0], dtype=torch.float64))[0]
    np.testing.assert_allclose(out.detach().numpy(), model.entity_table[2].detach().numpy(), rtol=1e-7)


def reference_rep(model, e, delta):
    """Straightforward loop implementation of f(h_e || phi(delta))."""
    h = model.entity_table[e].detach().numpy()
    om, ph = model.time_omega.detach().numpy(), model.time_phase.detach().numpy()
    enc = [math.sqrt(1 / len(om)) * math.cos(w * delta + p) for w, p in zip(om, ph)]
    x = np.concatenate([h, enc])
    W, b = model.combiner.weight.detach().numpy(), model.combiner.bias.detach().numpy()
    return np.array([math.tanh(sum(W[i, j] * x[j] for j in range(len(x))) + b[i]) for i in range(len(b))])


def test_time_aware_rep_matches_reference(toy):
    model = perturb(make_model(toy))
    for e, d in [(0, 0), (4, -3), (7, 5)]:
        got = model.time_aware_rep([e], torch.tensor([float(d)], dtype=torch.float64))[0].detach().numpy()
        np.testing.assert_allclose(got, reference_rep(model, e, d), atol=1e-12)


def reference_aggregate(model, sample):
    W, b = model.aggregator.weight.detach().numpy(), model.aggregator.bias.detach().numpy()
    msgs = []
    for e, r, t in zip(sample.entities, sample.relations, sample.times):
        x = np.concatenate([reference_rep(model, e, t - sample.center[1]), model.relation_table[r].detach().numpy()])
        msgs.append(W @ x + b)
    return np.mean(msgs, axis=0)


def test_aggregate_matches_reference(toy, toy_kg):
    model = perturb(make_model(toy))
    sample = sample_tng(toy_kg, 3, 6, cap=4, rng=derive_rng(0))
    assert len(sample) > 1
    np.testing.assert_allclose(aggregate(model, sample).detach().numpy(), reference_aggregate(model, sample), atol=1e-12)


def test_single_neighbor_and_duplicate(toy):
    model = perturb(make_model(toy))
    one = TngSample((0, 5), np.array([3]), np.array([2]), np.array([4]), np.array([1.0]), 1)
    two = TngSample((0, 5), np.array([3, 3]), np.array([2, 2]), np.array([4, 4]), np.array([0.5, 0.5]), 2)
    np.testing.assert_allclose(aggregate(model, one).detach().numpy(), reference_aggregate(model, one), atol=1e-12)
    assert torch.allclose(aggregate(model, one), aggregate(model, two), atol=1e-15)


def test_permutation_invariance(toy):
    model = perturb(make_model(toy))
    e, r, t = np.array([1, 5, 7, 2]), np.array([0, 3, 1, 4]), np.array([2, 9, 4, 4])
    a = TngSample((0, 5), e, r, t, np.full(4, 0.25), 4)
    perm = np.array([2, 0, 3, 1])
    b = TngSample((0, 5), e[perm], r[perm], t[perm], np.full(4, 0.25), 4)
    assert torch.allclose(aggregate(model, a), aggregate(model, b), atol=1e-14)


def test_empty_neighborhood_falls_back_to_self_rep(toy):
    model = perturb(make_model(toy))
    kg = build_index(np.zeros((0, 4), dtype=np.int64), toy.num_entities, toy.num_relations, toy.num_timestamps)
    out = encode_query(model, kg, 4, 7, derive_rng(0))
    assert torch.equal(out, model.self_rep([4], [7])[0])


def test_encode_single_step_equals_aggregate(toy, toy_kg):
    model = perturb(make_model(toy))
    sample = sample_tng(toy_kg, 2, 5, cap=4, rng=derive_rng(11))
    enc = encode_query(model, toy_kg, 2, 5, derive_rng(11))
    assert torch.equal(enc, aggregate(model, sample))


def test_encode_is_reproducible(toy, toy_kg):
    model = perturb(make_model(toy, dtype=torch.float32))
    a = model.encode(toy_kg, [1, 2, 3], [4, 5, 6], [derive_rng(3, i) for i in range(3)])
    b = model.encode(toy_kg, [1, 2, 3], [4, 5, 6], [derive_rng(3, i) for i in range(3)])
    assert torch.equal(a, b)


def test_two_step_aggregation_runs_and_differs(toy, toy_kg):
    one = perturb(make_model(toy))
    two = make_model(toy, agg_steps=2)
    two.load_state_dict(one.state_dict())
    a = one.encode(toy_kg, [1, 2], [4, 5], [derive_rng(0, i) for i in range(2)])
    b = two.encode(toy_kg, [1, 2], [4, 5], [derive_rng(0, i) for i in range(2)])
    assert torch.isfinite(b).all() and not torch.allclose(a, b)


def test_absolute_variant_uses_timestamp(toy):
    model = perturb(make_model(toy, time_encoder_variant="absolute"))
    cand3, cand7 = model.candidate_table(3), model.candidate_table(7)
    assert not torch.allclose(cand3, cand7)
    expected = model.time_aware_rep([0], torch.tensor([7.0], dtype=torch.float64))[0]
    assert torch.allclose(cand7[0], expected, atol=1e-14)


def test_difference_candidates_independent_of_time(toy):
    model = perturb(make_model(toy))
    assert torch.equal(model.candidate_table(3), model.candidate_table(9))
