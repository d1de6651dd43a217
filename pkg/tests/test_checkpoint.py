import numpy as np
import pytest
import torch

from targcn.checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from targcn.sampler import derive_rng
from targcn.training import loss_batch, make_optimizer

from conftest import make_model, perturb


def trained(toy, toy_kg):
    model = perturb(make_model(toy, dtype=torch.float32))
    opt = make_optimizer(model)
    loss_batch(toy.augmented("train")[:20], toy_kg, model)
    opt.step()
    return model, opt


def test_round_trip_bit_exact(toy, toy_kg, tmp_path):
    model, opt = trained(toy, toy_kg)
    save_checkpoint(tmp_path / "a.ckpt", model, opt, epoch=3)
    back, opt2, header = load_checkpoint(tmp_path / "a.ckpt", make_optimizer)
    assert header["epoch"] == 3 and header["rng"]["next_epoch"] == 4
    for (n, p), (_, q) in zip(model.named_parameters(), back.named_parameters()):
        assert torch.equal(p, q), n
    q = np.array([[1, 2, 4], [3, 0, 7]])
    a = model(toy_kg, q, [derive_rng(0, i) for i in range(2)])
    b = back(toy_kg, q, [derive_rng(0, i) for i in range(2)])
    assert torch.equal(a, b)


def test_resumed_step_matches_continued(toy, toy_kg, tmp_path):
    model, opt = trained(toy, toy_kg)
    save_checkpoint(tmp_path / "a.ckpt", model, opt)
    back, opt2, _ = load_checkpoint(tmp_path / "a.ckpt", make_optimizer)
    batch = toy.augmented("train")[20:40]
    for m, o in ((model, opt), (back, opt2)):
        loss_batch(batch, toy_kg, m, epoch=1)
        o.step()
    for p, q in zip(model.parameters(), back.parameters()):
        assert torch.equal(p, q)


def test_save_is_deterministic(toy, toy_kg, tmp_path):
    model, opt = trained(toy, toy_kg)
    save_checkpoint(tmp_path / "a.ckpt", model, opt)
    save_checkpoint(tmp_path / "b.ckpt", model, opt)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_rejects_bad_magic_and_version(toy, tmp_path):
    model = make_model(toy, dtype=torch.float32)
    save_checkpoint(tmp_path / "a.ckpt", model)
    data = bytearray((tmp_path / "a.ckpt").read_bytes())
    (tmp_path / "magic.ckpt").write_bytes(b"NOTMAGIC" + data[8:])
    with pytest.raises(CheckpointError, match="not a TARGCN"):
        read_checkpoint(tmp_path / "magic.ckpt")
    data[8] = 99
    (tmp_path / "ver.ckpt").write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        read_checkpoint(tmp_path / "ver.ckpt")
    (tmp_path / "trail.ckpt").write_bytes((tmp_path / "a.ckpt").read_bytes() + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        read_checkpoint(tmp_path / "trail.ckpt")
