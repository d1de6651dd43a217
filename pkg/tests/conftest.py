import numpy as np
import pytest
import torch

from targcn.config import RunConfig
from targcn.encoder import TARGCN
from targcn.kg import build_index
from targcn.synthetic import copy_pattern_dataset, random_dataset


@pytest.fixture
def toy():
    return random_dataset(num_entities=20, num_relations=5, num_timestamps=12, num_train=80, seed=3)


@pytest.fixture
def toy_kg(toy):
    return build_index(toy.augmented("train"), toy.num_entities, toy.num_relations, toy.num_timestamps)


@pytest.fixture
def copy_data():
    return copy_pattern_dataset()


def make_model(ds, dtype=torch.float64, **cfg):
    base = dict(embedding_size=8, max_neighbors=4, seed=1)
    base.update(cfg)
    model = TARGCN(ds.num_entities, ds.num_relations, ds.num_timestamps, RunConfig(**base))
    return model.to(dtype)


def perturb(model, scale=0.3, seed=0):
    """Move every parameter off its structured initial value (non-zero phases and biases)."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
