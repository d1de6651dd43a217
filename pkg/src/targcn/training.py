"""Loss, gradients, optimisation loop and parameter accounting.

The objective is softmax cross-entropy of the ground-truth object against all
entities, averaged over the batch. Batches are drawn from the
reciprocal-augmented training set so only object queries occur.
"""

from __future__ import annotations

import json
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from targcn.checkpoint import save_checkpoint
from targcn.config import RunConfig
from targcn.encoder import TARGCN, build_model, query_excludes
from targcn.evaluation import evaluate
from targcn.kg import TemporalKG, build_index
from targcn.sampler import STREAM_SHUFFLE, STREAM_TRAIN, derive_rng

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    pass


def make_optimizer(model: TARGCN, config: Optional[RunConfig] = None) -> torch.optim.Adam:
    cfg = config or model.config
    return torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=ADAM_BETAS,
        eps=ADAM_EPS,
        weight_decay=cfg.weight_decay,
        foreach=False,
    )


def _example_rngs(seed: int, epoch: int, indices) -> list[np.random.Generator]:
    return [derive_rng(seed, STREAM_TRAIN, epoch, int(i)) for i in indices]


def batch_losses(model: TARGCN, kg: TemporalKG, batch: np.ndarray, rngs) -> torch.Tensor:
    """Per-quadruple cross-entropy ``-log softmax(scores)[o]``."""
    batch = np.asarray(batch, dtype=np.int64)
    excludes = query_excludes(batch, kg.num_base_relations) if model.config.mask_query_edge else None
    scores = model(kg, batch[:, [0, 1, 3]], rngs, excludes=excludes)
    target = torch.as_tensor(batch[:, 2])
    return F.cross_entropy(scores, target, reduction="none")


def _check_finite(losses: torch.Tensor, batch: np.ndarray) -> None:
    bad = torch.nonzero(~torch.isfinite(losses)).flatten()
    if len(bad):
        s, r, o, t = batch[int(bad[0])].tolist()
        raise TrainingDiverged(f"non-finite loss {losses[bad[0]].item()} at quadruple (s={s}, r={r}, o={o}, t={t})")


def loss_batch(batch, kg: TemporalKG, model: TARGCN, rngs=None, epoch: int = 0):
    """Mean batch loss and its gradient for every trainable tensor.

    Returns ``(loss, {parameter name: gradient})``; ``rngs`` defaults to the
    generators training would use for ``epoch`` with examples numbered 0..n-1.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if rngs is None:
        rngs = _example_rngs(model.config.seed, epoch, range(len(batch)))
    model.zero_grad(set_to_none=True)
    losses = batch_losses(model, kg, batch, rngs)
    _check_finite(losses, batch)
    loss = losses.mean()
    loss.backward()
    grads = {
        n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for n, p in model.named_parameters()
    }
    return loss.detach(), grads


def count_parameters(config: RunConfig, num_entities: int, num_base_relations: int):
    """``(total, breakdown)`` with relations doubled for reciprocals and biases included."""
    d, dt = config.embedding_size, config.d_time
    parts = OrderedDict(
        [
            ("entity_table", num_entities * d),
            ("relation_table", 2 * num_base_relations * d),
            ("time_omega", dt),
            ("time_phase", dt),
            ("combiner.weight", d * (d + dt)),
            ("combiner.bias", d),
            ("aggregator.weight", d * 2 * d),
            ("aggregator.bias", d),
        ]
    )
    return sum(parts.values()), parts


def absolute_time_variant(model: TARGCN, t) -> torch.Tensor:
    """Time encoding of an absolute timestamp, as used by the absolute-time ablation."""
    return model.phi(torch.as_tensor(t, dtype=model.time_omega.dtype))


def variant_label(config: RunConfig) -> str:
    return f"sampler={config.sampler_variant},time={config.time_encoder_variant},score={config.score_fn}"


@dataclass
class TrainResult:
    model: TARGCN
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_mrr: float = float("-inf")


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=False)


def train(
    dataset,
    config: RunConfig,
    out_dir=None,
    kg: Optional[TemporalKG] = None,
    threads: int = 1,
    eval_every: int = 1,
) -> TrainResult:
    """Train on ``dataset.train``; validate after each epoch and keep the best-MRR weights.

    With ``out_dir`` set, writes ``train_log.jsonl`` (deterministic fields only),
    ``timing.jsonl`` (wall-clock seconds per epoch), ``last.ckpt`` and ``best.ckpt``.
    A non-finite loss raises :class:`TrainingDiverged`; ``last.ckpt`` then holds
    the last completed epoch.
    """
    torch.set_num_threads(max(1, int(threads)))
    if kg is None:
        kg = build_index(
            dataset.augmented("train"), dataset.num_entities, dataset.num_relations, dataset.num_timestamps
        )
    model = build_model(dataset.num_entities, dataset.num_relations, dataset.num_timestamps, config)
    optimizer = make_optimizer(model, config)
    train_q = dataset.augmented("train")
    n = len(train_q)
    out = Path(out_dir) if out_dir is not None else None
    log_fh = timing_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config.to_text())
        log_fh = open(out / "train_log.jsonl", "w")
        timing_fh = open(out / "timing.jsonl", "w")

    result = TrainResult(model)
    best_state = None
    has_valid = len(dataset.valid) > 0
    try:
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            model.train()
            perm = derive_rng(config.seed, STREAM_SHUFFLE, epoch).permutation(n)
            total, seen = 0.0, 0
            for lo in range(0, n, config.batch_size):
                idx = perm[lo : lo + config.batch_size]
                batch = train_q[idx]
                losses = batch_losses(model, kg, batch, _example_rngs(config.seed, epoch, idx))
                _check_finite(losses, batch)
                loss = losses.mean()
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                total += float(losses.detach().sum())
                seen += len(idx)
            record = {"epoch": epoch, "train_loss": total / max(seen, 1), "variant": variant_label(config)}
            if has_valid and (epoch % eval_every == 0 or epoch == config.epochs):
                rep = evaluate(model, kg, dataset, "valid", tag=epoch)
                record.update(
                    valid_mrr=rep.mrr, valid_hits1=rep.hits1, valid_hits3=rep.hits3, valid_hits10=rep.hits10
                )
                if rep.mrr > result.best_valid_mrr:
                    result.best_valid_mrr = rep.mrr
                    result.best_epoch = epoch
                    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
                    if out is not None:
                        save_checkpoint(out / "best.ckpt", model, optimizer, epoch)
            wall = time.perf_counter() - start
            result.history.append(record)
            logger.info("epoch %d loss %.5f valid_mrr %s", epoch, record["train_loss"], record.get("valid_mrr"))
            if out is not None:
                log_fh.write(_dumps(record) + "\n")
                log_fh.flush()
                timing_fh.write(_dumps({"epoch": epoch, "wall_seconds": wall}) + "\n")
                timing_fh.flush()
                save_checkpoint(out / "last.ckpt", model, optimizer, epoch)
    finally:
        if log_fh is not None:
            log_fh.close()
            timing_fh.close()
    if best_state is not None:
        model.load_state_dict(best_state)
    return result
