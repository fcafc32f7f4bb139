"""Shared teacher-forcing training loop with warmup/decay scheduling.

The optimizer is Adam with a linear warmup to the base learning rate followed
by per-step exponential decay. Steps whose gradients contain NaN/inf are
skipped and counted rather than applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch

from .model import TokenTransformer, nll_loss


@dataclass
class TrainOptions:
    steps: int
    batch_size: int = 16
    lr: float = 3e-3
    warmup_steps: int = 100
    lr_decay: float = 1.0       # per-step multiplier applied after warmup
    grad_clip: float = 1.0
    seed: int = 0
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")


def lr_at(step: int, opts: TrainOptions) -> float:
    """Learning rate at a 0-based step: linear warmup, then exponential decay."""
    if step < opts.warmup_steps:
        return opts.lr * (step + 1) / opts.warmup_steps
    return opts.lr * opts.lr_decay ** (step - opts.warmup_steps)


@dataclass
class TrainReport:
    steps: int
    final_loss: float
    initial_loss: float
    skipped_nonfinite: int
    loss_curve: list[tuple[int, float]] = field(default_factory=list)
    skipped_examples: int = 0

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "final_loss": self.final_loss,
            "initial_loss": self.initial_loss,
            "skipped_nonfinite": self.skipped_nonfinite,
            "skipped_examples": self.skipped_examples,
            "loss_curve": [[s, loss] for s, loss in self.loss_curve],
        }


#: Produces one training batch for a step: (embedded inputs, targets, mask)
#: with an optional trailing absolute position offset for the whole batch.
BatchFn = Callable[[int, np.random.Generator], tuple]


def fit(
    model: TokenTransformer,
    sample_batch: BatchFn,
    opts: TrainOptions,
    skipped_examples: int = 0,
) -> TrainReport:
    """Run ``opts.steps`` optimization steps, deterministic under ``opts.seed``.

    ``sample_batch`` owns batching and layout; it receives the step index and
    a generator derived from the seed, and must itself be deterministic in
    those arguments. ``skipped_examples`` is carried into the report so
    callers can account for context-overflow skips at dataset build time.
    """
    torch.manual_seed(opts.seed)
    rng = np.random.default_rng(np.random.SeedSequence((opts.seed, 0xBA7C4)))
    optimizer = torch.optim.Adam(model.parameters(), lr=opts.lr)
    curve: list[tuple[int, float]] = []
    skipped_nonfinite = 0
    initial = float("nan")
    last = float("nan")
    model.train()
    for step in range(opts.steps):
        batch = sample_batch(step, rng)
        emb, targets, mask = batch[:3]
        start_pos = batch[3] if len(batch) > 3 else 0
        logits, _ = model(emb, start_pos=start_pos)
        loss = nll_loss(logits, targets, mask)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        finite = all(
            p.grad is None or torch.isfinite(p.grad).all() for p in model.parameters()
        )
        if not finite:
            skipped_nonfinite += 1
            optimizer.zero_grad(set_to_none=True)
            continue
        if opts.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), opts.grad_clip)
        current_lr = lr_at(step, opts)
        for group in optimizer.param_groups:
            group["lr"] = current_lr
        optimizer.step()
        last = float(loss.detach())
        if step == 0:
            initial = last
        if step % opts.log_every == 0 or step == opts.steps - 1:
            curve.append((step, last))
    model.eval()
    return TrainReport(
        steps=opts.steps,
        final_loss=last,
        initial_loss=initial,
        skipped_nonfinite=skipped_nonfinite,
        loss_curve=curve,
        skipped_examples=skipped_examples,
    )


def pad_layout_batch(
    rows: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
    pad_token: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-pad variable-length (input_ids, targets, mask) rows into tensors.

    Padding positions carry ``pad_token`` inputs and a false mask; with causal
    attention and right padding they cannot influence any unmasked position.
    Targets are (L, H) per row.
    """
    if not rows:
        raise ValueError("empty batch")
    heads = rows[0][1].shape[1]
    max_len = max(r[0].shape[0] for r in rows)
    B = len(rows)
    inputs = torch.full((B, max_len), pad_token, dtype=torch.long)
    targets = torch.zeros((B, max_len, heads), dtype=torch.long)
    mask = torch.zeros((B, max_len, heads), dtype=torch.bool)
    for i, (ids, tgt, msk) in enumerate(rows):
        n = ids.shape[0]
        inputs[i, :n] = torch.from_numpy(np.ascontiguousarray(ids))
        targets[i, :n] = torch.from_numpy(np.ascontiguousarray(tgt))
        mask[i, :n] = torch.from_numpy(np.ascontiguousarray(msk))
    return inputs, targets, mask
