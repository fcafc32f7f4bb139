"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from accentor.model import ModelConfig, TokenTransformer, nll_loss
from accentor.tokens import semantic_vocabulary

torch.set_num_threads(1)


def brute_force_lcs(a, b) -> int:
    """Exhaustive LCS oracle: enumerate every subsequence of the shorter side.

    Deliberately independent of the dynamic program it checks; usable for
    lengths up to ~12.
    """
    xs, ys = (list(a), list(b)) if len(a) <= len(b) else (list(b), list(a))
    best = 0
    for mask in range(1 << len(xs)):
        sub = [xs[i] for i in range(len(xs)) if mask >> i & 1]
        if len(sub) <= best:
            continue
        it = iter(ys)
        if all(tok in it for tok in sub):
            best = len(sub)
    return best


def tiny_config(**overrides) -> ModelConfig:
    """Small conversion-model config used across model tests."""
    defaults = dict(
        semantic_vocab=semantic_vocabulary(16),
        n_layers=2,
        n_heads=2,
        d_model=16,
        d_ff=32,
        dropout=0.0,
        context_len=64,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def finite_difference_gradients(
    model: TokenTransformer,
    emb_builder,
    targets: torch.Tensor,
    mask: torch.Tensor,
    step: float = 1e-4,
) -> dict[str, np.ndarray]:
    """Central finite differences of the training loss for every parameter.

    ``emb_builder`` recomputes the embedded inputs from the current
    parameters so embedding tables are probed too. Model must be float64.
    """
    grads: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            out = np.zeros(flat.shape[0])
            for i in range(flat.shape[0]):
                original = float(flat[i])
                flat[i] = original + step
                logits, _ = model(emb_builder())
                loss_plus = float(nll_loss(logits, targets, mask))
                flat[i] = original - step
                logits, _ = model(emb_builder())
                loss_minus = float(nll_loss(logits, targets, mask))
                flat[i] = original
                out[i] = (loss_plus - loss_minus) / (2 * step)
            grads[name] = out.reshape(tuple(param.shape))
    return grads


def max_relative_gradient_error(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray], floor: float = 1e-7
) -> float:
    """Worst per-coordinate relative error, with an absolute floor where both
    gradients vanish (finite differences are noise-limited near zero)."""
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor / 1e-3)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst


@pytest.fixture(scope="session")
def rng_factory():
    def make(seed: int) -> np.random.Generator:
        return np.random.default_rng(seed)

    return make
