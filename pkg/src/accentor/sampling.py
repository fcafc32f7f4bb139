"""Top-k sampling over a logit vector."""

from __future__ import annotations

import numpy as np


def sample_top_k(
    logits: np.ndarray,
    k: int,
    temperature: float,
    rng: np.random.Generator,
) -> int:
    """Sample an id from the renormalized distribution over the k highest logits.

    Ties at the k-th logit are broken toward lower ids. ``k=1`` reduces to
    argmax. Raises on non-finite logits (-inf from explicit id masking is
    allowed as long as a finite candidate remains in the top k).
    """
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if np.isnan(logits).any() or np.isposinf(logits).any():
        raise ValueError("non-finite logits passed to sampler")
    if not 1 <= k <= logits.shape[0]:
        raise ValueError(f"k must be in [1, {logits.shape[0]}], got {k}")
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    order = np.argsort(-logits, kind="stable")  # equal logits keep ascending id order
    top = order[:k]
    top_logits = logits[top] / temperature
    finite = np.isfinite(top_logits)
    if not finite.any():
        raise ValueError("all top-k candidates are masked out")
    top = top[finite]
    top_logits = top_logits[finite]
    probs = np.exp(top_logits - top_logits.max())
    probs /= probs.sum()
    return int(top[rng.choice(top.shape[0], p=probs)])
