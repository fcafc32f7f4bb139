"""Sequence corruptions for the denoising pretext task.

Three schemes over token sequences:

* ``infilling``  — contiguous spans with Poisson-distributed lengths are each
  replaced by a single mask token; a zero-length span inserts a lone mask.
  Span starts are drawn uniformly at random and overlapping candidates are
  rejected, until the covered-token fraction reaches ``span_prob`` or the
  attempt budget (10x sequence length) is exhausted.
* ``masking``    — each token is independently replaced by the mask token
  with probability ``span_prob``.
* ``deletion``   — each token is independently dropped with probability
  ``span_prob``; the output may shrink.

All schemes are deterministic given the sequence, the spec, and the
generator state handed in by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tokens import TokenSequence

INFILLING = "infilling"
MASKING = "masking"
DELETION = "deletion"
SCHEMES = (INFILLING, MASKING, DELETION)

# Attempt budget multiplier for span placement before giving up on coverage.
_MAX_ATTEMPTS_PER_TOKEN = 10
# Uniform start positions tried per sampled span length before redrawing it.
_START_RETRIES = 8


@dataclass(frozen=True)
class CorruptionSpec:
    """Corruption scheme plus its parameters; serialized into run configs."""

    mask_token: int
    scheme: str = INFILLING
    span_prob: float = 0.5
    span_lambda: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown corruption scheme {self.scheme!r}, expected one of {SCHEMES}")
        if not 0.0 < self.span_prob <= 1.0:
            raise ValueError(f"span_prob must be in (0, 1], got {self.span_prob}")
        if self.span_lambda <= 0.0:
            raise ValueError(f"span_lambda must be positive, got {self.span_lambda}")
        if self.mask_token < 0:
            raise ValueError(f"mask_token must be a valid reserved id, got {self.mask_token}")


def make_rng(spec: CorruptionSpec, *salts: int) -> np.random.Generator:
    """Generator derived from the spec seed and any number of salt integers.

    Trainers use salts (step, example index) so each visit corrupts afresh
    while the whole run stays reproducible.
    """
    return np.random.default_rng(np.random.SeedSequence((spec.seed, *salts)))


@dataclass(frozen=True)
class _SpanPlan:
    covered: np.ndarray      # bool per token: lies inside a replaced span
    span_start: np.ndarray   # bool per token: a replaced span begins here
    insert_slots: frozenset[int]  # zero-length spans: lone mask before slot i
    span_lengths: tuple[int, ...]  # accepted span lengths, zero-length included


def _plan_spans(n: int, spec: CorruptionSpec, rng: np.random.Generator) -> _SpanPlan:
    covered = np.zeros(n, dtype=bool)
    span_start = np.zeros(n, dtype=bool)
    insert_slots: set[int] = set()
    lengths: list[int] = []
    covered_count = 0
    # Integer coverage target: a span_prob small enough to target zero tokens
    # degenerates to a no-op with no spans sampled at all.
    target = round(spec.span_prob * n)
    attempts = 0
    while covered_count < target and attempts < _MAX_ATTEMPTS_PER_TOKEN * n:
        attempts += 1
        length = int(rng.poisson(spec.span_lambda))
        if length == 0:
            slot = int(rng.integers(0, n + 1))
            inside_span = 0 < slot < n and covered[slot - 1] and covered[slot]
            if slot in insert_slots or inside_span:
                continue
            insert_slots.add(slot)
            lengths.append(0)
            continue
        # Retry a rejected span at fresh uniform starts before redrawing the
        # length, so acceptance stays roughly independent of span length.
        for _ in range(_START_RETRIES):
            start = int(rng.integers(0, n))
            end = min(start + length, n)  # clip at the sequence end
            if covered[start:end].any():
                continue
            if any(start < slot < end for slot in insert_slots):
                continue
            covered[start:end] = True
            span_start[start] = True
            covered_count += end - start
            lengths.append(end - start)
            break
    return _SpanPlan(covered, span_start, frozenset(insert_slots), tuple(lengths))


def _apply_plan(tokens: tuple[int, ...], plan: _SpanPlan, mask_token: int) -> tuple[int, ...]:
    out: list[int] = []
    for i in range(len(tokens) + 1):
        if i in plan.insert_slots:
            out.append(mask_token)
        if i == len(tokens):
            break
        if plan.span_start[i]:
            out.append(mask_token)
        if not plan.covered[i]:
            out.append(tokens[i])
    return tuple(out)


def corrupt(seq: TokenSequence, spec: CorruptionSpec, rng: np.random.Generator) -> TokenSequence:
    """Apply ``spec`` to ``seq`` using ``rng``. Input must be non-empty and
    free of the mask token."""
    if len(seq) == 0:
        raise ValueError(f"{seq.utt_id}: cannot corrupt an empty sequence")
    if spec.mask_token in seq.tokens:
        raise ValueError(f"{seq.utt_id}: reserved mask token {spec.mask_token} present in input")
    if spec.scheme == INFILLING:
        plan = _plan_spans(len(seq), spec, rng)
        tokens = _apply_plan(seq.tokens, plan, spec.mask_token)
    elif spec.scheme == MASKING:
        keep = rng.random(len(seq)) >= spec.span_prob
        tokens = tuple(t if k else spec.mask_token for t, k in zip(seq.tokens, keep))
    else:  # DELETION
        keep = rng.random(len(seq)) >= spec.span_prob
        tokens = tuple(t for t, k in zip(seq.tokens, keep) if k)
    return TokenSequence(seq.utt_id, tokens)


def infilling_stats(
    length: int,
    spec: CorruptionSpec,
    n_trials: int,
    seed: int = 0,
) -> dict[str, float]:
    """Monte-Carlo coverage and span-length statistics for the infilling scheme.

    Coverage is measured on corrupted outputs (surviving-token count), span
    lengths from the accepted plans; zero-length insertion spans count toward
    the span-length mean.
    """
    if spec.scheme != INFILLING:
        raise ValueError("infilling_stats only applies to the infilling scheme")
    rng = np.random.default_rng(seed)
    base = max(spec.mask_token + 1, 1)
    tokens = tuple(range(base, base + length))
    covered_fractions = np.empty(n_trials)
    span_lengths: list[int] = []
    for trial in range(n_trials):
        plan = _plan_spans(length, spec, rng)
        out = _apply_plan(tokens, plan, spec.mask_token)
        survivors = sum(1 for t in out if t != spec.mask_token)
        covered_fractions[trial] = (length - survivors) / length
        span_lengths.extend(plan.span_lengths)
    return {
        "covered_fraction_mean": float(covered_fractions.mean()),
        "span_length_mean": float(np.mean(span_lengths)) if span_lengths else 0.0,
        "n_trials": float(n_trials),
    }
