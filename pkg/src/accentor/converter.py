"""Stage one: semantic token conversion.

Pre-training reconstructs clean target-domain sequences from corrupted ones
(layout ``[corrupted][sep][clean][eos]``, loss on the clean segment).
Fine-tuning continues the same model on weakly parallel pairs
(layout ``[source][sep][target][eos]``), so the conditioning segment merely
changes meaning while vocabulary and layout stay fixed. Conversion decodes
several candidates with top-k sampling and selects one either by LCSR against
a reference (the evaluation protocol) or by mean token log-likelihood
(reference-free deployment mode).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .corruption import CorruptionSpec, corrupt, make_rng
from .model import ModelConfig, TokenTransformer, nll_loss
from .sampling import sample_top_k
from .tokens import MASK, TokenSequence, check_tokens, lcsr
from .training import TrainOptions, TrainReport, fit, pad_layout_batch

SELECTOR_REFERENCE_LCSR = "reference_lcsr"
SELECTOR_AVG_LOGLIK = "avg_loglik"
SELECTORS = (SELECTOR_REFERENCE_LCSR, SELECTOR_AVG_LOGLIK)

#: Decode length cap: conversion changes rhythm, not content scale.
LENGTH_CAP_FACTOR = 2.0
LENGTH_CAP_EXTRA = 16

#: Maximum random start offset applied to pretraining batches.
_POSITION_JITTER = 48


@dataclass(frozen=True)
class ParallelPair:
    """A weakly parallel utterance: same content in source and target accents."""

    source: TokenSequence
    target: TokenSequence

    def __post_init__(self) -> None:
        if len(self.source) == 0 or len(self.target) == 0:
            raise ValueError(f"{self.source.utt_id}: parallel pair sides must be non-empty")


def seq_to_seq_layout(
    condition: Sequence[int],
    target: Sequence[int],
    config: ModelConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forcing row for ``[condition][sep][target][eos]``.

    Returns (input_ids, targets, mask) with loss restricted to the target
    segment including eos; predicting the separator is never trained.
    """
    full = list(condition) + [config.sep_id] + list(target) + [config.eos_id]
    inputs = np.asarray(full[:-1], dtype=np.int64)
    targets = np.asarray(full[1:], dtype=np.int64)[:, None]
    sep_pos = len(condition)
    mask = np.zeros((len(full) - 1, 1), dtype=bool)
    mask[sep_pos:, 0] = True
    return inputs, targets, mask


def _layout_length(condition_len: int, target_len: int) -> int:
    return condition_len + target_len + 2


def pretrain(
    corpus: Sequence[TokenSequence],
    spec: CorruptionSpec,
    config: ModelConfig,
    opts: TrainOptions,
) -> tuple[TokenTransformer, TrainReport]:
    """Train reconstruction of clean sequences from their corruptions."""
    if not corpus:
        raise ValueError("pretraining corpus is empty")
    if config.acoustic_groups != 0:
        raise ValueError("conversion models use acoustic_groups=0")
    if spec.mask_token != config.semantic_vocab.reserved[MASK]:
        raise ValueError(
            f"corruption mask token {spec.mask_token} does not match the "
            f"vocabulary mask id {config.semantic_vocab.reserved[MASK]}"
        )
    for seq in corpus:
        check_tokens(seq, config.semantic_vocab, forbid_reserved=True)
    # Corruption can only shrink or add isolated mask tokens, but insertions
    # are unbounded in principle; keep a small safety margin.
    usable = [s for s in corpus if _layout_length(len(s), len(s)) <= config.context_len - 8]
    skipped = len(corpus) - len(usable)
    if not usable:
        raise ValueError("every pretraining sequence overflows the model context")

    torch.manual_seed(opts.seed)
    model = TokenTransformer(config)
    pad = config.eos_id

    def sample_batch(step: int, rng: np.random.Generator):
        idx = rng.integers(0, len(usable), size=opts.batch_size)
        rows = []
        for j, i in enumerate(idx):
            seq = usable[int(i)]
            corrupted = corrupt(seq, spec, make_rng(spec, step, j))
            if _layout_length(len(corrupted), len(seq)) > config.context_len:
                corrupted = TokenSequence(seq.utt_id, corrupted.tokens[: max(1, len(seq) // 2)])
            rows.append(seq_to_seq_layout(corrupted.tokens, seq.tokens, config))
        ids, targets, mask = pad_layout_batch(rows, pad)
        # Bounded start jitter per batch: corrupted layouts are shorter than
        # downstream conditional layouts, and fine-tuning must not inherit
        # untrained positional rows past the pretraining horizon. The jitter
        # stays small so layout geometry remains learnable.
        offset = int(rng.integers(0, min(_POSITION_JITTER, config.context_len - ids.shape[1]) + 1))
        return model.embed_tokens(ids), targets, mask, offset

    report = fit(model, sample_batch, opts, skipped_examples=skipped)
    return model, report


def finetune(
    model: TokenTransformer,
    pairs: Sequence[ParallelPair],
    opts: TrainOptions,
) -> tuple[TokenTransformer, TrainReport]:
    """Continue training on weakly parallel pairs; returns a new model.

    Zero steps returns an identical copy of the input parameters.
    """
    if not pairs:
        raise ValueError("no parallel pairs given")
    config = model.config
    for pair in pairs:
        check_tokens(pair.source, config.semantic_vocab, forbid_reserved=True)
        check_tokens(pair.target, config.semantic_vocab, forbid_reserved=True)
    usable = [
        p for p in pairs
        if _layout_length(len(p.source), len(p.target)) <= config.context_len
    ]
    skipped = len(pairs) - len(usable)
    if not usable:
        raise ValueError("every parallel pair overflows the model context")
    tuned = copy.deepcopy(model)
    pad = config.eos_id

    def sample_batch(step: int, rng: np.random.Generator):
        idx = rng.integers(0, len(usable), size=opts.batch_size)
        rows = [
            seq_to_seq_layout(usable[int(i)].source.tokens, usable[int(i)].target.tokens, config)
            for i in idx
        ]
        ids, targets, mask = pad_layout_batch(rows, pad)
        return tuned.embed_tokens(ids), targets, mask

    report = fit(tuned, sample_batch, opts, skipped_examples=skipped)
    return tuned, report


@dataclass
class Candidate:
    tokens: tuple[int, ...]
    mean_loglik: float
    truncated: bool
    lcsr_vs_reference: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "tokens": list(self.tokens),
            "mean_loglik": self.mean_loglik,
            "truncated": self.truncated,
        }
        if self.lcsr_vs_reference is not None:
            out["lcsr_vs_reference"] = self.lcsr_vs_reference
        return out


@dataclass
class ConversionResult:
    output: TokenSequence
    candidates: list[Candidate]
    selected_index: int
    selector: str
    truncated: bool

    def to_dict(self) -> dict:
        return {
            "utt_id": self.output.utt_id,
            "selected_index": self.selected_index,
            "selector": self.selector,
            "truncated": self.truncated,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def convert(
    model: TokenTransformer,
    x: TokenSequence,
    *,
    k: int = 2,
    n_candidates: int = 5,
    selector: str = SELECTOR_REFERENCE_LCSR,
    reference: Optional[TokenSequence] = None,
    temperature: float = 1.0,
    rng: np.random.Generator,
    length_cap: Optional[int] = None,
) -> ConversionResult:
    """Convert a source-accent token sequence; decodes ``n_candidates`` times.

    ``reference_lcsr`` selection reproduces the best-of-n evaluation protocol
    and requires ``reference``; ``avg_loglik`` is reference-free. Candidates
    never contain reserved ids; decoding stops at eos or at the length cap
    (default ``2 * len(x) + 16``), setting a truncation flag.
    """
    if selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}, expected one of {SELECTORS}")
    if selector == SELECTOR_REFERENCE_LCSR and reference is None:
        raise ValueError("reference_lcsr selection needs a reference sequence")
    if len(x) == 0:
        raise ValueError(f"{x.utt_id}: cannot convert an empty sequence")
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    config = model.config
    # Mask tokens are legal conditioning input (reconstruction from a
    # corrupted sequence); only layout ids would corrupt the prompt.
    for tok in x.tokens:
        if tok >= config.semantic_vocab.size:
            raise ValueError(f"{x.utt_id}: token id {tok} outside the vocabulary")
        if tok in (config.sep_id, config.eos_id):
            raise ValueError(f"{x.utt_id}: layout id {tok} cannot appear in conversion input")
    cap = length_cap if length_cap is not None else int(LENGTH_CAP_FACTOR * len(x)) + LENGTH_CAP_EXTRA
    cap = max(1, min(cap, config.context_len - len(x) - 2))

    model.eval()
    forbidden = [
        tok for name, tok in config.semantic_vocab.reserved.items() if tok != config.eos_id
    ]
    streams = rng.spawn(n_candidates)
    prefix = torch.tensor([list(x.tokens) + [config.sep_id]], dtype=torch.long)
    prefix_emb = model.embed_tokens(prefix).expand(n_candidates, -1, -1)

    tokens: list[list[int]] = [[] for _ in range(n_candidates)]
    logliks: list[list[float]] = [[] for _ in range(n_candidates)]
    done = [False] * n_candidates
    truncated = [False] * n_candidates

    with torch.no_grad():
        logits, cache = model(prefix_emb, use_cache=True)
        pos = prefix.shape[1]
        # Live candidates gain one token per iteration; one extra iteration
        # lets a candidate sitting at the cap still terminate with eos.
        for _ in range(cap + 1):
            step_logits = logits[:, -1, 0, :].double()
            step_logits[:, forbidden] = float("-inf")
            logp = torch.log_softmax(step_logits, dim=-1)
            next_ids = []
            for c in range(n_candidates):
                if done[c]:
                    next_ids.append(config.eos_id)
                    continue
                tok = sample_top_k(step_logits[c].numpy(), k, temperature, streams[c])
                if tok == config.eos_id:
                    logliks[c].append(float(logp[c, tok]))
                    done[c] = True
                elif len(tokens[c]) < cap:
                    logliks[c].append(float(logp[c, tok]))
                    tokens[c].append(tok)
                else:  # cap reached and the model still refuses to stop
                    done[c] = True
                    truncated[c] = True
                next_ids.append(tok)
            if all(done):
                break
            step = torch.tensor(next_ids, dtype=torch.long).unsqueeze(1)
            logits, cache = model(model.embed_tokens(step), cache=cache, start_pos=pos, use_cache=True)
            pos += 1

    candidates = []
    for c in range(n_candidates):
        cand = Candidate(
            tokens=tuple(tokens[c]),
            mean_loglik=float(np.mean(logliks[c])) if logliks[c] else float("-inf"),
            truncated=truncated[c],
        )
        if reference is not None and cand.tokens:
            cand.lcsr_vs_reference = lcsr(TokenSequence(x.utt_id, cand.tokens), reference)
        elif reference is not None:
            cand.lcsr_vs_reference = 0.0
        candidates.append(cand)

    if selector == SELECTOR_REFERENCE_LCSR:
        scores = [c.lcsr_vs_reference for c in candidates]
    else:
        scores = [c.mean_loglik for c in candidates]
    selected = int(np.argmax(scores))
    return ConversionResult(
        output=TokenSequence(x.utt_id, candidates[selected].tokens),
        candidates=candidates,
        selected_index=selected,
        selector=selector,
        truncated=candidates[selected].truncated,
    )
