"""Stage two: single-stage causal generation of grouped acoustic codes.

Training lays every example out as ``[semantic tokens][sep][frames]`` with the
loss restricted to acoustic positions: each frame position contributes the sum
of K per-group cross-entropies, and the final frame additionally teaches the
group-0 head to emit the end-of-sequence code. Prompt and continuation frames
are not distinguished during training; at generation time the style prompt is
simply a frame prefix that the model continues.

Generation runs one forward pass per emitted frame and samples all K codes of
the next frame independently per head from that single pass; there is no
intra-frame autoregression and no refinement stage.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .model import ModelConfig, TokenTransformer
from .sampling import sample_top_k
from .tokens import AcousticSequence, TokenSequence, check_tokens
from .training import TrainOptions, TrainReport, fit

logger = logging.getLogger(__name__)

#: Default style prompt budget: 3 seconds at the 50 Hz frame rate.
DEFAULT_MAX_PROMPT_FRAMES = 150

#: Generation length cap relative to the conditioning semantic length.
FRAME_CAP_FACTOR = 1.5
FRAME_CAP_EXTRA = 25

SINGLE_STAGE = "single_stage_50hz"
RVQ_TWO_STAGE = "rvq_two_stage_75hz"
STEP_SCHEMES = (SINGLE_STAGE, RVQ_TWO_STAGE)

_SINGLE_STAGE_FRAME_RATE = 50
_RVQ_FRAME_RATE = 75
_RVQ_NAR_PASSES = 7


@dataclass(frozen=True)
class SpeakingExample:
    """Semantic tokens paired with the acoustic code frames of one utterance.

    ``prompt_split`` marks where a style prompt would end; training ignores it
    because prompt and continuation form one undivided sequence.
    """

    semantic: TokenSequence
    acoustic: AcousticSequence
    prompt_split: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.acoustic) == 0:
            raise ValueError(f"{self.acoustic.utt_id}: speaking example needs at least one frame")
        if self.prompt_split is not None and not 0 <= self.prompt_split <= len(self.acoustic):
            raise ValueError(f"{self.acoustic.utt_id}: prompt_split out of range")


def speaking_layout(
    example: SpeakingExample, config: ModelConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forcing row: (sem_ids, frames, targets, mask).

    Targets cover positions from the separator onward: the separator predicts
    frame 0, frame t predicts frame t+1, and the last frame predicts the
    group-0 eos code (other heads are masked there).
    """
    K = config.acoustic_groups
    sem = np.asarray(example.semantic.tokens, dtype=np.int64)
    frames = np.asarray(example.acoustic.frames, dtype=np.int64)
    S, F = sem.shape[0], frames.shape[0]
    L = S + 1 + F
    targets = np.zeros((L, K), dtype=np.int64)
    mask = np.zeros((L, K), dtype=bool)
    targets[S : S + F] = frames
    mask[S : S + F] = True
    targets[S + F, 0] = config.acoustic_eos
    mask[S + F, 0] = True
    return sem, frames, targets, mask


def train_generative(
    corpus: Sequence[SpeakingExample],
    config: ModelConfig,
    opts: TrainOptions,
) -> tuple[TokenTransformer, TrainReport]:
    """Train the K-head frame generator on semantic/acoustic pairs."""
    if not corpus:
        raise ValueError("speaking corpus is empty")
    if config.acoustic_groups < 1:
        raise ValueError("speaking models need acoustic_groups >= 1")
    K = config.acoustic_groups
    for ex in corpus:
        check_tokens(ex.semantic, config.semantic_vocab, forbid_reserved=True)
        if ex.acoustic.group_count != K:
            raise ValueError(
                f"{ex.acoustic.utt_id}: frames carry {ex.acoustic.group_count} codes, "
                f"model expects {K} groups"
            )
        if int(np.max(ex.acoustic.frames)) >= config.group_codebook:
            raise ValueError(f"{ex.acoustic.utt_id}: code id outside the group codebook")
    usable = [
        ex for ex in corpus
        if len(ex.semantic) + 1 + len(ex.acoustic) <= config.context_len
    ]
    skipped = len(corpus) - len(usable)
    if not usable:
        raise ValueError("every speaking example overflows the model context")

    torch.manual_seed(opts.seed)
    model = TokenTransformer(config)
    sample_batch = _batch_fn(model, [speaking_layout(ex, config) for ex in usable], opts)
    report = fit(model, sample_batch, opts, skipped_examples=skipped)
    return model, report


def train_generative_from(
    model: TokenTransformer,
    corpus: Sequence[SpeakingExample],
    opts: TrainOptions,
) -> tuple[TokenTransformer, TrainReport]:
    """Continue training an existing speaking model on a new corpus.

    Used by the no-decoupling baseline, which pushes conversion duty onto the
    speech generator by fine-tuning it on weakly parallel pairs directly.
    Returns a new model; the input stays untouched.
    """
    config = model.config
    K = config.acoustic_groups
    if K < 1:
        raise ValueError("not a speaking model")
    for ex in corpus:
        check_tokens(ex.semantic, config.semantic_vocab, forbid_reserved=True)
        if ex.acoustic.group_count != K:
            raise ValueError(
                f"{ex.acoustic.utt_id}: frames carry {ex.acoustic.group_count} codes, "
                f"model expects {K} groups"
            )
    usable = [
        ex for ex in corpus
        if len(ex.semantic) + 1 + len(ex.acoustic) <= config.context_len
    ]
    skipped = len(corpus) - len(usable)
    if not usable:
        raise ValueError("every speaking example overflows the model context")
    tuned = copy.deepcopy(model)
    sample_batch = _batch_fn(tuned, [speaking_layout(ex, config) for ex in usable], opts)
    report = fit(tuned, sample_batch, opts, skipped_examples=skipped)
    return tuned, report


def _batch_fn(model: TokenTransformer, rows: list, opts: TrainOptions):
    """Batch sampler over precomputed layout rows; pads only when lengths vary."""
    config = model.config
    K = config.acoustic_groups

    def sample_batch(step: int, rng: np.random.Generator):
        idx = [int(i) for i in rng.integers(0, len(rows), size=opts.batch_size)]
        sem_lens = {rows[i][0].shape[0] for i in idx}
        frame_lens = {rows[i][1].shape[0] for i in idx}
        if len(sem_lens) == 1 and len(frame_lens) == 1:
            sem = torch.from_numpy(np.stack([rows[i][0] for i in idx]))
            frames = torch.from_numpy(np.stack([rows[i][1] for i in idx]))
            emb = model.embed_mixed(sem, frames)
            targets = torch.from_numpy(np.stack([rows[i][2] for i in idx]))
            mask = torch.from_numpy(np.stack([rows[i][3] for i in idx]))
            return emb, targets, mask
        # Variable lengths: embed per example, zero-pad embeddings on the
        # right (padding stays outside the loss mask and cannot attend back).
        embs = []
        for i in idx:
            sem = torch.from_numpy(rows[i][0]).unsqueeze(0)
            frames = torch.from_numpy(rows[i][1]).unsqueeze(0)
            embs.append(model.embed_mixed(sem, frames)[0])
        max_len = max(e.shape[0] for e in embs)
        B = len(idx)
        emb = torch.zeros((B, max_len, config.d_model))
        targets = torch.zeros((B, max_len, K), dtype=torch.long)
        mask = torch.zeros((B, max_len, K), dtype=torch.bool)
        for j, i in enumerate(idx):
            n = embs[j].shape[0]
            emb[j, :n] = embs[j]
            targets[j, :n] = torch.from_numpy(rows[i][2])
            mask[j, :n] = torch.from_numpy(rows[i][3])
        return emb, targets, mask

    return sample_batch


@dataclass
class GenerationResult:
    acoustic: AcousticSequence
    steps: int
    truncated: bool
    forward_passes: int

    def to_dict(self) -> dict:
        return {
            "utt_id": self.acoustic.utt_id,
            "frames": len(self.acoustic),
            "steps": self.steps,
            "truncated": self.truncated,
            "forward_passes": self.forward_passes,
        }


def generate(
    model: TokenTransformer,
    y: TokenSequence,
    prompt: Optional[AcousticSequence] = None,
    *,
    k: int = 10,
    temperature: float = 1.0,
    rng: np.random.Generator,
    max_prompt_frames: int = DEFAULT_MAX_PROMPT_FRAMES,
    max_frames: Optional[int] = None,
) -> GenerationResult:
    """Generate acoustic frames for ``y``, continuing the style of ``prompt``.

    Each emitted frame costs exactly one forward pass; all K codes are drawn
    from that pass independently per head. Generation stops when the group-0
    head samples the eos code (one extra detection pass) or when ``max_frames``
    (default ``1.5 * len(y) + 25``) is reached, which sets the truncation flag.
    The prompt is context only and is never re-emitted in the output.
    """
    if len(y) == 0:
        raise ValueError(f"{y.utt_id}: cannot speak an empty semantic sequence")
    config = model.config
    K = config.acoustic_groups
    if K < 1:
        raise ValueError("model has no acoustic groups; not a speaking model")
    check_tokens(y, config.semantic_vocab, forbid_reserved=True)
    prompt_frames = list(prompt.frames) if prompt is not None else []
    if prompt is not None and prompt.frames and prompt.group_count != K:
        raise ValueError(
            f"{prompt.utt_id}: prompt frames carry {prompt.group_count} codes, model expects {K}"
        )
    if len(prompt_frames) > max_prompt_frames:
        logger.warning(
            "%s: style prompt of %d frames exceeds the %d-frame budget; longer prompts "
            "leak more source style",
            y.utt_id, len(prompt_frames), max_prompt_frames,
        )
    cap = max_frames if max_frames is not None else int(FRAME_CAP_FACTOR * len(y)) + FRAME_CAP_EXTRA
    prefix_len = len(y) + 1 + len(prompt_frames)
    cap = max(1, min(cap, config.context_len - prefix_len - 1))

    model.eval()
    model.reset_forward_passes()
    sem = torch.tensor([list(y.tokens)], dtype=torch.long)
    frames_t = (
        torch.tensor([prompt_frames], dtype=torch.long) if prompt_frames else None
    )
    emb = model.embed_mixed(sem, frames_t)

    generated: list[tuple[int, ...]] = []
    truncated = False
    with torch.no_grad():
        logits, cache = model(emb, use_cache=True)
        pos = emb.shape[1]
        while True:
            step_logits = logits[0, -1].double().numpy()  # (K, codebook + 1)
            head0 = sample_top_k(step_logits[0], k, temperature, rng)
            if head0 == config.acoustic_eos:
                break
            codes = [head0]
            for g in range(1, K):
                row = step_logits[g].copy()
                row[config.acoustic_eos] = -np.inf  # stop signal lives on head 0 only
                codes.append(sample_top_k(row, k, temperature, rng))
            generated.append(tuple(codes))
            if len(generated) >= cap:
                truncated = True
                break
            step = torch.tensor([[codes]], dtype=torch.long)
            logits, cache = model(
                model.embed_frames(step), cache=cache, start_pos=pos, use_cache=True
            )
            pos += 1

    return GenerationResult(
        acoustic=AcousticSequence(y.utt_id, tuple(generated)),
        steps=len(generated),
        truncated=truncated,
        forward_passes=model.forward_passes,
    )


@dataclass(frozen=True)
class StepReport:
    """Analytic decoding-cost accounting for one second-count and scheme."""

    scheme: str
    duration_s: float
    ar_steps: int
    nar_passes: int

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "duration_s": self.duration_s,
            "ar_steps": self.ar_steps,
            "nar_passes": self.nar_passes,
        }


def count_decoding_steps(duration_s: float, scheme: str) -> StepReport:
    """Decoding cost to synthesize ``duration_s`` seconds of audio.

    Single-stage grouped-codebook generation spends one AR step per 50 Hz
    frame and nothing else; the residual-quantizer baseline spends one AR step
    per 75 Hz frame for its first quantizer plus 7 non-autoregressive
    full-sequence passes for the remaining quantizers.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    if scheme == SINGLE_STAGE:
        return StepReport(scheme, duration_s, int(np.ceil(_SINGLE_STAGE_FRAME_RATE * duration_s)), 0)
    if scheme == RVQ_TWO_STAGE:
        return StepReport(scheme, duration_s, int(np.ceil(_RVQ_FRAME_RATE * duration_s)), _RVQ_NAR_PASSES)
    raise ValueError(f"unknown scheme {scheme!r}, expected one of {STEP_SCHEMES}")
