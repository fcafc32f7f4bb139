"""Core sequence types, vocabularies, and the deduplicated-LCS similarity metric.

Everything here is a pure function on immutable values; concurrent use needs
no coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

SEMANTIC = "semantic"
ACOUSTIC_GROUP = "acoustic-group"
VOCAB_KINDS = (SEMANTIC, ACOUSTIC_GROUP)

#: Frame rate of acoustic code sequences, frames per second.
FRAME_RATE_HZ = 50

MASK = "mask"
SEP = "sep"
EOS = "eos"


class EmptyAfterDedupError(ValueError):
    """A sequence collapsed to nothing under run deduplication; the utterance
    cannot participate in ratio metrics (a silent 0 would corrupt averages)."""


@dataclass(frozen=True)
class Vocabulary:
    """A token id space with named reserved ids kept out of real corpora."""

    size: int
    kind: str = SEMANTIC
    reserved: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in VOCAB_KINDS:
            raise ValueError(f"unknown vocabulary kind {self.kind!r}")
        if self.size < 2:
            raise ValueError(f"vocabulary size must be >= 2, got {self.size}")
        ids = list(self.reserved.values())
        if len(set(ids)) != len(ids):
            raise ValueError(f"reserved ids must be pairwise distinct: {self.reserved}")
        for name, tok in self.reserved.items():
            if not 0 <= tok < self.size:
                raise ValueError(f"reserved id {name}={tok} outside vocabulary of size {self.size}")
        object.__setattr__(self, "reserved", dict(self.reserved))

    @property
    def reserved_ids(self) -> frozenset[int]:
        return frozenset(self.reserved.values())

    def is_reserved(self, token: int) -> bool:
        return token in self.reserved_ids


def semantic_vocabulary(regular_size: int) -> Vocabulary:
    """Semantic vocabulary with mask/sep/eos appended beyond the regular ids."""
    if regular_size < 2:
        raise ValueError(f"need at least 2 regular semantic ids, got {regular_size}")
    return Vocabulary(
        size=regular_size + 3,
        kind=SEMANTIC,
        reserved={MASK: regular_size, SEP: regular_size + 1, EOS: regular_size + 2},
    )


def acoustic_group_vocabulary(codebook_size: int) -> Vocabulary:
    """Per-group acoustic vocabulary with one eos code appended to the codebook."""
    if codebook_size < 2:
        raise ValueError(f"need at least 2 codewords per group, got {codebook_size}")
    return Vocabulary(
        size=codebook_size + 1,
        kind=ACOUSTIC_GROUP,
        reserved={EOS: codebook_size},
    )


@dataclass(frozen=True)
class TokenSequence:
    """One utterance as an ordered sequence of token ids."""

    utt_id: str
    tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        toks = tuple(int(t) for t in self.tokens)
        if any(t < 0 for t in toks):
            raise ValueError(f"{self.utt_id}: negative token id")
        object.__setattr__(self, "tokens", toks)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AcousticSequence:
    """One utterance as per-frame groups of code ids at a fixed frame rate."""

    utt_id: str
    frames: tuple[tuple[int, ...], ...]
    frame_rate_hz: int = FRAME_RATE_HZ

    def __post_init__(self) -> None:
        frames = tuple(tuple(int(c) for c in frame) for frame in self.frames)
        if frames:
            width = len(frames[0])
            for i, frame in enumerate(frames):
                if len(frame) != width:
                    raise ValueError(
                        f"{self.utt_id}: frame {i} has {len(frame)} codes, expected {width}"
                    )
                if any(c < 0 for c in frame):
                    raise ValueError(f"{self.utt_id}: negative code id in frame {i}")
        object.__setattr__(self, "frames", frames)

    @property
    def group_count(self) -> int:
        return len(self.frames[0]) if self.frames else 0

    def __len__(self) -> int:
        return len(self.frames)


def check_tokens(seq: TokenSequence, vocab: Vocabulary, *, forbid_reserved: bool = True) -> None:
    """Validate every id of ``seq`` against ``vocab``; raises ValueError naming the utterance."""
    for t in seq.tokens:
        if t >= vocab.size:
            raise ValueError(f"{seq.utt_id}: token id {t} >= vocabulary size {vocab.size}")
        if forbid_reserved and vocab.is_reserved(t):
            raise ValueError(f"{seq.utt_id}: reserved token id {t} present in corpus sequence")


def check_frames(seq: AcousticSequence, vocab: Vocabulary, groups: int) -> None:
    """Validate frame width and per-group code ids (reserved codes are never stored)."""
    for i, frame in enumerate(seq.frames):
        if len(frame) != groups:
            raise ValueError(f"{seq.utt_id}: frame {i} has {len(frame)} codes, expected {groups}")
        for code in frame:
            if code >= vocab.size or vocab.is_reserved(code):
                raise ValueError(f"{seq.utt_id}: invalid code id {code} in frame {i}")


def dedup_runs(seq: TokenSequence) -> TokenSequence:
    """Collapse consecutive equal tokens to a single occurrence. Idempotent."""
    out: list[int] = []
    for t in seq.tokens:
        if not out or out[-1] != t:
            out.append(t)
    return TokenSequence(seq.utt_id, tuple(out))


def lcs_length(a: TokenSequence | Sequence[int], b: TokenSequence | Sequence[int]) -> int:
    """Length of the longest common subsequence, O(|a|*|b|) dynamic programming."""
    xs = a.tokens if isinstance(a, TokenSequence) else tuple(a)
    ys = b.tokens if isinstance(b, TokenSequence) else tuple(b)
    if not xs or not ys:
        return 0
    prev = [0] * (len(ys) + 1)
    for x in xs:
        cur = [0] * (len(ys) + 1)
        for j, y in enumerate(ys, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                left = cur[j - 1]
                up = prev[j]
                cur[j] = left if left >= up else up
        prev = cur
    return prev[-1]


def lcsr(a: TokenSequence, b: TokenSequence) -> float:
    """Run-deduplicated LCS divided by the shorter deduplicated length, in [0, 1].

    Raises EmptyAfterDedupError when either side deduplicates to nothing.
    """
    da = dedup_runs(a)
    db = dedup_runs(b)
    if len(da) == 0 or len(db) == 0:
        empty = a.utt_id if len(da) == 0 else b.utt_id
        raise EmptyAfterDedupError(f"{empty}: empty after run deduplication, LCSR undefined")
    return lcs_length(da, db) / min(len(da), len(db))


def mean_lcsr(pairs: Iterable[tuple[TokenSequence, TokenSequence]]) -> float:
    """Unweighted mean LCSR across utterance pairs."""
    scores = [lcsr(a, b) for a, b in pairs]
    if not scores:
        raise ValueError("mean_lcsr needs at least one pair")
    return sum(scores) / len(scores)
