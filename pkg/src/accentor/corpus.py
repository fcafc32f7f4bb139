"""Corpus file formats.

Token corpus: one utterance per line, ``utt_id<TAB>space-separated token ids``.
Acoustic corpus: one utterance per line, ``utt_id<TAB>frames`` with frames
separated by ``;`` and each frame a comma-separated list of K code ids.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .tokens import (
    AcousticSequence,
    TokenSequence,
    Vocabulary,
    check_frames,
    check_tokens,
)


class CorpusFormatError(ValueError):
    """A corpus file line failed to parse; message carries path and line number."""


def write_token_corpus(path: str | Path, seqs: Iterable[TokenSequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for seq in seqs:
            fh.write(seq.utt_id + "\t" + " ".join(str(t) for t in seq.tokens) + "\n")


def read_token_corpus(
    path: str | Path,
    vocab: Vocabulary | None = None,
    *,
    forbid_reserved: bool = True,
) -> list[TokenSequence]:
    path = Path(path)
    out: list[TokenSequence] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'utt_id<TAB>tokens'")
            utt_id, body = parts
            try:
                tokens = tuple(int(t) for t in body.split()) if body.strip() else ()
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: non-integer token id") from exc
            try:
                seq = TokenSequence(utt_id, tokens)
                if vocab is not None:
                    check_tokens(seq, vocab, forbid_reserved=forbid_reserved)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            out.append(seq)
    return out


def write_acoustic_corpus(path: str | Path, seqs: Iterable[AcousticSequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for seq in seqs:
            body = ";".join(",".join(str(c) for c in frame) for frame in seq.frames)
            fh.write(seq.utt_id + "\t" + body + "\n")


def read_acoustic_corpus(
    path: str | Path,
    groups: int | None = None,
    vocab: Vocabulary | None = None,
) -> list[AcousticSequence]:
    path = Path(path)
    out: list[AcousticSequence] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'utt_id<TAB>frames'")
            utt_id, body = parts
            try:
                frames = tuple(
                    tuple(int(c) for c in chunk.split(","))
                    for chunk in body.split(";")
                    if chunk
                )
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: non-integer code id") from exc
            try:
                seq = AcousticSequence(utt_id, frames)
                if groups is not None and vocab is not None:
                    check_frames(seq, vocab, groups)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            out.append(seq)
    return out


def align_by_utt_id(a: Sequence, b: Sequence) -> list[tuple]:
    """Match two corpora by utt_id, preserving the order of ``a``.

    Raises ValueError on duplicates or ids missing from either side.
    """
    index_b = {}
    for seq in b:
        if seq.utt_id in index_b:
            raise ValueError(f"duplicate utt_id {seq.utt_id!r}")
        index_b[seq.utt_id] = seq
    seen = set()
    pairs = []
    for seq in a:
        if seq.utt_id in seen:
            raise ValueError(f"duplicate utt_id {seq.utt_id!r}")
        seen.add(seq.utt_id)
        if seq.utt_id not in index_b:
            raise ValueError(f"utt_id {seq.utt_id!r} missing from second corpus")
        pairs.append((seq, index_b[seq.utt_id]))
    if len(index_b) != len(pairs):
        extra = sorted(set(index_b) - seen)
        raise ValueError(f"utt_ids only present in second corpus: {extra[:5]}")
    return pairs
