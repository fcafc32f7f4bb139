"""Corpus file formats and utt_id alignment."""

import pytest

from accentor.corpus import (
    CorpusFormatError,
    align_by_utt_id,
    read_acoustic_corpus,
    read_token_corpus,
    write_acoustic_corpus,
    write_token_corpus,
)
from accentor.tokens import (
    AcousticSequence,
    TokenSequence,
    acoustic_group_vocabulary,
    semantic_vocabulary,
)


def test_token_corpus_roundtrip(tmp_path):
    seqs = [
        TokenSequence("a", (1, 2, 3)),
        TokenSequence("b", (0,)),
        TokenSequence("empty", ()),
    ]
    path = tmp_path / "corpus.tok"
    write_token_corpus(path, seqs)
    back = read_token_corpus(path)
    assert back == seqs


def test_token_corpus_validates_against_vocab(tmp_path):
    path = tmp_path / "c.tok"
    write_token_corpus(path, [TokenSequence("a", (300,))])
    with pytest.raises(CorpusFormatError, match="c.tok:1"):
        read_token_corpus(path, semantic_vocabulary(64))


def test_token_corpus_rejects_reserved_ids(tmp_path):
    vocab = semantic_vocabulary(64)
    path = tmp_path / "c.tok"
    write_token_corpus(path, [TokenSequence("ok", (1, 2)), TokenSequence("bad", (64,))])
    with pytest.raises(CorpusFormatError, match="c.tok:2"):
        read_token_corpus(path, vocab)
    assert len(read_token_corpus(path, vocab, forbid_reserved=False)) == 2


@pytest.mark.parametrize(
    "line",
    ["no-tab-here", "id\t1 2 x", "id\t1\t2"],
)
def test_malformed_token_lines_report_line_numbers(tmp_path, line):
    path = tmp_path / "bad.tok"
    path.write_text("good\t1 2\n" + line + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="bad.tok:2"):
        read_token_corpus(path)


def test_acoustic_corpus_roundtrip(tmp_path):
    seqs = [
        AcousticSequence("a", ((1, 2, 3, 4), (5, 6, 7, 8))),
        AcousticSequence("b", ((0, 0, 0, 0),)),
    ]
    path = tmp_path / "corpus.ac"
    write_acoustic_corpus(path, seqs)
    back = read_acoustic_corpus(path, groups=4, vocab=acoustic_group_vocabulary(32))
    assert back == seqs


def test_acoustic_corpus_validates_groups(tmp_path):
    path = tmp_path / "c.ac"
    write_acoustic_corpus(path, [AcousticSequence("a", ((1, 2),))])
    with pytest.raises(CorpusFormatError, match="c.ac:1"):
        read_acoustic_corpus(path, groups=4, vocab=acoustic_group_vocabulary(32))


def test_malformed_acoustic_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.ac"
    path.write_text("a\t1,2;3,x\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError, match="bad.ac:1"):
        read_acoustic_corpus(path)


class TestAlign:
    def test_matches_in_first_corpus_order(self):
        a = [TokenSequence("x", (1,)), TokenSequence("y", (2,))]
        b = [TokenSequence("y", (3,)), TokenSequence("x", (4,))]
        pairs = align_by_utt_id(a, b)
        assert [(p[0].utt_id, p[1].tokens) for p in pairs] == [("x", (4,)), ("y", (3,))]

    def test_missing_and_duplicate_ids_raise(self):
        a = [TokenSequence("x", (1,))]
        with pytest.raises(ValueError, match="missing"):
            align_by_utt_id(a, [TokenSequence("z", (1,))])
        with pytest.raises(ValueError, match="duplicate"):
            align_by_utt_id(a + a, [TokenSequence("x", (1,))] * 2)
        with pytest.raises(ValueError, match="only present"):
            align_by_utt_id(a, [TokenSequence("x", (1,)), TokenSequence("extra", (2,))])
