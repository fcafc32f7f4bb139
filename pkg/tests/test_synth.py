"""Synthetic benchmark generators: Markov corpus, accent rules, codec."""

import numpy as np
import pytest

from accentor.synth import (
    AccentRuleSet,
    BenchmarkSpec,
    LengthSpec,
    MarkovTable,
    SyntheticCodec,
    active_start_probs,
    apply_accent,
    build_benchmark,
    default_rules,
    gen_target_corpus,
)
from accentor.tokens import TokenSequence, dedup_runs, lcsr, mean_lcsr


class TestMarkovTable:
    def test_rejects_degenerate_tables(self):
        with pytest.raises(ValueError):
            MarkovTable(np.zeros((3, 3)))  # wrong rank
        bad = np.full((2, 2, 2), 0.4)
        with pytest.raises(ValueError, match="sum to 1"):
            MarkovTable(bad)
        neg = np.zeros((2, 2, 2))
        neg[..., 0] = 1.2
        neg[..., 1] = -0.2
        with pytest.raises(ValueError, match="non-negative"):
            MarkovTable(neg)

    def test_structured_rows_are_sparse_and_stochastic(self):
        table = MarkovTable.structured(size=16, active=8, successors=3, seed=5)
        assert np.allclose(table.probs.sum(axis=2), 1.0)
        active_rows = table.probs[:8, :8]
        assert ((active_rows > 0).sum(axis=2) == 3).all()
        # successor sets never contain the immediately preceding token
        for i in range(8):
            for j in range(8):
                assert table.probs[i, j, j] == 0.0


class TestGenTargetCorpus:
    def test_empty_corpus(self):
        table = MarkovTable.structured(16, 8, 3, seed=1)
        corpus, stats = gen_target_corpus(table, 0, LengthSpec.constant(10), seed=0)
        assert corpus == [] and stats["bigram_tv"] == 0.0

    def test_deterministic_chain_with_fixed_start(self):
        # one-hot rows plus a one-hot start distribution force one trajectory
        size = 6
        probs = np.zeros((size, size, size))
        for i in range(size):
            for j in range(size):
                probs[i, j, (j + 1) % size] = 1.0
        table = MarkovTable(probs)
        start = np.zeros(size)
        start[2] = 1.0
        corpus, _ = gen_target_corpus(table, 5, LengthSpec.constant(8), seed=9, start_probs=start)
        assert len({seq.tokens for seq in corpus}) == 1
        assert corpus[0].tokens == (2, 2, 3, 4, 5, 0, 1, 2)

    def test_reproducible_under_seed(self):
        table = MarkovTable.structured(16, 8, 3, seed=1)
        a, _ = gen_target_corpus(table, 20, LengthSpec.uniform(5, 15), seed=4)
        b, _ = gen_target_corpus(table, 20, LengthSpec.uniform(5, 15), seed=4)
        assert a == b
        c, _ = gen_target_corpus(table, 20, LengthSpec.uniform(5, 15), seed=5)
        assert a != c

    def test_uniform_table_gives_uniform_unigrams(self):
        V = 10
        table = MarkovTable(np.full((V, V, V), 1.0 / V))
        corpus, stats = gen_target_corpus(table, 5000, LengthSpec.constant(100), seed=3)
        counts = np.zeros(V)
        for seq in corpus:
            np.add.at(counts, np.asarray(seq.tokens), 1.0)
        freqs = counts / counts.sum()
        assert np.abs(freqs - 1.0 / V).max() <= 0.1 / V
        assert stats["bigram_tv"] < 0.05

    def test_default_benchmark_bigram_conformance(self):
        spec = BenchmarkSpec()
        table = MarkovTable.structured(spec.semantic_regular, spec.active_tokens, spec.successors, spec.seed)
        corpus, stats = gen_target_corpus(
            table, 2000, spec.lengths, seed=spec.seed,
            start_probs=active_start_probs(table, spec.active_tokens),
        )
        assert stats["bigram_tv"] <= 0.05
        assert stats["n_utts"] == 2000


class TestApplyAccent:
    def test_empty_rules_are_identity(self):
        s = TokenSequence("u", (1, 2, 3, 2))
        out = apply_accent(s, AccentRuleSet(), np.random.default_rng(0))
        assert out.tokens == s.tokens

    def test_certain_substitution_replaces_every_occurrence(self):
        rules = AccentRuleSet(substitutions=(((1, 9, 1.0)),))
        s = TokenSequence("u", (1, 2, 1, 1, 3))
        out = apply_accent(s, rules, np.random.default_rng(0))
        assert out.tokens == (9, 2, 9, 9, 3)

    def test_duplication_and_insertion_mechanics(self):
        rules = AccentRuleSet(duplication=((3, 1.0),), insertions=((99, 1.0),))
        out = apply_accent(TokenSequence("u", (4, 5)), rules, np.random.default_rng(0))
        assert out.tokens == (4, 4, 4, 99, 5, 5, 5, 99)

    def test_deterministic_under_seed(self):
        rules = AccentRuleSet(
            substitutions=((1, 9, 0.5),),
            duplication=((1, 0.6), (2, 0.4)),
            insertions=((8, 0.2),),
        )
        s = TokenSequence("u", tuple(np.random.default_rng(1).integers(0, 5, 40)))
        a = apply_accent(s, rules, np.random.default_rng(7))
        b = apply_accent(s, rules, np.random.default_rng(7))
        assert a.tokens == b.tokens

    def test_dedup_growth_bounded_by_insertions(self):
        # On run-free input (the target language never self-loops), rhythm
        # duplication collapses under dedup and only fillers can extend it.
        rules = AccentRuleSet(duplication=((1, 0.5), (3, 0.5),), insertions=((99, 0.3),))
        rng = np.random.default_rng(5)
        for _ in range(25):
            toks = []
            while len(toks) < 30:
                t = int(rng.integers(0, 6))
                if not toks or toks[-1] != t:
                    toks.append(t)
            s = TokenSequence("u", tuple(toks))
            out = apply_accent(s, rules, rng)
            inserted = sum(1 for t in out.tokens if t == 99)
            assert len(dedup_runs(out)) <= len(dedup_runs(s)) + inserted

    def test_validation(self):
        with pytest.raises(ValueError):
            AccentRuleSet(substitutions=((3, 3, 1.0),))
        with pytest.raises(ValueError):
            AccentRuleSet(substitutions=((1, 2, 1.5),))
        with pytest.raises(ValueError):
            AccentRuleSet(substitutions=((1, 2, 0.5), (1, 3, 0.5)))
        with pytest.raises(ValueError):
            AccentRuleSet(duplication=((1, 0.3), (2, 0.3)))

    def test_default_rules_divergence_band(self):
        spec = BenchmarkSpec()
        table = MarkovTable.structured(spec.semantic_regular, spec.active_tokens, spec.successors, spec.seed)
        corpus, _ = gen_target_corpus(
            table, 1000, spec.lengths, seed=17,
            start_probs=active_start_probs(table, spec.active_tokens),
        )
        rules = default_rules(spec)
        rng = np.random.default_rng(23)
        pairs = [(apply_accent(seq, rules, rng), seq) for seq in corpus]
        score = mean_lcsr(pairs)
        assert 0.4 <= score <= 0.7


class TestSyntheticCodec:
    def codec(self, **kw):
        base = dict(semantic_size=64, style_count=8, groups=4, codebook=32, seed=3)
        base.update(kw)
        return SyntheticCodec.build(**base)

    def test_roundtrip_is_exact_for_all_tokens_and_styles(self):
        codec = self.codec()
        for style in range(8):
            seq = TokenSequence("u", tuple(range(64)))
            dec = codec.decode(codec.encode(seq, style))
            assert dec.tokens.tokens == seq.tokens
            assert dec.unknown_frames == 0
            assert dec.style_votes == {style: 64}

    def test_styles_differ_on_every_frame(self):
        codec = self.codec()
        seq = TokenSequence("u", tuple(range(0, 64, 3)))
        frames = [codec.encode(seq, s).frames for s in range(8)]
        for a in range(8):
            for b in range(a + 1, 8):
                assert all(fa != fb for fa, fb in zip(frames[a], frames[b]))

    def test_randomized_roundtrip_property(self):
        codec = self.codec()
        rng = np.random.default_rng(11)
        for _ in range(2000):
            n = int(rng.integers(1, 40))
            seq = TokenSequence("u", tuple(rng.integers(0, 64, n)))
            style = int(rng.integers(0, 8))
            dec = codec.decode(codec.encode(seq, style))
            assert dec.tokens.tokens == seq.tokens
            assert dec.majority_style == style and dec.style_purity(style) == 1.0

    def test_unknown_style_and_token_raise(self):
        codec = self.codec()
        with pytest.raises(ValueError, match="style"):
            codec.encode(TokenSequence("u", (1,)), 8)
        with pytest.raises(ValueError, match="semantic range"):
            codec.encode(TokenSequence("u", (64,)), 0)

    def test_capacity_validation(self):
        with pytest.raises(ValueError, match="too small"):
            SyntheticCodec.build(semantic_size=64, style_count=20, groups=4, codebook=32, seed=0)

    def test_unknown_frames_are_counted_not_decoded(self):
        codec = self.codec()
        enc = codec.encode(TokenSequence("u", (1, 2)), 0)
        frames = enc.frames + ((31, 31, 31, 31),) * 2
        from accentor.tokens import AcousticSequence

        dec = codec.decode(AcousticSequence("u", frames))
        assert dec.total_frames == 4
        assert len(dec.tokens.tokens) + dec.unknown_frames == 4

    def test_rebuild_from_config_is_identical(self):
        codec = self.codec()
        again = SyntheticCodec.from_config(codec.config_dict())
        assert np.array_equal(codec.mapping, again.mapping)


class TestBenchmark:
    def test_build_is_deterministic_and_in_band(self):
        spec = BenchmarkSpec(n_target=200, n_pairs=30, n_holdout_pairs=20, n_speak_holdout=5)
        a = build_benchmark(spec)
        b = build_benchmark(spec)
        assert [s.tokens for s in a.target_corpus] == [s.tokens for s in b.target_corpus]
        assert a.rules == b.rules
        assert [p.source.tokens for p in a.pairs] == [p.source.tokens for p in b.pairs]
        # target corpus never uses the accent band or fillers
        band_start = spec.active_tokens
        for seq in a.target_corpus[:50]:
            assert max(seq.tokens) < band_start
        # sources do use the band
        assert any(max(p.source.tokens) >= band_start for p in a.pairs)

    def test_speak_holdout_prompts_encode_the_prefix(self):
        spec = BenchmarkSpec(n_target=50, n_pairs=10, n_holdout_pairs=5, n_speak_holdout=4)
        bench = build_benchmark(spec)
        for item in bench.speak_holdout:
            assert len(item.prompt) == spec.prompt_frames
            dec = bench.codec.decode(item.prompt)
            assert dec.tokens.tokens == item.semantic.tokens[: spec.prompt_frames]
            assert dec.style_purity(item.style) == 1.0
