"""Speaking model: layout, loss structure, generation, step accounting."""

import numpy as np
import pytest
import torch

from accentor.model import TokenTransformer, nll_loss
from accentor.speaker import (
    SpeakingExample,
    count_decoding_steps,
    generate,
    speaking_layout,
    train_generative,
)
from accentor.tokens import AcousticSequence, TokenSequence, semantic_vocabulary
from accentor.training import TrainOptions

from conftest import tiny_config

VOCAB = semantic_vocabulary(16)


def speaker_cfg(K=4, codebook=8, **kw):
    return tiny_config(
        semantic_vocab=VOCAB,
        acoustic_groups=K,
        n_output_heads=K,
        group_codebook=codebook,
        **kw,
    )


def example(utt="u", sem_len=5, frames=None, K=4, codebook=8, seed=0):
    rng = np.random.default_rng(seed)
    sem = TokenSequence(utt, tuple(rng.integers(0, 16, sem_len)))
    n_frames = frames if frames is not None else sem_len
    ac = AcousticSequence(utt, tuple(tuple(rng.integers(0, codebook, K)) for _ in range(n_frames)))
    return SpeakingExample(semantic=sem, acoustic=ac)


class TestLayout:
    def test_targets_and_masks(self):
        c = speaker_cfg()
        ex = example(sem_len=3, frames=2)
        sem, frames, targets, mask = speaking_layout(ex, c)
        L = 3 + 1 + 2
        assert targets.shape == (L, 4) and mask.shape == (L, 4)
        assert not mask[:3].any()                       # semantic positions untrained
        assert mask[3].all() and mask[4].all()          # sep -> frame0, frame0 -> frame1
        assert (targets[3] == np.asarray(ex.acoustic.frames[0])).all()
        assert (targets[4] == np.asarray(ex.acoustic.frames[1])).all()
        assert mask[5, 0] and not mask[5, 1:].any()     # last frame -> eos on head 0
        assert targets[5, 0] == c.acoustic_eos

    def test_prompt_split_bounds(self):
        with pytest.raises(ValueError):
            SpeakingExample(
                semantic=TokenSequence("u", (1,)),
                acoustic=AcousticSequence("u", ((1, 1),)),
                prompt_split=5,
            )
        with pytest.raises(ValueError):
            SpeakingExample(semantic=TokenSequence("u", (1,)), acoustic=AcousticSequence("u", ()))


class TestTrainGenerative:
    def test_initial_loss_is_k_times_log_codebook(self):
        K, codebook, F = 4, 8, 10
        corpus = [example(f"u{i}", sem_len=F, K=K, codebook=codebook, seed=i) for i in range(24)]
        opts = TrainOptions(steps=2, batch_size=8, lr=1e-4, warmup_steps=1, seed=0)
        _, report = train_generative(corpus, speaker_cfg(K=K, codebook=codebook), opts)
        V = codebook + 1
        exact = np.log(V) * (F * K + 1) / (F + 1)  # eos position carries one head
        assert report.initial_loss == pytest.approx(exact, rel=0.05)
        assert report.initial_loss == pytest.approx(K * np.log(V), rel=0.12)

    def test_k1_loss_degenerates_to_token_cross_entropy(self):
        torch.manual_seed(1)
        c = speaker_cfg(K=1, codebook=8)
        model = TokenTransformer(c)
        ex = example(sem_len=6, K=1, codebook=8, seed=3)
        sem, frames, targets, mask = speaking_layout(ex, c)
        emb = model.embed_mixed(
            torch.from_numpy(sem).unsqueeze(0), torch.from_numpy(frames).unsqueeze(0)
        )
        logits, _ = model(emb)
        loss = nll_loss(logits, torch.from_numpy(targets).unsqueeze(0), torch.from_numpy(mask).unsqueeze(0))
        flat_logits = logits[0, torch.from_numpy(mask[:, 0])][:, 0, :]
        flat_targets = torch.from_numpy(targets[mask[:, 0], 0])
        expected = torch.nn.functional.cross_entropy(flat_logits, flat_targets)
        assert float(loss) == pytest.approx(float(expected), rel=1e-6)

    def test_group_count_mismatch_names_utterance(self):
        good = example("fine", K=4)
        bad = SpeakingExample(
            semantic=TokenSequence("odd-one", (1, 2)),
            acoustic=AcousticSequence("odd-one", ((1, 2),)),
        )
        with pytest.raises(ValueError, match="odd-one"):
            train_generative([good, bad], speaker_cfg(), TrainOptions(steps=1, seed=0))

    def test_code_outside_codebook_rejected(self):
        bad = SpeakingExample(
            semantic=TokenSequence("hot", (1,)),
            acoustic=AcousticSequence("hot", ((9, 0, 0, 0),)),  # codebook is 8
        )
        with pytest.raises(ValueError, match="hot"):
            train_generative([bad], speaker_cfg(), TrainOptions(steps=1, seed=0))

    def test_variable_length_batches_train(self):
        corpus = [example(f"u{i}", sem_len=4 + i % 3, seed=i) for i in range(12)]
        opts = TrainOptions(steps=3, batch_size=5, lr=1e-4, warmup_steps=1, seed=0)
        _, report = train_generative(corpus, speaker_cfg(), opts)
        assert report.steps == 3


class TestGenerate:
    @pytest.fixture(scope="class")
    def trained(self):
        # deterministic toy mapping: frame codes are functions of the semantic id
        def frame_of(tok):
            return (tok % 8, (tok + 1) % 8, (tok * 3) % 8, (tok + 5) % 8)

        rng = np.random.default_rng(0)
        corpus = []
        for i in range(48):
            sem = TokenSequence(f"u{i}", tuple(rng.integers(0, 16, 7)))
            ac = AcousticSequence(f"u{i}", tuple(frame_of(t) for t in sem.tokens))
            corpus.append(SpeakingExample(semantic=sem, acoustic=ac))
        torch.manual_seed(2)
        opts = TrainOptions(steps=400, batch_size=16, lr=2e-3, warmup_steps=40, lr_decay=0.998, seed=3)
        model, _ = train_generative(corpus, speaker_cfg(), opts)
        return model, frame_of

    def test_steps_equal_frames_and_eos_costs_one_extra_pass(self, trained):
        model, _ = trained
        y = TokenSequence("gen", (3, 1, 4, 1, 5, 9, 2))
        res = generate(model, y, None, k=1, rng=np.random.default_rng(0))
        assert res.steps == len(res.acoustic)
        expected_passes = res.steps if res.truncated else res.steps + 1
        assert res.forward_passes == expected_passes

    def test_requested_frame_budget_costs_exactly_that_many_passes(self, trained):
        model, _ = trained
        y = TokenSequence("gen", tuple(np.random.default_rng(1).integers(0, 16, 40)))
        res = generate(model, y, None, k=1, rng=np.random.default_rng(0), max_frames=50)
        if res.truncated:
            assert res.steps == 50
            assert res.forward_passes == 50

    def test_recovers_trained_mapping(self, trained):
        model, frame_of = trained
        y = TokenSequence("gen", (2, 7, 11, 3, 14, 1, 8))
        res = generate(model, y, None, k=1, rng=np.random.default_rng(0))
        expected = tuple(frame_of(t) for t in y.tokens)
        matches = sum(1 for a, b in zip(res.acoustic.frames, expected) if a == b)
        assert matches >= 6

    def test_empty_prompt_is_valid_and_prompt_not_reemitted(self, trained):
        model, frame_of = trained
        y = TokenSequence("gen", (2, 7, 11, 3, 14, 1, 8))
        expected = tuple(frame_of(t) for t in y.tokens)
        prompt = AcousticSequence("gen", expected[:3])
        res = generate(model, y, prompt, k=1, rng=np.random.default_rng(0))
        # continuation picks up after the prompt instead of echoing it
        matches = sum(1 for a, b in zip(res.acoustic.frames, expected[3:]) if a == b)
        assert matches >= 2
        assert res.acoustic.frames[0] != prompt.frames[0]
        bare = generate(model, y, None, k=1, rng=np.random.default_rng(0))
        assert len(bare.acoustic) >= 1

    def test_generated_codes_stay_in_codebook(self, trained):
        model, _ = trained
        torch.manual_seed(0)
        res = generate(
            model,
            TokenSequence("gen", (1, 2, 3, 4, 5, 6, 7, 8)),
            None,
            k=9,  # all codebook entries plus eos in the top-k pool
            rng=np.random.default_rng(5),
        )
        for frame in res.acoustic.frames:
            assert len(frame) == 4
            assert all(0 <= c < 8 for c in frame)

    def test_long_prompt_warns(self, trained, caplog):
        model, frame_of = trained
        y = TokenSequence("gen", (1, 2, 3))
        prompt = AcousticSequence("gen", tuple(frame_of(1) for _ in range(6)))
        import logging

        with caplog.at_level(logging.WARNING):
            generate(model, y, prompt, k=1, rng=np.random.default_rng(0), max_prompt_frames=4)
        assert any("prompt" in rec.message for rec in caplog.records)

    def test_rejects_empty_semantics_and_wrong_groups(self, trained):
        model, _ = trained
        with pytest.raises(ValueError):
            generate(model, TokenSequence("e", ()), None, rng=np.random.default_rng(0))
        bad_prompt = AcousticSequence("e", ((1, 2),))
        with pytest.raises(ValueError, match="codes"):
            generate(model, TokenSequence("e", (1,)), bad_prompt, rng=np.random.default_rng(0))


class TestStepAccounting:
    def test_paper_rates(self):
        single = count_decoding_steps(1.0, "single_stage_50hz")
        assert (single.ar_steps, single.nar_passes) == (50, 0)
        rvq = count_decoding_steps(1.0, "rvq_two_stage_75hz")
        assert (rvq.ar_steps, rvq.nar_passes) == (75, 7)

    def test_linearity(self):
        assert count_decoding_steps(0.2, "single_stage_50hz").ar_steps == 10
        assert count_decoding_steps(2.0, "single_stage_50hz").ar_steps == 100
        assert count_decoding_steps(2.0, "rvq_two_stage_75hz").ar_steps == 150

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            count_decoding_steps(0.0, "single_stage_50hz")
        with pytest.raises(ValueError):
            count_decoding_steps(1.0, "three_stage")
