"""Synthetic desk-scale benchmark: target-domain token language, rule-based
accent transform, and an exactly invertible acoustic codec.

The target language is a first-order Markov chain over a structured bigram
table (each token has a small successor set), so context carries real
information and denoising pretraining has something to learn. The accent
transform applies directional token substitutions (some into an accent-only
id band, some into ordinary ids so only context can invert them), rhythm
perturbation via repeat-count resampling, and filler insertions. The codec
maps (semantic id, style) to a frame of K group codes injectively, giving an
exact frame-level inverse for content and style checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .converter import ParallelPair
from .speaker import SpeakingExample
from .tokens import AcousticSequence, TokenSequence

_ROW_SUM_TOL = 1e-9


# ---------------------------------------------------------------------------
# target-language corpus


@dataclass(frozen=True)
class LengthSpec:
    """Utterance length distribution: constant or uniform-inclusive."""

    kind: str
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "uniform"):
            raise ValueError(f"unknown length kind {self.kind!r}")
        if self.lo < 1 or self.hi < self.lo:
            raise ValueError(f"bad length bounds [{self.lo}, {self.hi}]")
        if self.kind == "constant" and self.lo != self.hi:
            raise ValueError("constant lengths need lo == hi")

    @classmethod
    def constant(cls, n: int) -> "LengthSpec":
        return cls("constant", n, n)

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "LengthSpec":
        return cls("uniform", lo, hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.lo, dtype=np.int64)
        return rng.integers(self.lo, self.hi + 1, size=n)


@dataclass
class MarkovTable:
    """Second-order transition table: ``probs[i, j, k] = P(next=k | prev2=i, prev1=j)``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        shape = self.probs.shape
        if self.probs.ndim != 3 or not (shape[0] == shape[1] == shape[2]):
            raise ValueError(f"transition table must be cubic (V, V, V), got {shape}")
        if (self.probs < 0).any():
            raise ValueError("transition probabilities must be non-negative")
        sums = self.probs.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > _ROW_SUM_TOL)
        if bad.size:
            raise ValueError(f"transition rows {bad[:5].tolist()} do not sum to 1")

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def structured(
        cls,
        size: int,
        active: int,
        successors: int,
        seed: int,
    ) -> "MarkovTable":
        """Sparse random language over ids [0, active).

        Every two-token context gets its own small successor set (never the
        immediately preceding token, so runs only arise by accent rhythm).
        Contexts touching ids in [active, size) get placeholder uniform rows
        and are never visited when starts stay in the active band.
        """
        if not 2 <= successors < active <= size:
            raise ValueError("need 2 <= successors < active <= size")
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7AB1E)))
        probs = np.zeros((size, size, size))
        candidates = np.arange(active)
        for i in range(active):
            for j in range(active):
                others = candidates[candidates != j]
                succ = rng.choice(others, size=successors, replace=False)
                probs[i, j, succ] = rng.dirichlet(np.full(successors, 1.5))
        probs[active:, :, :active] = 1.0 / active
        probs[:active, active:, :active] = 1.0 / active
        return cls(probs)


def active_start_probs(table: MarkovTable, active: int) -> np.ndarray:
    start = np.zeros(table.size)
    start[:active] = 1.0 / active
    return start


def gen_target_corpus(
    table: MarkovTable,
    n_utts: int,
    lengths: LengthSpec,
    seed: int,
    start_probs: Optional[np.ndarray] = None,
    utt_prefix: str = "utt",
) -> tuple[list[TokenSequence], dict]:
    """Sample a reproducible corpus from the chain.

    The first two tokens of an utterance are drawn i.i.d. from
    ``start_probs`` (uniform by default); everything after follows the
    second-order table. Returns the corpus and a stats report containing the
    total-variation distance between the empirical bigram distribution and
    the one the table implies under the empirical context frequencies.
    """
    if n_utts < 0:
        raise ValueError("n_utts must be >= 0")
    V = table.size
    if start_probs is None:
        start_probs = np.full(V, 1.0 / V)
    start_probs = np.asarray(start_probs, dtype=np.float64)
    if start_probs.shape != (V,) or abs(start_probs.sum() - 1.0) > _ROW_SUM_TOL:
        raise ValueError("start_probs must be a distribution over the vocabulary")
    if n_utts == 0:
        return [], {"n_utts": 0, "n_tokens": 0, "bigram_tv": 0.0}

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0585)))
    lens = lengths.sample(rng, n_utts)
    max_len = int(lens.max())
    flat_cum = np.cumsum(table.probs.reshape(V * V, V), axis=1)
    tokens = np.zeros((n_utts, max(max_len, 2)), dtype=np.int64)
    start_cum = np.cumsum(start_probs)
    for col in (0, 1):
        tokens[:, col] = np.minimum(
            np.searchsorted(start_cum, rng.random(n_utts), side="right"), V - 1
        )
    for t in range(2, max_len):
        u = rng.random(n_utts)
        rows = flat_cum[tokens[:, t - 2] * V + tokens[:, t - 1]]
        tokens[:, t] = np.minimum((rows < u[:, None]).sum(axis=1), V - 1)

    corpus = [
        TokenSequence(f"{utt_prefix}{i:05d}", tuple(tokens[i, : lens[i]]))
        for i in range(n_utts)
    ]
    stats = corpus_bigram_stats(corpus, table)
    return corpus, stats


def corpus_bigram_stats(corpus: Sequence[TokenSequence], table: MarkovTable) -> dict:
    """Empirical bigram conformance against the table.

    Compares the empirical distribution of (prev1, next) pairs, taken over
    all positions with a full two-token context, with the distribution the
    table implies when fed the empirical context frequencies:
    ``q(a, b) = sum_c p_hat(context=(c, a)) * probs[c, a, b]``.
    """
    V = table.size
    triples = np.zeros((V, V, V))
    for seq in corpus:
        toks = np.asarray(seq.tokens)
        if toks.shape[0] >= 3:
            np.add.at(triples, (toks[:-2], toks[1:-1], toks[2:]), 1.0)
    total = triples.sum()
    n_tokens = int(sum(len(s) for s in corpus))
    if total == 0:
        return {"n_utts": len(corpus), "n_tokens": n_tokens, "bigram_tv": 0.0}
    empirical = triples.sum(axis=0) / total            # (prev1, next) pairs
    contexts = triples.sum(axis=2) / total             # (prev2, prev1) frequency
    implied = np.einsum("ca,cab->ab", contexts, table.probs)
    tv = 0.5 * float(np.abs(empirical - implied).sum())
    return {
        "n_utts": len(corpus),
        "n_tokens": n_tokens,
        "bigram_tv": tv,
    }


# ---------------------------------------------------------------------------
# accent transform


@dataclass(frozen=True)
class AccentRuleSet:
    """Directional token-level accent: substitutions, rhythm, fillers.

    ``substitutions`` are (from_id, to_id, probability) applied per token;
    ``duplication`` is a categorical distribution over per-token repeat counts
    (empty means every token appears once); ``insertions`` are (filler_id,
    probability) checked after each token's repeats.
    """

    substitutions: tuple[tuple[int, int, float], ...] = ()
    duplication: tuple[tuple[int, float], ...] = ()
    insertions: tuple[tuple[int, float], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        seen = set()
        for src, dst, prob in self.substitutions:
            if src == dst:
                raise ValueError(f"substitution {src}->{dst} is a no-op")
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"substitution probability {prob} outside [0, 1]")
            if src in seen:
                raise ValueError(f"duplicate substitution source id {src}")
            seen.add(src)
        if self.duplication:
            probs = [p for _, p in self.duplication]
            if any(not 0.0 <= p <= 1.0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError("duplication repeat-count probabilities must sum to 1")
            if any(count < 1 for count, _ in self.duplication):
                raise ValueError("repeat counts must be >= 1")
        for filler, prob in self.insertions:
            if filler < 0 or not 0.0 <= prob <= 1.0:
                raise ValueError(f"bad insertion rule ({filler}, {prob})")

    def to_dict(self) -> dict:
        return {
            "substitutions": [list(s) for s in self.substitutions],
            "duplication": [list(d) for d in self.duplication],
            "insertions": [list(i) for i in self.insertions],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AccentRuleSet":
        return cls(
            substitutions=tuple((int(a), int(b), float(p)) for a, b, p in data["substitutions"]),
            duplication=tuple((int(c), float(p)) for c, p in data["duplication"]),
            insertions=tuple((int(f), float(p)) for f, p in data["insertions"]),
            seed=int(data["seed"]),
        )


def apply_accent(seq: TokenSequence, rules: AccentRuleSet, rng: np.random.Generator) -> TokenSequence:
    """Accent one utterance; deterministic given (seq, rules, generator state)."""
    sub_map = {src: (dst, prob) for src, dst, prob in rules.substitutions}
    if rules.duplication:
        rep_counts = np.array([c for c, _ in rules.duplication])
        rep_probs = np.array([p for _, p in rules.duplication])
        rep_cum = np.cumsum(rep_probs)
    out: list[int] = []
    for tok in seq.tokens:
        if tok in sub_map:
            dst, prob = sub_map[tok]
            if rng.random() < prob:
                tok = dst
        repeats = 1
        if rules.duplication:
            repeats = int(rep_counts[min(int(np.searchsorted(rep_cum, rng.random(), side="right")), len(rep_counts) - 1)])
        out.extend([tok] * repeats)
        for filler, prob in rules.insertions:
            if rng.random() < prob:
                out.append(filler)
    return TokenSequence(seq.utt_id, tuple(out))


# ---------------------------------------------------------------------------
# invertible synthetic codec


@dataclass
class DecodedAcoustics:
    """Frame-wise inverse of a code sequence: recovered tokens + style votes."""

    tokens: TokenSequence
    style_votes: dict[int, int]
    unknown_frames: int
    total_frames: int

    @property
    def majority_style(self) -> Optional[int]:
        if not self.style_votes:
            return None
        return max(sorted(self.style_votes), key=lambda s: self.style_votes[s])

    def style_purity(self, style: int) -> float:
        """Fraction of all frames that decode exactly to the given style."""
        if self.total_frames == 0:
            return 0.0
        return self.style_votes.get(style, 0) / self.total_frames


@dataclass
class SyntheticCodec:
    """Injective (semantic id, style) -> K-group frame mapping with exact inverse.

    Group 0 carries the low bits of the semantic id, group 1 jointly encodes
    the remaining bits and the style (so any two styles differ on every
    frame), and the remaining groups are style/content textures. All groups
    are passed through seeded codebook permutations.
    """

    semantic_size: int
    style_count: int
    groups: int
    codebook: int
    seed: int
    mapping: np.ndarray = field(repr=False)
    inverse: dict[tuple[int, ...], tuple[int, int]] = field(repr=False)

    @classmethod
    def build(
        cls,
        semantic_size: int,
        style_count: int,
        groups: int,
        codebook: int,
        seed: int,
    ) -> "SyntheticCodec":
        if groups < 2:
            raise ValueError("need at least 2 groups for joint content/style encoding")
        if style_count < 1:
            raise ValueError("style_count must be >= 1")
        high_count = -(-semantic_size // codebook)  # ceil
        if high_count * style_count > codebook:
            raise ValueError(
                f"codebook {codebook} too small for {semantic_size} ids x {style_count} styles"
            )
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0DEC)))
        perms = [rng.permutation(codebook) for _ in range(groups)]
        mapping = np.zeros((semantic_size, style_count, groups), dtype=np.int64)
        for sem in range(semantic_size):
            low, high = sem % codebook, sem // codebook
            for style in range(style_count):
                frame = [perms[0][low], perms[1][high + high_count * style]]
                for g in range(2, groups):
                    frame.append(perms[g][(low + (g - 1) * (style + 3)) % codebook])
                mapping[sem, style] = frame
        inverse = {
            tuple(int(c) for c in mapping[sem, style]): (sem, style)
            for sem in range(semantic_size)
            for style in range(style_count)
        }
        if len(inverse) != semantic_size * style_count:
            raise AssertionError("codec mapping is not injective")
        return cls(
            semantic_size=semantic_size,
            style_count=style_count,
            groups=groups,
            codebook=codebook,
            seed=seed,
            mapping=mapping,
            inverse=inverse,
        )

    def encode(self, seq: TokenSequence, style: int) -> AcousticSequence:
        """Frame i is the mapping of token i under the given style."""
        if not 0 <= style < self.style_count:
            raise ValueError(f"unknown style {style}, codec has {self.style_count}")
        for tok in seq.tokens:
            if tok >= self.semantic_size:
                raise ValueError(f"{seq.utt_id}: token {tok} outside the codec's semantic range")
        frames = tuple(tuple(int(c) for c in self.mapping[tok, style]) for tok in seq.tokens)
        return AcousticSequence(seq.utt_id, frames)

    def decode(self, acoustic: AcousticSequence) -> DecodedAcoustics:
        """Exact frame-wise inverse; frames outside the mapping count as unknown."""
        tokens: list[int] = []
        votes: dict[int, int] = {}
        unknown = 0
        for frame in acoustic.frames:
            hit = self.inverse.get(tuple(frame))
            if hit is None:
                unknown += 1
                continue
            sem, style = hit
            tokens.append(sem)
            votes[style] = votes.get(style, 0) + 1
        return DecodedAcoustics(
            tokens=TokenSequence(acoustic.utt_id, tuple(tokens)),
            style_votes=votes,
            unknown_frames=unknown,
            total_frames=len(acoustic.frames),
        )

    def config_dict(self) -> dict:
        return {
            "semantic_size": self.semantic_size,
            "style_count": self.style_count,
            "groups": self.groups,
            "codebook": self.codebook,
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, data: dict) -> "SyntheticCodec":
        return cls.build(
            semantic_size=int(data["semantic_size"]),
            style_count=int(data["style_count"]),
            groups=int(data["groups"]),
            codebook=int(data["codebook"]),
            seed=int(data["seed"]),
        )


# ---------------------------------------------------------------------------
# default benchmark


@dataclass(frozen=True)
class BenchmarkSpec:
    """Knobs of the synthetic benchmark; the defaults train in minutes on CPU."""

    semantic_regular: int = 64
    active_tokens: int = 32
    successors: int = 6
    n_target: int = 2000
    n_pairs: int = 200
    n_holdout_pairs: int = 100
    n_speak_holdout: int = 40
    length_kind: str = "constant"
    length_lo: int = 80
    length_hi: int = 80
    styles: int = 8
    groups: int = 4
    codebook: int = 32
    prompt_frames: int = 20
    n_sub_band: int = 6
    n_sub_core: int = 8
    sub_prob: float = 1.0
    insert_prob: float = 0.0
    dup2_prob: float = 0.0
    dup3_prob: float = 0.0
    seed: int = 2026

    def __post_init__(self) -> None:
        needed = self.active_tokens + self.n_sub_band + 2  # band + two fillers
        if self.semantic_regular < needed:
            raise ValueError(
                f"semantic_regular {self.semantic_regular} too small: need >= {needed}"
            )
        if self.prompt_frames >= self.length_lo:
            raise ValueError("prompt must be shorter than the shortest utterance")

    @property
    def lengths(self) -> LengthSpec:
        return LengthSpec(self.length_kind, self.length_lo, self.length_hi)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkSpec":
        return cls(**data)


@dataclass
class SpeakHoldoutItem:
    semantic: TokenSequence
    style: int
    prompt: AcousticSequence
    prompt_tokens: int


@dataclass
class Benchmark:
    spec: BenchmarkSpec
    table: MarkovTable
    rules: AccentRuleSet
    codec: SyntheticCodec
    target_corpus: list[TokenSequence]
    corpus_stats: dict
    pairs: list[ParallelPair]
    holdout_pairs: list[ParallelPair]
    speak_train: list[SpeakingExample]
    speak_holdout: list[SpeakHoldoutItem]

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "rules": self.rules.to_dict(),
            "codec": self.codec.config_dict(),
            "corpus_stats": self.corpus_stats,
            "speak_holdout_styles": {
                item.semantic.utt_id: item.style for item in self.speak_holdout
            },
            "prompt_tokens": self.spec.prompt_frames,
        }


def default_rules(spec: BenchmarkSpec) -> AccentRuleSet:
    """Directionally asymmetric accent rules derived from the benchmark seed.

    Band substitutions move tokens into ids the target language never emits
    (invertible from the token alone); core substitutions collide with real
    target ids, so only sentence context disambiguates them.
    """
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xACC511)))
    n_subs = spec.n_sub_band + spec.n_sub_core
    from_ids = rng.choice(spec.active_tokens, size=n_subs, replace=False)
    band_start = spec.active_tokens
    subs = []
    for j in range(spec.n_sub_band):
        subs.append((int(from_ids[j]), band_start + j, spec.sub_prob))
    # Core targets are untouched active ids, so an observed target id is
    # genuinely ambiguous and only sentence context can invert it.
    core_targets = np.array([i for i in range(spec.active_tokens) if i not in set(from_ids.tolist())])
    if core_targets.shape[0] < spec.n_sub_core:
        raise ValueError("not enough untouched ids to host core substitutions")
    dst_ids = rng.choice(core_targets, size=spec.n_sub_core, replace=False)
    for j in range(spec.n_sub_core):
        subs.append((int(from_ids[spec.n_sub_band + j]), int(dst_ids[j]), spec.sub_prob))
    duplication: tuple[tuple[int, float], ...] = ()
    dup1 = 1.0 - spec.dup2_prob - spec.dup3_prob
    if spec.dup2_prob > 0 or spec.dup3_prob > 0:
        duplication = tuple(
            (count, prob)
            for count, prob in ((1, dup1), (2, spec.dup2_prob), (3, spec.dup3_prob))
            if prob > 0
        )
    fillers = (band_start + spec.n_sub_band, band_start + spec.n_sub_band + 1)
    insertions = tuple((f, spec.insert_prob) for f in fillers) if spec.insert_prob > 0 else ()
    return AccentRuleSet(
        substitutions=tuple(subs),
        duplication=duplication,
        insertions=insertions,
        seed=spec.seed,
    )


def _accent_pairs(
    corpus: Sequence[TokenSequence], rules: AccentRuleSet, seed: int
) -> list[ParallelPair]:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x9A185)))
    pairs = []
    for target in corpus:
        source = apply_accent(target, rules, rng)
        pairs.append(ParallelPair(source=source, target=target))
    return pairs


def build_benchmark(spec: BenchmarkSpec) -> Benchmark:
    """Generate every corpus of the benchmark deterministically from the spec."""
    table = MarkovTable.structured(
        size=spec.semantic_regular,
        active=spec.active_tokens,
        successors=spec.successors,
        seed=spec.seed,
    )
    starts = active_start_probs(table, spec.active_tokens)
    rules = default_rules(spec)
    codec = SyntheticCodec.build(
        semantic_size=spec.semantic_regular,
        style_count=spec.styles,
        groups=spec.groups,
        codebook=spec.codebook,
        seed=spec.seed,
    )
    target_corpus, corpus_stats = gen_target_corpus(
        table, spec.n_target, spec.lengths, seed=spec.seed, start_probs=starts, utt_prefix="tgt"
    )
    pair_targets, _ = gen_target_corpus(
        table, spec.n_pairs, spec.lengths, seed=spec.seed + 1, start_probs=starts, utt_prefix="pair"
    )
    holdout_targets, _ = gen_target_corpus(
        table, spec.n_holdout_pairs, spec.lengths, seed=spec.seed + 2, start_probs=starts, utt_prefix="ho"
    )
    pairs = _accent_pairs(pair_targets, rules, seed=spec.seed + 3)
    holdout_pairs = _accent_pairs(holdout_targets, rules, seed=spec.seed + 4)

    style_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0x57E1E)))
    speak_train = []
    for seq in target_corpus:
        style = int(style_rng.integers(0, spec.styles))
        speak_train.append(SpeakingExample(semantic=seq, acoustic=codec.encode(seq, style)))

    speak_sem, _ = gen_target_corpus(
        table, spec.n_speak_holdout, spec.lengths, seed=spec.seed + 5, start_probs=starts, utt_prefix="sp"
    )
    speak_holdout = []
    for seq in speak_sem:
        style = int(style_rng.integers(0, spec.styles))
        prompt_seq = TokenSequence(seq.utt_id, seq.tokens[: spec.prompt_frames])
        speak_holdout.append(
            SpeakHoldoutItem(
                semantic=seq,
                style=style,
                prompt=codec.encode(prompt_seq, style),
                prompt_tokens=spec.prompt_frames,
            )
        )
    return Benchmark(
        spec=spec,
        table=table,
        rules=rules,
        codec=codec,
        target_corpus=target_corpus,
        corpus_stats=corpus_stats,
        pairs=pairs,
        holdout_pairs=holdout_pairs,
        speak_train=speak_train,
        speak_holdout=speak_holdout,
    )
