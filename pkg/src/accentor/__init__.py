"""Discrete-token accent conversion toolkit.

Two stages over discrete speech tokens: a denoising-pretrained token
conversion model fine-tuned on weakly parallel pairs, and a single-stage
autoregressive generator emitting all K grouped acoustic codes of a frame
per forward pass, conditioned on semantic tokens and a style prompt.
"""

from .corruption import CorruptionSpec, corrupt, make_rng
from .converter import Candidate, ConversionResult, ParallelPair, convert, finetune, pretrain
from .model import ModelConfig, TokenTransformer, nll_loss, param_count
from .sampling import sample_top_k
from .speaker import (
    GenerationResult,
    SpeakingExample,
    StepReport,
    count_decoding_steps,
    generate,
    train_generative,
)
from .synth import (
    AccentRuleSet,
    Benchmark,
    BenchmarkSpec,
    LengthSpec,
    MarkovTable,
    SyntheticCodec,
    apply_accent,
    build_benchmark,
    gen_target_corpus,
)
from .tokens import (
    AcousticSequence,
    EmptyAfterDedupError,
    TokenSequence,
    Vocabulary,
    acoustic_group_vocabulary,
    dedup_runs,
    lcs_length,
    lcsr,
    mean_lcsr,
    semantic_vocabulary,
)
from .training import TrainOptions, TrainReport

__version__ = "0.1.0"
