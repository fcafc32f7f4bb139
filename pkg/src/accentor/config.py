"""Run configuration: nested settings with a flat dotted-key file format.

Config files are UTF-8 text, one ``section.key = value`` per line, ``#``
comments allowed. Every tunable has a default; unknown keys are rejected so
typos fail loudly. All randomness flows through explicit seeds in here.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .corruption import CorruptionSpec
from .model import ModelConfig
from .synth import BenchmarkSpec
from .tokens import MASK, Vocabulary, semantic_vocabulary
from .training import TrainOptions


class ValidationError(ValueError):
    """Configuration or input validation failed; maps to exit code 1."""


@dataclass
class RunSection:
    seed: int = 2026
    out_dir: str = "runs/out"
    threads: int = 1


@dataclass
class VocabSection:
    semantic_regular: int = 64


@dataclass
class ModelSection:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 384
    dropout: float = 0.0
    context_len: int = 384


#: Configuration reported in the source system: 12 layers of 16 heads,
#: 1024-wide embeddings, 4096-wide feed-forward, dropout 0.1.
PAPER_SCALE_MODEL = ModelSection(
    n_layers=12, n_heads=16, d_model=1024, d_ff=4096, dropout=0.1, context_len=2048
)


@dataclass
class AcousticSection:
    groups: int = 4
    codebook: int = 32
    prompt_max_frames: int = 150


@dataclass
class CorruptSection:
    scheme: str = "infilling"
    span_prob: float = 0.5
    span_lambda: float = 5.0
    seed: int = 11


@dataclass
class TrainSection:
    steps: int = 100
    batch_size: int = 16
    lr: float = 3e-3
    warmup_steps: int = 100
    lr_decay: float = 0.999
    grad_clip: float = 1.0
    seed: int = 0
    log_every: int = 200

    def options(self) -> TrainOptions:
        return TrainOptions(
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            warmup_steps=self.warmup_steps,
            lr_decay=self.lr_decay,
            grad_clip=self.grad_clip,
            seed=self.seed,
            log_every=self.log_every,
        )


@dataclass
class DecodeSection:
    k: int = 2
    n_candidates: int = 5
    selector: str = "reference_lcsr"
    temperature: float = 1.0
    seed: int = 303


@dataclass
class SpeakSection:
    k: int = 10
    temperature: float = 1.0
    seed: int = 606


@dataclass
class AblationSection:
    speaker_ft_steps: int = 400
    speaker_ft_lr: float = 1e-3
    seed: int = 707


@dataclass
class PathsSection:
    data_dir: str = "data/bench"


def _default_pretrain() -> TrainSection:
    return TrainSection(steps=2500, lr=3e-3, warmup_steps=200, seed=101)


def _default_finetune() -> TrainSection:
    return TrainSection(steps=2500, lr=1e-3, warmup_steps=100, seed=202)


def _default_speaker_train() -> TrainSection:
    return TrainSection(steps=1500, lr=3e-3, warmup_steps=150, seed=505)


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    vocab: VocabSection = field(default_factory=VocabSection)
    model: ModelSection = field(default_factory=ModelSection)
    acoustic: AcousticSection = field(default_factory=AcousticSection)
    corrupt: CorruptSection = field(default_factory=CorruptSection)
    pretrain: TrainSection = field(default_factory=_default_pretrain)
    finetune: TrainSection = field(default_factory=_default_finetune)
    speaker_train: TrainSection = field(default_factory=_default_speaker_train)
    decode: DecodeSection = field(default_factory=DecodeSection)
    speak: SpeakSection = field(default_factory=SpeakSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    bench: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    paths: PathsSection = field(default_factory=PathsSection)

    # ---- derived objects ---------------------------------------------------

    def semantic_vocab(self) -> Vocabulary:
        return semantic_vocabulary(self.vocab.semantic_regular)

    def converter_model_config(self) -> ModelConfig:
        return ModelConfig(
            semantic_vocab=self.semantic_vocab(),
            n_layers=self.model.n_layers,
            n_heads=self.model.n_heads,
            d_model=self.model.d_model,
            d_ff=self.model.d_ff,
            dropout=self.model.dropout,
            context_len=self.model.context_len,
        )

    def speaker_model_config(self) -> ModelConfig:
        return ModelConfig(
            semantic_vocab=self.semantic_vocab(),
            n_layers=self.model.n_layers,
            n_heads=self.model.n_heads,
            d_model=self.model.d_model,
            d_ff=self.model.d_ff,
            dropout=self.model.dropout,
            context_len=self.model.context_len,
            n_output_heads=self.acoustic.groups,
            acoustic_groups=self.acoustic.groups,
            group_codebook=self.acoustic.codebook,
        )

    def corruption_spec(self) -> CorruptionSpec:
        return CorruptionSpec(
            mask_token=self.semantic_vocab().reserved[MASK],
            scheme=self.corrupt.scheme,
            span_prob=self.corrupt.span_prob,
            span_lambda=self.corrupt.span_lambda,
            seed=self.corrupt.seed,
        )

    def apply_paper_scale(self) -> None:
        """Switch the model section to the reported full-scale configuration."""
        self.model = dataclasses.replace(PAPER_SCALE_MODEL)

    # ---- flat mapping ------------------------------------------------------

    def to_flat(self) -> dict[str, Any]:
        flat: dict[str, Any] = {}
        for section_field in fields(self):
            section = getattr(self, section_field.name)
            for f in fields(section):
                flat[f"{section_field.name}.{f.name}"] = getattr(section, f.name)
        return flat

    @classmethod
    def from_flat(cls, flat: dict[str, Any]) -> "RunConfig":
        config = cls()
        known = {}
        for section_field in fields(cls):
            section = getattr(config, section_field.name)
            for f in fields(section):
                known[f"{section_field.name}.{f.name}"] = (section_field.name, f)
        unknown = sorted(set(flat) - set(known))
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        updates: dict[str, dict[str, Any]] = {}
        for key, raw in flat.items():
            section_name, f = known[key]
            try:
                updates.setdefault(section_name, {})[f.name] = _coerce(raw, f.type, key)
            except ValueError as exc:
                raise ValidationError(str(exc)) from exc
        for section_name, kwargs in updates.items():
            try:
                replaced = dataclasses.replace(getattr(config, section_name), **kwargs)
            except ValueError as exc:
                raise ValidationError(f"[{section_name}] {exc}") from exc
            setattr(config, section_name, replaced)
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        flat: dict[str, str] = {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValidationError(f"{path}:{lineno}: expected 'section.key = value'")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key in flat:
                raise ValidationError(f"{path}:{lineno}: duplicate key {key!r}")
            flat[key] = value
        return cls.from_flat(flat)

    def write_file(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {_render(value)}" for key, value in sorted(self.to_flat().items())]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(raw: Any, annotation: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    name = annotation if isinstance(annotation, str) else getattr(annotation, "__name__", str(annotation))
    if name == "int":
        return int(raw)
    if name == "float":
        return float(raw)
    if name == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{key}: cannot parse {raw!r} as boolean")
    return raw


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def require_files(*paths: str | Path) -> None:
    """Validate referenced input paths before doing any work."""
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise ValidationError(f"missing input files: {', '.join(missing)}")
