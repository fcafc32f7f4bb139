"""Decoder-only autoregressive transformer with multi-head classification outputs.

One engine serves both stages: the token conversion model uses a single output
head over the semantic vocabulary, and the speech-code generator uses K heads,
one per quantizer group, each over ``codebook + 1`` logits (the extra id is
the end-of-sequence code). Acoustic frames enter the model as the concatenation
of K group embeddings of width ``d_model / K``, so group g occupies coordinates
``[g*d_model/K, (g+1)*d_model/K)`` of the frame's pre-transformer embedding.

The module counts its own forward passes (``forward_passes``) so generation
cost accounting can be asserted rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn
from torch.nn import functional as F

from .tokens import EOS, SEP, Vocabulary


class ContextOverflowError(ValueError):
    """Input longer than the model's context window."""


class NonFiniteActivationError(RuntimeError):
    """A transformer layer produced NaN/inf activations."""

    def __init__(self, layer: int) -> None:
        super().__init__(f"non-finite activations after transformer layer {layer}")
        self.layer = layer


class AllMaskedError(ValueError):
    """Loss requested on a batch whose loss mask is entirely false."""


@dataclass
class ModelConfig:
    """Transformer hyperparameters shared by conversion and speaking models.

    ``acoustic_groups`` (K) is 0 for the conversion model; when K > 0 the
    model carries K group embedding tables of width ``d_model // K`` and K
    classification heads over ``group_codebook + 1`` logits each.
    """

    semantic_vocab: Vocabulary
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    dropout: float = 0.0
    context_len: int = 512
    n_output_heads: int = 1
    acoustic_groups: int = 0
    group_codebook: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.acoustic_groups > 0:
            if self.d_model % self.acoustic_groups != 0:
                raise ValueError(
                    f"d_model {self.d_model} not divisible by acoustic_groups {self.acoustic_groups}"
                )
            if self.group_codebook < 2:
                raise ValueError("group_codebook must be >= 2 when acoustic_groups > 0")
            if self.n_output_heads != self.acoustic_groups:
                raise ValueError("speaking models need one output head per acoustic group")
        elif self.n_output_heads != 1:
            raise ValueError("conversion models use exactly one output head")
        for name in (SEP, EOS):
            if name not in self.semantic_vocab.reserved:
                raise ValueError(f"semantic vocabulary must reserve {name!r}")

    @property
    def group_embed_dim(self) -> int:
        if self.acoustic_groups == 0:
            raise ValueError("no acoustic groups configured")
        return self.d_model // self.acoustic_groups

    @property
    def head_vocab(self) -> int:
        """Logit count per output head: semantic size, or codebook + eos."""
        if self.acoustic_groups > 0:
            return self.group_codebook + 1
        return self.semantic_vocab.size

    @property
    def acoustic_eos(self) -> int:
        """End-of-sequence code id appended beyond each group codebook."""
        if self.acoustic_groups == 0:
            raise ValueError("no acoustic groups configured")
        return self.group_codebook

    @property
    def sep_id(self) -> int:
        return self.semantic_vocab.reserved[SEP]

    @property
    def eos_id(self) -> int:
        return self.semantic_vocab.reserved[EOS]

    def to_dict(self) -> dict:
        return {
            "semantic_vocab": {
                "size": self.semantic_vocab.size,
                "kind": self.semantic_vocab.kind,
                "reserved": dict(self.semantic_vocab.reserved),
            },
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_model": self.d_model,
            "d_ff": self.d_ff,
            "dropout": self.dropout,
            "context_len": self.context_len,
            "n_output_heads": self.n_output_heads,
            "acoustic_groups": self.acoustic_groups,
            "group_codebook": self.group_codebook,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        vocab = Vocabulary(
            size=data["semantic_vocab"]["size"],
            kind=data["semantic_vocab"]["kind"],
            reserved=data["semantic_vocab"]["reserved"],
        )
        return cls(
            semantic_vocab=vocab,
            n_layers=data["n_layers"],
            n_heads=data["n_heads"],
            d_model=data["d_model"],
            d_ff=data["d_ff"],
            dropout=data["dropout"],
            context_len=data["context_len"],
            n_output_heads=data["n_output_heads"],
            acoustic_groups=data["acoustic_groups"],
            group_codebook=data["group_codebook"],
        )


def param_count(config: ModelConfig) -> int:
    """Closed-form parameter count over all declared tensors."""
    d, ff = config.d_model, config.d_ff
    total = config.semantic_vocab.size * d          # semantic embedding
    if config.acoustic_groups > 0:
        total += config.acoustic_groups * (config.group_codebook + 1) * config.group_embed_dim
    total += config.context_len * d                 # positional embedding
    per_layer = (
        2 * d            # ln1
        + d * 3 * d + 3 * d  # qkv projection
        + d * d + d      # attention output projection
        + 2 * d          # ln2
        + d * ff + ff    # mlp in
        + ff * d + d     # mlp out
    )
    total += config.n_layers * per_layer
    total += 2 * d                                   # final layer norm
    total += config.n_output_heads * (d * config.head_vocab + config.head_vocab)
    return total


#: KV cache: one (key, value) pair per layer, shaped (B, n_heads, T, head_dim).
KVCache = list[tuple[torch.Tensor, torch.Tensor]]


class CausalSelfAttention(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.n_heads = config.n_heads
        self.head_dim = config.d_model // config.n_heads
        self.qkv = nn.Linear(config.d_model, 3 * config.d_model)
        self.proj = nn.Linear(config.d_model, config.d_model)
        self.attn_dropout = nn.Dropout(config.dropout)
        self.resid_dropout = nn.Dropout(config.dropout)

    def forward(
        self,
        x: torch.Tensor,
        past: Optional[tuple[torch.Tensor, torch.Tensor]] = None,
        use_cache: bool = False,
    ) -> tuple[torch.Tensor, Optional[tuple[torch.Tensor, torch.Tensor]]]:
        B, L, D = x.shape
        q, k, v = self.qkv(x).split(D, dim=2)
        q = q.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(B, L, self.n_heads, self.head_dim).transpose(1, 2)
        if past is not None:
            k = torch.cat([past[0], k], dim=2)
            v = torch.cat([past[1], v], dim=2)
        present = (k, v) if use_cache else None
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        kv_len = k.shape[2]
        if L > 1:
            # Query i may attend keys up to absolute position (kv_len - L + i).
            mask = torch.ones(L, kv_len, dtype=torch.bool, device=x.device)
            mask = torch.triu(mask, diagonal=kv_len - L + 1)
            att = att.masked_fill(mask, float("-inf"))
        att = F.softmax(att, dim=-1)
        att = self.attn_dropout(att)
        y = (att @ v).transpose(1, 2).reshape(B, L, D)
        return self.resid_dropout(self.proj(y)), present


class Block(nn.Module):
    """Pre-norm transformer block with a GELU feed-forward network."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.ln1 = nn.LayerNorm(config.d_model)
        self.attn = CausalSelfAttention(config)
        self.ln2 = nn.LayerNorm(config.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(config.d_model, config.d_ff),
            nn.GELU(),
            nn.Linear(config.d_ff, config.d_model),
            nn.Dropout(config.dropout),
        )

    def forward(
        self,
        x: torch.Tensor,
        past: Optional[tuple[torch.Tensor, torch.Tensor]] = None,
        use_cache: bool = False,
    ) -> tuple[torch.Tensor, Optional[tuple[torch.Tensor, torch.Tensor]]]:
        a, present = self.attn(self.ln1(x), past=past, use_cache=use_cache)
        x = x + a
        x = x + self.mlp(self.ln2(x))
        return x, present


class TokenTransformer(nn.Module):
    """Causal transformer over semantic tokens and, optionally, acoustic frames."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.semantic_vocab.size, config.d_model)
        self.pos_emb = nn.Embedding(config.context_len, config.d_model)
        if config.acoustic_groups > 0:
            self.group_embs = nn.ModuleList(
                nn.Embedding(config.group_codebook + 1, config.group_embed_dim)
                for _ in range(config.acoustic_groups)
            )
        else:
            self.group_embs = nn.ModuleList()
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layers))
        self.ln_f = nn.LayerNorm(config.d_model)
        self.heads = nn.ModuleList(
            nn.Linear(config.d_model, config.head_vocab) for _ in range(config.n_output_heads)
        )
        self.forward_passes = 0
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def num_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def reset_forward_passes(self) -> None:
        self.forward_passes = 0

    # ---- embedding layout -------------------------------------------------

    def embed_tokens(self, ids: torch.Tensor) -> torch.Tensor:
        """(B, L) token ids -> (B, L, d_model), content embedding only."""
        return self.tok_emb(ids)

    def embed_frames(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, F, K) code ids -> (B, F, d_model) by concatenating group embeddings."""
        if self.config.acoustic_groups == 0:
            raise ValueError("model has no acoustic groups")
        if frames.shape[-1] != self.config.acoustic_groups:
            raise ValueError(
                f"frames carry {frames.shape[-1]} codes, model expects {self.config.acoustic_groups}"
            )
        parts = [emb(frames[..., g]) for g, emb in enumerate(self.group_embs)]
        return torch.cat(parts, dim=-1)

    def embed_mixed(self, sem_ids: torch.Tensor, frames: Optional[torch.Tensor]) -> torch.Tensor:
        """Lay out ``[semantic tokens][sep][frames]`` as one embedded sequence.

        ``sem_ids`` is (B, Ls); ``frames`` is (B, F, K) or None for an empty
        acoustic segment. Output length is Ls + 1 + F.
        """
        B = sem_ids.shape[0]
        sep = torch.full((B, 1), self.config.sep_id, dtype=torch.long, device=sem_ids.device)
        emb = self.embed_tokens(torch.cat([sem_ids, sep], dim=1))
        if frames is not None and frames.shape[1] > 0:
            emb = torch.cat([emb, self.embed_frames(frames)], dim=1)
        total = emb.shape[1]
        if total > self.config.context_len:
            raise ContextOverflowError(
                f"sequence of length {total} exceeds context_len {self.config.context_len}"
            )
        return emb

    # ---- transformer ------------------------------------------------------

    def forward(
        self,
        emb: torch.Tensor,
        cache: Optional[KVCache] = None,
        start_pos: int = 0,
        use_cache: bool = False,
    ) -> tuple[torch.Tensor, Optional[KVCache]]:
        """Run the transformer over an embedded sequence.

        Returns logits shaped (B, L, n_output_heads, head_vocab) and, when
        ``use_cache`` is set, the extended KV cache. ``start_pos`` is the
        absolute position of ``emb[:, 0]`` (non-zero only with a cache).
        """
        B, L, _ = emb.shape
        if L < 1:
            raise ValueError("forward needs at least one position")
        if start_pos + L > self.config.context_len:
            raise ContextOverflowError(
                f"positions [{start_pos}, {start_pos + L}) exceed context_len "
                f"{self.config.context_len}"
            )
        self.forward_passes += 1
        pos = torch.arange(start_pos, start_pos + L, device=emb.device)
        x = self.drop(emb + self.pos_emb(pos))
        new_cache: Optional[KVCache] = [] if use_cache else None
        for i, block in enumerate(self.blocks):
            past = cache[i] if cache is not None else None
            x, present = block(x, past=past, use_cache=use_cache)
            if not torch.isfinite(x).all():
                raise NonFiniteActivationError(i)
            if use_cache:
                new_cache.append(present)
        x = self.ln_f(x)
        logits = torch.stack([head(x) for head in self.heads], dim=2)
        return logits, new_cache


def nll_loss(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of target ids over unmasked entries.

    ``logits`` is (B, L, H, V); ``targets`` and ``mask`` are (B, L, H). The
    per-head terms at each position are summed, then averaged over positions
    with at least one active head, so a K-head frame contributes the sum of
    its K cross-entropies and single-head models get the ordinary per-token
    mean.
    """
    if logits.shape[:3] != targets.shape or targets.shape != mask.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)}, targets {tuple(targets.shape)}, mask {tuple(mask.shape)}")
    if not mask.any():
        raise AllMaskedError("loss mask excludes every target entry")
    logp = F.log_softmax(logits, dim=-1)
    picked = logp.gather(-1, targets.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    total = -(picked * mask).sum()
    positions = mask.any(dim=-1).sum()
    return total / positions
