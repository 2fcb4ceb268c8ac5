"""Context-aware feature augmentation.

A clip is first run through a GRU whose hidden state persists across the
clips of one video. The GRU features are then refined for a configurable
number of iterations, each iteration being: windowed self-attention over the
clip, a transformer-decoder re-encoding of the memory tokens against the
clip, and cross-attention from the clip into that encoding, closed by a
residual connection back onto the iteration's input. Iterations do not share
weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .nn import (GRU, Module, ModuleList, MultiHeadAttention, RelativeBias,
                 TransformerDecoderLayer, WindowedSelfAttention)
from .tensor import Tensor


@dataclass
class CfaConfig:
    hidden_dim: int
    window: int
    iterations: int = 2
    decoder_layers: int = 2
    decoder_heads: int = 8
    attn_heads: int = 4
    window_count: int = 2
    ffn_mult: int = 4
    pre_norm: bool = True

    def validate(self) -> None:
        if self.iterations < 1:
            raise UsageError("iterations must be >= 1")
        for heads in (self.decoder_heads, self.attn_heads):
            if self.hidden_dim % heads:
                raise UsageError(f"head count {heads} must divide hidden dim {self.hidden_dim}")
        if self.window < self.window_count:
            raise UsageError("window must hold at least one frame per attention window")


@dataclass
class ClipState:
    """GRU hidden carried across the clips of one video."""
    hidden: Tensor


class CfaIteration(Module):
    def __init__(self, cfg: CfaConfig, rng: np.random.Generator):
        super().__init__()
        window_len = -(-cfg.window // cfg.window_count)
        self.self_attn = WindowedSelfAttention(cfg.hidden_dim, cfg.attn_heads,
                                               window_len, rng,
                                               window_count=cfg.window_count)
        self.decoder = ModuleList([
            TransformerDecoderLayer(cfg.hidden_dim, cfg.decoder_heads, rng,
                                    ffn_mult=cfg.ffn_mult, pre_norm=cfg.pre_norm)
            for _ in range(cfg.decoder_layers)
        ])
        self.cross_attn = MultiHeadAttention(cfg.hidden_dim, cfg.attn_heads, rng)
        self.cross_bias = RelativeBias(cfg.window)

    def forward(self, clip_repr: Tensor, memory_tokens: Tensor) -> Tensor:
        clip_sa = self.self_attn(clip_repr)
        mem = memory_tokens
        for layer in self.decoder:
            mem = layer(mem, clip_repr)
        bias = self.cross_bias.matrix(clip_repr.shape[0], mem.shape[0])
        return self.cross_attn(clip_sa, mem, mem, attn_bias=bias) + clip_repr


class ContextAugmenter(Module):
    """GRU accumulation plus the iterated attention stack."""

    def __init__(self, input_dim: int, cfg: CfaConfig, rng: np.random.Generator):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.gru = GRU(input_dim, cfg.hidden_dim, rng)
        self.iterations = ModuleList([CfaIteration(cfg, rng)
                                      for _ in range(cfg.iterations)])

    def initial_state(self) -> ClipState:
        return ClipState(hidden=self.gru.initial_hidden())

    def accumulate(self, clip: Tensor, state: ClipState) -> tuple[Tensor, ClipState]:
        """Run the GRU over one clip; returns features and the carried state."""
        seq = self.gru(clip, state.hidden)
        return seq, ClipState(hidden=seq[-1])

    def augment(self, clip_repr: Tensor, memory_tokens: Tensor) -> Tensor:
        if memory_tokens.shape[-1] != clip_repr.shape[-1]:
            raise UsageError("memory and clip hidden dims differ")
        x = clip_repr
        for it in self.iterations:
            x = it(x, memory_tokens)
        return x
