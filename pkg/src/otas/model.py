"""Model assembly: input GRU/augmentation, causal TCN classifier, clip loss.

Two architectures share the clip-wise engine: "tcn" is the plain causal
dilated TCN baseline operating on raw features; "full" prepends the GRU,
the memory bank, and the feature-augmentation stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .cfa import CfaConfig, ClipState, ContextAugmenter
from .errors import DataError, UsageError
from .memory import ClipCompressor, MemoryBank
from .nn import Conv1dTime, Module, ModuleList
from .tensor import Tensor, assert_finite, pick_rowwise


@dataclass
class LossConfig:
    smoothing_weight: float = 0.15   # balance between classification and smoothing
    truncation: float = 4.0          # clamp on per-class log-prob jumps

    def validate(self) -> None:
        if self.smoothing_weight < 0:
            raise UsageError("smoothing weight must be >= 0")
        if self.truncation <= 0:
            raise UsageError("truncation threshold must be > 0")


@dataclass
class ModelConfig:
    input_dim: int
    hidden_dim: int
    num_classes: int
    window: int
    tcn_layers: int = 10
    kernel_size: int = 3
    arch: str = "full"               # "full" or "tcn"
    cfa: CfaConfig | None = None

    def __post_init__(self):
        if self.arch not in ("full", "tcn"):
            raise UsageError(f"unknown arch {self.arch!r}")
        if self.cfa is None:
            self.cfa = CfaConfig(hidden_dim=self.hidden_dim, window=self.window)
        else:
            if self.cfa.hidden_dim != self.hidden_dim or self.cfa.window != self.window:
                raise UsageError("augmentation config dims must match the model's")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("cfa") is not None:
            d["cfa"] = CfaConfig(**d["cfa"])
        return cls(**d)


class DilatedResidualBlock(Module):
    def __init__(self, channels: int, kernel_size: int, dilation: int,
                 rng: np.random.Generator):
        super().__init__()
        self.conv = Conv1dTime(channels, channels, kernel_size, rng,
                               dilation=dilation, causal=True)
        self.pointwise = Conv1dTime(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.pointwise(self.conv(x).relu())


class CausalTCN(Module):
    """Single-stage TCN: 1x1 input projection then dilated residual layers."""

    def __init__(self, in_dim: int, channels: int, layers: int,
                 kernel_size: int, rng: np.random.Generator):
        super().__init__()
        self.in_proj = Conv1dTime(in_dim, channels, 1, rng)
        self.blocks = ModuleList([
            DilatedResidualBlock(channels, kernel_size, 2 ** i, rng)
            for i in range(layers)
        ])

    def forward(self, x: Tensor) -> Tensor:
        h = self.in_proj(x)
        for block in self.blocks:
            h = block(h)
        return h


class SegmentationModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        cfg.cfa.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        if cfg.arch == "full":
            self.augmenter = ContextAugmenter(cfg.input_dim, cfg.cfa, rng)
            self.compressor = ClipCompressor(cfg.window, cfg.hidden_dim, rng)
            self.tcn = CausalTCN(cfg.hidden_dim, cfg.hidden_dim,
                                 cfg.tcn_layers, cfg.kernel_size, rng)
        else:
            self.tcn = CausalTCN(cfg.input_dim, cfg.hidden_dim,
                                 cfg.tcn_layers, cfg.kernel_size, rng)
        self.classifier = Conv1dTime(cfg.hidden_dim, cfg.num_classes, 1, rng)

    @property
    def uses_memory(self) -> bool:
        return self.cfg.arch == "full"

    def new_bank(self) -> MemoryBank | None:
        return MemoryBank(self.cfg.window) if self.uses_memory else None

    def initial_state(self) -> ClipState | None:
        return self.augmenter.initial_state() if self.uses_memory else None

    def forward_clip(self, clip: Tensor, bank: MemoryBank | None,
                     state: ClipState | None
                     ) -> tuple[Tensor, Tensor | None, ClipState | None]:
        """Process one [w x D] clip; returns (logits, enhanced features, state).

        On the first clip of a video the bank initializes itself from the
        clip's own GRU embedding, which is also what it serves as memory for
        that clip. The caller folds the returned enhanced features into the
        bank after using the logits.
        """
        if clip.shape != (self.cfg.window, self.cfg.input_dim):
            raise UsageError(f"clip shape {clip.shape} != "
                             f"({self.cfg.window}, {self.cfg.input_dim})")
        if not self.uses_memory:
            logits = self.classifier(self.tcn(clip))
            return logits, None, state
        if bank is None:
            raise UsageError("full model requires a memory bank")
        c_gru, next_state = self.augmenter.accumulate(clip, state)
        if not bank.initialized:
            bank.init(c_gru)
        c_tilde = self.augmenter.augment(c_gru, bank.as_query_tokens())
        logits = self.classifier(self.tcn(c_tilde))
        assert_finite(logits, "clip logits")
        return logits, c_tilde, next_state

    def update_memory(self, bank: MemoryBank, c_tilde: Tensor) -> None:
        bank.update(c_tilde, self.compressor)


def clip_loss(logits: Tensor, labels: np.ndarray, valid: np.ndarray | None,
              cfg: LossConfig) -> Tensor:
    """Per-clip loss: masked cross-entropy plus truncated smoothing.

    The smoothing term squares per-class jumps in log-probability between
    consecutive frames, clamped at the truncation threshold, and is
    normalized by (valid frames x classes). Padded frames drop out of both
    terms; gradients flow through both sides of each frame pair.
    """
    cfg.validate()
    w, num_classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (w,):
        raise UsageError(f"{labels.shape} labels for {w} logits rows")
    if valid is None:
        valid = np.ones(w, dtype=bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise UsageError("clip has no valid frames")
    checked = labels[valid]
    if checked.min(initial=0) < 0 or checked.max(initial=0) >= num_classes:
        raise DataError("label outside the class set")

    logp = logits.log_softmax(-1)
    # Padded rows still need in-range indices; their terms are masked out.
    safe_labels = np.where(valid, labels, 0)
    picked = pick_rowwise(logp, safe_labels)
    ce = -(picked * Tensor(valid.astype(logp.data.dtype))).sum() / float(n_valid)

    loss = ce
    if cfg.smoothing_weight > 0 and w >= 2:
        delta = (logp[1:] - logp[:-1]).abs().clamp_max(cfg.truncation)
        pair = (valid[1:] & valid[:-1]).astype(logp.data.dtype)[:, None]
        smooth = (delta * delta * Tensor(pair)).sum() / float(n_valid * num_classes)
        loss = ce + smooth * cfg.smoothing_weight
    assert_finite(loss, "clip loss")
    return loss
