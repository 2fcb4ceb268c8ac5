"""Adaptive short/long-term memory over clip-level context.

The bank holds a fixed total budget of `w` hidden-dim tokens. Long-term
tokens are one-per-clip summaries produced by collapsing a clip's enhanced
features over time; the short-term part is the tail slice of the previous
clip's enhanced features, sized to whatever budget the long side leaves
free. Long-term growth is capped: once its length exceeds two thirds of the
budget, the oldest token is dropped for each new one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UsageError
from .nn import Linear, Module
from .tensor import Tensor, concat


@dataclass
class MemoryToken:
    vector: Tensor  # [H]
    source_clip: int


class ClipCompressor(Module):
    """Collapse a [w x H] clip to a single [H] token.

    Implemented as one full-window temporal convolution: every output channel
    is a learned weighted sum over all (time, channel) positions of the clip.
    """

    def __init__(self, window: int, hidden_dim: int, rng: np.random.Generator):
        super().__init__()
        self.window = window
        self.hidden_dim = hidden_dim
        self.proj = Linear(window * hidden_dim, hidden_dim, rng)

    def forward(self, c_tilde: Tensor) -> Tensor:
        if c_tilde.shape != (self.window, self.hidden_dim):
            raise UsageError(f"compressor expects ({self.window}, {self.hidden_dim}), "
                             f"got {c_tilde.shape}")
        return self.proj(c_tilde.reshape(1, self.window * self.hidden_dim))[0]


class MemoryBank:
    """Per-video token store: [long-term tokens || short-term tail]."""

    def __init__(self, budget: int):
        if budget < 1:
            raise UsageError("memory budget must be positive")
        self.budget = budget
        self.long: list[MemoryToken] = []
        self.short: Tensor | None = None
        self.clip_count = 0
        self._prev_enhanced: Tensor | None = None

    @property
    def initialized(self) -> bool:
        return self.short is not None

    def long_len(self) -> int:
        return len(self.long)

    def short_len(self) -> int:
        return 0 if self.short is None else self.short.shape[0]

    def init(self, first_clip_embedded: Tensor) -> None:
        """Start a video: short memory is the whole embedded first clip."""
        if first_clip_embedded.shape[0] != self.budget:
            raise UsageError(f"initialization clip has {first_clip_embedded.shape[0]} "
                             f"tokens, budget is {self.budget} (pad upstream)")
        self.long = []
        self.short = first_clip_embedded
        self._prev_enhanced = first_clip_embedded
        self.clip_count = 0

    def update(self, c_tilde: Tensor, compress: Callable[[Tensor], Tensor]) -> None:
        """Fold clip k's enhanced features in after its forward pass.

        Long side: append the clip's collapsed token while 3*len <= 2*budget,
        otherwise drop the oldest first. Short side: the previous clip's
        enhanced features, sliced from index len(long) to the end.
        """
        if not self.initialized:
            raise UsageError("memory bank not initialized")
        if c_tilde.shape[0] != self.budget:
            raise UsageError(f"enhanced clip has {c_tilde.shape[0]} frames, "
                             f"budget is {self.budget}")
        k = self.clip_count + 1
        token = MemoryToken(compress(c_tilde), k)
        if 3 * len(self.long) <= 2 * self.budget:
            self.long.append(token)
        else:
            self.long = self.long[1:] + [token]
        self.short = self._prev_enhanced[len(self.long):]
        self._prev_enhanced = c_tilde
        self.clip_count = k

    def as_query_tokens(self) -> Tensor:
        """Concatenate [long || short] into a [w x H] query tensor."""
        if not self.initialized:
            raise UsageError("memory bank not initialized")
        parts = [t.vector.reshape(1, -1) for t in self.long]
        if self.short.shape[0]:
            parts.append(self.short)
        return parts[0] if len(parts) == 1 else concat(parts, axis=0)

    # -- serialization (session resume) -------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {
            "budget": np.array([self.budget], dtype=np.int64),
            "clip_count": np.array([self.clip_count], dtype=np.int64),
            "long_clips": np.array([t.source_clip for t in self.long], dtype=np.int64),
        }
        if self.long:
            state["long_vectors"] = np.stack([t.vector.data for t in self.long])
        if self.initialized:
            state["short"] = self.short.data.copy()
            state["prev_enhanced"] = self._prev_enhanced.data.copy()
        return state

    @classmethod
    def from_state_arrays(cls, state: dict[str, np.ndarray]) -> "MemoryBank":
        bank = cls(int(state["budget"][0]))
        bank.clip_count = int(state["clip_count"][0])
        clips = state["long_clips"]
        if len(clips):
            vectors = state["long_vectors"]
            bank.long = [MemoryToken(Tensor(v), int(c)) for v, c in zip(vectors, clips)]
        if "short" in state:
            bank.short = Tensor(state["short"])
            bank._prev_enhanced = Tensor(state["prev_enhanced"])
        return bank
