"""Per-frame prediction streams shared by inference, post-processing, and eval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class PredictionStream:
    """Per-frame labels and confidences, optionally with full probabilities.

    `confidences` is the maximum softmax probability of each frame. For raw
    model output the label is the argmax of `probs`; refined streams keep the
    original probabilities alongside replaced labels, so no argmax invariant
    is enforced here.
    """

    labels: np.ndarray                 # [T] int
    confidences: np.ndarray            # [T] float in (0, 1]
    probs: np.ndarray | None = None    # [T x C] rows on the simplex

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.confidences = np.asarray(self.confidences, dtype=np.float64)
        if self.labels.ndim != 1 or self.confidences.shape != self.labels.shape:
            raise DataError("labels and confidences must be equal-length vectors")
        if len(self.labels) == 0:
            raise DataError("empty prediction stream")
        if (self.confidences <= 0).any() or (self.confidences > 1).any():
            raise DataError("confidences must lie in (0, 1]")
        if self.probs is not None:
            self.probs = np.asarray(self.probs, dtype=np.float64)
            if self.probs.shape[0] != len(self.labels):
                raise DataError("probability rows must match stream length")
            if np.abs(self.probs.sum(-1) - 1.0).max() > 1e-5:
                raise DataError("probability rows must sum to 1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int | None:
        return None if self.probs is None else self.probs.shape[1]

    def with_labels(self, labels: np.ndarray) -> "PredictionStream":
        return PredictionStream(labels=np.asarray(labels),
                                confidences=self.confidences.copy(),
                                probs=None if self.probs is None else self.probs.copy())

    def prefix(self, t: int) -> "PredictionStream":
        return PredictionStream(labels=self.labels[:t],
                                confidences=self.confidences[:t],
                                probs=None if self.probs is None else self.probs[:t])
