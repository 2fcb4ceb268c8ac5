"""Confidence- and length-gated online label refinement.

A frame whose confidence falls below the threshold copies the previous
refined label, but only while the copy counter is below the minimum-length
budget; any retained frame resets the counter. The scan is strictly
left-to-right, so refinement is usable online and prefix-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UsageError
from .metrics import DEFAULT_OVERLAPS, MetricReport, evaluate_dataset
from .streams import PredictionStream

VARIANTS = ("counter", "segment")


@dataclass
class PostProcessConfig:
    confidence_threshold: float   # copy gate on the max softmax probability
    length_scale: float           # fraction of the longest training video
    t_max: int                    # longest training video, frames

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise UsageError("confidence threshold must be in [0, 1]")
        if not 0.0 < self.length_scale < 1.0:
            raise UsageError("length scale must be in (0, 1)")
        if self.t_max < 1:
            raise UsageError("t_max must be a positive frame count")

    @property
    def min_len(self) -> int:
        return max(1, math.floor(self.length_scale * self.t_max))


@dataclass
class RefinedStream:
    labels: np.ndarray          # [T] refined labels
    counter_trace: np.ndarray   # [T] counter value after each frame, for debugging

    def __len__(self) -> int:
        return len(self.labels)


def refine(stream: PredictionStream, cfg: PostProcessConfig,
           variant: str = "counter") -> RefinedStream:
    """Left-to-right label refinement.

    The default "counter" variant is the literal procedure: the counter
    counts consecutive copied frames and resets to zero on every retained
    frame, even when the retained label does not change. The "segment"
    variant instead tracks the length of the current refined segment, so a
    run of confident same-label frames keeps accumulating length.
    """
    if variant not in VARIANTS:
        raise UsageError(f"unknown refinement variant {variant!r}")
    theta = cfg.confidence_threshold
    lmin = cfg.min_len
    n = len(stream)
    out = np.empty(n, dtype=np.int64)
    trace = np.empty(n, dtype=np.int64)
    counter = 0
    for t in range(n):
        if t > 0 and stream.confidences[t] < theta and counter < lmin:
            out[t] = out[t - 1]
            counter += 1
        else:
            out[t] = stream.labels[t]
            if variant == "counter":
                counter = 0
            else:
                counter = 1 if t == 0 or out[t] != out[t - 1] else counter + 1
        trace[t] = counter
    return RefinedStream(labels=out, counter_trace=trace)


def refine_stream(stream: PredictionStream, cfg: PostProcessConfig,
                  variant: str = "counter") -> PredictionStream:
    """Refine and repackage with the original confidences and probabilities."""
    return stream.with_labels(refine(stream, cfg, variant).labels)


@dataclass
class SweepRow:
    theta: float
    sigma: float
    report: MetricReport


def sweep(items: Sequence[tuple[PredictionStream, np.ndarray]],
          theta_grid: Iterable[float], sigma_grid: Iterable[float],
          t_max: int, overlaps=DEFAULT_OVERLAPS,
          variant: str = "counter") -> list[SweepRow]:
    """Metric table over a (threshold, length-scale) grid.

    Each item pairs a prediction stream with its ground-truth labels; one row
    is produced per grid point using dataset-level aggregation.
    """
    items = list(items)
    if not items:
        raise UsageError("sweep needs at least one stream")
    rows = []
    for theta in theta_grid:
        for sigma in sigma_grid:
            cfg = PostProcessConfig(confidence_threshold=theta,
                                    length_scale=sigma, t_max=t_max)
            pairs = [(refine(stream, cfg, variant).labels, gt)
                     for stream, gt in items]
            rows.append(SweepRow(theta=theta, sigma=sigma,
                                 report=evaluate_dataset(pairs, overlaps)))
    return rows
