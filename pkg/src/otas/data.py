"""In-memory video containers and clip slicing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class VideoFeatures:
    """One video's frame features [T x D] with optional per-frame labels [T]."""

    name: str
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise DataError(f"{self.name}: features must be [T x D]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise DataError(f"{self.name}: {len(self.labels)} labels for "
                                f"{self.features.shape[0]} frames")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Clip:
    """A window-size slice of a video, repeat-padded at the video's end."""

    features: np.ndarray          # [w x D]
    valid: np.ndarray             # [w] bool, False on padded frames
    labels: np.ndarray | None     # [w] int, padded tail repeats the last label
    start: int                    # frame index of the clip's first frame


def pad_to_window(x: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Repeat the last row until `window` rows; returns (padded, valid mask)."""
    t = x.shape[0]
    if t == 0 or t > window:
        raise DataError(f"cannot pad {t} frames to window {window}")
    valid = np.zeros(window, dtype=bool)
    valid[:t] = True
    if t == window:
        return x, valid
    pad = np.repeat(x[-1:], window - t, axis=0)
    return np.concatenate([x, pad], axis=0), valid


def iter_clips(video: VideoFeatures, window: int) -> list[Clip]:
    """Non-overlapping clips with stride equal to the window size."""
    clips = []
    for start in range(0, video.num_frames, window):
        feats = video.features[start:start + window]
        feats, valid = pad_to_window(feats, window)
        labels = None
        if video.labels is not None:
            raw = video.labels[start:start + window]
            labels = np.concatenate([raw, np.repeat(raw[-1:], window - len(raw))])
        clips.append(Clip(features=feats, valid=valid, labels=labels, start=start))
    return clips
