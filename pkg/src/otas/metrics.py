"""Frame-wise and segmental metrics for temporal action segmentation.

Conventions follow the reference evaluation used by the single- and
multi-stage TCN line of work: the edit score is a length-normalized
Levenshtein distance over segment label sequences, and F1@k matches each
predicted segment, in temporal order, to its highest-IoU same-class ground
truth segment, consuming that segment if the overlap clears the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Segment:
    label: int
    start: int   # inclusive frame index
    end: int     # exclusive frame index

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class SegmentList:
    """Ordered (label, length) runs with derived start/end indices."""

    segments: list[Segment] = field(default_factory=list)

    @classmethod
    def from_labels(cls, labels, ignore_label: int | None = None) -> "SegmentList":
        labels = np.asarray(labels)
        if labels.ndim != 1 or len(labels) == 0:
            raise DataError("label sequence must be a nonempty vector")
        segs: list[Segment] = []
        start = 0
        for t in range(1, len(labels) + 1):
            if t == len(labels) or labels[t] != labels[start]:
                if ignore_label is None or labels[start] != ignore_label:
                    segs.append(Segment(int(labels[start]), start, t))
                start = t
        return cls(segs)

    def expand(self) -> np.ndarray:
        """Inverse of `from_labels` for gap-free maximal-run lists."""
        out = np.empty(self.num_frames, dtype=np.int64)
        for s in self.segments:
            out[s.start:s.end] = s.label
        return out

    @property
    def labels(self) -> list[int]:
        return [s.label for s in self.segments]

    @property
    def num_frames(self) -> int:
        return 0 if not self.segments else self.segments[-1].end

    def __len__(self) -> int:
        return len(self.segments)


@dataclass
class MetricReport:
    acc: float
    edit: float
    f1: dict[int, float]

    @property
    def seg(self) -> float:
        """Mean of the edit score and the F1 values."""
        return float(np.mean([self.edit] + [self.f1[k] for k in sorted(self.f1)]))

    def as_dict(self) -> dict[str, float]:
        out = {"acc": self.acc, "edit": self.edit}
        for k in sorted(self.f1):
            out[f"f1@{k}"] = self.f1[k]
        out["seg"] = self.seg
        return out


DEFAULT_OVERLAPS = (10, 25, 50)


def accuracy(pred_labels, gt_labels) -> float:
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape or pred_labels.ndim != 1:
        raise DataError(f"length mismatch: {pred_labels.shape} vs {gt_labels.shape}")
    if len(gt_labels) == 0:
        raise DataError("empty label sequences")
    return 100.0 * float((pred_labels == gt_labels).sum()) / len(gt_labels)


def levenshtein(a: list, b: list) -> int:
    m, n = len(a), len(b)
    dist = np.zeros((m + 1, n + 1), dtype=np.int64)
    dist[:, 0] = np.arange(m + 1)
    dist[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                dist[i, j] = dist[i - 1, j - 1]
            else:
                dist[i, j] = 1 + min(dist[i - 1, j], dist[i, j - 1], dist[i - 1, j - 1])
    return int(dist[m, n])


def edit_score(pred: SegmentList, gt: SegmentList) -> float:
    """100 * (1 - normalized Levenshtein over segment label order)."""
    if not pred.segments or not gt.segments:
        raise DataError("edit score needs nonempty segment lists")
    dist = levenshtein(pred.labels, gt.labels)
    score = 100.0 * (1.0 - dist / max(len(pred), len(gt)))
    return max(0.0, score)


def match_counts(pred: SegmentList, gt: SegmentList, threshold: float) -> tuple[int, int, int]:
    """Greedy in-order segment matching; returns (tp, fp, fn).

    Each predicted segment picks its single best-IoU same-class ground-truth
    segment (first on ties); it counts as a true positive only if that
    segment clears the overlap threshold and is still unclaimed.
    """
    if not gt.segments:
        raise DataError("empty ground truth segmentation")
    if threshold <= 0 or threshold > 1:
        raise DataError("overlap threshold must be in (0, 1]")
    tp = fp = 0
    claimed = np.zeros(len(gt), dtype=bool)
    gt_start = np.array([s.start for s in gt.segments])
    gt_end = np.array([s.end for s in gt.segments])
    gt_label = np.array([s.label for s in gt.segments])
    for p in pred.segments:
        inter = np.minimum(p.end, gt_end) - np.maximum(p.start, gt_start)
        union = np.maximum(p.end, gt_end) - np.minimum(p.start, gt_start)
        iou = (inter / union) * (gt_label == p.label)
        best = int(iou.argmax())
        if iou[best] >= threshold and not claimed[best]:
            tp += 1
            claimed[best] = True
        else:
            fp += 1
    fn = int(len(gt) - claimed.sum())
    return tp, fp, fn


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def f1_at(pred: SegmentList, gt: SegmentList, overlap_percent: float) -> float:
    return f1_from_counts(*match_counts(pred, gt, overlap_percent / 100.0))


def evaluate_video(pred_labels, gt_labels,
                   overlaps=DEFAULT_OVERLAPS,
                   ignore_label: int | None = None) -> MetricReport:
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    acc = accuracy(pred_labels, gt_labels)
    pred_rle = SegmentList.from_labels(pred_labels, ignore_label)
    gt_rle = SegmentList.from_labels(gt_labels, ignore_label)
    f1 = {k: f1_at(pred_rle, gt_rle, k) for k in overlaps}
    return MetricReport(acc=acc, edit=edit_score(pred_rle, gt_rle), f1=f1)


def evaluate_dataset(pairs, overlaps=DEFAULT_OVERLAPS,
                     ignore_label: int | None = None) -> MetricReport:
    """Aggregate over (pred_labels, gt_labels) pairs.

    Accuracy pools frames, the edit score averages per video, and F1 pools
    true/false positives across videos before the harmonic mean.
    """
    pairs = list(pairs)
    if not pairs:
        raise DataError("no videos to evaluate")
    correct = total = 0
    edits = []
    counts = {k: np.zeros(3, dtype=np.int64) for k in overlaps}
    for pred_labels, gt_labels in pairs:
        pred_labels = np.asarray(pred_labels)
        gt_labels = np.asarray(gt_labels)
        if pred_labels.shape != gt_labels.shape:
            raise DataError("prediction/ground-truth length mismatch")
        correct += int((pred_labels == gt_labels).sum())
        total += len(gt_labels)
        pred_rle = SegmentList.from_labels(pred_labels, ignore_label)
        gt_rle = SegmentList.from_labels(gt_labels, ignore_label)
        edits.append(edit_score(pred_rle, gt_rle))
        for k in overlaps:
            counts[k] += match_counts(pred_rle, gt_rle, k / 100.0)
    f1 = {k: f1_from_counts(*counts[k]) for k in overlaps}
    return MetricReport(acc=100.0 * correct / total,
                        edit=float(np.mean(edits)), f1=f1)


def report_text(report: MetricReport) -> str:
    rows = report.as_dict()
    width = max(len(k) for k in rows)
    return "\n".join(f"{k.ljust(width)}  {v:6.2f}" for k, v in rows.items())


def report_kv(report: MetricReport) -> str:
    return "\n".join(f"{k}={v:.4f}" for k, v in report.as_dict().items())


def parse_kv(text: str) -> dict[str, float]:
    out = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition("=")
        out[key.strip()] = float(value)
    return out
