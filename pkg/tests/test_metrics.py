import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otas.errors import DataError
from otas.metrics import (MetricReport, Segment, SegmentList, accuracy,
                          edit_score, evaluate_dataset, evaluate_video, f1_at,
                          match_counts, parse_kv, report_kv, report_text)

label_seqs = st.lists(st.integers(0, 4), min_size=1, max_size=40)


def random_labels(r, n, classes=4):
    return r.integers(0, classes, size=n)


# -- independent oracles -----------------------------------------------------

def oracle_levenshtein(a, b):
    """Two-row DP, written separately from the implementation's full matrix."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (0 if x == y else 1)))
        prev = cur
    return prev[-1]


def oracle_match_counts(pred: SegmentList, gt: SegmentList, threshold):
    """Set-based restatement of the matcher: frame-index sets, explicit IoU."""
    gt_frames = [set(range(s.start, s.end)) for s in gt.segments]
    claimed = [False] * len(gt.segments)
    tp = fp = 0
    for p in pred.segments:
        pf = set(range(p.start, p.end))
        best_iou, best_idx = None, None
        for gi, g in enumerate(gt.segments):
            inter = len(pf & gt_frames[gi])
            union = len(pf | gt_frames[gi])
            iou = (inter / union) if g.label == p.label else 0.0
            if best_iou is None or iou > best_iou:
                best_iou, best_idx = iou, gi
        if best_iou >= threshold and not claimed[best_idx]:
            tp += 1
            claimed[best_idx] = True
        else:
            fp += 1
    return tp, fp, sum(1 for c in claimed if not c)


# -- segment lists -----------------------------------------------------------

class TestSegmentList:
    def test_rle_roundtrip(self):
        r = np.random.default_rng(0)
        for _ in range(50):
            labels = random_labels(r, int(r.integers(1, 60)))
            rle = SegmentList.from_labels(labels)
            np.testing.assert_array_equal(rle.expand(), labels)
            again = SegmentList.from_labels(rle.expand())
            assert again.labels == rle.labels
            assert [s.length for s in again.segments] == [s.length for s in rle.segments]

    def test_maximal_runs(self):
        rle = SegmentList.from_labels([1, 1, 2, 2, 2, 1])
        assert rle.labels == [1, 2, 1]
        assert [s.length for s in rle.segments] == [2, 3, 1]
        for a, b in zip(rle.segments, rle.segments[1:]):
            assert a.label != b.label

    def test_lengths_sum_to_frames(self):
        rle = SegmentList.from_labels([0, 0, 1, 2, 2])
        assert sum(s.length for s in rle.segments) == 5 == rle.num_frames

    def test_ignore_label(self):
        rle = SegmentList.from_labels([0, -1, -1, 2], ignore_label=-1)
        assert rle.labels == [0, 2]

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            SegmentList.from_labels([])


class TestAccuracy:
    def test_identical(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 100.0

    def test_three_of_four(self):
        assert accuracy([1, 1, 2, 2], [1, 1, 2, 3]) == 75.0

    def test_counting_oracle(self):
        r = np.random.default_rng(1)
        for _ in range(1000):
            n = int(r.integers(1, 30))
            a, b = random_labels(r, n), random_labels(r, n)
            expected = 100.0 * sum(1 for x, y in zip(a, b) if x == y) / n
            assert accuracy(a, b) == expected

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            accuracy([1, 2], [1, 2, 3])


class TestEditScore:
    def test_identical_order_any_durations(self):
        pred = SegmentList.from_labels([0] * 10 + [1] * 2 + [2] * 30)
        gt = SegmentList.from_labels([0] * 2 + [1] * 25 + [2] * 3)
        assert edit_score(pred, gt) == 100.0

    def test_hand_case_two_thirds(self):
        gt = SegmentList.from_labels([0] * 4 + [1] * 4 + [2] * 4)
        pred = SegmentList.from_labels([0] * 6 + [2] * 6)
        assert edit_score(pred, gt) == pytest.approx(66.67, abs=0.005)

    def test_dp_oracle(self):
        r = np.random.default_rng(2)
        for _ in range(1000):
            a = random_labels(r, int(r.integers(1, 25)))
            b = random_labels(r, int(r.integers(1, 25)))
            pred, gt = SegmentList.from_labels(a), SegmentList.from_labels(b)
            dist = oracle_levenshtein(pred.labels, gt.labels)
            expected = max(0.0, 100.0 * (1 - dist / max(len(pred), len(gt))))
            assert edit_score(pred, gt) == pytest.approx(expected, abs=1e-9)

    def test_empty_rejected(self):
        gt = SegmentList.from_labels([1])
        with pytest.raises(DataError):
            edit_score(SegmentList([]), gt)


class TestF1:
    def test_identical_is_perfect(self):
        labels = [0] * 5 + [1] * 7 + [0] * 3
        rle = SegmentList.from_labels(labels)
        for k in (10, 25, 50):
            assert f1_at(rle, rle, k) == 100.0

    def test_split_segment_hand_case(self):
        gt = SegmentList([Segment(7, 0, 100)])
        pred = SegmentList([Segment(7, 0, 50), Segment(7, 50, 100)])
        tp, fp, fn = match_counts(pred, gt, 0.5)
        assert (tp, fp, fn) == (1, 1, 0)
        assert f1_at(pred, gt, 50) == pytest.approx(66.67, abs=0.005)

    def test_exhaustive_oracle(self):
        r = np.random.default_rng(3)
        checked = 0
        while checked < 500:
            a = random_labels(r, int(r.integers(3, 40)), classes=3)
            b = random_labels(r, int(r.integers(3, 40)), classes=3)
            pred, gt = SegmentList.from_labels(a), SegmentList.from_labels(b)
            if len(pred) > 6 or len(gt) > 6:
                continue
            checked += 1
            for k in (0.1, 0.25, 0.5):
                assert match_counts(pred, gt, k) == oracle_match_counts(pred, gt, k)

    def test_monotone_in_threshold(self):
        r = np.random.default_rng(4)
        for _ in range(300):
            n = int(r.integers(2, 50))
            pred = SegmentList.from_labels(random_labels(r, n))
            gt = SegmentList.from_labels(random_labels(r, n))
            f10, f25, f50 = (f1_at(pred, gt, k) for k in (10, 25, 50))
            assert f50 <= f25 + 1e-9
            assert f25 <= f10 + 1e-9

    def test_empty_ground_truth_rejected(self):
        pred = SegmentList.from_labels([1, 1])
        with pytest.raises(DataError):
            f1_at(pred, SegmentList([]), 50)


class TestMetricProperties:
    @given(label_seqs, st.permutations(list(range(5))))
    @settings(max_examples=60, deadline=None)
    def test_relabeling_invariance(self, labels, perm):
        r = np.random.default_rng(5)
        gt = np.asarray(labels)
        pred = gt.copy()
        flips = r.random(len(gt)) < 0.3
        pred[flips] = r.integers(0, 5, size=int(flips.sum()))
        mapped = np.asarray(perm)
        rep = evaluate_video(pred, gt)
        rep2 = evaluate_video(mapped[pred], mapped[gt])
        assert rep.acc == pytest.approx(rep2.acc)
        assert rep.edit == pytest.approx(rep2.edit)
        for k in rep.f1:
            assert rep.f1[k] == pytest.approx(rep2.f1[k])

    @given(label_seqs, st.integers(2, 5))
    @settings(max_examples=60, deadline=None)
    def test_temporal_rescaling_invariance(self, labels, factor):
        r = np.random.default_rng(6)
        gt = np.asarray(labels)
        pred = gt.copy()
        flips = r.random(len(gt)) < 0.3
        pred[flips] = r.integers(0, 5, size=int(flips.sum()))
        rep = evaluate_video(pred, gt)
        rep2 = evaluate_video(np.repeat(pred, factor), np.repeat(gt, factor))
        assert rep.edit == pytest.approx(rep2.edit)
        for k in rep.f1:
            assert rep.f1[k] == pytest.approx(rep2.f1[k])

    def test_scores_bounded(self):
        r = np.random.default_rng(7)
        for _ in range(200):
            n = int(r.integers(1, 40))
            rep = evaluate_video(random_labels(r, n), random_labels(r, n))
            for v in rep.as_dict().values():
                assert 0.0 <= v <= 100.0


class TestReports:
    def test_seg_is_mean_of_edit_and_f1(self):
        rep = MetricReport(acc=50.0, edit=80.0, f1={10: 60.0, 25: 40.0, 50: 20.0})
        assert rep.seg == pytest.approx((80.0 + 60.0 + 40.0 + 20.0) / 4)

    def test_kv_roundtrip(self):
        rep = evaluate_video([0, 0, 1, 1, 0], [0, 0, 1, 2, 0])
        parsed = parse_kv(report_kv(rep))
        for k, v in rep.as_dict().items():
            assert parsed[k] == pytest.approx(v, abs=5e-5)

    def test_text_report_lists_all_metrics(self):
        text = report_text(evaluate_video([0, 1], [0, 1]))
        for key in ("acc", "edit", "f1@10", "f1@25", "f1@50", "seg"):
            assert key in text

    def test_dataset_aggregation(self):
        a = (np.array([0, 0, 1, 1]), np.array([0, 0, 1, 1]))
        b = (np.array([0, 1, 1, 2]), np.array([0, 0, 1, 1]))
        rep = evaluate_dataset([a, b])
        assert rep.acc == pytest.approx(100.0 * 6 / 8)
        per_video_edit = np.mean([evaluate_video(*a).edit, evaluate_video(*b).edit])
        assert rep.edit == pytest.approx(per_video_edit)
