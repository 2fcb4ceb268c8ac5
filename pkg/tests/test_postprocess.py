import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otas.errors import UsageError
from otas.postprocess import PostProcessConfig, SweepRow, refine, refine_stream, sweep
from otas.streams import PredictionStream
from otas.synthdata import corrupt, ideal_stream


def stream_of(labels, confs):
    return PredictionStream(labels=np.asarray(labels),
                            confidences=np.asarray(confs, dtype=float))


def random_stream(r, n=None, classes=4):
    n = n or int(r.integers(1, 80))
    return stream_of(r.integers(0, classes, size=n),
                     r.uniform(0.05, 0.999, size=n))


def cfg_for(theta, lmin, t_max=64):
    # pick the scale that floors to the wanted minimum length
    sigma = (lmin + 0.5) / t_max
    cfg = PostProcessConfig(confidence_threshold=theta, length_scale=sigma,
                            t_max=t_max)
    assert cfg.min_len == lmin
    return cfg


class TestConfig:
    def test_min_len_floor_and_floor_of_one(self):
        assert PostProcessConfig(0.5, 1 / 16, 800).min_len == 50
        assert PostProcessConfig(0.5, 1 / 16, 3).min_len == 1

    def test_validation(self):
        with pytest.raises(UsageError):
            PostProcessConfig(1.5, 0.1, 10)
        with pytest.raises(UsageError):
            PostProcessConfig(0.5, 0.0, 10)
        with pytest.raises(UsageError):
            PostProcessConfig(0.5, 1.0, 10)
        with pytest.raises(UsageError):
            PostProcessConfig(0.5, 0.1, 0)


class TestRefine:
    def test_theta_zero_is_identity(self):
        r = np.random.default_rng(0)
        for _ in range(50):
            s = random_stream(r)
            out = refine(s, cfg_for(0.0, 4))
            np.testing.assert_array_equal(out.labels, s.labels)

    def test_worked_five_frame_example(self):
        s = stream_of([0, 0, 1, 0, 0], [.95, .95, .30, .95, .95])
        out = refine(s, cfg_for(0.5, 2))
        assert out.labels.tolist() == [0, 0, 0, 0, 0]

    def test_first_frame_always_retained(self):
        s = stream_of([3, 1, 1], [0.01, 0.99, 0.99])
        out = refine(s, cfg_for(0.9, 4))
        assert out.labels[0] == 3

    def test_counter_resets_on_retained_frame(self):
        # frames 1-2 copy, frame 3 is confident (reset), frames 4-5 copy again
        s = stream_of([0, 1, 1, 0, 2, 2], [.99, .1, .1, .99, .1, .1])
        out = refine(s, cfg_for(0.5, 2))
        assert out.labels.tolist() == [0, 0, 0, 0, 0, 0]
        assert out.counter_trace.tolist() == [0, 1, 2, 0, 1, 2]

    def test_theta_one_minimum_change_spacing(self):
        r = np.random.default_rng(1)
        for _ in range(1000):
            lmin = int(r.integers(1, 7))
            s = random_stream(r, n=int(r.integers(2, 60)))
            # keep confidences strictly below 1 so every frame is unreliable
            out = refine(s, cfg_for(1.0, lmin))
            changes = np.flatnonzero(np.diff(out.labels)) + 1
            gaps = np.diff(np.concatenate([[0], changes]))
            assert (gaps >= lmin + 1).all()

    def test_prefix_stability(self):
        r = np.random.default_rng(2)
        for _ in range(1000):
            s = random_stream(r)
            cfg = cfg_for(float(r.uniform(0, 1)), int(r.integers(1, 9)))
            full = refine(s, cfg).labels
            t = int(r.integers(1, len(s) + 1))
            partial = refine(s.prefix(t), cfg).labels
            np.testing.assert_array_equal(full[:t], partial)

    def test_labels_are_conserved(self):
        r = np.random.default_rng(3)
        for _ in range(200):
            s = random_stream(r)
            out = refine(s, cfg_for(float(r.uniform(0, 1)), int(r.integers(1, 9))))
            for t in range(len(s)):
                assert out.labels[t] in s.labels[:t + 1]

    def test_deterministic(self):
        s = random_stream(np.random.default_rng(4))
        cfg = cfg_for(0.7, 3)
        a, b = refine(s, cfg), refine(s, cfg)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.counter_trace, b.counter_trace)

    @given(st.integers(0, 2 ** 30))
    @settings(max_examples=40, deadline=None)
    def test_prefix_stability_property(self, seed):
        r = np.random.default_rng(seed)
        s = random_stream(r)
        cfg = cfg_for(float(r.uniform(0, 1)), int(r.integers(1, 9)))
        t = int(r.integers(1, len(s) + 1))
        np.testing.assert_array_equal(refine(s, cfg).labels[:t],
                                      refine(s.prefix(t), cfg).labels)

    def test_unknown_variant_rejected(self):
        with pytest.raises(UsageError):
            refine(random_stream(np.random.default_rng(5)), cfg_for(0.5, 2),
                   variant="other")


class TestSegmentVariant:
    def test_segment_counter_tracks_run_length(self):
        # a long confident run exceeds lmin, so a later dip is retained
        labels = [0] * 6 + [1]
        confs = [.99] * 6 + [.1]
        out = refine(stream_of(labels, confs), cfg_for(0.5, 3), variant="segment")
        assert out.labels.tolist() == labels  # run of 6 >= lmin, keep the dip
        counter = refine(stream_of(labels, confs), cfg_for(0.5, 3), variant="counter")
        assert counter.labels.tolist() == [0] * 7  # counter variant copies it

    def test_variants_agree_at_theta_zero(self):
        r = np.random.default_rng(6)
        s = random_stream(r)
        np.testing.assert_array_equal(
            refine(s, cfg_for(0.0, 3), variant="segment").labels,
            refine(s, cfg_for(0.0, 3), variant="counter").labels)


class TestRefineStream:
    def test_probabilities_pass_through(self):
        base = ideal_stream(np.array([0, 0, 1, 1]), num_classes=3, seed=7)
        noisy = corrupt(base, 0.4, seed=8)
        cfg = cfg_for(0.9, 2)
        refined = refine_stream(noisy, cfg)
        np.testing.assert_array_equal(refined.probs, noisy.probs)
        np.testing.assert_array_equal(refined.confidences, noisy.confidences)


class TestSweep:
    def make_items(self, n_videos=4, t=200, classes=5, seed=9):
        r = np.random.default_rng(seed)
        items = []
        for i in range(n_videos):
            gt = np.repeat(r.integers(0, classes, size=6), t // 6)
            base = ideal_stream(gt, classes, seed=seed + i)
            items.append((corrupt(base, 0.08, seed=seed + 100 + i), gt))
        return items

    def test_theta_zero_row_equals_raw_metrics(self):
        items = self.make_items()
        rows = sweep(items, [0.0], [1 / 16], t_max=200)
        from otas.metrics import evaluate_dataset
        raw = evaluate_dataset([(s.labels, gt) for s, gt in items])
        assert rows[0].report.as_dict() == raw.as_dict()

    def test_high_theta_beats_low_theta(self):
        items = self.make_items()
        rows = {(r.theta, r.sigma): r.report for r in
                sweep(items, [0.3, 0.9], [1 / 16], t_max=200)}
        assert rows[(0.9, 1 / 16)].seg > rows[(0.3, 1 / 16)].seg + 10

    def test_sigma_plateau_when_runs_are_short(self):
        items = self.make_items()
        rows = {(r.theta, r.sigma): r.report for r in
                sweep(items, [0.9], [1 / 8, 1 / 4], t_max=200)}
        assert rows[(0.9, 1 / 8)].as_dict() == rows[(0.9, 1 / 4)].as_dict()

    def test_grid_shape(self):
        rows = sweep(self.make_items(n_videos=1), [0.1, 0.5, 0.9],
                     [1 / 32, 1 / 16], t_max=200)
        assert len(rows) == 6
        assert all(isinstance(r, SweepRow) for r in rows)
