import warnings
from fractions import Fraction

import numpy as np
import pytest

from blockcast.errors import UndefinedMetricError
from blockcast.metrics_bench import (
    ComboMetrics,
    HorizonMetrics,
    TimingReport,
    auc_roc,
    benchmark,
    confusion_counts,
    emit_report,
    f1_score,
    format_metrics_markdown,
    horizon_metrics,
    read_metrics_csv,
    read_timings_csv,
    write_metrics_csv,
    write_timings_csv,
)


# -- brute-force references ---------------------------------------------------

def reference_f1(labels, probs, threshold=0.5):
    """Exact rational F1 via direct counting."""
    tp = sum(1 for y, p in zip(labels, probs) if y == 1 and p >= threshold)
    fp = sum(1 for y, p in zip(labels, probs) if y == 0 and p >= threshold)
    fn = sum(1 for y, p in zip(labels, probs) if y == 1 and p < threshold)
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


def reference_auc(labels, scores):
    """Exhaustive pair counting with half credit for ties."""
    pos = [s for y, s in zip(labels, scores) if y == 1]
    neg = [s for y, s in zip(labels, scores) if y == 0]
    wins = sum(1 for p in pos for n in neg if p > n)
    ties = sum(1 for p in pos for n in neg if p == n)
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestF1:
    def test_handbook_example(self):
        # tp=8, fp=2, fn=2 -> P=0.8, R=0.8, F1=0.8
        labels = [1] * 10 + [0] * 10
        probs = [0.9] * 8 + [0.1] * 2 + [0.9] * 2 + [0.1] * 8
        precision, recall, f1 = f1_score(labels, probs)
        assert (precision, recall, f1) == (0.8, 0.8, 0.8)

    def test_perfect_predictions(self):
        labels = [0, 1, 1, 0]
        assert f1_score(labels, [0.1, 0.9, 0.8, 0.2])[2] == 1.0

    def test_no_positive_predictions_convention(self):
        assert f1_score([1, 1, 0], [0.1, 0.2, 0.3])[2] == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            f1_score([1, 0], [0.5])

    def test_confusion_counts(self):
        tp, fp, tn, fn = confusion_counts([1, 0, 1, 0], [0.9, 0.8, 0.1, 0.2])
        assert (tp, fp, tn, fn) == (1, 1, 1, 1)

    def test_threshold_is_inclusive(self):
        assert confusion_counts([1], [0.5])[0] == 1

    @pytest.mark.parametrize("seed", range(60))
    def test_matches_rational_reference_exactly(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 50))
        labels = rng.integers(0, 2, n)
        probs = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], n)
        assert f1_score(labels, probs)[2] == reference_f1(labels, probs)


class TestAuc:
    def test_documented_example(self):
        # 3 of 4 ordered pairs are won
        assert auc_roc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75

    def test_perfect_separation(self):
        assert auc_roc([0, 0, 1, 1], [0.1, 0.2, 0.7, 0.9]) == 1.0

    def test_all_ties(self):
        assert auc_roc([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]) == 0.5

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc_roc([1, 1], [0.3, 0.4])

    @pytest.mark.parametrize("seed", range(60))
    def test_matches_pair_counting_exactly(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(2, 50))
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        scores = rng.choice([0.0, 0.2, 0.4, 0.6, 0.8, 1.0], n)
        assert auc_roc(labels, scores) == reference_auc(labels, scores)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(7)
        labels = rng.integers(0, 2, 40)
        labels[0], labels[1] = 0, 1
        scores = rng.random(40)
        base = auc_roc(labels, scores)
        for transform in (lambda s: 3 * s + 2, np.tanh, lambda s: s**3):
            assert auc_roc(labels, transform(scores)) == base


class TestHorizonMetrics:
    def test_counts_sum_to_samples(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, (30, 5))
        labels[0] = 1 - labels[1]  # both classes guaranteed per horizon
        labels[0, :] = 1
        labels[1, :] = 0
        probs = rng.random((30, 5))
        combo = horizon_metrics("camera_only", labels, probs)
        assert len(combo.horizons) == 5
        for i, hm in enumerate(combo.horizons):
            assert hm.horizon == i + 1
            assert hm.tp + hm.fp + hm.tn + hm.fn == 30
            assert 0.0 <= hm.f1 <= 1.0
            assert 0.0 <= hm.auc <= 1.0


def published_camera_radar_row():
    f1s = [0.984, 0.980, 0.979, 0.975, 0.972]
    aucs = [0.988, 0.985, 0.982, 0.971, 0.968]
    return ComboMetrics(
        combination="camera_radar",
        horizons=[
            HorizonMetrics(horizon=i + 1, f1=f1s[i], auc=aucs[i]) for i in range(5)
        ],
    )


class TestReport:
    def test_published_row_rendered_verbatim(self):
        md = format_metrics_markdown([published_camera_radar_row()])
        row = next(line for line in md.splitlines() if "camera_radar" in line)
        cells = [c.strip() for c in row.strip("|").split("|")]
        assert cells == [
            "camera_radar",
            "98.4%", "0.988", "98.0%", "0.985", "97.9%", "0.982",
            "97.5%", "0.971", "97.2%", "0.968",
        ]

    def test_single_combination_one_row(self):
        md = format_metrics_markdown([published_camera_radar_row()])
        rows = [l for l in md.splitlines() if l.startswith("|")]
        assert len(rows) == 3  # header, separator, one data row

    def test_rows_sorted_by_final_horizon_f1(self):
        weak = ComboMetrics(
            "gps_only",
            [HorizonMetrics(i + 1, 0.6, 0.6) for i in range(5)],
        )
        md = format_metrics_markdown([weak, published_camera_radar_row()])
        lines = md.splitlines()
        assert lines[2].startswith("| camera_radar")
        assert lines[3].startswith("| gps_only")

    def test_metrics_csv_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        combos = []
        for name in ("camera_only", "camera_radar"):
            horizons = [
                HorizonMetrics(
                    horizon=i + 1,
                    f1=float(rng.random()),
                    auc=float(rng.random()),
                    tp=int(rng.integers(100)),
                    fp=int(rng.integers(100)),
                    tn=int(rng.integers(100)),
                    fn=int(rng.integers(100)),
                )
                for i in range(5)
            ]
            combos.append(ComboMetrics(name, horizons))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, combos)
        back = {c.combination: c for c in read_metrics_csv(path)}
        for combo in combos:
            for a, b in zip(combo.horizons, back[combo.combination].horizons):
                assert (a.f1, a.auc) == (b.f1, b.auc)  # bit-exact floats
                assert (a.tp, a.fp, a.tn, a.fn) == (b.tp, b.fp, b.tn, b.fn)

    def test_emit_report_writes_all_artifacts(self, tmp_path):
        timing = TimingReport(
            combination="camera_only", repetitions=100,
            preprocess_ms_mean=4.1, preprocess_ms_p95=5.0,
            inference_ms_mean=89.8, inference_ms_p95=95.0, fusion_ms_mean=0.01,
        )
        out = emit_report([published_camera_radar_row()], [timing], tmp_path)
        assert (tmp_path / "report.md").exists()
        assert (tmp_path / "metrics.csv").exists()
        assert (tmp_path / "timings.csv").exists()
        assert "98.4%" in out["markdown"]
        assert "camera_only" in out["markdown"]

    def test_timings_csv_round_trip(self, tmp_path):
        reports = [
            TimingReport("camera_only", 100, 4.11, 5.2, 89.8, 93.0, 0.02),
            TimingReport("gps_only", 100, 0.9, 1.0, 37.3, 40.0, 0.01),
        ]
        path = tmp_path / "timings.csv"
        write_timings_csv(path, reports)
        back = read_timings_csv(path)
        assert [r.combination for r in back] == ["camera_only", "gps_only"]
        assert back[0].preprocess_ms_mean == 4.11
        assert back[0].inference_ms_mean == 89.8


class FixedModel:
    """Stub predictor with a fixed output and optional simulated delay."""

    def __init__(self, probs, f1=0.9):
        self.probs = np.asarray(probs, float)
        self.validation_f1 = [f1] * len(self.probs)

    def forward(self, x, training=False):
        return self.probs


class TestBenchmark:
    def _run(self, reps=100, combo=("camera", "radar")):
        windows = [{m: [None] * 5 for m in combo} for _ in range(4)]
        preprocessors = {m: lambda payloads: np.zeros(3) for m in combo}
        models = {m: FixedModel([0.5, 0.6, 0.7]) for m in combo}
        return benchmark(combo, windows, preprocessors, models,
                         weights=[1.0 / len(combo)] * len(combo),
                         repetitions=reps, warmup=5)

    def test_report_fields(self):
        report = self._run()
        assert report.combination == "camera_radar"
        assert report.repetitions == 100
        assert report.preprocess_ms_mean >= 0.0
        assert report.inference_ms_mean >= 0.0
        assert report.total_ms_mean == pytest.approx(
            report.preprocess_ms_mean + report.inference_ms_mean
        )
        assert set(report.stage_ms_mean) == {"camera", "radar"}
        assert not report.over_budget

    def test_low_repetitions_warn(self):
        with pytest.warns(UserWarning):
            self._run(reps=20)

    def test_over_budget_flag(self):
        report = TimingReport("x", 100, 200.0, 210.0, 150.0, 160.0, 0.1)
        assert report.over_budget

    def test_single_member_name(self):
        report = self._run(combo=("gps",))
        assert report.combination == "gps_only"
