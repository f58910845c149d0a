import numpy as np
import pytest

from padforge import metrics
from padforge.metrics import (bpcer_at_apcer, compute_metrics, det_curve,
                              read_scores_csv, write_scores_csv)
from padforge.model import LIVE, SPOOF, ScoreRecord, score_records

from oracles import det_recount


def _record(true, predicted, norm=0.5, raw=0.0, sid="s"):
    return ScoreRecord(sid, raw, norm, predicted, true)


def _make_records(n_live, n_live_err, n_spoof, n_spoof_err):
    recs = []
    for i in range(n_live):
        pred = SPOOF if i < n_live_err else LIVE
        recs.append(_record(LIVE, pred, sid=f"l{i}"))
    for i in range(n_spoof):
        pred = LIVE if i < n_spoof_err else SPOOF
        recs.append(_record(SPOOF, pred, sid=f"s{i}"))
    return recs


def _scored(live_scores, spoof_scores):
    ids = [f"l{i}" for i in range(len(live_scores))] + \
          [f"s{i}" for i in range(len(spoof_scores))]
    raw = list(live_scores) + list(spoof_scores)
    labels = [LIVE] * len(live_scores) + [SPOOF] * len(spoof_scores)
    return score_records(ids, raw, labels)


class TestComputeMetrics:
    def test_small_error_rate_pair(self):
        # BPCER 0.35%, APCER 0.05% -> ACE 0.20%
        recs = _make_records(2000, 7, 2000, 1)
        report = compute_metrics(recs)
        assert report.bpcer == pytest.approx(0.35, abs=1e-12)
        assert report.apcer == pytest.approx(0.05, abs=1e-12)
        assert report.ace == pytest.approx(0.20, abs=1e-12)

    def test_average_ace_accuracy(self):
        # ACE 0.22% -> accuracy 99.78%
        recs = _make_records(5000, 11, 5000, 11)
        report = compute_metrics(recs)
        assert report.ace == pytest.approx(0.22, abs=1e-12)
        assert report.accuracy == pytest.approx(99.78, abs=1e-12)

    def test_perfect_classifier(self):
        report = compute_metrics(_make_records(100, 0, 100, 0))
        assert (report.apcer, report.bpcer, report.ace, report.accuracy) == (0, 0, 0, 100)

    @pytest.mark.parametrize("trial", range(20))
    def test_identities_on_random_records(self, trial):
        rng = np.random.default_rng(trial)
        n_live, n_spoof = rng.integers(1, 200, 2)
        recs = _make_records(n_live, rng.integers(0, n_live + 1),
                             n_spoof, rng.integers(0, n_spoof + 1))
        r = compute_metrics(recs)
        c = r.counts
        assert abs(r.apcer - 100.0 * c["n_spoof_errors"] / c["n_spoof"]) <= 1e-12
        assert abs(r.bpcer - 100.0 * c["n_live_errors"] / c["n_live"]) <= 1e-12
        assert abs(r.ace - (r.apcer + r.bpcer) / 2) <= 1e-12
        assert abs(r.accuracy - (100.0 - r.ace)) <= 1e-12
        for v in (r.apcer, r.bpcer, r.ace, r.accuracy):
            assert 0.0 <= v <= 100.0

    def test_permutation_invariance(self):
        recs = _make_records(13, 4, 17, 6)
        shuffled = [recs[i] for i in np.random.default_rng(0).permutation(len(recs))]
        assert compute_metrics(recs) == compute_metrics(shuffled)

    def test_missing_class_named(self):
        with pytest.raises(ValueError, match=SPOOF):
            compute_metrics([_record(LIVE, LIVE)])
        with pytest.raises(ValueError, match=LIVE):
            compute_metrics([_record(SPOOF, SPOOF)])


class TestDetCurve:
    def test_separable_scores_have_zero_zero_point(self):
        recs = _scored([0.8, 0.9, 1.0], [0.1, 0.2, 0.3])
        curve = det_curve(recs)
        assert any(p.apcer == 0.0 and p.bpcer == 0.0 for p in curve)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(1)
        recs = _scored(rng.random(40) + 0.2, rng.random(40))
        curve = det_curve(recs)
        for a, b in zip(curve, curve[1:]):
            assert b.threshold > a.threshold
            assert b.apcer <= a.apcer
            assert b.bpcer >= a.bpcer

    def test_matches_recount_oracle(self):
        rng = np.random.default_rng(2)
        live, spoof = rng.random(25) + 0.1, rng.random(30)
        recs = _scored(live, spoof)
        norm_live = np.array([r.normalized_score for r in recs if r.true_label == LIVE])
        norm_spoof = np.array([r.normalized_score for r in recs if r.true_label == SPOOF])
        for p in det_curve(recs):
            apcer, bpcer = det_recount(norm_live, norm_spoof, p.threshold)
            assert p.apcer == pytest.approx(apcer, abs=1e-12)
            assert p.bpcer == pytest.approx(bpcer, abs=1e-12)

    def test_raw_and_normalized_sweeps_agree(self):
        rng = np.random.default_rng(3)
        recs = _scored(rng.normal(2, 1, 30), rng.normal(-2, 1, 30))
        raw_curve = det_curve(recs, use_raw=True)
        norm_curve = det_curve(recs)
        assert len(raw_curve) == len(norm_curve)
        for pr, pn in zip(raw_curve, norm_curve):
            assert pr.apcer == pn.apcer
            assert pr.bpcer == pn.bpcer

    def test_endpoints_cover_full_range(self):
        recs = _scored([0.6, 0.7], [0.3, 0.4])
        curve = det_curve(recs)
        assert curve[0].threshold == 0.0
        assert curve[-1].threshold == 1.0
        # at threshold 1 nothing scores above: all live rejected, all spoof caught
        assert curve[-1].bpcer == 100.0 and curve[-1].apcer == 0.0

    def test_extra_thresholds_request(self):
        recs = _scored([0.9], [0.1])
        dense = det_curve(recs, n_thresholds=101)
        assert len(dense) >= 101
        with pytest.raises(ValueError):
            det_curve(recs, n_thresholds=1)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            det_curve([_record(LIVE, LIVE)])


class TestBpcerAtApcer:
    def test_simple_lookup(self):
        recs = _scored([0.7, 0.8, 0.9, 1.0], [0.0, 0.1, 0.2, 0.75])
        bpcer, attainable = bpcer_at_apcer(det_curve(recs), 25.0)
        assert attainable
        assert bpcer == 0.0

    def test_unattainable_target(self):
        # spoof scores strictly above all live scores: apcer 0 needs bpcer 100
        recs = _scored([0.1, 0.2], [0.8, 0.9])
        bpcer, attainable = bpcer_at_apcer(det_curve(recs), 1.0)
        assert (bpcer, attainable) == (100.0, True)
        bpcer, attainable = bpcer_at_apcer([metrics.DETPoint(0.5, 50.0, 10.0)], 1.0)
        assert (bpcer, attainable) == (100.0, False)


class TestScoreFiles:
    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        recs = _scored(rng.normal(1, 1, 10), rng.normal(-1, 1, 10))
        path = tmp_path / "scores.csv"
        write_scores_csv(recs, path)
        assert read_scores_csv(path) == recs

    def test_metrics_json(self, tmp_path):
        import json
        report = compute_metrics(_make_records(10, 1, 10, 2))
        path = tmp_path / "metrics.json"
        metrics.write_metrics_json(report, path, extra={"protocol": "intra_sensor_known"})
        doc = json.loads(path.read_text())
        assert doc["ace"] == report.ace
        assert doc["protocol"] == "intra_sensor_known"
