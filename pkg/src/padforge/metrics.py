"""ISO-30107-style error rates and DET curves over score records.

APCER: percent of spoof samples accepted as live. BPCER: percent of live
samples rejected as spoof. ACE = (APCER + BPCER) / 2 and
accuracy = 100 - ACE. All rates are percentages.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .model import LIVE, SPOOF, ScoreRecord


@dataclass
class MetricsReport:
    apcer: float
    bpcer: float
    ace: float
    accuracy: float
    counts: dict

    def to_dict(self):
        return asdict(self)


@dataclass
class DETPoint:
    threshold: float
    apcer: float
    bpcer: float


def compute_metrics(records) -> MetricsReport:
    n_live = sum(1 for r in records if r.true_label == LIVE)
    n_spoof = sum(1 for r in records if r.true_label == SPOOF)
    if n_live == 0 or n_spoof == 0:
        missing = LIVE if n_live == 0 else SPOOF
        raise ValueError(f"no {missing} records present")
    n_live_err = sum(1 for r in records
                     if r.true_label == LIVE and r.predicted_label != LIVE)
    n_spoof_err = sum(1 for r in records
                      if r.true_label == SPOOF and r.predicted_label != SPOOF)
    apcer = 100.0 * n_spoof_err / n_spoof
    bpcer = 100.0 * n_live_err / n_live
    ace = (apcer + bpcer) / 2.0
    return MetricsReport(apcer=apcer, bpcer=bpcer, ace=ace, accuracy=100.0 - ace,
                         counts={"n_live": n_live, "n_spoof": n_spoof,
                                 "n_live_errors": n_live_err,
                                 "n_spoof_errors": n_spoof_err})


def _rates_at(scores_live, scores_spoof, threshold):
    # decision rule: live iff score > threshold (ties reject as spoof)
    apcer = 100.0 * np.count_nonzero(scores_spoof > threshold) / scores_spoof.size
    bpcer = 100.0 * np.count_nonzero(scores_live <= threshold) / scores_live.size
    return apcer, bpcer


def det_curve(records, n_thresholds=None, use_raw=False):
    """Threshold sweep over the sorted unique scores plus the endpoints 0
    and 1 (normalized scores) or min/max (raw scores). Output is sorted by
    threshold. n_thresholds, if given, adds that many evenly spaced
    thresholds for plot density (normalized mode only)."""
    live = np.array([r.raw_score if use_raw else r.normalized_score
                     for r in records if r.true_label == LIVE])
    spoof = np.array([r.raw_score if use_raw else r.normalized_score
                      for r in records if r.true_label == SPOOF])
    if live.size == 0 or spoof.size == 0:
        missing = LIVE if live.size == 0 else SPOOF
        raise ValueError(f"no {missing} records present")
    endpoints = (live.min(), spoof.min(), live.max(), spoof.max()) if use_raw else (0.0, 1.0)
    parts = [live, spoof, np.array(endpoints)]
    if n_thresholds is not None:
        if n_thresholds < 2:
            raise ValueError("n_thresholds must be >= 2")
        if not use_raw:
            parts.append(np.linspace(0.0, 1.0, n_thresholds))
    thresholds = np.unique(np.concatenate(parts))
    return [DETPoint(float(t), *_rates_at(live, spoof, t)) for t in thresholds]


def bpcer_at_apcer(curve, apcer_target):
    """Minimum BPCER among curve points with APCER <= target.

    Returns (bpcer_percent, attainable); unattainable targets report 100.
    """
    feasible = [p.bpcer for p in curve if p.apcer <= apcer_target]
    if not feasible:
        return 100.0, False
    return min(feasible), True


# ---------------------------------------------------------------------------
# file formats

SCORES_FIELDS = ["id", "true_label", "raw_score", "normalized_score", "predicted_label"]


def write_scores_csv(records, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SCORES_FIELDS)
        for r in records:
            w.writerow([r.sample_id, r.true_label, repr(r.raw_score),
                        repr(r.normalized_score), r.predicted_label])


def read_scores_csv(path):
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            records.append(ScoreRecord(row["id"], float(row["raw_score"]),
                                       float(row["normalized_score"]),
                                       row["predicted_label"], row["true_label"]))
    return records


def write_metrics_json(report: MetricsReport, path, extra=None):
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def write_det_csv(curve, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "apcer", "bpcer"])
        for p in curve:
            w.writerow([repr(p.threshold), repr(p.apcer), repr(p.bpcer)])
