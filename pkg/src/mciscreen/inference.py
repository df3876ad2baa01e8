"""Segment-level prediction and recording-level aggregation.

Two aggregation logics produce a recording verdict from its segment
predictions: "ensemble" sums the per-segment class probabilities and takes the
larger total, while "or" flags MCI as soon as any single segment is predicted
MCI. The "or" rule exists because impairment cues may surface only briefly
within a long recording. Ties break toward MCI under both logics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .features import (LABEL_MCI, LABEL_NC, FeatureSequence, RecordingSegments,
                       UtteranceRecord, segment)
from .metrics import MetricsReport, compute_metrics, confusion
from .model import SegmentClassifier

LOGIC_ENSEMBLE = "ensemble"
LOGIC_OR = "or"
LOGICS = (LOGIC_ENSEMBLE, LOGIC_OR)


@dataclass(frozen=True)
class SegmentPrediction:
    recording_id: str
    index: int
    prob_nc: float
    prob_mci: float

    @property
    def label(self) -> str:
        return LABEL_MCI if self.prob_mci >= self.prob_nc else LABEL_NC


@dataclass(frozen=True)
class AggregationVerdict:
    recording_id: str
    logic: str
    label: str
    prob_nc_sum: float
    prob_mci_sum: float
    trigger_index: int | None = None  # first MCI segment under "or" logic


def predict_segment_batch(model: SegmentClassifier, segments: list[np.ndarray]) -> np.ndarray:
    """Softmax class probabilities for each (L, T, D) segment, dropout disabled."""
    if not segments:
        raise ValueError("no segments to predict")
    model.eval()
    dtype = next(model.parameters()).dtype
    probs = np.empty((len(segments), 2), dtype=np.float64)
    with torch.no_grad():
        max_t = max(s.shape[1] for s in segments)
        if all(s.shape[1] == max_t for s in segments):
            h = torch.as_tensor(np.stack(segments)).to(dtype)
            logits = model(h)
        else:
            layer_count, _, dims = segments[0].shape
            h = torch.zeros(len(segments), layer_count, max_t, dims, dtype=dtype)
            lengths = torch.empty(len(segments), dtype=torch.int64)
            for i, s in enumerate(segments):
                h[i, :, :s.shape[1], :] = torch.as_tensor(s).to(dtype)
                lengths[i] = s.shape[1]
            logits = model(h, lengths)
        probs[:] = torch.softmax(logits.double(), dim=1).numpy()
    return probs


def predict_segments(model: SegmentClassifier, seq: FeatureSequence,
                     window_seconds: float = 30.0,
                     recording_id: str = "") -> list[SegmentPrediction]:
    """One prediction per fixed-duration window of the recording."""
    segs = segment(seq, window_seconds)
    probs = predict_segment_batch(model, [s.data for s in segs])
    return [SegmentPrediction(recording_id=recording_id, index=i,
                              prob_nc=float(p[0]), prob_mci=float(p[1]))
            for i, p in enumerate(probs)]


def aggregate_ensemble(preds: list[SegmentPrediction]) -> AggregationVerdict:
    """Recording label from summed per-segment class probabilities."""
    if not preds:
        raise ValueError("cannot aggregate zero segment predictions")
    sum_nc = sum(p.prob_nc for p in preds)
    sum_mci = sum(p.prob_mci for p in preds)
    label = LABEL_MCI if sum_mci >= sum_nc else LABEL_NC
    return AggregationVerdict(recording_id=preds[0].recording_id, logic=LOGIC_ENSEMBLE,
                              label=label, prob_nc_sum=sum_nc, prob_mci_sum=sum_mci)


def aggregate_or(preds: list[SegmentPrediction]) -> AggregationVerdict:
    """MCI as soon as any segment is predicted MCI, else NC."""
    if not preds:
        raise ValueError("cannot aggregate zero segment predictions")
    trigger = next((p.index for p in preds if p.label == LABEL_MCI), None)
    label = LABEL_MCI if trigger is not None else LABEL_NC
    return AggregationVerdict(recording_id=preds[0].recording_id, logic=LOGIC_OR,
                              label=label,
                              prob_nc_sum=sum(p.prob_nc for p in preds),
                              prob_mci_sum=sum(p.prob_mci for p in preds),
                              trigger_index=trigger)


def aggregate(preds: list[SegmentPrediction], logic: str) -> AggregationVerdict:
    if logic == LOGIC_ENSEMBLE:
        return aggregate_ensemble(preds)
    if logic == LOGIC_OR:
        return aggregate_or(preds)
    raise ValueError(f"unknown aggregation logic {logic!r}")


def predict_recordings(model: SegmentClassifier, recordings: list[RecordingSegments],
                       logic: str = LOGIC_OR) -> list[AggregationVerdict]:
    """Segment probabilities then one aggregated verdict per recording."""
    verdicts = []
    for rec in recordings:
        probs = predict_segment_batch(model, rec.segments)
        preds = [SegmentPrediction(recording_id=rec.record.recording_id, index=i,
                                   prob_nc=float(p[0]), prob_mci=float(p[1]))
                 for i, p in enumerate(probs)]
        verdicts.append(aggregate(preds, logic))
    return verdicts


def write_predictions_csv(rows: list[tuple[UtteranceRecord, AggregationVerdict]],
                          path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["recording_id", "patient_id", "p_nc_sum", "p_mci_sum", "label"])
        for rec, v in rows:
            writer.writerow([rec.recording_id, rec.patient_id,
                             f"{v.prob_nc_sum:.6f}", f"{v.prob_mci_sum:.6f}", v.label])


def evaluate_recordings(model: SegmentClassifier, recordings: list[RecordingSegments],
                        logic: str = LOGIC_OR) -> tuple[MetricsReport, list[AggregationVerdict]]:
    """Recording-level metrics of the model's aggregated verdicts against manifest labels."""
    verdicts = predict_recordings(model, recordings, logic)
    preds, gold = {}, {}
    for rec, v in zip(recordings, verdicts):
        uid = f"{rec.record.patient_id}/{rec.record.recording_id}"
        preds[uid] = v.label
        gold[uid] = rec.record.label
    return compute_metrics(confusion(preds, gold)), verdicts
