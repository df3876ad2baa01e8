"""Training loop, layer-weight traces, per-layer sweeps, and cross-validation.

Segments (not recordings) are the training unit: each inherits its recording's
label, batches mix segments across recordings, and shuffling depends only on
the configured seed. Validation is scored at the recording level with "or"
aggregation, and the checkpoint with the best validation accuracy is kept.
Fusion runs additionally record the softmax-normalised layer weights once at
initialisation and after every epoch, which is the trace used to spot which
layers the classifier actually relies on.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .features import LABELS, RecordingSegments, label_index
from .inference import LOGIC_OR, evaluate_recordings
from .metrics import MetricsReport, compute_metrics, confusion
from .model import (ClassifierConfig, FusionConfig, SegmentClassifier,
                    build_model, save_checkpoint)
from .optim import AdamW, param_groups

logger = logging.getLogger(__name__)

LR_GRID = (3e-5, 5e-5, 1e-4)
K_GRID = (0.0, 1.0, 5.0, 8.0)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite during epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 4
    betas: tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 15
    seed: int = 0
    window_seconds: float = 30.0
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError(f"betas must be in [0, 1), got {self.betas}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class WeightTrace:
    """Normalised layer weights: row 0 at initialisation, then one row per epoch."""

    rows: np.ndarray  # (epochs + 1, L)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise ValueError(f"trace must be a non-empty 2-D array, got shape {self.rows.shape}")

    @property
    def layer_count(self) -> int:
        return self.rows.shape[1]

    def final(self) -> np.ndarray:
        return self.rows[-1]

    def final_argmax_layer(self) -> int:
        """1-based layer with the largest final weight."""
        return int(np.argmax(self.rows[-1])) + 1


@dataclass
class EpochMetrics:
    epoch: int
    train: MetricsReport
    val: MetricsReport


@dataclass
class TrainResult:
    model: SegmentClassifier           # best-validation-accuracy checkpoint
    final_model: SegmentClassifier     # end-of-training parameters
    trace: WeightTrace | None
    history: list[EpochMetrics]
    best_epoch: int
    best_val_acc: float


def _pad_batch(segments: list[np.ndarray]) -> tuple[torch.Tensor, torch.Tensor]:
    max_t = max(s.shape[1] for s in segments)
    layer_count, _, dims = segments[0].shape
    h = torch.zeros(len(segments), layer_count, max_t, dims, dtype=torch.float32)
    lengths = torch.empty(len(segments), dtype=torch.int64)
    for i, s in enumerate(segments):
        h[i, :, :s.shape[1], :] = torch.as_tensor(s)
        lengths[i] = s.shape[1]
    return h, lengths


def _flatten_segments(recordings: list[RecordingSegments]) -> list[tuple[np.ndarray, int]]:
    out = []
    for rec in recordings:
        idx = label_index(rec.record.label)
        for seg in rec.segments:
            out.append((seg, idx))
    return out


def _segment_report(pred_indices: list[int], gold_indices: list[int]) -> MetricsReport:
    preds = {str(i): LABELS[p] for i, p in enumerate(pred_indices)}
    gold = {str(i): LABELS[g] for i, g in enumerate(gold_indices)}
    return compute_metrics(confusion(preds, gold))


def train(config: TrainConfig, arch: ClassifierConfig, fusion: FusionConfig | None,
          train_recs: list[RecordingSegments], val_recs: list[RecordingSegments],
          out_dir: str | Path | None = None) -> TrainResult:
    """Train a classifier and keep the epoch with the best validation accuracy.

    Deterministic under ``config.seed``: parameter init, shuffling and dropout
    all derive from it. Per-epoch metrics cover the training segments (scored
    during the pass) and the validation recordings ("or" aggregation).
    """
    if not train_recs or not val_recs:
        raise ValueError("train and validation sets must both be non-empty")
    if config.threads > 0:
        torch.set_num_threads(config.threads)
    torch.manual_seed(config.seed)

    model = build_model(arch, fusion, seed=config.seed)
    optimizer = AdamW(param_groups(model, config.weight_decay),
                      lr=config.learning_rate, betas=config.betas, eps=config.eps)
    shuffler = np.random.default_rng(config.seed)
    segments = _flatten_segments(train_recs)

    trace_rows = []
    if model.fusion is not None:
        trace_rows.append(model.fusion.normalized_weights().detach().double().numpy().copy())

    history: list[EpochMetrics] = []
    best_epoch, best_val_acc = 0, -1.0
    best_state = None
    for epoch in range(1, config.epochs + 1):
        order = shuffler.permutation(len(segments))
        model.train()
        pred_idx: list[int] = []
        gold_idx: list[int] = []
        for start in range(0, len(order), config.batch_size):
            batch = [segments[i] for i in order[start:start + config.batch_size]]
            h, lengths = _pad_batch([b[0] for b in batch])
            labels = torch.tensor([b[1] for b in batch], dtype=torch.int64)
            logits = model(h, lengths)
            loss = F.cross_entropy(logits, labels)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                # ties break toward MCI (index 1)
                pred_idx += (logits[:, 1] >= logits[:, 0]).long().tolist()
                gold_idx += labels.tolist()
        if model.fusion is not None:
            trace_rows.append(model.fusion.normalized_weights().detach().double().numpy().copy())

        train_report = _segment_report(pred_idx, gold_idx)
        val_report, _ = evaluate_recordings(model, val_recs, logic=LOGIC_OR)
        history.append(EpochMetrics(epoch=epoch, train=train_report, val=val_report))
        logger.info("epoch %d: train acc %.4f, val acc %.4f", epoch, train_report.acc, val_report.acc)
        if val_report.acc > best_val_acc:
            best_val_acc = val_report.acc
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    best_model = SegmentClassifier(arch, fusion)
    best_model.load_state_dict(best_state)
    trace = WeightTrace(rows=np.stack(trace_rows)) if trace_rows else None
    result = TrainResult(model=best_model, final_model=model, trace=trace,
                         history=history, best_epoch=best_epoch, best_val_acc=best_val_acc)
    if out_dir is not None:
        save_train_outputs(result, Path(out_dir))
    return result


def save_train_outputs(result: TrainResult, out_dir: Path) -> dict[str, str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": str(out_dir / "model.pt"), "metrics": str(out_dir / "metrics.csv")}
    save_checkpoint(result.model, out_dir / "model.pt")
    write_metrics_csv(result.history, out_dir / "metrics.csv")
    if result.trace is not None:
        trace_export(result.trace, out_dir / "trace.csv")
        paths["trace"] = str(out_dir / "trace.csv")
    summary = {
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "epochs": len(result.history),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    paths["summary"] = str(out_dir / "summary.json")
    return paths


def write_metrics_csv(history: list[EpochMetrics], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "split", "acc", "precision", "recall", "f1"])
        for em in history:
            for split, report in (("train", em.train), ("val", em.val)):
                writer.writerow([em.epoch, split] + [f"{v:.6f}" for v in report.as_row()])


def trace_export(trace: WeightTrace, path: str | Path, final_only: bool = False) -> None:
    """CSV of ``epoch,layer,weight`` rows (epoch 0 is the initialisation snapshot)."""
    rows = trace.rows[-1:] if final_only else trace.rows
    start = trace.rows.shape[0] - 1 if final_only else 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "layer", "weight"])
        for e, row in enumerate(rows, start=start):
            for layer, w in enumerate(row, start=1):
                writer.writerow([e, layer, f"{w:.8f}"])


def load_trace_csv(path: str | Path) -> WeightTrace:
    """Read a trace CSV written by ``trace_export`` back into a ``WeightTrace``."""
    by_epoch: dict[int, dict[int, float]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["epoch", "layer", "weight"]:
            raise ValueError(f"{path}: expected header epoch,layer,weight, got {reader.fieldnames}")
        for rec in reader:
            by_epoch.setdefault(int(rec["epoch"]), {})[int(rec["layer"])] = float(rec["weight"])
    if not by_epoch:
        raise ValueError(f"{path}: trace has no rows")
    epochs = sorted(by_epoch)
    layers = sorted(by_epoch[epochs[0]])
    rows = np.empty((len(epochs), len(layers)))
    for i, e in enumerate(epochs):
        if sorted(by_epoch[e]) != layers:
            raise ValueError(f"{path}: epoch {e} has inconsistent layer set")
        rows[i] = [by_epoch[e][layer] for layer in layers]
    return WeightTrace(rows=rows)


@dataclass
class LayerScanRow:
    layer: int
    accuracies: dict[str, float]  # split name -> accuracy


@dataclass
class LayerScanResult:
    rows: list[LayerScanRow]
    peaks: dict[str, tuple[int, float]] = field(default_factory=dict)

    def compute_peaks(self):
        splits = {s for row in self.rows for s in row.accuracies}
        for s in sorted(splits):
            best = max(self.rows, key=lambda r: (r.accuracies.get(s, -1.0), -r.layer))
            self.peaks[s] = (best.layer, best.accuracies[s])


def layer_scan(config: TrainConfig, arch: ClassifierConfig,
               train_recs: list[RecordingSegments], val_recs: list[RecordingSegments],
               test_recs: list[RecordingSegments] | None = None) -> LayerScanResult:
    """Train one classifier per layer (fusion bypassed) and tabulate accuracies."""
    rows = []
    for layer in range(1, arch.layer_count + 1):
        layer_arch = replace(arch, input_layer=layer)
        result = train(config, layer_arch, None, train_recs, val_recs)
        accs = {"val": result.best_val_acc}
        if test_recs:
            test_report, _ = evaluate_recordings(result.model, test_recs, logic=LOGIC_OR)
            accs["test"] = test_report.acc
        logger.info("layer %d: %s", layer, accs)
        rows.append(LayerScanRow(layer=layer, accuracies=accs))
    scan = LayerScanResult(rows=rows)
    scan.compute_peaks()
    return scan


def write_scan_csv(scan: LayerScanResult, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["layer", "split", "acc"])
        for row in scan.rows:
            for split in sorted(row.accuracies):
                writer.writerow([row.layer, split, f"{row.accuracies[split]:.6f}"])


@dataclass
class FoldResult:
    fold: int
    report: MetricsReport
    final_weights: np.ndarray | None   # softmax(p) after the last epoch
    best_epoch: int


def cross_validate(config: TrainConfig, arch: ClassifierConfig, fusion: FusionConfig | None,
                   folds: list[tuple[list[RecordingSegments], list[RecordingSegments]]]) -> list[FoldResult]:
    """Train on each (train, val) fold with identical config and initial weights."""
    results = []
    for i, (fold_train, fold_val) in enumerate(folds, start=1):
        result = train(config, arch, fusion, fold_train, fold_val)
        best = result.history[result.best_epoch - 1].val
        final_w = result.trace.final().copy() if result.trace is not None else None
        results.append(FoldResult(fold=i, report=best, final_weights=final_w,
                                  best_epoch=result.best_epoch))
        logger.info("fold %d: acc %.4f (best epoch %d)", i, best.acc, result.best_epoch)
    return results


def write_cv_csv(results: list[FoldResult], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["Fold", "ACC", "Precision", "Recall", "F1"])
        for fr in results:
            writer.writerow([fr.fold] + [f"{v:.6f}" for v in fr.report.as_row()])


def write_fold_weights_csv(results: list[FoldResult], path: str | Path) -> None:
    """Final-epoch layer weights per fold, for weight-stability comparison."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["fold", "layer", "weight"])
        for fr in results:
            if fr.final_weights is None:
                continue
            for layer, w in enumerate(fr.final_weights, start=1):
                writer.writerow([fr.fold, layer, f"{w:.8f}"])
