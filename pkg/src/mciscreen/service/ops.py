"""Operation handlers shared by the HTTP endpoints and the in-process client.

Each function maps a request model to a response model and raises ordinary
domain exceptions; the FastAPI layer translates those into HTTP errors while
the in-process client wraps them uniformly.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..features import (LfsfError, ManifestError, RecordingSegments, UtteranceRecord,
                        load_manifest, load_recording_segments, synth_dataset)
from ..inference import predict_recordings, write_predictions_csv
from ..model import (ClassifierConfig, FusionConfig, NonFiniteActivationError,
                     load_checkpoint)
from ..optim import NonFiniteGradientError
from ..perturb import AudioError, FilterDesignError, perturb_path
from ..splits import GENERAL, SplitSpec, general_split, kfold, speaker_split
from ..training import (TrainConfig, TrainingDivergedError, cross_validate,
                        layer_scan, load_trace_csv, save_train_outputs, trace_export,
                        train, write_cv_csv, write_fold_weights_csv, write_scan_csv)
from . import schemas

DOMAIN_ERRORS = (ValueError, ManifestError, LfsfError, AudioError, FilterDesignError,
                 TrainingDivergedError, NonFiniteGradientError, NonFiniteActivationError)


def _split_records(records: list[UtteranceRecord], mode: str, ratio: float,
                   seed: int) -> tuple[list[UtteranceRecord], list[UtteranceRecord]]:
    spec = SplitSpec(mode=mode, val_ratio=ratio, seed=seed)
    if mode == GENERAL:
        return general_split(records, spec)
    return speaker_split(records, spec)


def _load_all(records: list[UtteranceRecord], manifest: str, features_dir: str | None,
              window_seconds: float) -> dict[tuple[str, str], RecordingSegments]:
    loaded = load_recording_segments(records, manifest, features_dir, window_seconds)
    return {rec.record.key: rec for rec in loaded}


def _subset(loaded: dict, records: list[UtteranceRecord]) -> list[RecordingSegments]:
    return [loaded[r.key] for r in records]


def _infer_shape(loaded: dict) -> tuple[int, int]:
    shapes = {(s.shape[0], s.shape[2]) for rec in loaded.values() for s in rec.segments}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent feature shapes across recordings: {sorted(shapes)}")
    return shapes.pop()


def _arch(settings: schemas.ArchSettings, layer_count: int, feature_dim: int) -> ClassifierConfig:
    return ClassifierConfig(layer_count=layer_count, feature_dim=feature_dim,
                            hidden_size=settings.hidden_size, num_layers=settings.num_layers,
                            proj_dim=settings.proj_dim, dropout=settings.dropout)


def _fusion(settings: schemas.FusionSettings) -> FusionConfig:
    return FusionConfig(init_mode=settings.init, major_layer=settings.major_layer,
                        major_weight=settings.major_weight)


def _train_config(settings: schemas.TrainSettings) -> TrainConfig:
    return TrainConfig(learning_rate=settings.learning_rate, batch_size=settings.batch_size,
                       epochs=settings.epochs, seed=settings.seed,
                       weight_decay=settings.weight_decay,
                       window_seconds=settings.window_seconds, threads=settings.threads)


def _metrics_model(report) -> schemas.MetricsModel:
    return schemas.MetricsModel(acc=report.acc, precision=report.precision,
                                recall=report.recall, f1=report.f1,
                                degenerate=report.degenerate)


def run_synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    manifest = synth_dataset(req.out_dir, n_patients=req.n_patients,
                             recs_per_patient=req.recordings_per_patient,
                             layers=req.layers, frames=req.frames, dims=req.dims,
                             informative_layer=req.informative_layer,
                             effect_size=req.effect_size, seed=req.seed, fps=req.fps)
    return schemas.SynthResponse(manifest=str(manifest),
                                 records=req.n_patients * req.recordings_per_patient)


def run_split(req: schemas.SplitRequest) -> schemas.SplitResponse:
    records = load_manifest(req.manifest)
    train_recs, val_recs = _split_records(records, req.mode, req.ratio, req.seed)
    resp = schemas.SplitResponse(
        mode=req.mode, ratio=req.ratio, seed=req.seed,
        train_patients=sorted({r.patient_id for r in train_recs}),
        val_patients=sorted({r.patient_id for r in val_recs}),
        train_recordings=[f"{r.patient_id}/{r.recording_id}" for r in train_recs],
        val_recordings=[f"{r.patient_id}/{r.recording_id}" for r in val_recs],
        out=req.out,
    )
    if req.out:
        payload = resp.model_dump(exclude={"out"})
        Path(req.out).write_text(json.dumps(payload, indent=2) + "\n")
    return resp


def run_train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    records = load_manifest(req.manifest)
    train_records, val_records = _split_records(records, req.split_mode,
                                                req.split_ratio, req.split_seed)
    loaded = _load_all(records, req.manifest, req.features_dir, req.settings.window_seconds)
    layer_count, feature_dim = _infer_shape(loaded)
    result = train(_train_config(req.settings),
                   _arch(req.arch, layer_count, feature_dim),
                   _fusion(req.fusion),
                   _subset(loaded, train_records), _subset(loaded, val_records))
    files = save_train_outputs(result, Path(req.out_dir))
    final = result.trace.final().tolist() if result.trace is not None else None
    history = [schemas.EpochRow(epoch=em.epoch, train=_metrics_model(em.train),
                                val=_metrics_model(em.val)) for em in result.history]
    return schemas.TrainResponse(out_dir=req.out_dir, best_epoch=result.best_epoch,
                                 best_val_acc=result.best_val_acc, final_weights=final,
                                 history=history, files=files)


def run_layer_scan(req: schemas.LayerScanRequest) -> schemas.LayerScanResponse:
    records = load_manifest(req.manifest)
    train_records, val_records = _split_records(records, "speaker",
                                                req.split_ratio, req.split_seed)
    loaded = _load_all(records, req.manifest, req.features_dir, req.settings.window_seconds)
    layer_count, feature_dim = _infer_shape(loaded)
    scan = layer_scan(_train_config(req.settings),
                      _arch(req.arch, layer_count, feature_dim),
                      _subset(loaded, train_records), _subset(loaded, val_records))
    if req.out:
        write_scan_csv(scan, req.out)
    rows = [schemas.ScanRow(layer=row.layer, split=split, acc=row.accuracies[split])
            for row in scan.rows for split in sorted(row.accuracies)]
    peak_layer, peak_acc = scan.peaks["val"]
    return schemas.LayerScanResponse(rows=rows, peak_layer=peak_layer,
                                     peak_acc=peak_acc, out=req.out)


def run_cv(req: schemas.CvRequest) -> schemas.CvResponse:
    records = load_manifest(req.manifest)
    pairs = kfold(records, k=req.k, seed=req.seed)
    loaded = _load_all(records, req.manifest, req.features_dir, req.settings.window_seconds)
    layer_count, feature_dim = _infer_shape(loaded)
    folds = [(_subset(loaded, tr), _subset(loaded, va)) for tr, va in pairs]
    results = cross_validate(_train_config(req.settings),
                             _arch(req.arch, layer_count, feature_dim),
                             _fusion(req.fusion), folds)
    if req.out:
        write_cv_csv(results, req.out)
    if req.weights_out:
        write_fold_weights_csv(results, req.weights_out)
    rows = [schemas.FoldRow(fold=fr.fold, acc=fr.report.acc, precision=fr.report.precision,
                            recall=fr.report.recall, f1=fr.report.f1, best_epoch=fr.best_epoch)
            for fr in results]
    return schemas.CvResponse(folds=rows, out=req.out, weights_out=req.weights_out)


def resolve_checkpoint(path: str | Path) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / "model.pt"
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def run_predict(req: schemas.PredictRequest) -> schemas.PredictResponse:
    model = load_checkpoint(resolve_checkpoint(req.checkpoint))
    records = load_manifest(req.manifest)
    loaded = load_recording_segments(records, req.manifest, req.features_dir,
                                     req.window_seconds)
    verdicts = predict_recordings(model, loaded, logic=req.logic)
    pairs = [(rec.record, v) for rec, v in zip(loaded, verdicts)]
    if req.out:
        write_predictions_csv(pairs, req.out)
    rows = [schemas.PredictionRow(recording_id=r.recording_id, patient_id=r.patient_id,
                                  p_nc_sum=v.prob_nc_sum, p_mci_sum=v.prob_mci_sum,
                                  label=v.label)
            for r, v in pairs]
    return schemas.PredictResponse(rows=rows, out=req.out)


def run_perturb(req: schemas.PerturbRequest) -> schemas.PerturbResponse:
    files = perturb_path(req.input_path, req.out_dir, seed=req.seed,
                         copies=req.copies, pin_identity=req.pin_identity)
    return schemas.PerturbResponse(files=[
        schemas.PerturbedFileRow(source=f.source, output=f.output,
                                 formant_ratio=f.formant_ratio, pitch_ratio=f.pitch_ratio,
                                 clipped_samples=f.clipped_samples)
        for f in files])


def run_trace_export(req: schemas.TraceExportRequest) -> schemas.TraceExportResponse:
    source = Path(req.checkpoint_dir) / "trace.csv"
    if not source.exists():
        raise FileNotFoundError(f"no layer-weight trace at {source} "
                                "(was the model trained with fusion?)")
    trace = load_trace_csv(source)
    trace_export(trace, req.out, final_only=req.final_only)
    rows = 1 if req.final_only else trace.rows.shape[0]
    return schemas.TraceExportResponse(out=req.out, epochs=rows, layers=trace.layer_count)


def run_validate_features(req: schemas.ValidateFeaturesRequest) -> schemas.ValidateFeaturesResponse:
    records = load_manifest(req.manifest)
    loaded = _load_all(records, req.manifest, req.features_dir, window_seconds=1e9)
    layer_count, feature_dim = _infer_shape(loaded)
    fps = {rec.fps for rec in loaded.values()}
    if len(fps) != 1:
        raise ValueError(f"inconsistent frame rates across recordings: {sorted(fps)}")
    total = sum(s.shape[1] for rec in loaded.values() for s in rec.segments)
    return schemas.ValidateFeaturesResponse(records=len(records), layer_count=layer_count,
                                            feature_dim=feature_dim, fps=fps.pop(),
                                            total_frames=total)
