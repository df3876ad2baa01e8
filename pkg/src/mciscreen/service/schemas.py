"""Request/response models for the service endpoints.

All paths are interpreted on the machine running the service; the CLI runs the
same operations in-process by default, so local usage needs no server at all.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class MetricsModel(BaseModel):
    acc: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


class TrainSettings(BaseModel):
    learning_rate: float = Field(default=3e-5, gt=0)
    batch_size: int = Field(default=4, ge=1)
    epochs: int = Field(default=15, ge=1)
    seed: int = 0
    weight_decay: float = Field(default=0.01, ge=0)
    window_seconds: float = Field(default=30.0, gt=0)
    threads: int = 1


class FusionSettings(BaseModel):
    init: Literal["prior", "uniform"] = "prior"
    major_layer: int = Field(default=18, ge=1)
    major_weight: float = Field(default=5.0, ge=0)


class ArchSettings(BaseModel):
    hidden_size: int = Field(default=256, ge=1)
    num_layers: int = Field(default=5, ge=1)
    proj_dim: int = Field(default=64, ge=1)
    dropout: float = Field(default=0.1, ge=0, lt=1)


class SynthRequest(BaseModel):
    out_dir: str
    n_patients: int = Field(default=8, ge=2)
    recordings_per_patient: int = Field(default=2, ge=1)
    layers: int = Field(default=24, ge=1)
    frames: int = Field(default=120, ge=1)
    dims: int = Field(default=16, ge=1)
    informative_layer: int = Field(default=18, ge=1)
    effect_size: float = Field(default=2.0, ge=0)
    seed: int = 0
    fps: float = Field(default=50.0, gt=0)


class SynthResponse(BaseModel):
    manifest: str
    records: int


class SplitRequest(BaseModel):
    manifest: str
    mode: Literal["speaker", "general"] = "speaker"
    ratio: float = Field(default=0.2, gt=0, lt=1)
    seed: int = 0
    out: str | None = None


class SplitResponse(BaseModel):
    mode: str
    ratio: float
    seed: int
    train_patients: list[str]
    val_patients: list[str]
    train_recordings: list[str]  # "patient_id/recording_id" keys
    val_recordings: list[str]
    out: str | None = None


class TrainRequest(BaseModel):
    manifest: str
    out_dir: str
    features_dir: str | None = None
    split_mode: Literal["speaker", "general"] = "speaker"
    split_ratio: float = Field(default=0.2, gt=0, lt=1)
    split_seed: int = 0
    fusion: FusionSettings = FusionSettings()
    arch: ArchSettings = ArchSettings()
    settings: TrainSettings = TrainSettings()


class EpochRow(BaseModel):
    epoch: int
    train: MetricsModel
    val: MetricsModel


class TrainResponse(BaseModel):
    out_dir: str
    best_epoch: int
    best_val_acc: float
    final_weights: list[float] | None
    history: list[EpochRow]
    files: dict[str, str]


class LayerScanRequest(BaseModel):
    manifest: str
    features_dir: str | None = None
    out: str | None = None
    split_ratio: float = Field(default=0.2, gt=0, lt=1)
    split_seed: int = 0
    arch: ArchSettings = ArchSettings()
    settings: TrainSettings = TrainSettings()


class ScanRow(BaseModel):
    layer: int
    split: str
    acc: float


class LayerScanResponse(BaseModel):
    rows: list[ScanRow]
    peak_layer: int
    peak_acc: float
    out: str | None = None


class CvRequest(BaseModel):
    manifest: str
    features_dir: str | None = None
    k: int = Field(default=5, ge=2)
    seed: int = 0
    out: str | None = None
    weights_out: str | None = None
    fusion: FusionSettings = FusionSettings()
    arch: ArchSettings = ArchSettings()
    settings: TrainSettings = TrainSettings()


class FoldRow(BaseModel):
    fold: int
    acc: float
    precision: float
    recall: float
    f1: float
    best_epoch: int


class CvResponse(BaseModel):
    folds: list[FoldRow]
    out: str | None = None
    weights_out: str | None = None


class PredictRequest(BaseModel):
    checkpoint: str  # model file or a training output directory
    manifest: str
    features_dir: str | None = None
    logic: Literal["or", "ensemble"] = "or"
    window_seconds: float = Field(default=30.0, gt=0)
    out: str | None = None


class PredictionRow(BaseModel):
    recording_id: str
    patient_id: str
    p_nc_sum: float
    p_mci_sum: float
    label: str


class PredictResponse(BaseModel):
    rows: list[PredictionRow]
    out: str | None = None


class PerturbRequest(BaseModel):
    input_path: str  # one WAV file or a directory of them
    out_dir: str
    seed: int = 0
    copies: int = Field(default=1, ge=1)
    pin_identity: bool = False


class PerturbedFileRow(BaseModel):
    source: str
    output: str
    formant_ratio: float
    pitch_ratio: float
    clipped_samples: int


class PerturbResponse(BaseModel):
    files: list[PerturbedFileRow]


class TraceExportRequest(BaseModel):
    checkpoint_dir: str
    out: str
    final_only: bool = False


class TraceExportResponse(BaseModel):
    out: str
    epochs: int  # number of exported rows (includes the epoch-0 snapshot)
    layers: int


class ValidateFeaturesRequest(BaseModel):
    manifest: str
    features_dir: str | None = None


class ValidateFeaturesResponse(BaseModel):
    records: int
    layer_count: int
    feature_dim: int
    fps: float
    total_frames: int
