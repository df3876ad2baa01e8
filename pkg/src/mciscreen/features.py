"""Layered feature storage: LFSF binary files, dataset manifests, segmentation.

An LFSF ("Layered Feature Sequence File") holds one recording's features from
every encoder layer as a single float32 tensor of shape (layers, frames, dims),
plus the frame rate. The manifest is JSON Lines with one recording per line.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LFSF_MAGIC = b"LFSF"
LFSF_VERSION = 1
LFSF_HEADER = struct.Struct("<4sIIIIf8x")  # magic, version, L, T, D, fps, reserved
DEFAULT_LAYER_COUNT = 24
DEFAULT_FPS = 50.0  # 20 ms encoder stride

LABEL_NC = "NC"
LABEL_MCI = "MCI"
LABELS = (LABEL_NC, LABEL_MCI)  # index 0 = NC, index 1 = MCI (positive class)
LANGUAGES = ("en", "zh")


def label_index(label: str) -> int:
    return LABELS.index(label)


def round_half_up(x: float) -> int:
    """Round with .5 going away from zero (not banker's rounding)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


class LfsfError(Exception):
    """Malformed or unreadable LFSF file."""


class ManifestError(Exception):
    """Malformed dataset manifest."""


@dataclass
class FeatureSequence:
    """Per-layer feature tensor for one recording, shape (L, T, D)."""

    data: np.ndarray
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        self.validate()

    @property
    def layer_count(self) -> int:
        return self.data.shape[0]

    @property
    def frame_count(self) -> int:
        return self.data.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[2]

    def validate(self):
        if self.data.ndim != 3:
            raise ValueError(f"expected (layers, frames, dims) tensor, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got shape {self.data.shape}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not np.isfinite(self.data).all():
            raise ValueError("feature tensor contains non-finite values")


@dataclass(frozen=True)
class UtteranceRecord:
    """One recording's manifest entry."""

    path: str
    patient_id: str
    recording_id: str
    language: str
    label: str

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ManifestError(f"unknown language {self.language!r}, expected one of {LANGUAGES}")
        if self.label not in LABELS:
            raise ManifestError(f"unknown label {self.label!r}, expected one of {LABELS}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.patient_id, self.recording_id)


@dataclass
class SegmentView:
    """A contiguous frame window of one recording, data shape (L, frames, D)."""

    parent: tuple[str, str] | None
    start: int
    end: int
    data: np.ndarray = field(repr=False)

    @property
    def frame_count(self) -> int:
        return self.end - self.start


def write_lfsf(seq: FeatureSequence, path: str | Path) -> None:
    """Write a FeatureSequence to an LFSF file (little-endian float32, layer-major)."""
    seq.validate()
    header = LFSF_HEADER.pack(
        LFSF_MAGIC, LFSF_VERSION,
        seq.layer_count, seq.frame_count, seq.feature_dim,
        float(seq.fps),
    )
    payload = np.ascontiguousarray(seq.data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_lfsf(path: str | Path) -> FeatureSequence:
    """Read and fully validate an LFSF file."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < LFSF_HEADER.size:
        raise LfsfError(f"{path}: file shorter than the {LFSF_HEADER.size}-byte header")
    magic, version, layers, frames, dims, fps = LFSF_HEADER.unpack_from(raw)
    if magic != LFSF_MAGIC:
        raise LfsfError(f"{path}: bad magic {magic!r}")
    if version != LFSF_VERSION:
        raise LfsfError(f"{path}: unsupported version {version}")
    if min(layers, frames, dims) < 1:
        raise LfsfError(f"{path}: invalid dimensions L={layers} T={frames} D={dims}")
    expected = layers * frames * dims * 4
    payload = raw[LFSF_HEADER.size:]
    if len(payload) < expected:
        raise LfsfError(f"{path}: truncated payload, {len(payload)} bytes < {expected} expected")
    if len(payload) > expected:
        raise LfsfError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(layers, frames, dims)
    if not np.isfinite(data).all():
        raise LfsfError(f"{path}: payload contains non-finite values")
    if fps <= 0 or not np.isfinite(fps):
        raise LfsfError(f"{path}: invalid fps {fps}")
    return FeatureSequence(data=data.copy(), fps=float(fps))


def segment(seq: FeatureSequence, window_seconds: float,
            min_frames: int = 1, parent: tuple[str, str] | None = None) -> list[SegmentView]:
    """Cut a recording into consecutive non-overlapping fixed-duration windows.

    The final remainder is kept when it has at least ``min_frames`` frames; with
    the default of 1 the segments exactly cover [0, T).
    """
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    window = max(1, round_half_up(seq.fps * window_seconds))
    total = seq.frame_count
    segments = []
    for start in range(0, total, window):
        end = min(start + window, total)
        if end - start < min_frames and start > 0:
            break
        segments.append(SegmentView(parent=parent, start=start, end=end,
                                    data=seq.data[:, start:end, :]))
    return segments


def load_manifest(path: str | Path) -> list[UtteranceRecord]:
    """Load a JSON-Lines manifest, validating every record and rejecting duplicates."""
    required = ("path", "patient_id", "recording_id", "language", "label")
    records: list[UtteranceRecord] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({e})") from e
            missing = [k for k in required if k not in obj]
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing fields {missing}")
            try:
                rec = UtteranceRecord(path=str(obj["path"]), patient_id=str(obj["patient_id"]),
                                      recording_id=str(obj["recording_id"]),
                                      language=str(obj["language"]), label=str(obj["label"]))
            except ManifestError as e:
                raise ManifestError(f"{path}:{lineno}: {e}") from e
            if rec.key in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate (patient_id, recording_id) {rec.key}")
            seen.add(rec.key)
            records.append(rec)
    return records


def write_manifest(records: list[UtteranceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps({
                "path": rec.path, "patient_id": rec.patient_id,
                "recording_id": rec.recording_id,
                "language": rec.language, "label": rec.label,
            }) + "\n")


def resolve_feature_path(record: UtteranceRecord, manifest_path: str | Path,
                         features_dir: str | Path | None = None) -> Path:
    """Resolve a manifest's (possibly relative) feature path against a base directory."""
    p = Path(record.path)
    if p.is_absolute():
        return p
    base = Path(features_dir) if features_dir is not None else Path(manifest_path).parent
    return base / p


@dataclass
class RecordingSegments:
    """A recording's manifest entry joined with its segmented feature windows."""

    record: UtteranceRecord
    fps: float
    segments: list[np.ndarray] = field(repr=False)  # each (L, frames, D)


def load_recording_segments(records: list[UtteranceRecord], manifest_path: str | Path,
                            features_dir: str | Path | None = None,
                            window_seconds: float = 30.0,
                            min_frames: int = 1) -> list[RecordingSegments]:
    """Load every record's LFSF file and cut it into training/inference windows."""
    out = []
    for rec in records:
        seq = read_lfsf(resolve_feature_path(rec, manifest_path, features_dir))
        segs = segment(seq, window_seconds, min_frames=min_frames, parent=rec.key)
        out.append(RecordingSegments(record=rec, fps=seq.fps,
                                     segments=[s.data for s in segs]))
    return out


def synth_dataset(out_dir: str | Path, n_patients: int, recs_per_patient: int,
                  layers: int, frames: int, dims: int,
                  informative_layer: int, effect_size: float, seed: int,
                  fps: float = DEFAULT_FPS) -> Path:
    """Generate a synthetic labelled dataset of LFSF files plus a manifest.

    All layers are unit Gaussian noise except ``informative_layer`` (1-based),
    where the two classes' means differ by ``effect_size`` along a fixed random
    unit direction. Patients alternate NC/MCI; output is byte-deterministic
    under ``seed``.

    Returns the manifest path.
    """
    if not (1 <= informative_layer <= layers):
        raise ValueError(f"informative_layer must be in [1, {layers}], got {informative_layer}")
    if effect_size < 0:
        raise ValueError(f"effect_size must be >= 0, got {effect_size}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dims)
    direction /= np.linalg.norm(direction)
    shift = (effect_size / 2.0) * direction

    records = []
    for p in range(n_patients):
        label = LABELS[p % 2]
        sign = 1.0 if label == LABEL_MCI else -1.0
        for r in range(recs_per_patient):
            data = rng.standard_normal((layers, frames, dims)).astype(np.float32)
            data[informative_layer - 1] += (sign * shift).astype(np.float32)
            name = f"p{p:03d}_r{r}.lfsf"
            write_lfsf(FeatureSequence(data=data, fps=fps), out / name)
            records.append(UtteranceRecord(path=name, patient_id=f"p{p:03d}",
                                           recording_id=f"r{r}",
                                           language=LANGUAGES[p % 2], label=label))
    manifest = out / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest
