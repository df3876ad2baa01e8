"""Trainable stack: learnable layer-weight fusion feeding a BiLSTM classifier.

The fusion holds one learnable scalar per encoder layer; the softmax of that
vector forms a convex combination of the layer features. Initialisation either
spreads the weights uniformly or concentrates them on a chosen "major" layer,
so training can start from a known-good layer instead of from scratch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

CHECKPOINT_VERSION = 1

INIT_UNIFORM = "uniform"
INIT_PRIOR = "prior"


class NonFiniteActivationError(RuntimeError):
    def __init__(self, stage: str):
        super().__init__(f"non-finite activation at stage {stage!r}")
        self.stage = stage


@dataclass(frozen=True)
class FusionConfig:
    """How to initialise the per-layer fusion weights."""

    init_mode: str = INIT_PRIOR
    major_layer: int = 18   # 1-based
    major_weight: float = 5.0

    def __post_init__(self):
        if self.init_mode not in (INIT_UNIFORM, INIT_PRIOR):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.major_weight < 0:
            raise ValueError(f"major_weight must be >= 0, got {self.major_weight}")


@dataclass(frozen=True)
class ClassifierConfig:
    """Architecture of the classifier consuming (layers, frames, dims) segments.

    ``input_layer`` = None fuses all layers with learnable weights; an integer
    selects that single 1-based layer and the fusion is bypassed entirely.
    """

    layer_count: int
    feature_dim: int
    hidden_size: int = 256
    num_layers: int = 5
    proj_dim: int = 64
    dropout: float = 0.1
    input_layer: int | None = None

    def __post_init__(self):
        if self.layer_count < 1 or self.feature_dim < 1:
            raise ValueError("layer_count and feature_dim must be >= 1")
        if self.input_layer is not None and not (1 <= self.input_layer <= self.layer_count):
            raise ValueError(f"input_layer must be in [1, {self.layer_count}], got {self.input_layer}")


def prior_init(layer_count: int, major_layer: int, major_weight: float) -> np.ndarray:
    """Raw fusion weights that are zero except for the major layer (1-based)."""
    if not (1 <= major_layer <= layer_count):
        raise ValueError(f"major_layer must be in [1, {layer_count}], got {major_layer}")
    if major_weight < 0:
        raise ValueError(f"major_weight must be >= 0, got {major_weight}")
    p = np.zeros(layer_count, dtype=np.float32)
    p[major_layer - 1] = major_weight
    return p


def initial_weights(layer_count: int, fusion: FusionConfig) -> np.ndarray:
    if fusion.init_mode == INIT_UNIFORM:
        return np.zeros(layer_count, dtype=np.float32)
    return prior_init(layer_count, fusion.major_layer, fusion.major_weight)


def fuse(p: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Weighted sum over the layer axis with weights softmax(p).

    ``p`` has shape (L,), ``h`` has shape (L, T, D); the result is (T, D).
    """
    pt = torch.as_tensor(np.asarray(p), dtype=torch.float64)
    ht = torch.as_tensor(np.asarray(h), dtype=torch.float64)
    if pt.shape[0] != ht.shape[0]:
        raise ValueError(f"weight length {pt.shape[0]} != layer count {ht.shape[0]}")
    w = torch.softmax(pt, dim=0)
    return torch.einsum("l,ltd->td", w, ht).numpy()


class LayerFusion(nn.Module):
    """Learnable softmax-normalised combination of layer features."""

    def __init__(self, layer_count: int, init: np.ndarray):
        super().__init__()
        if init.shape != (layer_count,):
            raise ValueError(f"init shape {init.shape} != ({layer_count},)")
        self.p = nn.Parameter(torch.as_tensor(init.copy()))

    def normalized_weights(self) -> torch.Tensor:
        return torch.softmax(self.p, dim=0)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        # h: (B, L, T, D) -> (B, T, D)
        if h.shape[1] != self.p.shape[0]:
            raise ValueError(f"layer count {h.shape[1]} != weight length {self.p.shape[0]}")
        w = torch.softmax(self.p, dim=0).to(h.dtype)
        return torch.einsum("l,bltd->btd", w, h)


class SegmentClassifier(nn.Module):
    """Fusion (or single-layer pick) -> stacked BiLSTM -> mean pool -> projection -> 2-way head."""

    def __init__(self, config: ClassifierConfig, fusion: FusionConfig | None = None):
        super().__init__()
        self.config = config
        self.fusion_config = fusion
        if config.input_layer is None:
            init = initial_weights(config.layer_count, fusion or FusionConfig(init_mode=INIT_UNIFORM))
            self.fusion = LayerFusion(config.layer_count, init)
        else:
            self.fusion = None
        self.lstm = nn.LSTM(
            input_size=config.feature_dim,
            hidden_size=config.hidden_size,
            num_layers=config.num_layers,
            batch_first=True,
            bidirectional=True,
            dropout=config.dropout if config.num_layers > 1 else 0.0,
        )
        self.proj = nn.Linear(2 * config.hidden_size, config.proj_dim)
        self.proj_dropout = nn.Dropout(config.dropout)
        self.head = nn.Linear(config.proj_dim, 2)

    @staticmethod
    def _check_finite(t: torch.Tensor, stage: str):
        if not torch.isfinite(t).all():
            raise NonFiniteActivationError(stage)

    def forward(self, h: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        """Classify padded segment batches.

        ``h`` is (B, L, T, D); ``lengths`` gives each item's true frame count
        (all T when omitted). Returns (B, 2) logits.
        """
        if h.dim() != 4:
            raise ValueError(f"expected (B, L, T, D) input, got shape {tuple(h.shape)}")
        if lengths is None:
            lengths = torch.full((h.shape[0],), h.shape[2], dtype=torch.int64)
        if self.fusion is not None:
            x = self.fusion(h)
        else:
            x = h[:, self.config.input_layer - 1]
        self._check_finite(x, "fusion")
        if bool((lengths < h.shape[2]).any()):
            packed = nn.utils.rnn.pack_padded_sequence(
                x, lengths.cpu(), batch_first=True, enforce_sorted=False)
            out, _ = self.lstm(packed)
            out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=h.shape[2])
        else:
            out, _ = self.lstm(x)
        self._check_finite(out, "lstm")
        mask = (torch.arange(h.shape[2]).unsqueeze(0) < lengths.unsqueeze(1)).to(out.dtype)
        pooled = (out * mask.unsqueeze(-1)).sum(dim=1) / lengths.to(out.dtype).unsqueeze(1)
        projected = self.proj_dropout(self.proj(pooled))
        self._check_finite(projected, "projection")
        logits = self.head(projected)
        self._check_finite(logits, "head")
        return logits

    def forward_single(self, h: torch.Tensor) -> torch.Tensor:
        """Logits for one (L, T, D) segment."""
        return self.forward(h.unsqueeze(0))[0]


def cross_entropy(logits: torch.Tensor, label: int | torch.Tensor) -> torch.Tensor:
    """Negative log softmax probability of the true label."""
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    target = torch.as_tensor(label).reshape(-1)
    return F.cross_entropy(logits, target)


def init_parameters(model: SegmentClassifier, seed: int) -> None:
    """Deterministic init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) everywhere,
    then forget-gate biases set to 1. Fusion weights are left at their prior."""
    g = torch.Generator().manual_seed(seed)
    hidden = model.config.hidden_size

    def uniform_(t: torch.Tensor, fan_in: int):
        bound = 1.0 / (fan_in ** 0.5)
        with torch.no_grad():
            t.uniform_(-bound, bound, generator=g)

    for name, param in model.lstm.named_parameters():
        if name.startswith("weight_ih"):
            uniform_(param, param.shape[1])
        elif name.startswith("weight_hh"):
            uniform_(param, hidden)
        else:
            uniform_(param, hidden)
    with torch.no_grad():
        for name, param in model.lstm.named_parameters():
            if name.startswith("bias_ih"):
                param[hidden:2 * hidden].fill_(1.0)  # forget gate
            elif name.startswith("bias_hh"):
                param[hidden:2 * hidden].fill_(0.0)
    uniform_(model.proj.weight, 2 * hidden)
    uniform_(model.proj.bias, 2 * hidden)
    uniform_(model.head.weight, model.config.proj_dim)
    uniform_(model.head.bias, model.config.proj_dim)


def build_model(config: ClassifierConfig, fusion: FusionConfig | None, seed: int) -> SegmentClassifier:
    model = SegmentClassifier(config, fusion)
    init_parameters(model, seed)
    return model


def save_checkpoint(model: SegmentClassifier, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "arch": asdict(model.config),
        "fusion": asdict(model.fusion_config) if model.fusion_config is not None else None,
        "state_dict": {k: v.clone() for k, v in model.state_dict().items()},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> SegmentClassifier:
    """Rebuild a model from a checkpoint, validating every tensor shape."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    config = ClassifierConfig(**payload["arch"])
    fusion = FusionConfig(**payload["fusion"]) if payload["fusion"] is not None else None
    model = SegmentClassifier(config, fusion)
    expected = model.state_dict()
    state = payload["state_dict"]
    if set(state) != set(expected):
        raise ValueError(f"{path}: checkpoint parameter set does not match architecture metadata")
    for key, tensor in state.items():
        if tuple(tensor.shape) != tuple(expected[key].shape):
            raise ValueError(f"{path}: shape mismatch for {key}: "
                             f"{tuple(tensor.shape)} != {tuple(expected[key].shape)}")
    model.load_state_dict(state)
    return model
