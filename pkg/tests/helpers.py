"""Shared utilities for the test suite: dataset loading shortcuts and a
central-finite-difference gradient reference."""

from __future__ import annotations

import re

import numpy as np
import torch
import torch.nn.functional as F

from mciscreen.features import load_manifest, load_recording_segments, synth_dataset
from mciscreen.model import ClassifierConfig, FusionConfig, build_model
from mciscreen.splits import SplitSpec, speaker_split


def make_tiny_dataset(out_dir, n_patients=6, recs_per_patient=2, layers=4, frames=40,
                      dims=6, informative_layer=3, effect_size=3.0, seed=11, fps=100.0):
    return synth_dataset(out_dir, n_patients=n_patients, recs_per_patient=recs_per_patient,
                         layers=layers, frames=frames, dims=dims,
                         informative_layer=informative_layer, effect_size=effect_size,
                         seed=seed, fps=fps)


def split_and_load(manifest, ratio=0.2, seed=0, window_seconds=0.3):
    """Speaker split a manifest and load both sides' segments."""
    records = load_manifest(manifest)
    train_records, val_records = speaker_split(records, SplitSpec(val_ratio=ratio, seed=seed))
    loaded = {rec.record.key: rec
              for rec in load_recording_segments(records, manifest,
                                                 window_seconds=window_seconds)}
    return ([loaded[r.key] for r in train_records],
            [loaded[r.key] for r in val_records])


def build_double_model(arch: ClassifierConfig, fusion: FusionConfig | None, seed=0):
    """A float64 model with dropout disabled, for numeric comparisons."""
    assert arch.dropout == 0.0, "gradient checks need dropout disabled"
    model = build_model(arch, fusion, seed=seed).double()
    model.eval()
    return model


def finite_difference_gradients(model, h: torch.Tensor, labels: torch.Tensor,
                                step: float = 1e-4, loss_from=None):
    """Analytic vs central-difference gradients for every parameter element.

    ``loss_from(name)`` evaluates the loss after the named parameter was
    perturbed in place (defaults to a full forward).  Returns
    ``{name: (analytic, numeric)}`` with flattened float64 tensors.
    """
    h = h.double()
    model.zero_grad()
    F.cross_entropy(model(h), labels).backward()

    if loss_from is None:
        def loss_from(_name: str) -> float:
            with torch.no_grad():
                return float(F.cross_entropy(model(h), labels))

    results = {}
    for name, param in model.named_parameters():
        analytic = param.grad.detach().clone().reshape(-1)
        flat = param.data.reshape(-1)
        numeric = torch.empty_like(analytic)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            up = loss_from(name)
            flat[i] = orig - step
            down = loss_from(name)
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * step)
        results[name] = (analytic, numeric)
    return results


class StagedLoss:
    """Loss evaluator that only recomputes stages a perturbed parameter can
    influence: recurrent layers before the perturbed one are served from a
    cache computed with the unperturbed weights.

    This exists to keep whole-model central-difference sweeps fast; it cannot
    mask a staging bug, because a wrong cached activation would corrupt the
    numeric gradients and fail the analytic comparison.  Requires full-length
    segments (no padding mask) and an eval-mode float64 model.
    """

    def __init__(self, model, h: torch.Tensor, labels: torch.Tensor):
        self.model, self.h, self.labels = model, h.double(), labels
        cfg = model.config
        self.singles = []
        for k in range(cfg.num_layers):
            single = torch.nn.LSTM(cfg.feature_dim if k == 0 else 2 * cfg.hidden_size,
                                   cfg.hidden_size, num_layers=1, batch_first=True,
                                   bidirectional=True).double()
            for base in ("weight_ih", "weight_hh", "bias_ih", "bias_hh"):
                for suffix in ("", "_reverse"):
                    setattr(single, f"{base}_l0{suffix}",
                            getattr(model.lstm, f"{base}_l{k}{suffix}"))
            single.eval()
            self.singles.append(single)
        with torch.no_grad():
            self.stage_in = [model.fusion(self.h)]
            for single in self.singles:
                self.stage_in.append(single(self.stage_in[-1])[0])
            self.pooled = self.stage_in[-1].mean(dim=1)
            self.projected = model.proj(self.pooled)
            direct = float(F.cross_entropy(model(self.h), labels))
        assert abs(self.loss_from("fusion.p") - direct) < 1e-12, \
            "staged evaluation disagrees with the full forward"

    def loss_from(self, name: str) -> float:
        lstm_layer = re.match(r"lstm\..*_l(\d+)(_reverse)?$", name)
        with torch.no_grad():
            if name == "fusion.p":
                x, start = self.model.fusion(self.h), 0
            elif lstm_layer:
                start = int(lstm_layer.group(1))
                x = self.stage_in[start]
            elif name.startswith("proj."):
                logits = self.model.head(self.model.proj(self.pooled))
                return float(F.cross_entropy(logits, self.labels))
            elif name.startswith("head."):
                logits = self.model.head(self.projected)
                return float(F.cross_entropy(logits, self.labels))
            else:
                raise AssertionError(f"unrecognised parameter {name}")
            for single in self.singles[start:]:
                x = single(x)[0]
            logits = self.model.head(self.model.proj(x.mean(dim=1)))
            return float(F.cross_entropy(logits, self.labels))


def gradient_mismatches(results, rel_tol=1e-4, abs_tol=1e-7):
    """Elements failing both the relative and the absolute tolerance."""
    bad = []
    for name, (analytic, numeric) in results.items():
        diff = (analytic - numeric).abs()
        scale = torch.maximum(analytic.abs(), numeric.abs())
        ok = (diff <= abs_tol) | (diff <= rel_tol * scale)
        for idx in torch.nonzero(~ok).reshape(-1).tolist():
            bad.append((name, idx, float(analytic[idx]), float(numeric[idx])))
    return bad


def spectral_peak_hz(x: np.ndarray, sample_rate: int) -> float:
    """Frequency of the largest magnitude bin of the windowed DFT."""
    windowed = x * np.hanning(len(x))
    spectrum = np.abs(np.fft.rfft(windowed))
    return float(np.argmax(spectrum) * sample_rate / len(x))


def harmonic_envelope_peak_hz(x: np.ndarray, sample_rate: int, f0: float,
                              lo_hz: float = 200.0, hi_hz: float = 3000.0) -> float:
    """Envelope peak of a harmonic signal, sampled at its harmonic amplitudes.

    Measures |X| at each multiple of f0 inside [lo_hz, hi_hz] and refines the
    argmax with a parabolic fit in log amplitude.  Shares no code with the
    cepstral implementation under test.
    """
    spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    df = sample_rate / len(x)
    orders = np.arange(int(np.ceil(lo_hz / f0)), int(hi_hz / f0) + 1)
    amps = []
    for k in orders:
        centre = int(round(k * f0 / df))
        amps.append(spectrum[centre - 2:centre + 3].max())
    log_amps = np.log(np.asarray(amps))
    i = int(np.argmax(log_amps))
    offset = 0.0
    if 0 < i < len(log_amps) - 1:
        denom = log_amps[i - 1] - 2 * log_amps[i] + log_amps[i + 1]
        offset = 0.5 * (log_amps[i - 1] - log_amps[i + 1]) / denom
    return float((orders[i] + offset) * f0)


def autocorr_period_samples(x: np.ndarray, min_lag: int, max_lag: int) -> int:
    """Fundamental period estimate: lag of the autocorrelation maximum."""
    ac = np.correlate(x, x, mode="full")[len(x) - 1:]
    return int(min_lag + np.argmax(ac[min_lag:max_lag + 1]))
