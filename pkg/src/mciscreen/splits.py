"""Train/validation splitting: speaker-grouped, general, and k-fold CV.

Speaker-grouped splits keep every recording of a patient on one side, which is
what prevents classifiers from scoring well by recognising the speaker instead
of the clinical signal. The general split assigns recordings independently of
the patient and is provided to expose exactly that leakage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import UtteranceRecord, round_half_up

SPEAKER = "speaker"
GENERAL = "general"
SPLIT_MODES = (SPEAKER, GENERAL)


@dataclass(frozen=True)
class SplitSpec:
    mode: str = SPEAKER
    val_ratio: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {self.mode!r}")
        if not (0 < self.val_ratio < 1):
            raise ValueError(f"val_ratio must be in (0, 1), got {self.val_ratio}")


def _patient_labels(records: list[UtteranceRecord]) -> dict[str, str]:
    """Patient label = label of the patient's first record in manifest order."""
    labels: dict[str, str] = {}
    for rec in records:
        labels.setdefault(rec.patient_id, rec.label)
    return labels


def _patient_order(records: list[UtteranceRecord], seed: int) -> list[str]:
    """Canonical seeded patient ordering with labels striped proportionally.

    Patients are shuffled within each label group, then interleaved so that any
    prefix is close to label-balanced. Both the main speaker split and k-fold
    assignment cut this same ordering, which makes fold 1 of a k-fold equal to
    the main split under a shared seed.
    """
    labels = _patient_labels(records)
    # first-appearance order within each label group, then a seeded shuffle
    groups: dict[str, list[str]] = {}
    for pid, lab in labels.items():
        groups.setdefault(lab, []).append(pid)
    rng = np.random.default_rng(seed)
    keyed: list[tuple[float, str, str]] = []
    for lab in sorted(groups):
        ids = groups[lab]
        rng.shuffle(ids)
        for i, pid in enumerate(ids):
            keyed.append(((i + 0.5) / len(ids), lab, pid))
    keyed.sort()
    return [pid for _, _, pid in keyed]


def speaker_split(records: list[UtteranceRecord], spec: SplitSpec) -> tuple[list[UtteranceRecord], list[UtteranceRecord]]:
    """Split by patient id: validation gets round(val_ratio * n_patients) patients."""
    if spec.mode != SPEAKER:
        raise ValueError(f"speaker_split requires mode={SPEAKER!r}, got {spec.mode!r}")
    order = _patient_order(records, spec.seed)
    if len(order) < 2:
        raise ValueError(f"need at least 2 patients to split, got {len(order)}")
    n_val = round_half_up(spec.val_ratio * len(order))
    n_val = min(max(n_val, 1), len(order) - 1)
    val_patients = set(order[:n_val])
    train = [r for r in records if r.patient_id not in val_patients]
    val = [r for r in records if r.patient_id in val_patients]
    return train, val


def general_split(records: list[UtteranceRecord], spec: SplitSpec) -> tuple[list[UtteranceRecord], list[UtteranceRecord]]:
    """Split at the recording level, ignoring patient ids."""
    if spec.mode != GENERAL:
        raise ValueError(f"general_split requires mode={GENERAL!r}, got {spec.mode!r}")
    if len(records) < 2:
        raise ValueError(f"need at least 2 records to split, got {len(records)}")
    rng = np.random.default_rng(spec.seed)
    idx = np.arange(len(records))
    rng.shuffle(idx)
    n_val = round_half_up(spec.val_ratio * len(records))
    n_val = min(max(n_val, 1), len(records) - 1)
    val_idx = set(idx[:n_val].tolist())
    train = [r for i, r in enumerate(records) if i not in val_idx]
    val = [r for i, r in enumerate(records) if i in val_idx]
    return train, val


def kfold(records: list[UtteranceRecord], k: int = 5, seed: int = 0) -> list[tuple[list[UtteranceRecord], list[UtteranceRecord]]]:
    """Speaker-grouped k-fold partition of the patient set.

    Fold sizes differ by at most one patient. Fold 1's validation set equals
    the main ``speaker_split`` validation set for ``val_ratio = 1/k`` and the
    same seed.
    """
    order = _patient_order(records, seed)
    n = len(order)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} folds need at least {k} patients, got {n}")
    first = round_half_up(n / k)
    first = min(max(first, 1), n - (k - 1))
    sizes = [first]
    remaining = n - first
    base, extra = divmod(remaining, k - 1)
    sizes += [base + (1 if i < extra else 0) for i in range(k - 1)]
    folds: list[set[str]] = []
    pos = 0
    for size in sizes:
        folds.append(set(order[pos:pos + size]))
        pos += size
    pairs = []
    for val_patients in folds:
        train = [r for r in records if r.patient_id not in val_patients]
        val = [r for r in records if r.patient_id in val_patients]
        pairs.append((train, val))
    return pairs
