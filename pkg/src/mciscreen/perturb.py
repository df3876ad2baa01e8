"""Information-perturbation augmentation on raw audio.

Three transforms scramble speaker identity while leaving linguistic content
intact: formant shifting (spectral-envelope warp), pitch randomization
(time-stretch followed by resampling), and random frequency shaping with a
parametric equalizer (low shelf + peaking bank + high shelf). They are applied
offline to produce perturbed WAV copies before feature extraction.

All randomness comes from the seed carried in ``PerturbParams``; the same clip
and params always produce the same output.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .features import round_half_up

PCM16 = "pcm16"
FLOAT32 = "float32"

STRETCH_WINDOW_S = 0.025
STRETCH_HOP_S = 0.010
STRETCH_SEARCH_S = 0.005


class AudioError(Exception):
    """Unreadable or unsupported audio input."""


class FilterDesignError(Exception):
    """Could not obtain a stable filter section within the retry budget."""


@dataclass
class AudioClip:
    """Mono audio with samples nominally in [-1, 1]."""

    sample_rate: int
    samples: np.ndarray
    source_format: str = FLOAT32

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioError(f"expected mono audio, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise AudioError("audio contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path: str | Path) -> AudioClip:
    """Read a mono 16-bit PCM or 32-bit float RIFF/WAVE file."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as e:
        raise AudioError(f"{path}: {e}") from e
    if data.ndim != 1:
        raise AudioError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        return AudioClip(rate, data.astype(np.float64) / 32768.0, source_format=PCM16)
    if data.dtype == np.float32:
        return AudioClip(rate, data.astype(np.float64), source_format=FLOAT32)
    raise AudioError(f"{path}: unsupported sample format {data.dtype}, "
                     "expected 16-bit PCM or 32-bit float")


def write_wav(clip: AudioClip, path: str | Path) -> None:
    """Write the clip back in its source format, clamping to [-1, 1]."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if clip.source_format == PCM16:
        wavfile.write(path, clip.sample_rate, np.round(x * 32767.0).astype(np.int16))
    else:
        wavfile.write(path, clip.sample_rate, x.astype(np.float32))


# ---------------------------------------------------------------------------
# Parametric equalizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeqParams:
    n_peaking: int = 8
    gain_db_range: tuple[float, float] = (-12.0, 12.0)
    q_range: tuple[float, float] = (2.0, 5.0)
    low_shelf_hz: float = 60.0
    high_shelf_hz: float | None = None  # defaults to min(10 kHz, 0.45 * sample_rate)

    def resolved_high_shelf(self, sample_rate: int) -> float:
        if self.high_shelf_hz is not None:
            return self.high_shelf_hz
        return min(10_000.0, 0.45 * sample_rate)


def _identity_section() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])


def design_peaking(sample_rate: int, freq: float, gain_db: float, q: float) -> np.ndarray:
    """Second-order peaking-EQ section (b0 b1 b2 1 a1 a2)."""
    if not (0 < freq < sample_rate / 2):
        raise FilterDesignError(f"peaking frequency {freq} Hz outside (0, Nyquist)")
    if gain_db == 0.0:
        return _identity_section()
    amp = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * freq / sample_rate
    alpha = np.sin(w0) / (2.0 * q)
    cos_w0 = np.cos(w0)
    b = np.array([1.0 + alpha * amp, -2.0 * cos_w0, 1.0 - alpha * amp])
    a = np.array([1.0 + alpha / amp, -2.0 * cos_w0, 1.0 - alpha / amp])
    return np.concatenate([b / a[0], a / a[0]])


def _shelf(sample_rate: int, freq: float, gain_db: float, q: float, high: bool) -> np.ndarray:
    if not (0 < freq < sample_rate / 2):
        raise FilterDesignError(f"shelf frequency {freq} Hz outside (0, Nyquist)")
    if gain_db == 0.0:
        return _identity_section()
    amp = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * freq / sample_rate
    sin_w0, cos_w0 = np.sin(w0), np.cos(w0)
    beta = np.sqrt(amp) / q
    sign = 1.0 if high else -1.0
    a0 = (amp + 1.0) + sign * (amp - 1.0) * cos_w0 + beta * sin_w0
    b = np.array([
        amp * ((amp + 1.0) - sign * (amp - 1.0) * cos_w0 + beta * sin_w0),
        -2.0 * sign * amp * ((amp - 1.0) - sign * (amp + 1.0) * cos_w0),
        amp * ((amp + 1.0) - sign * (amp - 1.0) * cos_w0 - beta * sin_w0),
    ])
    a = np.array([
        a0,
        2.0 * sign * ((amp - 1.0) + sign * (amp + 1.0) * cos_w0),
        (amp + 1.0) + sign * (amp - 1.0) * cos_w0 - beta * sin_w0,
    ])
    return np.concatenate([b / a0, a / a0])


def design_low_shelf(sample_rate: int, freq: float, gain_db: float, q: float) -> np.ndarray:
    return _shelf(sample_rate, freq, gain_db, q, high=False)


def design_high_shelf(sample_rate: int, freq: float, gain_db: float, q: float) -> np.ndarray:
    return _shelf(sample_rate, freq, gain_db, q, high=True)


def section_is_stable(section: np.ndarray) -> bool:
    """Jury criterion for a normalised biquad: both poles strictly inside the unit circle."""
    a1, a2 = section[4], section[5]
    return abs(a2) < 1.0 and abs(a1) < 1.0 + a2


def peq_center_frequencies(low_hz: float, high_hz: float, n: int) -> np.ndarray:
    """Log-spaced peaking centers strictly between the shelf frequencies."""
    lo, hi = np.log10(low_hz), np.log10(high_hz)
    step = (hi - lo) / (n + 1)
    return 10.0 ** (lo + step * np.arange(1, n + 1))


def design_peq_cascade(sample_rate: int, params: PeqParams,
                       rng: np.random.Generator, max_retries: int = 100) -> np.ndarray:
    """Randomised cascade: low shelf, peaking bank, high shelf. Shape (n+2, 6).

    Every section is checked with the pole criterion; an unstable draw is
    re-sampled (this is a numerical safety net, the designs are stable for all
    in-range parameters).
    """
    high_hz = params.resolved_high_shelf(sample_rate)
    centers = peq_center_frequencies(params.low_shelf_hz, high_hz, params.n_peaking)
    designers = ([("low_shelf", params.low_shelf_hz, design_low_shelf)]
                 + [("peaking", f, design_peaking) for f in centers]
                 + [("high_shelf", high_hz, design_high_shelf)])
    sections = []
    for name, freq, designer in designers:
        for _ in range(max_retries):
            gain_db = rng.uniform(*params.gain_db_range)
            q = rng.uniform(*params.q_range)
            section = designer(sample_rate, freq, gain_db, q)
            if section_is_stable(section):
                sections.append(section)
                break
        else:
            raise FilterDesignError(f"no stable {name} section at {freq:.1f} Hz "
                                    f"after {max_retries} draws")
    return np.stack(sections)


def peq(clip: AudioClip, params: PeqParams, rng: np.random.Generator) -> AudioClip:
    """Random frequency shaping with the parametric-equalizer cascade."""
    sos = design_peq_cascade(clip.sample_rate, params, rng)
    out = signal.sosfilt(sos, clip.samples)
    return AudioClip(clip.sample_rate, out, source_format=clip.source_format)


# ---------------------------------------------------------------------------
# Time stretching and pitch
# ---------------------------------------------------------------------------

def time_stretch(x: np.ndarray, sample_rate: int, rate: float) -> np.ndarray:
    """Stretch duration by ``rate`` without changing pitch (overlap-add with
    waveform-similarity alignment)."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if rate == 1.0:
        return x.copy()
    window_len = max(32, round_half_up(sample_rate * STRETCH_WINDOW_S))
    hop = max(1, round_half_up(sample_rate * STRETCH_HOP_S))
    search = max(1, round_half_up(sample_rate * STRETCH_SEARCH_S))
    win = signal.windows.hann(window_len, sym=False)

    n_out = max(window_len, int(round(len(x) * rate)))
    pad = np.concatenate([x, np.zeros(window_len + hop)])
    out = np.zeros(n_out + window_len)
    norm = np.zeros(n_out + window_len)

    prev_src = None
    pos = 0
    while pos < n_out:
        nominal = int(round(pos / rate))
        nominal = min(nominal, len(x) - 1)
        if prev_src is None:
            src = nominal
        else:
            # align with the natural continuation of the previous frame
            ref = pad[prev_src + hop: prev_src + hop + window_len]
            lo = max(0, nominal - search)
            hi = min(len(x) - 1, nominal + search)
            seg = pad[lo: hi + window_len]
            scores = np.correlate(seg, ref, mode="valid")
            energies = np.sqrt(np.convolve(seg * seg, np.ones(window_len), mode="valid")) + 1e-12
            src = lo + int(np.argmax(scores / energies))
        frame = pad[src: src + window_len]
        out[pos: pos + window_len] += frame * win
        norm[pos: pos + window_len] += win
        prev_src = src
        pos += hop
    out = out[:n_out] / np.maximum(norm[:n_out], 1e-8)
    return out


def resample_by(x: np.ndarray, factor: float) -> np.ndarray:
    """Polyphase resampling to ``len(x) * factor`` samples."""
    frac = Fraction(factor).limit_denominator(1000)
    return signal.resample_poly(x, frac.numerator, frac.denominator)


def pitch_randomize(clip: AudioClip, ratio: float) -> AudioClip:
    """Scale the fundamental frequency by ``ratio``, keeping duration within
    one analysis hop: stretch time by ``ratio`` then resample by ``1/ratio``."""
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    if ratio == 1.0:
        return AudioClip(clip.sample_rate, clip.samples.copy(), source_format=clip.source_format)
    stretched = time_stretch(clip.samples, clip.sample_rate, ratio)
    out = resample_by(stretched, 1.0 / ratio)
    return AudioClip(clip.sample_rate, out, source_format=clip.source_format)


# ---------------------------------------------------------------------------
# Formant shifting
# ---------------------------------------------------------------------------

def _stft_params(sample_rate: int) -> tuple[int, int]:
    nperseg = 1 << int(np.ceil(np.log2(max(32, sample_rate * 0.025))))
    return nperseg, nperseg // 4


def spectral_envelope_db(mag: np.ndarray, nperseg: int, n_coeffs: int) -> np.ndarray:
    """Cepstrally smoothed log-magnitude envelope of one or more spectra.

    ``mag`` holds one-sided magnitude spectra along axis 0 (nperseg//2 + 1 bins).
    """
    log_mag = np.log(np.maximum(mag, 1e-8))
    cep = np.fft.irfft(log_mag, n=nperseg, axis=0)
    lifter = np.zeros(nperseg)
    lifter[:n_coeffs] = 1.0
    lifter[nperseg - n_coeffs + 1:] = 1.0
    cep = cep * lifter.reshape(-1, *([1] * (cep.ndim - 1)))
    return np.fft.rfft(cep, n=nperseg, axis=0).real


def formant_shift(clip: AudioClip, ratio: float) -> AudioClip:
    """Warp the spectral envelope along frequency by ``ratio``, preserving the
    fine structure (and therefore the perceived pitch) and the sample count."""
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    x = clip.samples
    sr = clip.sample_rate
    nperseg, hop = _stft_params(sr)
    n_coeffs = max(4, round_half_up(sr / 1000.0 * 1.25))
    _, _, spec = signal.stft(x, fs=sr, window="hann", nperseg=nperseg,
                             noverlap=nperseg - hop, boundary="zeros", padded=True)
    mag = np.abs(spec)
    phase = spec / np.maximum(mag, 1e-12)
    env = spectral_envelope_db(mag, nperseg, n_coeffs)

    bins = np.arange(env.shape[0], dtype=np.float64)
    warped = np.empty_like(env)
    src_bins = bins / ratio
    for t in range(env.shape[1]):
        warped[:, t] = np.interp(src_bins, bins, env[:, t])

    new_mag = np.exp(np.log(np.maximum(mag, 1e-8)) - env + warped)
    _, out = signal.istft(new_mag * phase, fs=sr, window="hann", nperseg=nperseg,
                          noverlap=nperseg - hop, boundary=True)
    if len(out) < len(x):
        out = np.concatenate([out, np.zeros(len(x) - len(out))])
    return AudioClip(sr, out[:len(x)], source_format=clip.source_format)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbParams:
    formant_ratio_range: tuple[float, float] = (1.0, 1.4)
    pitch_ratio_range: tuple[float, float] = (1.0, 2.0)
    peq: PeqParams = field(default_factory=PeqParams)
    seed: int = 0

    def __post_init__(self):
        for name, (lo, hi) in (("formant_ratio_range", self.formant_ratio_range),
                               ("pitch_ratio_range", self.pitch_ratio_range)):
            if lo < 1.0 or hi < lo:
                raise ValueError(f"{name} must satisfy 1 <= lo <= hi, got ({lo}, {hi})")

    @classmethod
    def pinned_identity(cls, seed: int = 0) -> "PerturbParams":
        """Degenerate parameters: ratios pinned to 1, all EQ gains 0 dB."""
        return cls(formant_ratio_range=(1.0, 1.0), pitch_ratio_range=(1.0, 1.0),
                   peq=PeqParams(gain_db_range=(0.0, 0.0)), seed=seed)


@dataclass(frozen=True)
class PerturbInfo:
    formant_ratio: float
    pitch_ratio: float
    clipped_samples: int


def _draw_ratio(rng: np.random.Generator, lo: float, hi: float) -> float:
    ratio = float(rng.uniform(lo, hi))
    if rng.random() < 0.5:
        ratio = 1.0 / ratio
    return ratio


def perturb_audio(clip: AudioClip, params: PerturbParams) -> tuple[AudioClip, PerturbInfo]:
    """Formant shift, then pitch randomization, then random EQ shaping.

    All parameter draws come from ``params.seed``; output samples are hard
    limited to [-1, 1] and the number of clipped samples is reported.
    """
    rng = np.random.default_rng(params.seed)
    formant_ratio = _draw_ratio(rng, *params.formant_ratio_range)
    pitch_ratio = _draw_ratio(rng, *params.pitch_ratio_range)
    out = formant_shift(clip, formant_ratio)
    out = pitch_randomize(out, pitch_ratio)
    out = peq(out, params.peq, rng)
    clipped = int(np.count_nonzero(np.abs(out.samples) > 1.0))
    limited = np.clip(out.samples, -1.0, 1.0)
    return (AudioClip(out.sample_rate, limited, source_format=clip.source_format),
            PerturbInfo(formant_ratio=formant_ratio, pitch_ratio=pitch_ratio,
                        clipped_samples=clipped))


def derive_seed(base_seed: int, name: str, copy_index: int) -> int:
    """Stable per-file, per-copy seed for batch perturbation."""
    digest = hashlib.sha256(f"{base_seed}:{name}:{copy_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class PerturbedFile:
    source: str
    output: str
    formant_ratio: float
    pitch_ratio: float
    clipped_samples: int


def perturb_path(in_path: str | Path, out_dir: str | Path, seed: int,
                 copies: int = 1, pin_identity: bool = False) -> list[PerturbedFile]:
    """Perturb one WAV or every WAV in a directory, writing copies to ``out_dir``."""
    in_path = Path(in_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if in_path.is_dir():
        sources = sorted(p for p in in_path.iterdir() if p.suffix.lower() == ".wav")
        if not sources:
            raise AudioError(f"no .wav files in {in_path}")
    else:
        sources = [in_path]
    results = []
    for src in sources:
        clip = read_wav(src)
        for k in range(copies):
            if pin_identity:
                params = PerturbParams.pinned_identity(seed=derive_seed(seed, src.name, k))
            else:
                params = PerturbParams(seed=derive_seed(seed, src.name, k))
            perturbed, info = perturb_audio(clip, params)
            dest = out / f"{src.stem}_p{k}.wav"
            write_wav(perturbed, dest)
            results.append(PerturbedFile(source=str(src), output=str(dest),
                                         formant_ratio=info.formant_ratio,
                                         pitch_ratio=info.pitch_ratio,
                                         clipped_samples=info.clipped_samples))
    return results
