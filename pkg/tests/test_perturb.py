import numpy as np
import pytest
from scipy import signal as sps
from scipy.io import wavfile

import helpers
from mciscreen.perturb import (AudioClip, AudioError, FilterDesignError, PeqParams,
                               PerturbParams, derive_seed, design_high_shelf,
                               design_low_shelf, design_peaking, design_peq_cascade,
                               formant_shift, peq, peq_center_frequencies,
                               perturb_audio, perturb_path, pitch_randomize,
                               read_wav, resample_by, section_is_stable,
                               time_stretch, write_wav)

SR = 16000


def tone(freq, seconds=1.0, sr=SR, amp=0.5):
    t = np.arange(int(sr * seconds)) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def voiced_like(sr=SR, seconds=1.5, seed=0):
    """Tone mixture plus a little noise; a rough stand-in for speech."""
    rng = np.random.default_rng(seed)
    x = (tone(220, seconds, sr, 0.3) + tone(440, seconds, sr, 0.2)
         + tone(880, seconds, sr, 0.1) + 0.02 * rng.standard_normal(int(sr * seconds)))
    return x * np.hanning(len(x)) ** 0.05


class TestWavIO:
    def test_pcm16_round_trip(self, tmp_path):
        clip = AudioClip(SR, tone(440, 0.2), source_format="pcm16")
        path = tmp_path / "t.wav"
        write_wav(clip, path)
        _, raw = wavfile.read(path)
        assert raw.dtype == np.int16
        back = read_wav(path)
        assert back.sample_rate == SR
        assert back.source_format == "pcm16"
        assert np.max(np.abs(back.samples - clip.samples)) < 1 / 32768

    def test_float32_round_trip(self, tmp_path):
        clip = AudioClip(SR, tone(440, 0.2))
        path = tmp_path / "t.wav"
        write_wav(clip, path)
        back = read_wav(path)
        assert back.source_format == "float32"
        assert np.max(np.abs(back.samples - clip.samples)) < 1e-7

    def test_write_clamps_overrange(self, tmp_path):
        clip = AudioClip(SR, np.array([1.5, -1.5, 0.0]))
        path = tmp_path / "t.wav"
        write_wav(clip, path)
        assert np.max(np.abs(read_wav(path).samples)) <= 1.0

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "s.wav"
        wavfile.write(path, SR, np.zeros((100, 2), dtype=np.int16))
        with pytest.raises(AudioError, match="mono"):
            read_wav(path)

    def test_unsupported_sample_format_rejected(self, tmp_path):
        path = tmp_path / "s.wav"
        wavfile.write(path, SR, np.zeros(100, dtype=np.int32))
        with pytest.raises(AudioError, match="format"):
            read_wav(path)

    def test_clip_validation(self):
        with pytest.raises(AudioError):
            AudioClip(0, np.zeros(10))
        with pytest.raises(AudioError):
            AudioClip(SR, np.zeros((10, 2)))
        with pytest.raises(AudioError):
            AudioClip(SR, np.array([0.0, np.nan]))


class TestBiquadDesigns:
    """The frequency response of each section is checked against the gain it
    was designed for, via an independent response evaluation (freqz)."""

    def _mag_at(self, section, freq, sr=SR):
        w, h = sps.freqz(section[:3], section[3:], worN=[2 * np.pi * freq / sr])
        return float(np.abs(h[0]))

    @pytest.mark.parametrize("gain_db", [-12.0, -3.0, 3.0, 12.0])
    def test_peaking_hits_design_gain_at_center(self, gain_db):
        section = design_peaking(SR, 1000.0, gain_db, q=3.0)
        assert self._mag_at(section, 1000.0) == pytest.approx(10 ** (gain_db / 20),
                                                              rel=1e-9)

    def test_peaking_is_transparent_far_from_center(self):
        section = design_peaking(SR, 1000.0, 12.0, q=5.0)
        assert self._mag_at(section, 20.0) == pytest.approx(1.0, abs=1e-3)
        assert self._mag_at(section, 7900.0) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("gain_db", [-12.0, 6.0])
    def test_low_shelf_gain_at_dc(self, gain_db):
        section = design_low_shelf(SR, 60.0, gain_db, q=2.0)
        assert self._mag_at(section, 1e-3) == pytest.approx(10 ** (gain_db / 20),
                                                            rel=1e-6)
        assert self._mag_at(section, 7999.0) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("gain_db", [-12.0, 6.0])
    def test_high_shelf_gain_at_nyquist(self, gain_db):
        section = design_high_shelf(SR, 7200.0, gain_db, q=2.0)
        assert self._mag_at(section, 7999.9) == pytest.approx(10 ** (gain_db / 20),
                                                              rel=1e-4)
        assert self._mag_at(section, 1e-3) == pytest.approx(1.0, abs=1e-3)

    def test_zero_gain_sections_are_exact_identity(self):
        identity = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        for designer, freq in ((design_peaking, 500.0), (design_low_shelf, 60.0),
                               (design_high_shelf, 7000.0)):
            assert np.array_equal(designer(SR, freq, 0.0, 3.0), identity)

    def test_out_of_range_frequency_rejected(self):
        with pytest.raises(FilterDesignError):
            design_peaking(SR, 9000.0, 3.0, 2.0)
        with pytest.raises(FilterDesignError):
            design_low_shelf(SR, 0.0, 3.0, 2.0)

    def test_stability_criterion_agrees_with_roots(self, rng):
        for _ in range(200):
            a1, a2 = rng.uniform(-2.2, 2.2, size=2)
            section = np.array([1.0, 0.0, 0.0, 1.0, a1, a2])
            roots_inside = np.all(np.abs(np.roots([1.0, a1, a2])) < 1.0)
            assert section_is_stable(section) == roots_inside


class TestPeqCascade:
    def test_centers_are_log_spaced_between_shelves(self):
        centers = peq_center_frequencies(60.0, 7200.0, 8)
        assert len(centers) == 8
        assert 60.0 < centers[0] < centers[-1] < 7200.0
        ratios = centers[1:] / centers[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-9)

    def test_cascade_layout(self, rng):
        sos = design_peq_cascade(SR, PeqParams(), rng)
        assert sos.shape == (10, 6)
        assert all(section_is_stable(s) for s in sos)

    def test_high_shelf_tracks_sample_rate(self):
        assert PeqParams().resolved_high_shelf(16000) == 7200.0
        assert PeqParams().resolved_high_shelf(44100) == 10000.0

    def test_cascade_equals_sequential_sections(self, rng):
        x = rng.standard_normal(2048)
        sos = design_peq_cascade(SR, PeqParams(), np.random.default_rng(5))
        full = sps.sosfilt(sos, x)
        step = x
        for section in sos:
            step = sps.sosfilt(section[None, :], step)
        assert np.allclose(full, step, atol=1e-12)

    def test_zero_gain_cascade_is_bit_exact_identity(self, rng):
        clip = AudioClip(SR, rng.standard_normal(4000))
        out = peq(clip, PeqParams(gain_db_range=(0.0, 0.0)), np.random.default_rng(0))
        assert np.array_equal(out.samples, clip.samples)

    def test_band_energy_follows_designed_response(self, rng):
        """Dual route: the measured band-energy ratio after filtering white
        noise must match the energy ratio predicted from the frequency
        response itself."""
        x = rng.standard_normal(SR * 2)
        section = design_peaking(SR, 1000.0, 12.0, q=2.0)
        y = sps.sosfilt(section[None, :], x)

        def band_energy(sig, lo, hi):
            spec = np.abs(np.fft.rfft(sig)) ** 2
            freqs = np.fft.rfftfreq(len(sig), 1 / SR)
            return spec[(freqs >= lo) & (freqs < hi)].sum()

        measured = band_energy(y, 800, 1250) / band_energy(x, 800, 1250)
        w, h = sps.freqz(section[:3], section[3:], worN=4096, fs=SR)
        band = (w >= 800) & (w < 1250)
        predicted = float(np.mean(np.abs(h[band]) ** 2))
        assert measured == pytest.approx(predicted, rel=0.15)
        # and the passband far away is untouched
        assert band_energy(y, 3000, 6000) == pytest.approx(
            band_energy(x, 3000, 6000), rel=0.05)

    def test_draws_are_stable_over_many_seeds(self):
        rng = np.random.default_rng(123)
        for _ in range(1000):
            sos = design_peq_cascade(SR, PeqParams(), rng)
            assert all(section_is_stable(s) for s in sos)


class TestTimeStretch:
    @pytest.mark.parametrize("rate", [0.5, 0.75, 1.31, 2.0])
    def test_output_length_is_rounded_scale(self, rate):
        x = voiced_like()
        y = time_stretch(x, SR, rate)
        assert len(y) == int(round(len(x) * rate))

    def test_rate_one_is_exact_copy(self):
        x = voiced_like()
        y = time_stretch(x, SR, 1.0)
        assert np.array_equal(y, x)

    @pytest.mark.parametrize("rate", [0.7, 1.5])
    def test_pitch_is_preserved(self, rate):
        x = tone(440, 1.0)
        y = time_stretch(x, SR, rate)
        peak = helpers.spectral_peak_hz(y, SR)
        assert peak == pytest.approx(440, rel=0.03)

    def test_energy_roughly_preserved(self):
        x = voiced_like()
        y = time_stretch(x, SR, 1.4)
        assert np.std(y) == pytest.approx(np.std(x), rel=0.25)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            time_stretch(np.zeros(100), SR, 0.0)


class TestPitch:
    @pytest.mark.parametrize("ratio, expected", [(2.0, 880.0), (0.5, 220.0)])
    def test_spectral_peak_scales(self, ratio, expected):
        clip = AudioClip(SR, tone(440, 2.0))
        out = pitch_randomize(clip, ratio)
        assert helpers.spectral_peak_hz(out.samples, SR) == pytest.approx(expected,
                                                                          rel=0.03)

    def test_duration_approximately_preserved(self):
        clip = AudioClip(SR, voiced_like())
        for ratio in (0.6, 1.37, 1.9):
            out = pitch_randomize(clip, ratio)
            assert abs(len(out.samples) - len(clip.samples)) <= 0.01 * len(clip.samples)

    def test_ratio_one_is_exact_bypass(self):
        clip = AudioClip(SR, voiced_like())
        out = pitch_randomize(clip, 1.0)
        assert np.array_equal(out.samples, clip.samples)

    def test_resample_by_length(self):
        x = np.zeros(1000)
        assert len(resample_by(x, 0.5)) == 500
        assert len(resample_by(x, 2.0)) == 2000


class TestFormantShift:
    F0 = 100.0

    def _harmonic_hump(self, center_hz, sigma_hz=400.0, seconds=2.0):
        """Impulse train coloured by a broad Gaussian log-spectral hump.

        The harmonic comb is fine structure the shifter must leave alone; the
        hump is wide enough for the cepstral envelope to capture fully, so its
        peak should move by exactly the requested ratio.
        """
        n = int(SR * seconds)
        x = np.zeros(n)
        x[::int(round(SR / self.F0))] = 1.0
        spectrum = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, 1 / SR)
        hump = 3.0 * np.exp(-0.5 * ((freqs - center_hz) / sigma_hz) ** 2)
        y = np.fft.irfft(spectrum * np.exp(hump / 2), n=n)
        return 0.2 * y / np.max(np.abs(y))

    def test_envelope_peak_moves_by_ratio(self):
        x = self._harmonic_hump(700.0)
        assert helpers.harmonic_envelope_peak_hz(x, SR, self.F0) == pytest.approx(
            700, rel=0.01)
        out = formant_shift(AudioClip(SR, x), 1.3)
        shifted_peak = helpers.harmonic_envelope_peak_hz(out.samples, SR, self.F0)
        assert shifted_peak == pytest.approx(700 * 1.3, rel=0.03)

    def test_envelope_peak_moves_down_for_inverse_ratio(self):
        x = self._harmonic_hump(900.0)
        out = formant_shift(AudioClip(SR, x), 1 / 1.4)
        assert helpers.harmonic_envelope_peak_hz(out.samples, SR, self.F0) == pytest.approx(
            900 / 1.4, rel=0.03)

    def test_fundamental_period_is_preserved(self):
        """An impulse train keeps its periodicity when only the envelope moves."""
        period = SR // 120
        x = np.zeros(SR)
        x[::period] = 1.0
        section = design_peaking(SR, 700.0, 18.0, q=4.0)
        x = sps.sosfilt(section[None, :], x)
        x = 0.5 * x / np.max(np.abs(x))
        out = formant_shift(AudioClip(SR, x), 1.3)
        before = helpers.autocorr_period_samples(x, period // 2, period * 2)
        after = helpers.autocorr_period_samples(out.samples, period // 2, period * 2)
        assert abs(after - before) <= 1

    def test_sample_count_exactly_preserved(self):
        for n in (SR, SR + 137, SR // 3):
            clip = AudioClip(SR, voiced_like()[:n])
            out = formant_shift(clip, 1.25)
            assert len(out.samples) == n

    def test_unit_ratio_is_near_identity(self):
        clip = AudioClip(SR, voiced_like())
        out = formant_shift(clip, 1.0)
        rms = np.sqrt(np.mean((out.samples - clip.samples) ** 2))
        assert rms < 1e-3


class TestComposition:
    def test_pinned_identity_is_near_identity(self):
        clip = AudioClip(SR, voiced_like())
        out, info = perturb_audio(clip, PerturbParams.pinned_identity(seed=7))
        rms = np.sqrt(np.mean((out.samples - clip.samples) ** 2))
        assert rms < 1e-3
        assert info.formant_ratio == 1.0 and info.pitch_ratio == 1.0
        assert info.clipped_samples == 0

    def test_deterministic_under_seed(self):
        clip = AudioClip(SR, voiced_like())
        a, _ = perturb_audio(clip, PerturbParams(seed=5))
        b, _ = perturb_audio(clip, PerturbParams(seed=5))
        assert np.array_equal(a.samples, b.samples)
        c, _ = perturb_audio(clip, PerturbParams(seed=6))
        assert not np.array_equal(a.samples, c.samples)

    def test_ratio_draws_cover_both_directions(self):
        """With a degenerate range [2, 2] the drawn ratio is either 2 or 1/2;
        over several seeds both must occur."""
        clip = AudioClip(SR, voiced_like()[:4000])
        params = [PerturbParams(pitch_ratio_range=(2.0, 2.0), seed=s) for s in range(12)]
        ratios = {perturb_audio(clip, p)[1].pitch_ratio for p in params}
        assert ratios == {2.0, 0.5}

    def test_output_is_hard_limited(self):
        clip = AudioClip(SR, 0.95 * np.sin(2 * np.pi * 200 * np.arange(SR) / SR))
        boosted = PerturbParams(formant_ratio_range=(1.0, 1.0),
                                pitch_ratio_range=(1.0, 1.0),
                                peq=PeqParams(gain_db_range=(12.0, 12.0)), seed=0)
        out, info = perturb_audio(clip, boosted)
        assert np.max(np.abs(out.samples)) <= 1.0
        assert info.clipped_samples > 0

    def test_ratio_ranges_validated(self):
        with pytest.raises(ValueError):
            PerturbParams(formant_ratio_range=(0.8, 1.2))
        with pytest.raises(ValueError):
            PerturbParams(pitch_ratio_range=(1.5, 1.2))


class TestBatchPerturbation:
    def _write_tone(self, path, freq=330, seconds=0.4):
        write_wav(AudioClip(SR, tone(freq, seconds), source_format="pcm16"), path)

    def test_directory_mode_and_naming(self, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        self._write_tone(src / "a.wav")
        self._write_tone(src / "b.wav", freq=250)
        results = perturb_path(src, tmp_path / "out", seed=1, copies=2)
        names = sorted(r.output.split("/")[-1] for r in results)
        assert names == ["a_p0.wav", "a_p1.wav", "b_p0.wav", "b_p1.wav"]

    def test_copies_differ_from_each_other(self, tmp_path):
        src = tmp_path / "a.wav"
        self._write_tone(src)
        results = perturb_path(src, tmp_path / "out", seed=1, copies=2)
        data = [(tmp_path / "out" / r.output.split("/")[-1]).read_bytes()
                for r in results]
        assert data[0] != data[1]

    def test_repeat_runs_are_byte_identical(self, tmp_path):
        src = tmp_path / "a.wav"
        self._write_tone(src)
        perturb_path(src, tmp_path / "o1", seed=4)
        perturb_path(src, tmp_path / "o2", seed=4)
        assert ((tmp_path / "o1" / "a_p0.wav").read_bytes()
                == (tmp_path / "o2" / "a_p0.wav").read_bytes())

    def test_pin_identity_flag(self, tmp_path):
        src = tmp_path / "a.wav"
        self._write_tone(src)
        perturb_path(src, tmp_path / "out", seed=0, pin_identity=True)
        original = read_wav(src).samples
        pinned = read_wav(tmp_path / "out" / "a_p0.wav").samples
        rms = np.sqrt(np.mean((pinned - original) ** 2))
        assert rms < 1e-3

    def test_empty_directory_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(AudioError):
            perturb_path(empty, tmp_path / "out", seed=0)

    def test_derive_seed_is_stable_and_distinct(self):
        assert derive_seed(1, "a.wav", 0) == derive_seed(1, "a.wav", 0)
        assert derive_seed(1, "a.wav", 0) != derive_seed(1, "a.wav", 1)
        assert derive_seed(1, "a.wav", 0) != derive_seed(2, "a.wav", 0)
        assert derive_seed(1, "a.wav", 0) != derive_seed(1, "b.wav", 0)
