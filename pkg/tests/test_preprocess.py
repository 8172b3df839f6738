"""Audio ingestion, resampling, silence removal, pre-emphasis, framing."""

import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import get_window

from vocalscreen.errors import (
    EmptyAudio,
    EmptyVoiced,
    InvalidLength,
    SegmentTooShort,
    UnsupportedFormat,
    ValidationError,
)
from vocalscreen.preprocess import (
    AudioClip,
    PreprocessConfig,
    Segment,
    frame_and_window,
    frame_levels_db,
    hamming,
    load_audio,
    pre_emphasize,
    preprocess_clip,
    remove_silence,
    resample,
    segment,
    voiced_intervals,
    write_wav,
)

CFG = PreprocessConfig()


def _write_pcm(path, frames, channels=1, rate=16000, width=2):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(np.asarray(frames, dtype="<i2").tobytes())


class TestLoadAudio:
    def test_full_scale_value(self, tmp_path):
        _write_pcm(tmp_path / "a.wav", [32767, -32768, 0])
        clip = load_audio(tmp_path / "a.wav")
        assert clip.samples[0] == pytest.approx(32767 / 32768)
        assert clip.samples[1] == -1.0

    def test_zeros_keep_rate(self, tmp_path):
        _write_pcm(tmp_path / "z.wav", np.zeros(100), rate=22050)
        clip = load_audio(tmp_path / "z.wav")
        assert clip.sample_rate_hz == 22050
        assert np.array_equal(clip.samples, np.zeros(100))

    def test_stereo_mean_downmix(self, tmp_path):
        _write_pcm(tmp_path / "s.wav", [16384, -16384, 16384, 0], channels=2)
        clip = load_audio(tmp_path / "s.wav")
        np.testing.assert_array_equal(clip.samples, [0.0, 0.25])

    def test_recording_id_defaults_to_stem(self, tmp_path):
        _write_pcm(tmp_path / "R07.wav", [1, 2])
        assert load_audio(tmp_path / "R07.wav", "S1").recording_id == "R07"

    def test_rejects_non_wav(self, tmp_path):
        (tmp_path / "x.wav").write_bytes(b"not a riff file at all")
        with pytest.raises(UnsupportedFormat):
            load_audio(tmp_path / "x.wav")

    def test_rejects_8bit(self, tmp_path):
        with wave.open(str(tmp_path / "b.wav"), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(1)
            w.setframerate(8000)
            w.writeframes(bytes([128, 129]))
        with pytest.raises(UnsupportedFormat):
            load_audio(tmp_path / "b.wav")

    def test_empty_file(self, tmp_path):
        _write_pcm(tmp_path / "e.wav", [])
        with pytest.raises(EmptyAudio):
            load_audio(tmp_path / "e.wav")

    def test_write_read_round_trip(self, tmp_path, rng):
        x = np.round(rng.uniform(-0.9, 0.9, 500) * 32768) / 32768
        write_wav(tmp_path / "r.wav", x, 8000)
        np.testing.assert_array_equal(load_audio(tmp_path / "r.wav").samples, x)


class TestAudioClip:
    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            AudioClip(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValidationError):
            AudioClip(np.zeros(3), 0)


class TestResample:
    def test_same_rate_is_identity(self, rng):
        x = rng.uniform(-1, 1, 1000)
        out = resample(AudioClip(x, 16000), 16000)
        assert np.array_equal(out.samples, x)

    @pytest.mark.parametrize("src,dst", [(8000, 16000), (44100, 16000), (48000, 16000), (16000, 22050)])
    def test_dc_preserved(self, src, dst):
        out = resample(AudioClip(np.full(src, 0.3), src), dst)
        assert out.sample_rate_hz == dst
        np.testing.assert_allclose(out.samples, 0.3, atol=1e-3)

    def test_tone_peak_after_downsampling(self):
        # DFT-peak oracle: a 1 kHz tone at 32 kHz must still peak at 1 kHz.
        t = np.arange(32000) / 32000
        out = resample(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 32000), 16000)
        spec = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(len(out.samples), 1 / 16000)
        assert freqs[np.argmax(spec)] == pytest.approx(1000, abs=1.0)

    def test_alias_suppressed(self):
        # 12 kHz is above the new Nyquist and would fold to 4 kHz without the filter
        t = np.arange(32000) / 32000
        out = resample(AudioClip(0.5 * np.sin(2 * np.pi * 12000 * t), 32000), 16000)
        assert np.sqrt(np.mean(out.samples[100:-100] ** 2)) < 0.05 * 0.5 / np.sqrt(2)

    def test_length(self):
        out = resample(AudioClip(np.zeros(44100), 44100), 16000)
        assert len(out.samples) == 16000


class TestSilence:
    def test_constant_sine_untouched(self):
        t = np.arange(16000) / 16000
        x = 0.5 * np.sin(2 * np.pi * 200 * t)  # 5 periods per 25 ms frame
        out = remove_silence(AudioClip(x, 16000), CFG)
        assert np.array_equal(out.samples, x)

    def test_sine_then_zeros(self):
        t = np.arange(16000) / 16000
        x = np.concatenate([0.5 * np.sin(2 * np.pi * 440 * t), np.zeros(16000)])
        out = remove_silence(AudioClip(x, 16000), CFG)
        assert abs(out.duration_s - 1.0) <= 0.025

    def test_short_gap_kept(self):
        t = np.arange(8000) / 16000
        tone = 0.5 * np.sin(2 * np.pi * 440 * t)
        x = np.concatenate([tone, np.zeros(1600), tone])  # 100 ms gap < 200 ms
        assert len(remove_silence(AudioClip(x, 16000), CFG).samples) == len(x)

    def test_all_zero(self):
        with pytest.raises(EmptyVoiced):
            remove_silence(AudioClip(np.zeros(16000), 16000), CFG)

    def test_empty(self):
        with pytest.raises(EmptyAudio):
            remove_silence(AudioClip(np.zeros(0), 16000), CFG)

    @given(arrays(np.float64, st.integers(800, 8000), elements=st.floats(-1, 1)))
    def test_never_lengthens_and_drops_only_quiet_frames(self, x):
        clip = AudioClip(x, 16000)
        try:
            intervals = voiced_intervals(clip, CFG)
        except EmptyVoiced:
            return
        kept = sum(b - a for a, b in intervals)
        assert kept <= len(x)
        frame = 400
        levels = frame_levels_db(x, frame)
        keep = np.zeros(len(levels), dtype=bool)
        for a, b in intervals:
            keep[a // frame:int(np.ceil(b / frame))] = True
        dropped = levels[~keep]
        assert np.all(dropped < levels.mean() + 1e-9) or dropped.size == 0


class TestPreEmphasis:
    def test_constant(self):
        y = pre_emphasize(AudioClip(np.ones(3), 16000), 0.97).samples
        np.testing.assert_allclose(y, [1.0, 0.03, 0.03], atol=1e-12)

    def test_ramp(self):
        y = pre_emphasize(AudioClip(np.arange(4.0), 16000), 0.97).samples
        np.testing.assert_allclose(y, [0, 1, 1.03, 1.06], atol=1e-12)

    def test_zeros(self):
        assert not pre_emphasize(AudioClip(np.zeros(5), 16000), 0.97).samples.any()

    def test_mu_range(self):
        with pytest.raises(ValidationError):
            pre_emphasize(AudioClip(np.ones(3), 16000), 1.5)

    @given(arrays(np.float64, 64, elements=st.floats(-1, 1)), arrays(np.float64, 64, elements=st.floats(-1, 1)),
           st.floats(-3, 3), st.floats(-3, 3))
    def test_linear(self, x, z, a, b):
        def pe(v):
            return pre_emphasize(AudioClip(v, 16000), 0.97).samples

        np.testing.assert_allclose(pe(a * x + b * z), a * pe(x) + b * pe(z), atol=1e-9)


class TestSegment:
    @pytest.mark.parametrize("seconds,count", [(10.0, 3), (2.9, 0), (6.0, 2)])
    def test_counts(self, seconds, count):
        segs = segment(AudioClip(np.zeros(int(seconds * 16000)), 16000), CFG)
        assert len(segs) == count
        assert [s.start_offset_s for s in segs] == [3.0 * i for i in range(count)]
        assert all(len(s.samples) == 48000 for s in segs)

    @given(st.integers(0, 200000))
    def test_floor_rule(self, n):
        segs = segment(AudioClip(np.zeros(n), 16000), CFG)
        assert len(segs) == n // 48000

    def test_requires_target_rate(self):
        with pytest.raises(ValidationError):
            segment(AudioClip(np.zeros(48000), 8000), CFG)


class TestHamming:
    def test_scipy_oracle(self):
        for N in (2, 3, 64, 401, 512):
            np.testing.assert_allclose(hamming(N), get_window("hamming", N, fftbins=False), atol=1e-12)

    def test_endpoint_and_midpoint(self):
        w = hamming(401)
        assert w[0] == pytest.approx(0.08, abs=1e-12)
        assert w[200] == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(2, 2000))
    def test_range_symmetry_unimodal(self, N):
        w = hamming(N)
        assert w.min() >= 0.08 - 1e-12 and w.max() <= 1.0 + 1e-12
        np.testing.assert_allclose(w, w[::-1], atol=1e-12)
        d = np.diff(w)
        peak = int(np.argmax(w))
        assert np.all(d[:peak] >= -1e-12) and np.all(d[peak:] <= 1e-12)

    def test_too_short(self):
        with pytest.raises(InvalidLength):
            hamming(1)


class TestFraming:
    def test_hop_and_last_frame(self):
        x = np.arange(48000.0)
        fm = frame_and_window(Segment(x, 0.0), CFG)
        assert fm.hop == 371
        assert fm.values.shape == (129, 512)
        np.testing.assert_allclose(fm.values[-1], x[47488:48000] * hamming(512))

    def test_constant_rows_equal_window(self):
        fm = frame_and_window(Segment(np.ones(48000), 0.0), CFG)
        np.testing.assert_array_equal(fm.values, np.tile(hamming(512), (129, 1)))

    def test_frame_five(self, rng):
        x = rng.standard_normal(48000)
        fm = frame_and_window(Segment(x, 0.0), CFG)
        np.testing.assert_array_equal(fm.values[5], x[5 * 371:5 * 371 + 512] * hamming(512))

    def test_deterministic(self, rng):
        seg = Segment(rng.standard_normal(48000), 0.0)
        assert frame_and_window(seg, CFG).values.tobytes() == frame_and_window(seg, CFG).values.tobytes()

    def test_too_short(self):
        with pytest.raises(SegmentTooShort):
            frame_and_window(Segment(np.zeros(600), 0.0), CFG)


class TestConfig:
    def test_json_round_trip(self):
        cfg = PreprocessConfig(mu=0.9, min_silence_ms=300)
        assert PreprocessConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.segment_samples == 48000

    def test_invalid_mu(self):
        with pytest.raises(ValidationError):
            PreprocessConfig(mu=0.0)


def test_preprocess_clip_end_to_end():
    t = np.arange(int(7.5 * 22050)) / 22050
    x = 0.4 * np.sin(2 * np.pi * 180 * t) * (1 + 0.2 * np.sin(2 * np.pi * 3 * t))
    segs = preprocess_clip(AudioClip(x, 22050, "S1", "R1"), CFG)
    assert len(segs) == 2
    assert all(s.subject_id == "S1" and s.recording_id == "R1" for s in segs)
    assert [s.index for s in segs] == [0, 1]
