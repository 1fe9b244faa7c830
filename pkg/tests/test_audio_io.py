import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from whispervc.audio_io import (
    UnsupportedFormatError,
    WavDecodeError,
    WavWriteError,
    Waveform,
    read_wav,
    resample,
    write_wav,
)


def test_full_scale_pcm16_reads_as_32767_over_32768(tmp_path):
    p = tmp_path / "a.wav"
    wavfile.write(p, 16000, np.full(100, 32767, dtype=np.int16))
    w = read_wav(p)
    assert np.all(w.samples == 32767 / 32768)


def test_stereo_is_averaged(tmp_path):
    p = tmp_path / "s.wav"
    data = np.tile(np.array([[0.5, -0.5]], dtype=np.float32), (200, 1))
    wavfile.write(p, 24000, data)
    assert np.all(read_wav(p).samples == 0.0)


def test_header_rate_and_length(tmp_path):
    p = tmp_path / "r.wav"
    wavfile.write(p, 48000, np.zeros(48000, dtype=np.int16))
    w = read_wav(p)
    assert (w.sample_rate, len(w)) == (48000, 48000)


def test_float32_decode(tmp_path):
    p = tmp_path / "f.wav"
    x = np.linspace(-0.9, 0.9, 50).astype(np.float32)
    wavfile.write(p, 8000, x)
    assert np.allclose(read_wav(p).samples, x)


def test_roundtrip_within_quantization(tmp_path, rng):
    x = rng.uniform(-0.99, 0.99, 1000)
    write_wav(Waveform(x, 24000), tmp_path / "x.wav")
    assert np.max(np.abs(read_wav(tmp_path / "x.wav").samples - x)) <= 1 / 32768


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=200))
def test_roundtrip_property(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("h") / "h.wav"
    x = np.array(values)
    write_wav(Waveform(x, 16000), p)
    assert np.max(np.abs(read_wav(p).samples - x)) <= 1 / 32768


def test_clip_on_encode(tmp_path):
    write_wav(Waveform(np.array([1.5, -1.5, 0.0]), 24000), tmp_path / "c.wav")
    _, raw = wavfile.read(tmp_path / "c.wav")
    assert raw.tolist() == [32767, -32768, 0]


def test_empty_waveform_writes_valid_file(tmp_path):
    write_wav(Waveform(np.zeros(0), 24000), tmp_path / "e.wav")
    w = read_wav(tmp_path / "e.wav")
    assert len(w) == 0 and w.sample_rate == 24000


def test_decode_errors(tmp_path):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a riff file at all")
    with pytest.raises(WavDecodeError):
        read_wav(bad)
    i32 = tmp_path / "i32.wav"
    wavfile.write(i32, 8000, np.zeros(10, dtype=np.int32))
    with pytest.raises(UnsupportedFormatError):
        read_wav(i32)


def test_write_error(tmp_path):
    with pytest.raises(WavWriteError):
        write_wav(Waveform(np.zeros(10), 8000), tmp_path / "missing" / "dir" / "x.wav")


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 24000)
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0)


def _tone(freq, rate, seconds=1.0):
    t = np.arange(int(rate * seconds)) / rate
    return np.sin(2 * np.pi * freq * t)


def test_resample_1khz_matches_analytic_sine():
    out = resample(Waveform(0.5 * _tone(1000, 48000), 48000), 24000)
    ref = 0.5 * _tone(1000, 24000)
    mid = slice(500, -500)  # away from filter edge transients
    rms_err = np.sqrt(np.mean((out.samples[mid] - ref[mid]) ** 2))
    assert rms_err < 0.01 * np.sqrt(np.mean(ref**2))
    amp = np.sqrt(2 * np.mean(out.samples[mid] ** 2))
    assert abs(amp - 0.5) < 0.005


def test_resample_identity():
    x = np.random.default_rng(0).uniform(-1, 1, 777)
    out = resample(Waveform(x, 24000), 24000)
    assert np.array_equal(out.samples, x)


def test_resample_keeps_11k_and_rejects_13k():
    keep = resample(Waveform(0.5 * _tone(11000, 48000), 48000), 24000).samples[500:-500]
    gone = resample(Waveform(0.5 * _tone(13000, 48000), 48000), 24000).samples[500:-500]
    ref_rms = 0.5 / np.sqrt(2)
    assert abs(np.sqrt(np.mean(keep**2)) / ref_rms - 1) < 0.01
    assert np.sqrt(np.mean(gone**2)) < 0.05 * ref_rms


@pytest.mark.parametrize("rate_in,rate_out,n", [(48000, 24000, 4801), (44100, 24000, 44100), (16000, 24000, 999), (22050, 24000, 12345)])
def test_resample_duration(rate_in, rate_out, n):
    out = resample(Waveform(np.zeros(n), rate_in), rate_out)
    assert abs(len(out) / rate_out - n / rate_in) <= 1 / rate_out


@pytest.mark.parametrize("rate_in", [44100, 48000, 16000])
def test_resample_preserves_tone_frequency(rate_in):
    out = resample(Waveform(0.5 * _tone(440, rate_in, 2.0), rate_in), 24000).samples
    spec = np.abs(np.fft.rfft(out))
    assert np.argmax(spec) == round(440 * out.size / 24000)
