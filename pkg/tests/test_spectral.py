import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whispervc.audio_io import Waveform
from whispervc.spectral import (
    LOG_FLOOR,
    AnalysisConfig,
    Cepstrogram,
    ConfigError,
    LogSpectrum,
    analyze,
    cepstrum_to_envelope,
    envelope_to_cepstrum,
    frame_count,
    load_cepstrogram,
    save_cepstrogram,
    warp_frequency,
)

CFG = AnalysisConfig()


def test_one_second_gives_200_frames():
    assert analyze(Waveform(np.zeros(24000), 24000)).num_frames == 200


@pytest.mark.parametrize("n", [0, 1, 119, 120, 121, 24000, 24001])
def test_frame_count_depends_only_on_length(n):
    rng = np.random.default_rng(n)
    a = analyze(Waveform(np.zeros(n), 24000)).num_frames
    b = analyze(Waveform(rng.uniform(-1, 1, n), 24000)).num_frames
    assert a == b == frame_count(n, 120) == -(-n // 120)


def test_constant_spectrum_frame():
    # one impulse of height A at the centre of frame 5: that frame's |X| is A at every bin
    x = np.zeros(2400)
    x[600] = 0.37
    c = analyze(Waveform(x, 24000)).frames[5]
    assert c[0] == pytest.approx(np.log(0.37), abs=1e-9)
    assert np.max(np.abs(c[1:])) < 1e-6


def test_constant_envelope_to_cepstrum():
    c = envelope_to_cepstrum(LogSpectrum(np.full(CFG.n_bins, np.log(0.37)), 24000), CFG)
    assert c[0] == pytest.approx(np.log(0.37), abs=1e-12)
    assert np.max(np.abs(c[1:])) < 1e-6


def test_silence_frames_hit_the_floor():
    c = analyze(Waveform(np.zeros(2400), 24000)).frames
    assert np.allclose(c[:, 0], np.log(LOG_FLOOR), atol=1e-9)
    assert np.max(np.abs(c[:, 1:])) < 1e-6


def test_constant_cepstrum_gives_flat_envelope():
    c = np.zeros(80)
    c[0] = np.log(2.0)
    assert np.allclose(cepstrum_to_envelope(c, CFG).bins, np.log(2.0), atol=1e-12)


def test_single_c1_tilts_down():
    c = np.zeros(80)
    c[1] = 0.5
    env = cepstrum_to_envelope(c, CFG).bins
    assert env[0] > 0 and env[-1] < 0
    assert np.all(np.diff(env) < 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.6))
def test_roundtrip_order_limited(seed, alpha):
    cfg = AnalysisConfig(warp_alpha=alpha)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(80) / (1 + np.arange(80))
    back = envelope_to_cepstrum(cepstrum_to_envelope(c, cfg), cfg)
    assert np.max(np.abs(back - c)) < 1e-6


def test_roundtrip_batch_of_frames(rng):
    c = rng.standard_normal((20, 80)) * 0.3
    back = envelope_to_cepstrum(cepstrum_to_envelope(c, CFG), CFG)
    assert np.max(np.abs(back - c)) < 1e-6


def test_gain_shifts_only_c0(rng):
    x = rng.standard_normal(6000) * 0.1
    a = analyze(Waveform(x, 24000)).frames
    b = analyze(Waveform(3.0 * x, 24000)).frames
    assert np.allclose(b[:, 0] - a[:, 0], np.log(3.0), atol=1e-6)
    assert np.max(np.abs(b[:, 1:] - a[:, 1:])) < 1e-6


def test_warp_map_monotone_with_fixed_ends():
    w = np.linspace(0, np.pi, 1000)
    wt = warp_frequency(w, 0.466)
    assert np.all(np.diff(wt) > 0)
    assert wt[0] == pytest.approx(0.0, abs=1e-12) and wt[-1] == pytest.approx(np.pi, abs=1e-12)
    assert np.allclose(warp_frequency(w, 0.0), w)


def test_alpha_zero_is_plain_cepstrum(rng):
    cfg = AnalysisConfig(warp_alpha=0.0)
    x = rng.standard_normal(2400)
    got = analyze(Waveform(x, 24000), cfg).frames
    # independent plain real cepstrum of the same centred, reflect-padded Hann frames
    pad = np.pad(x, (600, 600 + 120), mode="reflect")
    win = np.hanning(1201)[:-1]  # periodic Hann of length 1200
    for t in (0, 7, 19):
        frame = pad[t * 120 : t * 120 + 1200] * win
        logmag = np.log(np.maximum(np.abs(np.fft.rfft(frame, 2048)), LOG_FLOOR))
        ceps = np.fft.irfft(logmag, 2048)[:80]
        assert np.allclose(got[t], ceps, atol=1e-9)


def test_rate_mismatch_is_config_error():
    with pytest.raises(ConfigError):
        analyze(Waveform(np.zeros(100), 16000))


def test_config_validation():
    with pytest.raises(ConfigError):
        AnalysisConfig(frame_len=4096)
    with pytest.raises(ConfigError):
        AnalysisConfig(warp_alpha=1.0)


def test_frames_finite_for_loud_noise(rng):
    c = analyze(Waveform(rng.uniform(-1, 1, 12000), 24000))
    assert np.all(np.isfinite(c.frames))


def test_mcep_file_roundtrip(tmp_path, rng):
    c = Cepstrogram(rng.standard_normal((17, 80)))
    save_cepstrogram(c, tmp_path / "a.mcep")
    back = load_cepstrogram(tmp_path / "a.mcep")
    assert back.config == CFG
    assert np.allclose(back.frames, c.frames, atol=1e-6)
    (tmp_path / "bad").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        load_cepstrogram(tmp_path / "bad")
