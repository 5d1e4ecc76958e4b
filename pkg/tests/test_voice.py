import numpy as np
import pytest

from medresponse.core import AudioRecording
from medresponse.features import extract_voice_features, frame_audio, tag_voiced
from medresponse.features.voice import dominant_frequency, longest_run, voiced_flags

FS = 8000


def tone(freq, seconds=20.0, amp=0.5, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return t, amp * np.sin(2 * np.pi * freq * t)


def test_framing():
    frames = frame_audio(AudioRecording(44100, np.zeros(20 * 44100)))
    assert len(frames) == 40 and all(len(f.samples) == 22050 for f in frames)
    frames = frame_audio(AudioRecording(100, np.ones(401)))
    assert [len(f.samples) for f in frames] == [10] * 40
    assert all(f.rms == 0 for f in frame_audio(AudioRecording(100, np.zeros(400))))
    with pytest.raises(ValueError):
        frame_audio(AudioRecording(100, np.ones(39)))


def test_voiced_flags_by_hand():
    flags = voiced_flags([0, 0, 5, 5, 5, 0, 5])
    assert flags.tolist() == [False, False, True, True, True, False, True]
    assert longest_run(flags) == (2, 3)


def test_longest_run_earliest_wins():
    assert longest_run([True, False, True]) == (0, 1)
    assert longest_run([False, False]) == (0, 0)


def test_steady_tone_falls_back_to_ge():
    _, x = tone(220)
    track = tag_voiced(frame_audio(AudioRecording(FS, x)))
    assert track.voiced_run == (0, 40)


def test_frame_f0_within_one_bin():
    _, x = tone(220, seconds=2.0)
    frames = frame_audio(AudioRecording(FS, x))
    bin_width = FS / (1 << int(np.ceil(np.log2(4 * len(frames[0].samples)))))
    for f in tag_voiced(frames).f0:
        assert abs(f - 220) <= bin_width


def test_steady_tone_features():
    _, x = tone(220)
    fv = extract_voice_features(AudioRecording(FS, x))
    assert abs(fv["voice_F0"] - 220) <= 0.1
    assert fv["voice_F0_std"] == pytest.approx(0, abs=1e-9)
    assert fv["voice_F0_poly1_c1"] == pytest.approx(0, abs=1e-9)
    assert fv["voice_Len"] == 20.0


def test_rising_pitch_has_positive_slope():
    fs = FS
    t = np.arange(20 * fs) / fs
    f = 180 + 4 * t  # 180 -> 260 Hz
    x = 0.5 * np.sin(2 * np.pi * np.cumsum(f) / fs)
    x[:fs] = 0.0  # one second of silence so a quartile of frames is quiet
    fv = extract_voice_features(AudioRecording(fs, x))
    assert fv["voice_F0_poly1_c1"] > 50


def test_silence_is_low_quality():
    fv = extract_voice_features(AudioRecording(FS, np.zeros(FS * 20)))
    assert np.all(fv.values == 0) and "voice:low_quality" in fv.flags
    assert len(fv.values) == 18


def test_amplitude_scaling():
    t, x = tone(150)
    x = x * (1 + 0.3 * np.sin(2 * np.pi * 0.1 * t))
    x[: FS * 3] = 0
    a = extract_voice_features(AudioRecording(FS, x))
    b = extract_voice_features(AudioRecording(FS, 2.5 * x))
    assert b["voice_AMP_mean"] == pytest.approx(2.5 * a["voice_AMP_mean"], rel=1e-9)
    assert b["voice_AMP_std"] == pytest.approx(2.5 * a["voice_AMP_std"], rel=1e-9)
    assert b["voice_F0"] == a["voice_F0"] and b["voice_F0_mean"] == a["voice_F0_mean"]


def test_len_is_multiple_of_frame_duration():
    t, x = tone(200, seconds=10)
    x[t > 6.3] = 0
    fv = extract_voice_features(AudioRecording(FS, x))
    assert fv["voice_Len"] <= 10
    assert (fv["voice_Len"] / 0.25) == pytest.approx(round(fv["voice_Len"] / 0.25))


def test_short_run_flags_dfa():
    t, x = tone(200, seconds=20)
    x[t > 5] = 0  # ten voiced frames
    fv = extract_voice_features(AudioRecording(FS, x))
    assert fv["voice_AMP_DFA"] == 0.0 and "voice_AMP_DFA:short_run" in fv.flags


def test_quadratic_track_recovered():
    from medresponse.features.voice import track_summary
    x = np.linspace(0, 1, 30)
    pairs, _ = track_summary(2.0 - 3.0 * x + 5.0 * x * x, "voice_F0")
    d = dict(pairs)
    assert d["voice_F0_poly2_c0"] == pytest.approx(2.0, abs=1e-6)
    assert d["voice_F0_poly2_c1"] == pytest.approx(-3.0, abs=1e-6)
    assert d["voice_F0_poly2_c2"] == pytest.approx(5.0, abs=1e-6)


def test_band_limits_f0():
    _, x = tone(40, seconds=1)
    _, y = tone(300, seconds=1, amp=0.1)
    assert abs(dominant_frequency(x + y, FS) - 300) < 2
