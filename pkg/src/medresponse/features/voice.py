"""Voice test: framing, voiced-run detection and F0/amplitude track summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P

from ..core import AudioRecording
from .registry import TRACK_STATS, FeatureVector, voice_feature_names
from .stats import DFA_MIN_LENGTH, dfa, quantile_sorted

N_FRAMES = 40
F0_BAND = (50.0, 500.0)
FRAME_PAD = 4


@dataclass(frozen=True, eq=False)
class Frame:
    samples: np.ndarray
    rms: float
    sample_rate: int


class VoicedRun(NamedTuple):
    start: int
    length: int


@dataclass(frozen=True)
class VoicedTrack:
    frame_duration: float
    amp: tuple
    f0: tuple  # 0.0 for unvoiced frames
    voiced: tuple
    voiced_run: VoicedRun


def frame_audio(audio: AudioRecording, n_frames=N_FRAMES):
    """Split into ``n_frames`` equal contiguous frames, dropping the remainder."""
    n = len(audio.samples)
    if n < n_frames:
        raise ValueError(f"voice: {n} samples cannot fill {n_frames} frames")
    size = n // n_frames
    blocks = audio.samples[: size * n_frames].reshape(n_frames, size)
    rms = np.sqrt(np.mean(blocks ** 2, axis=1))
    return [Frame(blocks[i], float(rms[i]), audio.sample_rate) for i in range(n_frames)]


def voiced_flags(amplitudes):
    """Frames louder than the first quartile of all frame amplitudes.

    Equality is judged with a relative tolerance of 1e-9 of the loudest
    frame. If nothing is strictly louder (a perfectly steady recording),
    frames at the quartile count too. Silent frames are never voiced.
    """
    amps = np.asarray(amplitudes, dtype=np.float64)
    q1 = quantile_sorted(np.sort(amps), 0.25)
    tol = 1e-9 * float(amps.max()) if len(amps) else 0.0
    flags = (amps > q1 + tol) & (amps > 0)
    if not flags.any():
        flags = (amps >= q1 - tol) & (amps > 0)
    return flags


def longest_run(flags) -> VoicedRun:
    """Longest stretch of True; the earliest wins ties. (0, 0) if none."""
    best = VoicedRun(0, 0)
    start = None
    for i, f in enumerate(list(flags) + [False]):
        if f and start is None:
            start = i
        elif not f and start is not None:
            if i - start > best.length:
                best = VoicedRun(start, i - start)
            start = None
    return best


def dominant_frequency(samples, sample_rate, band=F0_BAND, pad=FRAME_PAD):
    """Peak of the zero-padded periodogram restricted to ``band`` (Hz)."""
    x = np.asarray(samples, dtype=np.float64)
    x = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(max(pad * len(x), 2))))
    power = np.abs(np.fft.rfft(x, nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    sel = np.flatnonzero((freqs >= band[0]) & (freqs <= band[1]))
    if len(sel) == 0:
        raise ValueError(f"voice: sample rate {sample_rate} Hz leaves no bins in the F0 band")
    return float(freqs[sel[np.argmax(power[sel])]])


def tag_voiced(frames) -> VoicedTrack:
    if len(frames) < 4:
        raise ValueError("voice: need at least 4 frames")
    amps = np.array([f.rms for f in frames])
    flags = voiced_flags(amps)
    f0 = tuple(dominant_frequency(fr.samples, fr.sample_rate) if flag else 0.0
               for fr, flag in zip(frames, flags))
    return VoicedTrack(
        frame_duration=len(frames[0].samples) / frames[0].sample_rate,
        amp=tuple(amps.tolist()),
        f0=f0,
        voiced=tuple(bool(f) for f in flags),
        voiced_run=longest_run(flags),
    )


def track_summary(track, prefix):
    """Mean, std, DFA and polynomial coefficients (degree 1 and 2) of a frame track.

    Polynomials are fitted against frame index rescaled to [0, 1]. Values
    that the run is too short to support are 0 and reported as flags.
    """
    v = np.asarray(track, dtype=np.float64)
    n = len(v)
    flags = []
    out = dict.fromkeys(TRACK_STATS, 0.0)
    out["mean"] = float(v.mean())
    out["std"] = float(v.std(ddof=1)) if n > 1 and np.ptp(v) > 0 else 0.0
    if n >= DFA_MIN_LENGTH:
        out["DFA"] = dfa(v)
    else:
        flags.append(f"{prefix}_DFA:short_run")
    x = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    for deg in (1, 2):
        if n > deg:
            coef = P.polyfit(x, v, deg)
            for k in range(deg + 1):
                out[f"poly{deg}_c{k}"] = float(coef[k])
        else:
            flags.append(f"{prefix}_poly{deg}:short_run")
    return [(f"{prefix}_{k}", out[k]) for k in TRACK_STATS], flags


def extract_voice_features(audio: AudioRecording, n_frames=N_FRAMES) -> FeatureVector:
    frames = frame_audio(audio, n_frames)
    track = tag_voiced(frames)
    start, length = track.voiced_run
    if length == 0:
        names = voice_feature_names()
        return FeatureVector(tuple(names), np.zeros(len(names)), ("voice:low_quality",))
    sl = slice(start, start + length)
    pairs = [("voice_Len", length * track.frame_duration)]
    flags = []
    for name, seq in (("AMP", track.amp[sl]), ("F0", track.f0[sl])):
        p, f = track_summary(seq, f"voice_{name}")
        pairs += p
        flags += f
    run_samples = np.concatenate([fr.samples for fr in frames[sl]])
    pairs.append(("voice_F0", dominant_frequency(run_samples, audio.sample_rate, pad=2)))
    return FeatureVector.from_pairs(pairs, flags)
