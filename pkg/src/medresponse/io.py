"""JSONL instance files, 16-bit PCM WAV audio and the feature-matrix CSV."""

from __future__ import annotations

import csv
import json
import math
import os
import wave
from datetime import datetime
from pathlib import Path

import numpy as np

from .core import (
    ActiveTestInstance,
    AccelSeries,
    AudioRecording,
    ReactionSession,
    ReactionTrial,
    RecordingError,
    TapEvent,
    TapSession,
)

_BUTTON_CODES = {"L": "left", "R": "right"}
_BUTTON_NAMES = {v: k for k, v in _BUTTON_CODES.items()}
_TOP_KEYS = {"participant_id", "started_at", "label", "voice", "balance", "gait",
             "dexterity", "reaction"}


class FormatError(ValueError):
    """Malformed input file or record."""


# --- WAV ---------------------------------------------------------------

def read_wav(path) -> AudioRecording:
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            if wf.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed WAV not supported")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: invalid WAV header ({exc})") from exc
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from exc
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return AudioRecording(sample_rate=rate, samples=pcm / 32768.0)


def quantize_pcm16(samples):
    """Snap amplitudes onto the 16-bit grid so a WAV round-trip is lossless."""
    q = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    return q / 32768.0


def write_wav(path, audio: AudioRecording):
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())


# --- instance records --------------------------------------------------

def parse_timestamp(text):
    if not isinstance(text, str):
        raise FormatError("started_at must be an RFC 3339 string")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(s)
    except ValueError as exc:
        raise FormatError(f"bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        raise FormatError(f"timestamp {text!r} lacks a UTC offset")
    return ts


def format_timestamp(ts: datetime):
    return ts.isoformat()


def _number_list(payload, key, where):
    vals = payload.get(key)
    if not isinstance(vals, list):
        raise FormatError(f"{where}.{key} must be a list")
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise FormatError(f"{where}.{key} contains a non-number")
    return vals


def _parse_accel(payload, kind):
    if not isinstance(payload, dict):
        raise FormatError(f"{kind} payload must be an object")
    arrays = {k: _number_list(payload, k, kind) for k in ("t", "x", "y", "z")}
    return AccelSeries(test_kind=kind, **arrays)


def _parse_voice(payload, base_dir):
    if isinstance(payload, str):
        path = Path(payload)
        if path.is_absolute():
            raise FormatError("voice WAV path must be relative")
        full = (Path(base_dir) / path).resolve()
        return read_wav(full), str(full)
    if not isinstance(payload, dict):
        raise FormatError("voice payload must be an object or a WAV path")
    rate = payload.get("sample_rate")
    if isinstance(rate, bool) or not isinstance(rate, int):
        raise FormatError("voice.sample_rate must be an integer")
    return AudioRecording(sample_rate=rate, samples=_number_list(payload, "samples", "voice")), None


def _time(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where} must be a number")
    return float(value)


def _parse_taps(payload):
    if not isinstance(payload, dict) or not isinstance(payload.get("events"), list):
        raise FormatError("dexterity payload needs an events list")
    events = []
    for i, ev in enumerate(payload["events"]):
        if not isinstance(ev, dict):
            raise FormatError(f"dexterity.events[{i}] must be an object")
        button = _BUTTON_CODES.get(ev.get("button"))
        if button is None:
            raise FormatError(f"dexterity.events[{i}].button must be 'L' or 'R'")
        events.append(TapEvent(_time(ev.get("press"), "press"),
                               _time(ev.get("release"), "release"), button))
    return TapSession(events=tuple(events))


def _parse_reaction(payload):
    if not isinstance(payload, dict) or not isinstance(payload.get("trials"), list):
        raise FormatError("reaction payload needs a trials list")
    trials = []
    for i, tr in enumerate(payload["trials"]):
        if not isinstance(tr, dict):
            raise FormatError(f"reaction.trials[{i}] must be an object")
        press, release = tr.get("press"), tr.get("release")
        trials.append(ReactionTrial(
            _time(tr.get("stimulus"), "stimulus"),
            None if press is None else _time(press, "press"),
            None if release is None else _time(release, "release"),
        ))
    return ReactionSession(trials=tuple(trials))


def instance_from_record(rec, base_dir=".") -> ActiveTestInstance:
    if not isinstance(rec, dict):
        raise FormatError("record must be a JSON object")
    unknown = set(rec) - _TOP_KEYS
    if unknown:
        raise FormatError(f"unknown keys: {', '.join(sorted(unknown))}")
    pid = rec.get("participant_id")
    if not isinstance(pid, str) or not pid:
        raise FormatError("participant_id must be a non-empty string")
    label = rec.get("label", "unlabeled")
    extra = {}
    kwargs = {}
    try:
        if rec.get("voice") is not None:
            kwargs["voice"], wav_path = _parse_voice(rec["voice"], base_dir)
            if wav_path:
                extra["voice_path"] = wav_path
        for kind in ("balance", "gait"):
            if rec.get(kind) is not None:
                kwargs[kind] = _parse_accel(rec[kind], kind)
        if rec.get("dexterity") is not None:
            kwargs["dexterity"] = _parse_taps(rec["dexterity"])
        if rec.get("reaction") is not None:
            kwargs["reaction"] = _parse_reaction(rec["reaction"])
        return ActiveTestInstance(
            participant_id=pid,
            started_at=parse_timestamp(rec.get("started_at")),
            label=label,
            extra=extra,
            **kwargs,
        )
    except RecordingError as exc:
        raise FormatError(str(exc)) from exc


def _floats(arr):
    return [float(v) for v in arr]


def instance_to_record(inst: ActiveTestInstance, voice_path=None):
    """JSON-ready dict; ``voice_path`` (relative) replaces inline audio."""
    rec = {
        "participant_id": inst.participant_id,
        "started_at": format_timestamp(inst.started_at),
        "label": inst.label,
    }
    if inst.voice is not None:
        if voice_path is not None:
            rec["voice"] = str(voice_path)
        else:
            rec["voice"] = {"sample_rate": inst.voice.sample_rate,
                            "samples": _floats(inst.voice.samples)}
    for kind in ("balance", "gait"):
        s = getattr(inst, kind)
        if s is not None:
            rec[kind] = {k: _floats(getattr(s, k)) for k in "txyz"}
    if inst.dexterity is not None:
        rec["dexterity"] = {"events": [
            {"press": e.press, "release": e.release, "button": _BUTTON_NAMES[e.button]}
            for e in inst.dexterity.events
        ]}
    if inst.reaction is not None:
        trials = []
        for tr in inst.reaction.trials:
            d = {"stimulus": tr.stimulus}
            if tr.responded:
                d["press"] = tr.press
                d["release"] = tr.release
            trials.append(d)
        rec["reaction"] = {"trials": trials}
    return rec


def dumps_instance(inst, voice_path=None):
    return json.dumps(instance_to_record(inst, voice_path), separators=(",", ":"),
                      allow_nan=False)


def read_instances(path):
    """Parse a JSONL file, returning ``(instances, rejects)``.

    ``rejects`` holds ``(line_number, reason)`` for every line that failed;
    a bad line never aborts the rest of the file. Blank lines are skipped.
    """
    path = Path(path)
    base_dir = path.parent
    instances, rejects = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line, parse_constant=_reject_constant)
                instances.append(instance_from_record(rec, base_dir))
            except (json.JSONDecodeError, FormatError) as exc:
                rejects.append((lineno, str(exc)))
    return instances, rejects


def _reject_constant(name):
    raise FormatError(f"non-finite number {name}")


def write_instances(path, instances, voice_paths=None):
    """Write instances as JSONL. ``voice_paths`` maps index -> relative WAV path."""
    voice_paths = voice_paths or {}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, inst in enumerate(instances):
            fh.write(dumps_instance(inst, voice_paths.get(i)))
            fh.write("\n")


def relative_voice_paths(instances, out_path):
    """WAV references for instances loaded from files, re-rooted at ``out_path``."""
    out_dir = Path(out_path).resolve().parent
    return {
        i: os.path.relpath(inst.extra["voice_path"], out_dir)
        for i, inst in enumerate(instances)
        if "voice_path" in inst.extra
    }


# --- feature matrix CSV -------------------------------------------------

META_COLUMNS = ("participant_id", "started_at", "label")


def write_feature_csv(path, rows, feature_ids):
    """``rows``: iterable of (participant_id, started_at, label, {id: value}).

    Features absent from a row are written as empty cells.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(META_COLUMNS) + list(feature_ids))
        for pid, started, label, values in rows:
            cells = [pid, started, label]
            for fid in feature_ids:
                v = values.get(fid)
                cells.append("" if v is None else repr(float(v)))
            w.writerow(cells)


def read_feature_csv(path):
    """Return ``(meta, matrix, feature_ids)``; missing cells become NaN."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty feature file") from None
        if tuple(header[:3]) != META_COLUMNS:
            raise FormatError(f"{path}: header must start with {', '.join(META_COLUMNS)}")
        feature_ids = header[3:]
        meta, rows = [], []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
            meta.append(tuple(cells[:3]))
            try:
                rows.append([float(c) if c != "" else math.nan for c in cells[3:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_ids))
    if np.any(np.isinf(matrix)):
        raise FormatError(f"{path}: infinite feature values")
    return meta, matrix, feature_ids
