import json
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medresponse.core import AudioRecording
from medresponse.io import (
    FormatError,
    dumps_instance,
    instance_from_record,
    parse_timestamp,
    quantize_pcm16,
    read_feature_csv,
    read_instances,
    read_wav,
    write_feature_csv,
    write_instances,
    write_wav,
)

from conftest import make_instance


def test_wav_round_trip_is_exact(tmp_path, rng):
    audio = AudioRecording(16000, quantize_pcm16(rng.uniform(-1, 1, 5000)))
    write_wav(tmp_path / "a.wav", audio)
    assert read_wav(tmp_path / "a.wav") == audio


def test_wav_rejects_stereo(tmp_path):
    import wave
    with wave.open(str(tmp_path / "s.wav"), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(8000)
        wf.writeframes(b"\0" * 400)
    with pytest.raises(FormatError, match="mono"):
        read_wav(tmp_path / "s.wav")


def test_wav_rejects_garbage(tmp_path):
    (tmp_path / "g.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(FormatError):
        read_wav(tmp_path / "g.wav")


def test_timestamps():
    ts = parse_timestamp("2015-03-02T08:00:00Z")
    assert ts == datetime(2015, 3, 2, 8, tzinfo=timezone.utc)
    with pytest.raises(FormatError):
        parse_timestamp("2015-03-02T08:00:00")
    with pytest.raises(FormatError):
        parse_timestamp("yesterday")


def test_instance_round_trip(rng):
    inst = make_instance(rng, label="treatment")
    back = instance_from_record(json.loads(dumps_instance(inst)))
    assert back == inst


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_instance_round_trip_property(seed):
    inst = make_instance(np.random.default_rng(seed))
    assert instance_from_record(json.loads(dumps_instance(inst))) == inst


def test_jsonl_with_wav_references(tmp_path, rng):
    insts = [make_instance(rng, pid=f"p{i}") for i in range(3)]
    (tmp_path / "audio").mkdir()
    paths = {}
    for i, inst in enumerate(insts):
        write_wav(tmp_path / f"audio/{i}.wav", inst.voice)
        paths[i] = f"audio/{i}.wav"
    write_instances(tmp_path / "x.jsonl", insts, paths)
    back, rejects = read_instances(tmp_path / "x.jsonl")
    assert rejects == [] and back == insts
    assert back[0].extra["voice_path"].endswith("0.wav")


def test_bad_lines_are_reported_not_fatal(tmp_path, rng):
    good = dumps_instance(make_instance(rng))
    rec = json.loads(good)
    bad_accel = dict(rec, gait={"t": [0, 1, 1], "x": [0] * 3, "y": [0] * 3, "z": [0] * 3})
    lines = [
        good,
        "{not json",
        json.dumps(dict(rec, label="maybe")),
        json.dumps(bad_accel),
        "",
        json.dumps(dict(rec, voice="missing.wav")),
        good.replace('"x":[', '"x":[NaN,', 1),
        json.dumps(dict(rec, extra_key=1)),
        json.dumps({k: v for k, v in rec.items() if k != "started_at"}),
        good,
    ]
    (tmp_path / "m.jsonl").write_text("\n".join(lines) + "\n")
    insts, rejects = read_instances(tmp_path / "m.jsonl")
    assert len(insts) == 2
    assert [ln for ln, _ in rejects] == [2, 3, 4, 6, 7, 8, 9]
    assert all(reason for _, reason in rejects)


def test_feature_csv_round_trip(tmp_path):
    ids = ["f_a", "f_b"]
    rows = [("p1", "2015-03-02T08:00:00+00:00", "baseline", {"f_a": 0.1, "f_b": -2.5}),
            ("p,2", "2015-03-02T09:00:00+00:00", "treatment", {"f_a": 1e-300})]
    write_feature_csv(tmp_path / "f.csv", rows, ids)
    raw = (tmp_path / "f.csv").read_bytes()
    assert raw.count(b"\r\n") == 3 and b'"p,2"' in raw
    meta, X, fids = read_feature_csv(tmp_path / "f.csv")
    assert fids == ids
    assert meta[1] == ("p,2", "2015-03-02T09:00:00+00:00", "treatment")
    assert X[0].tolist() == [0.1, -2.5]
    assert X[1, 0] == 1e-300 and np.isnan(X[1, 1])


def test_feature_csv_rejects_bad_header(tmp_path):
    (tmp_path / "f.csv").write_text("id,when,label,f\r\n")
    with pytest.raises(FormatError):
        read_feature_csv(tmp_path / "f.csv")
