import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medresponse.core import (
    AccelSeries,
    ActiveTestInstance,
    AudioRecording,
    ReactionTrial,
    RecordingError,
    TapEvent,
    TapSession,
    pair_instances,
    to_spherical,
)

from conftest import make_instance

UTC = timezone.utc


def _one(x, y, z):
    s = to_spherical(AccelSeries(t=[0.0], x=[x], y=[y], z=[z]))
    return s.r[0], s.theta[0], s.phi[0]


def test_spherical_unit_axes():
    assert _one(0, 0, 1) == (1.0, 0.0, 0.0)
    r, theta, phi = _one(1, 0, 0)
    assert r == 1.0 and theta == pytest.approx(math.pi / 2) and phi == 0.0


def test_spherical_diagonal():
    r, theta, phi = _one(1, 1, 1)
    assert r == pytest.approx(math.sqrt(3), abs=1e-12)
    assert theta == pytest.approx(math.acos(1 / math.sqrt(3)), abs=1e-12)
    assert phi == pytest.approx(math.pi / 4, abs=1e-12)


def test_spherical_degenerate_angles():
    assert _one(0, 0, 0) == (0.0, 0.0, 0.0)
    r, theta, phi = _one(0, 0, -2)
    assert (r, theta, phi) == (2.0, math.pi, 0.0)


finite = st.floats(-50, 50, allow_nan=False)


@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=30))
@settings(max_examples=200, deadline=None)
def test_spherical_inverse_recovers_cartesian(points):
    x, y, z = (np.array(c) for c in zip(*points))
    s = to_spherical(AccelSeries(t=np.arange(len(x), dtype=float), x=x, y=y, z=z))
    assert np.all(s.r >= 0)
    assert np.all((s.theta >= 0) & (s.theta <= math.pi))
    assert np.all((s.phi > -math.pi) | (s.phi == 0)) and np.all(s.phi <= math.pi)
    ok = s.r > 0
    back = np.vstack([s.r * np.sin(s.theta) * np.cos(s.phi),
                      s.r * np.sin(s.theta) * np.sin(s.phi),
                      s.r * np.cos(s.theta)])
    assert np.allclose(back[:, ok], np.vstack([x, y, z])[:, ok], rtol=0, atol=1e-9)
    assert np.array_equal(s.t, np.arange(len(x)))


def test_accel_validation():
    with pytest.raises(RecordingError):
        AccelSeries(t=[0, 1, 1], x=[0] * 3, y=[0] * 3, z=[0] * 3)
    with pytest.raises(RecordingError):
        AccelSeries(t=[0, 1], x=[0, math.nan], y=[0, 0], z=[0, 0])
    with pytest.raises(RecordingError):
        AccelSeries(t=[0, 1], x=[0], y=[0, 0], z=[0, 0])
    with pytest.raises(RecordingError):
        AccelSeries(t=[0, 1], x=[0, 0], y=[0, 0], z=[0, 0], test_kind="tremor")
    short = AccelSeries(t=np.arange(15.0), x=np.zeros(15), y=np.zeros(15), z=np.zeros(15))
    with pytest.raises(RecordingError):
        short.check_extractable()


def test_accel_arrays_are_frozen():
    s = AccelSeries(t=[0.0, 1.0], x=[1.0, 2.0], y=[0, 0], z=[0, 0])
    with pytest.raises(ValueError):
        s.x[0] = 5.0


def test_audio_duration_matches_samples():
    a = AudioRecording(8000, np.zeros(8000 * 3))
    assert a.duration == 3.0
    with pytest.raises(RecordingError):
        AudioRecording(0, [0.0])


def test_tap_and_reaction_invariants():
    with pytest.raises(RecordingError):
        TapEvent(1.0, 1.0, "left")
    with pytest.raises(RecordingError):
        TapSession((TapEvent(0.0, 0.5, "left"), TapEvent(0.4, 0.6, "right")))
    with pytest.raises(RecordingError):
        ReactionTrial(1.0, 0.9, 1.2)
    with pytest.raises(RecordingError):
        ReactionTrial(1.0, 1.2, None)
    assert not ReactionTrial(1.0).responded


def test_instance_invariants(rng):
    inst = make_instance(rng)
    with pytest.raises(RecordingError):
        ActiveTestInstance("p", datetime(2015, 1, 1), voice=inst.voice)
    with pytest.raises(RecordingError):
        ActiveTestInstance("p", datetime(2015, 1, 1, tzinfo=UTC))
    with pytest.raises(RecordingError):
        ActiveTestInstance("p", datetime(2015, 1, 1, tzinfo=UTC), label="on", voice=inst.voice)
    with pytest.raises(RecordingError):
        ActiveTestInstance("p", datetime(2015, 1, 1, tzinfo=UTC), gait=inst.balance)


def _at(pid, hh, mm, day=2, tz=UTC):
    return ActiveTestInstance(pid, datetime(2015, 3, day, hh, mm, tzinfo=tz),
                              reaction=None, dexterity=TapSession(()))


def test_pairing_one_hour_gap():
    pairs = pair_instances([_at("a", 9, 5), _at("a", 8, 0)], 30, 180)
    assert len(pairs) == 1
    b, t = pairs[0]
    assert (b.started_at.hour, t.started_at.hour) == (8, 9)
    assert (b.label, t.label) == ("baseline", "treatment")


def test_pairing_below_window():
    assert pair_instances([_at("a", 8, 0), _at("a", 8, 10)], 30, 180) == []


def test_pairing_third_instance_dropped():
    pairs = pair_instances([_at("a", 8, 0), _at("a", 9, 0), _at("a", 10, 30)], 30, 180)
    assert len(pairs) == 1
    assert pairs[0][1].started_at.hour == 9


def test_pairing_uses_local_date():
    tz = timezone(timedelta(hours=-5))
    # 23:30 local on the 2nd and 00:45 local on the 3rd are different days
    a = ActiveTestInstance("a", datetime(2015, 3, 2, 23, 30, tzinfo=tz), dexterity=TapSession(()))
    b = ActiveTestInstance("a", datetime(2015, 3, 3, 0, 45, tzinfo=tz), dexterity=TapSession(()))
    assert pair_instances([a, b]) == []


def test_pairing_separates_participants():
    pairs = pair_instances([_at("a", 8, 0), _at("b", 9, 0)])
    assert pairs == []


def test_pairing_rejects_bad_window():
    with pytest.raises(ValueError):
        pair_instances([], 180, 30)


@given(st.lists(st.tuples(st.sampled_from("abc"), st.integers(0, 2),
                          st.integers(0, 23 * 60)), max_size=40))
@settings(max_examples=150, deadline=None)
def test_pairing_properties(spec):
    insts = [ActiveTestInstance(p, datetime(2015, 3, 1 + d, tzinfo=UTC) + timedelta(minutes=m),
                                dexterity=TapSession(()))
             for p, d, m in spec]
    pairs = pair_instances(insts)
    seen = set()
    per_day = {}
    for b, t in pairs:
        for inst in (b, t):
            key = (inst.participant_id, inst.started_at)
            seen.add(key)
        gap = (t.started_at - b.started_at).total_seconds() / 60
        assert 30 <= gap <= 180
        assert b.participant_id == t.participant_id and b.local_date == t.local_date
        k = (b.participant_id, b.local_date)
        per_day[k] = per_day.get(k, 0) + 1
    assert len(seen) <= 2 * len(pairs)
    for k, count in per_day.items():
        n_day = sum(1 for i in insts if (i.participant_id, i.local_date) == k)
        assert count <= n_day // 2
