"""Shared fixtures and the acceptance-criterion summary."""

from datetime import datetime, timezone

import numpy as np
import pytest

from medresponse.core import (
    AccelSeries,
    ActiveTestInstance,
    AudioRecording,
    ReactionSession,
    ReactionTrial,
    TapEvent,
    TapSession,
)

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_accel(rng, n=200, kind="gait", rate=20.0, jitter=0.2):
    dt = (1 + rng.uniform(-jitter, jitter, n - 1)) / rate
    t = np.round(np.concatenate([[0.0], np.cumsum(dt)]), 6)
    x, y, z = rng.standard_normal((3, n))
    return AccelSeries(t=t, x=x, y=y + 9.81, z=z, test_kind=kind)


def make_instance(rng, pid="p1", when=None, label="unlabeled"):
    when = when or datetime(2015, 3, 2, 8, 0, tzinfo=timezone.utc)
    fs = 1000
    tt = np.arange(20 * fs) / fs
    voice = np.where((tt > 2) & (tt < 15), 0.3 * np.sin(2 * np.pi * 180 * tt), 0.0)
    voice = np.round(voice * 32768) / 32768
    events = []
    t = 0.5
    for i in range(30):
        events.append(TapEvent(round(t, 6), round(t + 0.1 + 0.01 * rng.random(), 6),
                               ("left", "right")[i % 2]))
        t += 0.4 + 0.05 * rng.random()
    trials = [ReactionTrial(2.0 * k + 1, round(2.0 * k + 1.25 + 0.05 * rng.random(), 6),
                            round(2.0 * k + 1.6, 6)) for k in range(8)]
    return ActiveTestInstance(
        participant_id=pid, started_at=when, label=label,
        voice=AudioRecording(fs, voice),
        balance=make_accel(rng, 300, "balance"),
        gait=make_accel(rng, 200, "gait"),
        dexterity=TapSession(tuple(events)),
        reaction=ReactionSession(tuple(trials)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def instance(rng):
    return make_instance(rng)
