"""Recording types for the five active tests, instance pairing and the
spherical transform of tri-axial acceleration."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Optional, Sequence

import numpy as np

TEST_KINDS = ("voice", "balance", "gait", "dexterity", "reaction")
ACCEL_KINDS = ("balance", "gait")
LABELS = ("baseline", "treatment", "unlabeled")
BUTTONS = ("left", "right")

MIN_ACCEL_SAMPLES = 16


class RecordingError(ValueError):
    """A recording violates one of its structural invariants."""


def _as_float_array(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise RecordingError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise RecordingError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AccelSeries:
    """Irregularly timestamped tri-axial acceleration for one balance or gait test.

    ``t`` is seconds since test start (strictly increasing); ``x``, ``y``, ``z``
    are raw accelerations in m/s^2, used as recorded (no gravity removal).
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    test_kind: str = "gait"

    def __post_init__(self):
        if self.test_kind not in ACCEL_KINDS:
            raise RecordingError(f"unknown acceleration test kind {self.test_kind!r}")
        for name in ("t", "x", "y", "z"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), name))
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.z) == n):
            raise RecordingError("t, x, y, z must have equal length")
        if n == 0:
            raise RecordingError("empty acceleration series")
        if np.any(self.t < 0):
            raise RecordingError("timestamps must be non-negative")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise RecordingError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def __eq__(self, other):
        if not isinstance(other, AccelSeries):
            return NotImplemented
        return self.test_kind == other.test_kind and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in "txyz"
        )

    def check_extractable(self):
        if len(self) < MIN_ACCEL_SAMPLES:
            raise RecordingError(
                f"{self.test_kind} series has {len(self)} samples, need {MIN_ACCEL_SAMPLES}"
            )
        if self.duration <= 0:
            raise RecordingError(f"{self.test_kind} series has zero duration")


@dataclass(frozen=True, eq=False)
class SphericalSeries:
    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True, eq=False)
class AudioRecording:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise RecordingError("sample_rate must be a positive integer")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "samples", _as_float_array(self.samples, "samples"))

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, AudioRecording):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.samples, other.samples
        )


@dataclass(frozen=True)
class TapEvent:
    press: float
    release: float
    button: str

    def __post_init__(self):
        if self.button not in BUTTONS:
            raise RecordingError(f"unknown button {self.button!r}")
        if not (math.isfinite(self.press) and math.isfinite(self.release)):
            raise RecordingError("tap times must be finite")
        if not self.press < self.release:
            raise RecordingError("tap press must precede release")


@dataclass(frozen=True)
class TapSession:
    events: tuple

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        for prev, cur in zip(events, events[1:]):
            if cur.press < prev.press:
                raise RecordingError("tap events must be ordered by press time")
            if cur.press < prev.release:
                raise RecordingError("tap events overlap")


@dataclass(frozen=True)
class ReactionTrial:
    stimulus: float
    press: Optional[float] = None
    release: Optional[float] = None

    @property
    def responded(self):
        return self.press is not None

    def __post_init__(self):
        if (self.press is None) != (self.release is None):
            raise RecordingError("reaction trial needs both press and release, or neither")
        if not math.isfinite(self.stimulus):
            raise RecordingError("stimulus time must be finite")
        if self.press is not None:
            if not (math.isfinite(self.press) and math.isfinite(self.release)):
                raise RecordingError("reaction times must be finite")
            if not self.stimulus <= self.press < self.release:
                raise RecordingError("reaction trial needs stimulus <= press < release")


@dataclass(frozen=True)
class ReactionSession:
    trials: tuple

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))


@dataclass(frozen=True)
class ActiveTestInstance:
    """One session of active tests; ``started_at`` must be timezone-aware."""

    participant_id: str
    started_at: datetime
    label: str = "unlabeled"
    voice: Optional[AudioRecording] = None
    balance: Optional[AccelSeries] = None
    gait: Optional[AccelSeries] = None
    dexterity: Optional[TapSession] = None
    reaction: Optional[ReactionSession] = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise RecordingError(f"unknown label {self.label!r}")
        if self.started_at.tzinfo is None:
            raise RecordingError("started_at must carry a UTC offset")
        if not self.present_tests():
            raise RecordingError("instance carries no tests")
        for kind in ACCEL_KINDS:
            series = getattr(self, kind)
            if series is not None and series.test_kind != kind:
                raise RecordingError(f"{kind} payload tagged as {series.test_kind}")

    def present_tests(self):
        return tuple(k for k in TEST_KINDS if getattr(self, k) is not None)

    @property
    def local_date(self):
        return self.started_at.date()

    def with_label(self, label):
        return replace(self, label=label)


def to_spherical(series: AccelSeries) -> SphericalSeries:
    """Radial distance, polar angle and azimuth of every sample.

    Degenerate angles are pinned to 0: theta when r == 0, phi when x == y == 0.
    """
    x, y, z = series.x, series.y, series.z
    r = np.sqrt(x * x + y * y + z * z)
    # arctan2 stays accurate near the poles, where arccos(z / r) does not
    theta = np.where(r > 0, np.arctan2(np.hypot(x, y), z), 0.0)
    phi = np.where((x == 0) & (y == 0), 0.0, np.arctan2(y, x))
    # y = -0.0 or a tiny negative y with x < 0 rounds to -pi; keep phi in (-pi, pi]
    phi[phi == -np.pi] = np.pi
    return SphericalSeries(t=series.t, r=r, theta=theta, phi=phi)


def pair_instances(
    instances: Sequence[ActiveTestInstance],
    window_min: float = 30.0,
    window_max: float = 180.0,
):
    """Pair each participant-day's first session with its post-dose session.

    The earliest instance of a (participant, local date) group is the baseline;
    the first later instance starting between ``window_min`` and
    ``window_max`` minutes after it is the treatment. At most one pair per day;
    everything else is dropped. Returns ``(baseline, treatment)`` tuples with
    labels overwritten, ordered by participant then date.
    """
    if not window_min < window_max:
        raise ValueError("window_min must be below window_max")
    lo = timedelta(minutes=window_min)
    hi = timedelta(minutes=window_max)
    groups = defaultdict(list)
    for inst in instances:
        groups[(inst.participant_id, inst.local_date)].append(inst)

    pairs = []
    for key in sorted(groups):
        day = sorted(groups[key], key=lambda i: i.started_at)
        first = day[0]
        for cand in day[1:]:
            gap = cand.started_at - first.started_at
            if lo <= gap <= hi:
                pairs.append((first.with_label("baseline"), cand.with_label("treatment")))
                break
            if gap > hi:
                break
    return pairs
