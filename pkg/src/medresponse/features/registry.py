"""The ordered feature registry and the FeatureVector container."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

REGISTRY_VERSION = 1

ACCEL_AXES = ("x", "y", "z", "r", "theta", "phi")
ACCEL_PAIRS = (("x", "y"), ("x", "z"), ("y", "z"))
ACCEL_STATS = ("mean", "std", "Q1", "Q3", "IQR", "median", "mode", "range", "skew",
               "kurt", "MSE", "En", "MCR", "DFC", "AMP", "meanTKEO", "AR1", "DFA")
PAIR_STATS = ("XCORR", "MI", "xEn")
TRACK_STATS = ("mean", "std", "DFA", "poly1_c0", "poly1_c1", "poly2_c0", "poly2_c1",
               "poly2_c2")
TAP_STATS = ("mean", "std", "Q1", "Q3", "IQR", "median", "mode", "range", "skew", "kurt",
             "MSE", "En", "meanTKEO", "AR1", "DFA")
REACT_STATS = ("sum", "mean", "std", "Q1", "Q3", "IQR", "median", "mode", "range", "skew",
               "kurt", "MSE", "En", "meanTKEO", "DFA")

TEST_TITLES = {"voice": "Voice", "balance": "Balance", "gait": "Gait",
               "tap": "Dexterity", "react": "Reaction"}

_STAT_TEXT = {
    "mean": "mean", "std": "standard deviation", "Q1": "25th percentile",
    "Q3": "75th percentile", "IQR": "inter-quartile range", "median": "median",
    "mode": "mode", "range": "data range", "skew": "skewness", "kurt": "kurtosis",
    "MSE": "mean squared energy", "En": "entropy", "MCR": "mean cross rate",
    "DFC": "dominant frequency", "AMP": "the amplitude of the dominant frequency",
    "meanTKEO": "mean TKEO", "AR1": "lag-1 autoregression coefficient",
    "DFA": "DFA exponent", "sum": "sum", "XCORR": "cross-correlation",
    "MI": "mutual information", "xEn": "cross-entropy",
    "poly1_c0": "linear-fit intercept", "poly1_c1": "linear-fit slope",
    "poly2_c0": "quadratic-fit constant term", "poly2_c1": "quadratic-fit linear term",
    "poly2_c2": "quadratic-fit quadratic term",
}
_AXIS_TEXT = {"x": "axis x", "y": "axis y", "z": "axis z", "r": "the radial distances",
              "theta": "the polar angles", "phi": "the azimuth angles"}


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    test: str
    axis: str
    stat: str
    ordinal: int
    description: str

    def to_dict(self):
        return {"name": self.name, "test": self.test, "axis": self.axis,
                "stat": self.stat, "ordinal": self.ordinal,
                "description": self.description}


def accel_feature_names(test):
    names = [f"{test}_{axis}_{stat}" for axis in ACCEL_AXES for stat in ACCEL_STATS]
    names += [f"{test}_{a}{b}_{stat}" for a, b in ACCEL_PAIRS for stat in PAIR_STATS]
    return names


def voice_feature_names():
    names = ["voice_Len"]
    names += [f"voice_{track}_{stat}" for track in ("AMP", "F0") for stat in TRACK_STATS]
    names.append("voice_F0")
    return names


def tap_feature_names():
    return [f"tap_{group}_{stat}" for group in ("STAY", "MOVE") for stat in TAP_STATS]


def react_feature_names():
    return [f"react_{stat}" for stat in REACT_STATS]


def _build():
    specs = []

    def add(name, test, axis, stat, desc):
        specs.append(FeatureSpec(name, test, axis, stat, len(specs), desc))

    add("voice_Len", "voice", "", "Len", "voice duration in seconds")
    for track, what in (("AMP", "voice amplitude"), ("F0", "voice frequency")):
        for stat in TRACK_STATS:
            add(f"voice_{track}_{stat}", "voice", track, stat, f"{_STAT_TEXT[stat]} of {what}")
    add("voice_F0", "voice", "", "F0", "the dominant voice frequency")
    for test in ("balance", "gait"):
        for axis in ACCEL_AXES:
            for stat in ACCEL_STATS:
                desc = f"{_STAT_TEXT[stat]} of {_AXIS_TEXT[axis]}"
                if stat == "AMP":
                    desc = f"the amplitude of the dominant frequency of {_AXIS_TEXT[axis]}"
                add(f"{test}_{axis}_{stat}", test, axis, stat, desc)
        for a, b in ACCEL_PAIRS:
            for stat in PAIR_STATS:
                add(f"{test}_{a}{b}_{stat}", test, a + b, stat,
                    f"{_STAT_TEXT[stat]} between axes {a} and {b}")
    for group, what in (("STAY", "finger pressing intervals"),
                        ("MOVE", "finger moving intervals")):
        for stat in TAP_STATS:
            add(f"tap_{group}_{stat}", "tap", group, stat, f"{_STAT_TEXT[stat]} of {what}")
    for stat in REACT_STATS:
        add(f"react_{stat}", "react", "", stat, f"{_STAT_TEXT[stat]} of reaction lags")
    return tuple(specs)


REGISTRY = _build()
FEATURE_IDS = tuple(s.name for s in REGISTRY)
_BY_NAME = {s.name: s for s in REGISTRY}


def feature_spec(name) -> FeatureSpec:
    return _BY_NAME[name]


def registry_manifest():
    return {"schema_version": REGISTRY_VERSION, "n_features": len(REGISTRY),
            "features": [s.to_dict() for s in REGISTRY]}


def registry_hash(feature_ids=FEATURE_IDS):
    return hashlib.sha256("\n".join(feature_ids).encode()).hexdigest()


def shipped_manifest():
    """The manifest bundled with the package (golden copy)."""
    text = resources.files("medresponse.data").joinpath("feature_registry.json").read_text()
    return json.loads(text)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Named feature values in registry order, plus quality flags."""

    names: tuple
    values: np.ndarray
    flags: tuple = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.names),):
            raise ValueError("names and values differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate feature ids")
        if not np.all(np.isfinite(vals)):
            bad = [n for n, v in zip(self.names, vals) if not np.isfinite(v)]
            raise ValueError(f"non-finite feature values: {', '.join(bad[:5])}")
        vals.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "flags", tuple(self.flags))

    @classmethod
    def from_pairs(cls, pairs, flags=()):
        pairs = list(pairs)
        return cls(tuple(n for n, _ in pairs), np.array([v for _, v in pairs], dtype=float),
                   flags)

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))

    def __add__(self, other):
        return FeatureVector(self.names + other.names,
                             np.concatenate([self.values, other.values]),
                             self.flags + other.flags)

    @classmethod
    def empty(cls):
        return cls((), np.zeros(0))
