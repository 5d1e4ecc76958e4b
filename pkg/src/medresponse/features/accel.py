"""Acceleration features for balance and gait tests."""

from __future__ import annotations

import numpy as np

from ..core import AccelSeries, to_spherical
from .registry import ACCEL_AXES, ACCEL_PAIRS, ACCEL_STATS, FeatureVector
from .stats import ar1, descriptive_stats, dfa, lomb_scargle_peaks, mean_tkeo, pairwise_features


class ExtractionError(ValueError):
    """A test's recording could not be turned into features."""

    def __init__(self, test, reason):
        super().__init__(f"{test}: {reason}")
        self.test = test
        self.reason = reason


def axis_signals(series: AccelSeries):
    sph = to_spherical(series)
    return {"x": series.x, "y": series.y, "z": series.z,
            "r": sph.r, "theta": sph.theta, "phi": sph.phi}


def extract_accel_features(series: AccelSeries, test=None, f_max=None) -> FeatureVector:
    """All 117 acceleration features of one balance or gait recording.

    Eighteen statistics on each of x, y, z, r, theta, phi, then XCORR/MI/xEn
    for the raw axis pairs. Any failure is reported as one ExtractionError.
    """
    test = test or series.test_kind
    if test != series.test_kind:
        raise ExtractionError(test, f"series is tagged {series.test_kind!r}")
    try:
        series.check_extractable()
        signals = axis_signals(series)
        stacked = np.vstack([signals[a] for a in ACCEL_AXES])
        dfc, amp = lomb_scargle_peaks(series.t, stacked, f_max)
        out = []
        for i, axis in enumerate(ACCEL_AXES):
            v = signals[axis]
            d = descriptive_stats(v)._asdict()
            d["DFC"] = float(dfc[i])
            d["AMP"] = float(amp[i])
            d["meanTKEO"] = mean_tkeo(v)
            d["AR1"] = ar1(v)
            d["DFA"] = dfa(v)
            out.extend((f"{test}_{axis}_{k}", d[k]) for k in ACCEL_STATS)
        for a, b in ACCEL_PAIRS:
            pw = pairwise_features(signals[a], signals[b])
            out.extend((f"{test}_{a}{b}_{k}", val) for k, val in pw._asdict().items())
        return FeatureVector.from_pairs(out)
    except ValueError as exc:
        if isinstance(exc, ExtractionError):
            raise
        raise ExtractionError(test, str(exc)) from exc

