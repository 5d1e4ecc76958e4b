"""Dexterity (STAY/MOVE intervals) and reaction-lag features."""

from __future__ import annotations

import numpy as np

from ..core import ReactionSession, TapSession
from .registry import REACT_STATS, TAP_STATS, FeatureVector
from .stats import DFA_MIN_LENGTH, ar1, descriptive_stats, dfa, mean_tkeo


def tap_intervals(session: TapSession):
    """STAY = release - press per event; MOVE = next press - release."""
    ev = session.events
    if len(ev) < 2:
        raise ValueError(f"dexterity: need at least 2 taps, got {len(ev)}")
    press = np.array([e.press for e in ev])
    release = np.array([e.release for e in ev])
    return release - press, press[1:] - release[:-1]


def _sequence_stats(v, prefix, wanted):
    v = np.asarray(v, dtype=np.float64)
    if len(v) < 2:
        raise ValueError(f"{prefix}: need at least 2 values, got {len(v)}")
    vals = descriptive_stats(v)._asdict()
    vals["sum"] = float(v.sum())
    flags = []
    guarded = (("meanTKEO", mean_tkeo, 3), ("AR1", ar1, 3), ("DFA", dfa, DFA_MIN_LENGTH))
    for name, fn, need in guarded:
        if name not in wanted:
            continue
        if len(v) >= need:
            vals[name] = fn(v)
        else:
            vals[name] = 0.0
            flags.append(f"{prefix}_{name}:too_short")
    return FeatureVector.from_pairs([(f"{prefix}_{k}", vals[k]) for k in wanted], flags)


def interval_feature_set(v, prefix) -> FeatureVector:
    return _sequence_stats(v, prefix, TAP_STATS)


def extract_dexterity_features(session: TapSession) -> FeatureVector:
    stay, move = tap_intervals(session)
    if len(move) < 2:
        raise ValueError("dexterity: need at least 3 taps for MOVE statistics")
    return interval_feature_set(stay, "tap_STAY") + interval_feature_set(move, "tap_MOVE")


def reaction_lags(session: ReactionSession):
    lags = np.array([tr.press - tr.stimulus for tr in session.trials if tr.responded])
    if len(lags) == 0:
        raise ValueError("reaction: no responded trials")
    return lags


def extract_reaction_features(session: ReactionSession) -> FeatureVector:
    lags = reaction_lags(session)
    if len(lags) < 2:
        raise ValueError(f"reaction: need at least 2 lags, got {len(lags)}")
    return _sequence_stats(lags, "react", REACT_STATS)
