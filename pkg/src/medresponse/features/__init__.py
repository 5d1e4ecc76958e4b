"""Feature extraction for all five active tests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..core import ActiveTestInstance
from .accel import ExtractionError, extract_accel_features
from .registry import FEATURE_IDS, REGISTRY, FeatureVector
from .stats import (
    ar1,
    descriptive_stats,
    dfa,
    lomb_scargle_peak,
    mean_tkeo,
    pairwise_features,
)
from .taps import (
    extract_dexterity_features,
    extract_reaction_features,
    interval_feature_set,
    reaction_lags,
    tap_intervals,
)
from .voice import extract_voice_features, frame_audio, tag_voiced

__all__ = [
    "FEATURE_IDS", "REGISTRY", "ExtractionError", "FeatureVector", "InstanceFeatures",
    "ar1", "descriptive_stats", "dfa", "extract_accel_features",
    "extract_dexterity_features", "extract_instance", "extract_instances",
    "extract_reaction_features", "extract_voice_features", "frame_audio",
    "interval_feature_set", "lomb_scargle_peak", "mean_tkeo", "pairwise_features",
    "reaction_lags", "tag_voiced", "tap_intervals",
]

_EXTRACTORS = (
    ("voice", extract_voice_features),
    ("balance", lambda s: extract_accel_features(s, "balance")),
    ("gait", lambda s: extract_accel_features(s, "gait")),
    ("dexterity", extract_dexterity_features),
    ("reaction", extract_reaction_features),
)


@dataclass(frozen=True)
class InstanceFeatures:
    instance: ActiveTestInstance
    features: FeatureVector
    failures: dict  # test kind -> reason, for present tests that failed
    missing: tuple  # test kinds absent from the instance

    @property
    def complete(self):
        return not self.failures and not self.missing

    @property
    def flags(self):
        return self.features.flags


def extract_instance(inst: ActiveTestInstance) -> InstanceFeatures:
    """Extract every present test; a failing test leaves its features out."""
    fv = FeatureVector.empty()
    failures = {}
    missing = []
    for kind, fn in _EXTRACTORS:
        rec = getattr(inst, kind)
        if rec is None:
            missing.append(kind)
            continue
        try:
            fv = fv + fn(rec)
        except ValueError as exc:
            reason = exc.reason if isinstance(exc, ExtractionError) else str(exc)
            failures[kind] = reason
    return InstanceFeatures(inst, fv, failures, tuple(missing))


def extract_instances(instances, threads=1):
    """Extract a batch; output order matches input regardless of ``threads``."""
    if threads <= 1:
        return [extract_instance(i) for i in instances]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(extract_instance, instances))
