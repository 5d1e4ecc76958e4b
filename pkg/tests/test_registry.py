from pathlib import Path

from medresponse.features import FEATURE_IDS, extract_instance
from medresponse.features.registry import (
    REGISTRY,
    feature_spec,
    registry_hash,
    registry_manifest,
    shipped_manifest,
)

GOLDEN = Path(__file__).parent / "golden" / "feature_ids.txt"


def test_counts_per_test():
    tests = [s.test for s in REGISTRY]
    assert len(REGISTRY) == 297
    assert {t: tests.count(t) for t in set(tests)} == {
        "voice": 18, "balance": 117, "gait": 117, "tap": 30, "react": 15}


def test_ids_unique_and_ordinals_dense():
    assert len(set(FEATURE_IDS)) == len(FEATURE_IDS)
    assert [s.ordinal for s in REGISTRY] == list(range(len(REGISTRY)))


def test_golden_ids():
    assert GOLDEN.read_text().split() == list(FEATURE_IDS)


def test_shipped_manifest_matches_code():
    assert shipped_manifest() == registry_manifest()


def test_extraction_emits_registry_order(instance):
    a = extract_instance(instance)
    b = extract_instance(instance)
    assert a.complete
    assert a.features.names == FEATURE_IDS == b.features.names


def test_reaction_set_has_sum_but_no_ar1():
    assert "react_sum" in FEATURE_IDS and "react_AR1" not in FEATURE_IDS
    assert "tap_STAY_AR1" in FEATURE_IDS and "tap_STAY_sum" not in FEATURE_IDS


def test_headline_features_exist():
    for fid in ("tap_STAY_IQR", "gait_y_AMP", "voice_F0", "gait_xy_XCORR"):
        assert feature_spec(fid).name == fid


def test_hash_depends_on_order():
    assert registry_hash(FEATURE_IDS) != registry_hash(tuple(reversed(FEATURE_IDS)))
