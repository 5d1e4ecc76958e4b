import numpy as np
import pytest

from medresponse.core import AccelSeries
from medresponse.features import ExtractionError, extract_accel_features
from medresponse.features.registry import accel_feature_names

from conftest import make_accel


def test_feature_count_and_ids(rng):
    fv = extract_accel_features(make_accel(rng, 200, "balance"))
    assert len(fv.values) == 117
    assert list(fv.names) == accel_feature_names("balance")
    assert np.all(np.isfinite(fv.values))


def test_constant_series_gives_zero_spread():
    n = 64
    s = AccelSeries(t=np.arange(n) * 0.05, x=np.full(n, 0.1), y=np.full(n, 9.8),
                    z=np.full(n, -0.3), test_kind="gait")
    fv = extract_accel_features(s)
    for axis in ("x", "y", "z", "r", "theta", "phi"):
        for stat in ("std", "IQR", "range", "AMP", "DFC"):
            assert fv[f"gait_{axis}_{stat}"] == 0.0, (axis, stat)


def test_motion_on_y_dominates(rng):
    n = 300
    t = np.cumsum((1 + rng.uniform(-0.2, 0.2, n)) / 20.0)
    s = AccelSeries(t=t, x=0.01 * rng.standard_normal(n),
                    y=9.81 + np.sin(2 * np.pi * 1.8 * t), z=0.01 * rng.standard_normal(n))
    fv = extract_accel_features(s)
    assert fv["gait_y_std"] > fv["gait_x_std"] and fv["gait_y_std"] > fv["gait_z_std"]
    assert abs(fv["gait_y_DFC"] - 1.8) <= 1 / (4 * (t[-1] - t[0]))


def test_test_kind_prefix_and_mismatch(rng):
    s = make_accel(rng, 50, "gait")
    assert extract_accel_features(s).names[0].startswith("gait_")
    with pytest.raises(ExtractionError):
        extract_accel_features(s, "balance")


def test_short_series_is_a_per_test_failure(rng):
    with pytest.raises(ExtractionError) as err:
        extract_accel_features(make_accel(rng, 15))
    assert err.value.test == "gait"


def test_time_origin_does_not_matter(rng):
    s = make_accel(rng, 100)
    shifted = AccelSeries(t=s.t + 7.5, x=s.x, y=s.y, z=s.z, test_kind=s.test_kind)
    a, b = extract_accel_features(s), extract_accel_features(shifted)
    assert np.allclose(a.values, b.values, rtol=1e-9, atol=1e-9)
