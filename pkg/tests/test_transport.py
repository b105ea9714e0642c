import itertools

import numpy as np
import pytest

from lclt.errors import ConfigError, DimensionMismatchError, SizeCapError
from lclt.transport import (
    SampleCloud,
    gamma_cloud,
    noise_floor,
    w1_sliced,
    w1_sorted_1d,
    w_exact,
    w_to_gamma,
)


def brute_force_w(a: SampleCloud, b: SampleCloud, p: int) -> float:
    from scipy.spatial.distance import cdist

    cost = cdist(a.points, b.points)
    if p == 2:
        cost = cost**2
    m = a.m
    best = min(cost[np.arange(m), perm].sum() for perm in itertools.permutations(range(m)))
    return float((best / m) ** (1.0 / p))


def test_w_exact_examples():
    a = SampleCloud(np.array([[0.0], [2.0]]))
    b = SampleCloud(np.array([[1.0], [3.0]]))
    assert w_exact(a, a, 1) == 0.0
    assert w_exact(SampleCloud([[0.0]]), SampleCloud([[1.0]]), 1) == 1.0
    assert w_exact(a, b, 1) == pytest.approx(1.0, abs=1e-14)
    assert brute_force_w(a, b, 1) == pytest.approx(1.0, abs=1e-14)


def test_w_exact_equals_brute_force():
    # distinct optimal matchings can tie within rounding; equality is asserted
    # at 2-ulp resolution
    rng = np.random.default_rng(0)
    for _ in range(60):
        m = int(rng.integers(1, 8))
        d = int(rng.integers(1, 4))
        p = int(rng.integers(1, 3))
        a = SampleCloud(rng.standard_normal((m, d)))
        b = SampleCloud(rng.standard_normal((m, d)))
        assert np.isclose(w_exact(a, b, p), brute_force_w(a, b, p), rtol=5e-16, atol=0.0)


def test_w_exact_metric_properties():
    rng = np.random.default_rng(1)
    for _ in range(15):
        a, b, c = (SampleCloud(rng.standard_normal((6, 2))) for _ in range(3))
        assert w_exact(a, b, 1) == pytest.approx(w_exact(b, a, 1), abs=1e-12)
        assert w_exact(a, c, 1) <= w_exact(a, b, 1) + w_exact(b, c, 1) + 1e-9
        assert w_exact(a, b, 2) == pytest.approx(w_exact(b, a, 2), abs=1e-12)


def test_w_exact_validation():
    a = SampleCloud(np.zeros((3, 2)))
    with pytest.raises(DimensionMismatchError):
        w_exact(a, SampleCloud(np.zeros((4, 2))), 1)
    with pytest.raises(DimensionMismatchError):
        w_exact(a, SampleCloud(np.zeros((3, 3))), 1)
    with pytest.raises(ConfigError):
        w_exact(a, a, 3)
    big = SampleCloud(np.zeros((4097, 1)))
    with pytest.raises(SizeCapError):
        w_exact(big, big, 1)


def test_w1_sorted_matches_exact():
    rng = np.random.default_rng(2)
    a = SampleCloud(rng.standard_normal((50, 1)))
    b = SampleCloud(rng.standard_normal((50, 1)))
    assert w1_sorted_1d(a, b) == pytest.approx(w_exact(a, b, 1), abs=1e-12)
    assert w1_sorted_1d(a, a) == 0.0
    s1 = SampleCloud([[0.3]])
    s2 = SampleCloud([[-1.1]])
    assert w1_sorted_1d(s1, s2) == pytest.approx(1.4, abs=1e-14)
    with pytest.raises(DimensionMismatchError):
        w1_sorted_1d(SampleCloud(np.zeros((3, 2))), SampleCloud(np.zeros((3, 2))))


def test_sliced_properties():
    rng = np.random.default_rng(3)
    a = SampleCloud(rng.standard_normal((128, 3)))
    out = w1_sliced(a, a, projections=16, seed=0)
    assert out["estimate"] == 0.0
    # d=1: every direction reduces to the sorted distance
    a1 = SampleCloud(rng.standard_normal((64, 1)))
    b1 = SampleCloud(rng.standard_normal((64, 1)))
    out = w1_sliced(a1, b1, projections=8, seed=1)
    assert out["estimate"] == pytest.approx(w1_sorted_1d(a1, b1), abs=1e-12)
    assert out["stderr"] <= 1e-12


def test_sliced_monotone_in_shift():
    rng = np.random.default_rng(4)
    base = rng.standard_normal((256, 3))
    vals = []
    for mu in (0.0, 0.5, 1.0):
        a = SampleCloud(base)
        b = SampleCloud(rng.standard_normal((256, 3)) + mu)
        vals.append(w1_sliced(a, b, projections=64, seed=5)["estimate"])
    assert vals[0] < vals[1] < vals[2]


def test_sliced_lower_bounds_exact():
    rng = np.random.default_rng(5)
    for seed in range(5):
        a = SampleCloud(rng.standard_normal((64, 3)))
        b = SampleCloud(rng.standard_normal((64, 3)) + 0.3)
        sliced = w1_sliced(a, b, projections=128, seed=seed)
        assert w_exact(a, b, 1) >= sliced["estimate"] - 2 * sliced["stderr"]


def test_w_to_gamma_deterministic():
    rng = np.random.default_rng(6)
    a = SampleCloud(rng.standard_normal((32, 2)))
    assert w_to_gamma(a, 1, seed=9) == w_to_gamma(a, 1, seed=9)
    # singleton at zero against one normal draw: |z| for that seed
    single = SampleCloud(np.zeros((1, 2)))
    z = gamma_cloud(1, 2, seed=9).points[0]
    assert w_to_gamma(single, 1, seed=9) == pytest.approx(float(np.linalg.norm(z)), abs=1e-14)


def test_w_to_gamma_matched_moments_smaller():
    rng = np.random.default_rng(7)
    matched = SampleCloud(rng.standard_normal((512, 2)))
    mismatched = SampleCloud(rng.standard_normal((512, 2)) * 2.0)
    seeds = range(5)
    m_vals = np.mean([w_to_gamma(matched, 2, seed=s) for s in seeds])
    x_vals = np.mean([w_to_gamma(mismatched, 2, seed=s) for s in seeds])
    assert m_vals < x_vals


def test_noise_floor_calibration():
    out = noise_floor(256, 2, 1, seeds=6, seed0=11)
    assert 0 < out["mean"] < 1.0
    assert out["threshold"] >= out["mean"]
    with pytest.raises(ConfigError):
        noise_floor(16, 1, 1, seeds=1)


def test_gamma_cloud_stream_isolation():
    a = gamma_cloud(16, 2, seed=3)
    b = gamma_cloud(16, 2, seed=4)
    assert not np.array_equal(a.points, b.points)
    assert np.array_equal(a.points, gamma_cloud(16, 2, seed=3).points)
