import numpy as np
import pytest

from affinewalk import _rng
from affinewalk.model import AffineMixtureModel
from affinewalk.simulate import (SampleCloud, backward_stationary_sample, birkhoff_sum_cloud,
                                 companion_stationary_sample, forward_trajectory,
                                 paired_eta_etaprime_sample)

from conftest import constant_model


def test_forward_reset_model():
    m = constant_model(np.zeros((2, 2)), [1.0, 1.0])
    tb = forward_trajectory(m, [5.0, 5.0], 2, seed=0)
    np.testing.assert_array_equal(tb.paths[0, 1:], [[1, 1], [1, 1]])
    np.testing.assert_array_equal(tb.sums[0], [7.0, 7.0])


def test_forward_identity():
    x = np.array([0.3, -2.0])
    tb = forward_trajectory(constant_model(np.eye(2), [0, 0]), x, 7, seed=1)
    np.testing.assert_array_equal(tb.sums[0], 8 * x)


def test_forward_matches_straight_loop(golden):
    n, seed = 1000, 11
    tb = forward_trajectory(golden, [0.0, 0.0], n, seed, N=2, keep_paths=False)
    key = _rng.stream_key(seed, "forward")
    for j in range(2):
        x, s = np.zeros(2), np.zeros(2)
        for k in range(1, n + 1):
            a = int(_rng.choose(key, np.array([j], dtype=np.uint64), k, golden.cumweights)[0])
            x = golden.linears[a] @ x + golden.translations[a]
            s = s + x
        np.testing.assert_allclose(tb.sums[j], s, rtol=1e-12, atol=1e-12)


def test_birkhoff_identity_and_determinism():
    x = np.array([1.0, 2.0])
    S = birkhoff_sum_cloud(constant_model(np.eye(2), [0, 0]), x, 5, 10, seed=3)
    np.testing.assert_array_equal(S, np.tile(6 * x, (10, 1)))


def test_birkhoff_deterministic(golden):
    a = birkhoff_sum_cloud(golden, [0, 0], 50, 200, seed=4)
    b = birkhoff_sum_cloud(golden, [0, 0], 50, 200, seed=4)
    assert a.tobytes() == b.tobytes()


def test_birkhoff_iid_mean():
    m = AffineMixtureModel.from_arrays([0.5, 0.5], [np.zeros((2, 2))] * 2, [[1, 0], [-1, 2]])
    S = birkhoff_sum_cloud(m, [1.0, 1.0], 20, 20_000, seed=5)
    se = S.std(axis=0) / np.sqrt(len(S))
    assert np.all(np.abs(S.mean(axis=0) - np.array([1.0, 21.0])) < 3 * se + 1e-12)


def test_backward_reset_model():
    c = backward_stationary_sample(constant_model(np.zeros((2, 2)), [2.0, -1.0]), N=50)
    np.testing.assert_array_equal(c.samples, np.tile([2.0, -1.0], (50, 1)))


def test_backward_scalar_mean(scalar):
    c = backward_stationary_sample(scalar, seed=1, N=200_000)
    # E R = 1 / (1 - E M) = 20; heavy tail (alpha ~ 1.22) makes the SE large
    assert abs(c.samples.mean() - 20.0) < 3.0


def test_backward_frozen_values(scalar):
    c = backward_stationary_sample(scalar, seed=3, N=1000)
    np.testing.assert_allclose(c.samples[:3, 0], [2.99195099, 5.50739816, 3.1255739], rtol=1e-8)
    assert c.meta["kind"] == "eta" and c.meta["budget_hits"] == 0


def test_paired_difference_is_first_translation(golden):
    eta, eta_p = paired_eta_etaprime_sample(golden, seed=2, N=500)
    diff = eta.samples - eta_p.samples
    tr = golden.translations
    hits = np.min([np.abs(diff - b).max(axis=1) for b in tr], axis=0)
    assert hits.max() < 1e-12


def test_paired_reset_model():
    eta, eta_p = paired_eta_etaprime_sample(constant_model(np.zeros((2, 2)), [1.0, 3.0]), N=20)
    np.testing.assert_array_equal(eta.samples, np.tile([1.0, 3.0], (20, 1)))
    np.testing.assert_array_equal(eta_p.samples, 0.0)


def test_companion_zero_model():
    c = companion_stationary_sample(constant_model(np.zeros((2, 2)), [1.0, 3.0]), [1, 0], N=20)
    np.testing.assert_array_equal(c.samples, 0.0)


def test_companion_scaling_exact(golden):
    a = companion_stationary_sample(golden, [1.0, 0.5], seed=7, N=300)
    b = companion_stationary_sample(golden, [2.5, 1.25], seed=7, N=300)
    np.testing.assert_allclose(b.samples, 2.5 * a.samples, rtol=1e-12, atol=1e-300)


def test_companion_linearity_scalar(scalar):
    a = companion_stationary_sample(scalar, [1.0], seed=9, N=400)
    b = companion_stationary_sample(scalar, [2.0], seed=9, N=400)
    c = companion_stationary_sample(scalar, [3.0], seed=9, N=400)
    np.testing.assert_allclose(c.samples, a.samples + b.samples, rtol=1e-12)


def test_cloud_csv_round_trip(tmp_path):
    c = SampleCloud(np.arange(6.0).reshape(3, 2), {"kind": "test"})
    c.to_csv(tmp_path / "c.csv")
    back = SampleCloud.from_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.samples, c.samples)
    assert back.meta == {"kind": "test"}


def test_cloud_rejects_nan():
    with pytest.raises(ValueError):
        SampleCloud(np.array([[np.nan, 0.0]]))
