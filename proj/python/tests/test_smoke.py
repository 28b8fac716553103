import numpy as np
import pytest

import realsteer as rs


def test_hsic_matches_trace_form():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(12, 5)).astype(np.float32)
    y = [0, 1] * 6
    n = len(y)
    h = np.eye(n) - 1.0 / n
    yy = np.eye(2)[y]
    zd = z.astype(np.float64)
    expect = np.trace(h @ zd @ zd.T @ h @ yy @ yy.T)
    assert rs.hsic_linear(z, y) == pytest.approx(expect, rel=1e-8)


def test_four_point_direction():
    z = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.float32)
    d = rs.compute_direction(z, [1, 1, 0, 0], [1, 1, 2])
    assert d["eigenvalues"][0] == pytest.approx(8.0)
    assert d["raw_norm"] == pytest.approx(8.0)
    assert d["delta"].shape == (1, 1, 2)
    assert d["delta"].ravel() == pytest.approx([-1.0, 0.0])


def test_topk_eigh_diagonal():
    values, vectors = rs.topk_eigh(np.diag([3.0, 1.0, 2.0]), 2)
    assert values == pytest.approx([3.0, 2.0])
    assert abs(vectors[0, 0]) == pytest.approx(1.0)


def test_calibration_midpoint():
    assert rs.calibrate_threshold([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == pytest.approx(0.5)


def test_spatial_and_spectrum():
    up = rs.interpolate_spatial(np.full((2, 3, 3), 0.25, dtype=np.float32), 7, 5, "nearest")
    assert up.shape == (2, 7, 5)
    assert np.all(up == np.float32(0.25))
    s = rs.dft2d_centered_logmag(np.full((4, 4), 1.0, dtype=np.float32))
    assert s[2, 2] == pytest.approx(np.log1p(16.0), rel=1e-6)
    assert np.count_nonzero(s) == 1


def test_steering_step():
    assert rs.lambda_at(0.5, 2, 4, 8, 3) == 0.5
    assert rs.lambda_at(0.5, 2, 4, 8, 5) == 0.0
    z = np.zeros((1, 2, 2), dtype=np.float32)
    out = rs.apply_step(z, z + 1, 2.0, z + 0.5)
    assert np.allclose(out, 2.0)


def test_errors_are_raised():
    with pytest.raises(rs.RealsteerError):
        rs.calibrate_threshold([], [])
    with pytest.raises(rs.RealsteerError):
        rs.interpolate_spatial(np.ones((1, 2, 2), dtype=np.float32), 4, 4, "cubic")


def test_toy_experiment_record():
    record = rs.run_toy_experiment(seed=0, prompts=40)
    summary = record["summary"]
    assert summary["prompts"] == 40
    assert summary["success_rate"] - summary["baseline_success_rate"] >= 0.4
