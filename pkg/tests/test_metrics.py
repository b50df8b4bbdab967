import numpy as np
import pytest

from iotgraph.metrics import (CoordSet, localization_error, procrustes_align,
                              per_node_residuals, UndefinedMetricError)


def test_coordset_orientation():
    a = CoordSet(np.array([[0.0, 1, 2], [0, 0, 0]]))      # already 2 x n
    b = CoordSet(np.array([[0.0, 0], [1, 0], [2, 0]]))    # n x 2, auto-transposed
    assert a.coords.shape == b.coords.shape == (2, 3)
    assert np.allclose(a.center, [1, 0])


def test_localization_error_hand_value():
    # [DERIVED] truth centered = [[-1, 1], [0, 0]], estimate = -truth:
    # ||diff|| = ||[[-2, 2], [0, 0]]|| = 2*sqrt(2), denom = sqrt(2) -> A_e = 2
    truth = CoordSet(np.array([[0.0, 2.0], [0.0, 0.0]]))
    est = CoordSet(np.array([[2.0, 0.0], [0.0, 0.0]]))
    assert localization_error(truth, est) == pytest.approx(2.0)


def test_localization_error_translation_invariant():
    rng = np.random.default_rng(0)
    t = CoordSet(rng.uniform(0, 1, (2, 6)))
    e = CoordSet(t.coords + rng.normal(0, 0.1, (2, 6)))
    shifted = CoordSet(e.coords + np.array([[100.0], [-50.0]]))
    assert localization_error(t, e) == pytest.approx(
        localization_error(t, shifted))


def test_localization_error_undefined():
    t = CoordSet(np.ones((2, 3)))
    with pytest.raises(UndefinedMetricError):
        localization_error(t, t)


def test_procrustes_align_exact_under_rigid_motion():
    rng = np.random.default_rng(1)
    truth = CoordSet(rng.uniform(0, 10, (2, 7)))
    th = 0.9
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    moved = R @ truth.coords + np.array([[5.0], [6.0]])
    moved[0] = -moved[0]                         # reflection too
    aligned, rms = procrustes_align(truth, CoordSet(moved))
    assert rms < 1e-10
    assert np.allclose(aligned.coords, truth.coords, atol=1e-9)


def test_per_node_residuals():
    truth = CoordSet(np.array([[0.0, 1, 0], [0, 0, 1]]))
    est = CoordSet(truth.coords.copy())
    r = per_node_residuals(truth, est)
    assert np.allclose(r, 0.0, atol=1e-12)
