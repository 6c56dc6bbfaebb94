import numpy as np
import pytest

from privdual import DualBall, project_box, project_dual

from conftest import dual_projection_qp


def test_box_interior_point_unchanged():
    np.testing.assert_array_equal(
        project_box(np.array([5.0, 5.0]), np.full(2, -10.0), np.full(2, 10.0)),
        [5.0, 5.0],
    )


def test_box_clamps():
    lo, hi = np.full(2, -10.0), np.full(2, 10.0)
    np.testing.assert_array_equal(
        project_box(np.array([15.0, -12.0]), lo, hi), [10.0, -10.0]
    )
    np.testing.assert_array_equal(
        project_box(np.array([10.0001, 0.0]), lo, hi), [10.0, 0.0]
    )


def test_box_dimension_mismatch():
    with pytest.raises(ValueError):
        project_box(np.zeros(3), np.zeros(2), np.ones(2))


def test_dual_inside_ball_only_clips_negatives():
    ball = DualBall(radius=10.0, dim=2)
    np.testing.assert_array_equal(project_dual(np.array([1.0, 2.0]), ball), [1.0, 2.0])
    np.testing.assert_array_equal(project_dual(np.array([-3.0, 5.0]), ball), [0.0, 5.0])


def test_dual_soft_threshold_hand_case():
    out = project_dual(np.array([4.0, 2.0]), DualBall(radius=3.0, dim=2))
    np.testing.assert_allclose(out, [2.5, 0.5])


def test_dual_rejects_nan():
    with pytest.raises(ValueError):
        project_dual(np.array([np.nan, 0.0]), DualBall(radius=1.0, dim=2))


def test_dual_feasible_and_idempotent():
    rng = np.random.default_rng(21)
    for _ in range(500):
        m = rng.integers(1, 6)
        ball = DualBall(radius=float(rng.uniform(0.1, 5.0)), dim=int(m))
        mu = rng.normal(scale=3.0, size=m)
        out = project_dual(mu, ball)
        assert np.all(out >= 0.0)
        assert out.sum() <= ball.radius + 1e-12
        np.testing.assert_allclose(project_dual(out, ball), out, atol=1e-12)


def test_dual_matches_qp_oracle():
    rng = np.random.default_rng(22)
    for _ in range(1000):
        m = int(rng.integers(1, 6))
        ball = DualBall(radius=float(rng.uniform(0.2, 4.0)), dim=m)
        mu = rng.normal(scale=2.5, size=m)
        ours = project_dual(mu, ball)
        reference = dual_projection_qp(mu, ball.radius)
        assert np.max(np.abs(ours - reference)) < 1e-6


def test_projections_nonexpansive():
    rng = np.random.default_rng(23)
    lo, hi = np.full(4, -2.0), np.full(4, 2.0)
    ball = DualBall(radius=2.0, dim=4)
    for _ in range(300):
        a, b = rng.normal(scale=3.0, size=4), rng.normal(scale=3.0, size=4)
        assert np.linalg.norm(project_box(a, lo, hi) - project_box(b, lo, hi)) <= (
            np.linalg.norm(a - b) + 1e-12
        )
        assert np.linalg.norm(project_dual(a, ball) - project_dual(b, ball)) <= (
            np.linalg.norm(a - b) + 1e-12
        )
