"""SE(3)/se(3) arithmetic against a brute-force matrix-exponential oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsdcalib import se3

from conftest import random_twists, se3_matrix_exp

angle_components = st.floats(-1.0, 1.0, allow_nan=False)
trans_components = st.floats(-5.0, 5.0, allow_nan=False)


@st.composite
def twists(draw, max_angle=np.pi - 0.1):
    w = np.array([draw(angle_components) for _ in range(3)])
    norm = np.linalg.norm(w)
    if norm > 0:
        scale = draw(st.floats(0.0, float(max_angle), allow_nan=False))
        w = w / norm * scale
    v = np.array([draw(trans_components) for _ in range(3)])
    return np.concatenate([w, v])


class TestExpMap:
    def test_zero_twist_is_identity(self):
        assert np.array_equal(se3.exp_map(np.zeros(6)), np.eye(4))

    def test_pure_translation(self):
        T = se3.exp_map([0, 0, 0, 1.5, -2.0, 0.3])
        assert np.allclose(T[:3, :3], np.eye(3))
        assert np.allclose(T[:3, 3], [1.5, -2.0, 0.3])

    def test_quarter_turn_about_z(self):
        T = se3.exp_map([0, 0, np.pi / 2, 1, 0, 0])
        expected_R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(T[:3, :3], expected_R, atol=1e-12)
        assert np.allclose(T[:3, 3], [2 / np.pi, 2 / np.pi, 0.0], atol=1e-12)

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(11)
        for xi in random_twists(300, rng):
            assert np.allclose(se3.exp_map(xi), se3_matrix_exp(xi), atol=1e-11)

    def test_matches_matrix_exponential_tiny_angles(self):
        rng = np.random.default_rng(12)
        for scale in (1e-7, 1e-9, 1e-12):
            for xi in random_twists(20, rng, max_angle=scale):
                assert np.allclose(se3.exp_map(xi), se3_matrix_exp(xi), atol=1e-14)

    def test_output_is_valid_transform(self):
        rng = np.random.default_rng(13)
        for xi in random_twists(100, rng):
            se3.check_transform(se3.exp_map(xi))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            se3.exp_map([np.nan, 0, 0, 0, 0, 0])
        with pytest.raises(ValueError):
            se3.exp_map([0, np.inf, 0, 0, 0, 0])

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            se3.exp_map([0, 0, 0])


class TestLogMap:
    def test_identity_gives_zero(self):
        assert np.array_equal(se3.log_map(np.eye(4)), np.zeros(6))

    def test_pure_translation(self):
        T = np.eye(4)
        T[:3, 3] = [0.4, -0.2, 1.0]
        assert np.allclose(se3.log_map(T), [0, 0, 0, 0.4, -0.2, 1.0])

    def test_round_trip(self):
        rng = np.random.default_rng(21)
        for xi in random_twists(2000, rng):
            assert np.abs(se3.log_map(se3.exp_map(xi)) - xi).max() < 1e-9

    def test_round_trip_small_angles(self):
        rng = np.random.default_rng(22)
        for scale in (1e-7, 1e-9, 1e-13):
            for xi in random_twists(20, rng, max_angle=scale):
                assert np.abs(se3.log_map(se3.exp_map(xi)) - xi).max() < 1e-15

    def test_cut_locus_refused(self):
        for angle in (np.pi, np.pi - 1e-7):
            T = se3_matrix_exp([angle, 0.0, 0.0, 0.0, 0.0, 0.0])
            with pytest.raises(se3.CutLocusError):
                se3.log_map(T)

    def test_near_cut_locus_allowed(self):
        xi = np.array([np.pi - 1e-3, 0, 0, 0.5, 0, 0])
        assert np.abs(se3.log_map(se3.exp_map(xi)) - xi).max() < 1e-9

    def test_rejects_invalid_matrix(self):
        bad = np.eye(4)
        bad[0, 0] = 2.0
        with pytest.raises(ValueError):
            se3.log_map(bad)

    @settings(max_examples=200, deadline=None)
    @given(twists())
    def test_round_trip_property(self, xi):
        assert np.abs(se3.log_map(se3.exp_map(xi)) - xi).max() < 1e-9


class TestComposeInvert:
    def test_identity_neutral(self):
        rng = np.random.default_rng(31)
        T = se3.exp_map(random_twists(1, rng)[0])
        assert np.allclose(se3.compose(T, se3.identity()), T)
        assert np.allclose(se3.compose(se3.identity(), T), T)

    def test_compose_with_inverse(self):
        rng = np.random.default_rng(32)
        for xi in random_twists(50, rng):
            T = se3.exp_map(xi)
            assert np.abs(se3.compose(T, se3.invert(T)) - np.eye(4)).max() < 1e-12
            assert np.abs(se3.compose(se3.invert(T), T) - np.eye(4)).max() < 1e-12

    def test_matches_plain_matrix_product(self):
        rng = np.random.default_rng(33)
        for xi_a, xi_b in zip(random_twists(50, rng), random_twists(50, rng)):
            A, B = se3.exp_map(xi_a), se3.exp_map(xi_b)
            assert np.allclose(se3.compose(A, B), A @ B, atol=1e-12)

    def test_long_chain_stays_orthogonal(self):
        rng = np.random.default_rng(34)
        T = se3.identity()
        for xi in random_twists(500, rng, max_angle=1.0):
            T = se3.compose(se3.exp_map(xi), T)
        R = T[:3, :3]
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12

    def test_double_inversion(self):
        rng = np.random.default_rng(35)
        T = se3.exp_map(random_twists(1, rng)[0])
        assert np.abs(se3.invert(se3.invert(T)) - T).max() < 1e-12

    def test_invert_identity(self):
        assert np.array_equal(se3.invert(np.eye(4)), np.eye(4))


class TestOneParameterSubgroup:
    @settings(max_examples=100, deadline=None)
    @given(twists(max_angle=1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_collinear_twists_add(self, xi, a, b):
        lhs = se3.compose(se3.exp_map(a * xi), se3.exp_map(b * xi))
        rhs = se3.exp_map((a + b) * xi)
        assert np.abs(lhs - rhs).max() < 1e-9


class TestEuler:
    def test_identity(self):
        assert se3.euler_zyx(np.eye(4)) == (0.0, 0.0, 0.0)

    def test_single_axis_yaw(self):
        T = se3.transform_from_rotation_translation(
            se3.rotation_from_euler_zyx(0.0, 0.0, 2.0), np.zeros(3)
        )
        roll, pitch, yaw = se3.euler_zyx(T)
        assert abs(yaw - 2.0) < 1e-12
        assert abs(roll) < 1e-12 and abs(pitch) < 1e-12

    def test_recomposition(self):
        rng = np.random.default_rng(41)
        for xi in random_twists(200, rng):
            T = se3.exp_map(xi)
            roll, pitch, yaw = se3.euler_zyx(T)
            R = se3.rotation_from_euler_zyx(roll, pitch, yaw)
            assert np.abs(R - T[:3, :3]).max() < 1e-9

    def test_gimbal_lock_convention(self):
        R = se3.rotation_from_euler_zyx(25.0, 90.0, 10.0)
        T = se3.transform_from_rotation_translation(R, np.zeros(3))
        roll, pitch, yaw = se3.euler_zyx(T)
        assert roll == 0.0
        assert abs(pitch - 90.0) < 1e-9
        # the recomposed matrix must still match even though angles moved
        R_back = se3.rotation_from_euler_zyx(roll, pitch, yaw)
        assert np.abs(R_back - R).max() < 1e-9


class TestValidation:
    def test_bottom_row_enforced(self):
        T = np.eye(4)
        T[3, 0] = 1e-15
        with pytest.raises(ValueError):
            se3.check_transform(T)

    def test_reflection_rejected(self):
        T = np.eye(4)
        T[0, 0] = -1.0
        T[1, 1] = -1.0
        se3.check_transform(T)  # 180 degree turn, proper rotation, fine
        T[1, 1] = 1.0
        T[2, 2] = 1.0  # now diag(-1, 1, 1): a mirror
        with pytest.raises(ValueError):
            se3.check_transform(T)

    def test_non_finite_rejected(self):
        T = np.eye(4)
        T[0, 3] = np.inf
        with pytest.raises(ValueError):
            se3.check_transform(T)

    def test_twist_shape(self):
        with pytest.raises(ValueError):
            se3.check_twist(np.zeros((2, 3)))

    def test_rotation_angle(self):
        xi = np.array([0.3, -0.4, 0.5, 0, 0, 0])
        angle = np.linalg.norm(xi[:3])
        assert abs(se3.rotation_angle(se3.exp_map(xi)) - angle) < 1e-12
        assert se3.rotation_angle(np.eye(4)) == 0.0
