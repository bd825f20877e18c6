import numpy as np
import pytest

import taskopt as to
from taskopt import spatial


class TestRotations:
    def test_rotation_z_quarter_turn(self):
        R = spatial.rotation_z(np.pi / 2)
        assert np.allclose(R @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)

    def test_symbolic_rotation(self):
        t = to.variable("t")
        R = spatial.rotation_x(t)
        val = to.evaluate(R, {"t": 0.3})
        assert np.allclose(val, spatial.rotation_x(0.3))

    def test_rotation_about_axis_matches_z(self):
        R1 = spatial.rotation_about_axis([0.0, 0.0, 1.0], 0.7)
        assert np.allclose(R1, spatial.rotation_z(0.7), atol=1e-15)

    def test_rpy_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            rpy = rng.uniform([-np.pi, -np.pi / 2 + 0.05, -np.pi], [np.pi, np.pi / 2 - 0.05, np.pi])
            back = spatial.matrix_to_rpy(spatial.rpy_to_matrix(rpy))
            assert np.abs(back - rpy).max() <= 1e-9


class TestQuaternions:
    def test_identity(self):
        q = spatial.matrix_to_quaternion(np.eye(3))
        assert np.allclose(q, [0, 0, 0, 1])

    def test_z_quarter_turn(self):
        q = spatial.matrix_to_quaternion(spatial.rotation_z(np.pi / 2))
        assert np.allclose(q, [0, 0, np.sqrt(2) / 2, np.sqrt(2) / 2])

    def test_w_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            rpy = rng.uniform(-np.pi, np.pi, 3)
            q = spatial.matrix_to_quaternion(spatial.rpy_to_matrix(rpy))
            assert q[3] >= 0.0
            assert abs(np.linalg.norm(q) - 1.0) <= 1e-12

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            spatial.matrix_to_quaternion(np.eye(3) * 1.01)

    def test_product_matches_matrix_product(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            rpy1 = rng.uniform(-np.pi, np.pi, 3)
            rpy2 = rng.uniform(-np.pi, np.pi, 3)
            R1, R2 = spatial.rpy_to_matrix(rpy1), spatial.rpy_to_matrix(rpy2)
            q1, q2 = spatial.matrix_to_quaternion(R1), spatial.matrix_to_quaternion(R2)
            q12 = spatial.quaternion_product(q1, q2)
            expected = spatial.matrix_to_quaternion(R1 @ R2)
            # same rotation up to sign; matrix_to_quaternion pins w >= 0
            if q12[3] < 0:
                q12 = -q12
            assert np.abs(q12 - expected).max() <= 1e-9

    def test_quaternion_to_matrix_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            rpy = rng.uniform(-np.pi, np.pi, 3)
            R = spatial.rpy_to_matrix(rpy)
            q = spatial.matrix_to_quaternion(R)
            assert np.abs(spatial.quaternion_to_matrix(q) - R).max() <= 1e-12


class TestTransforms:
    def test_compose_and_invert(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            T = spatial.transform_from(
                spatial.rpy_to_matrix(rng.uniform(-np.pi, np.pi, 3)), rng.normal(size=3)
            )
            err = spatial.transform_invert(T) @ T - np.eye(4)
            assert np.abs(err).max() <= 1e-12

    def test_bottom_row(self):
        T = spatial.transform_from(spatial.rotation_y(0.4), [1.0, 2.0, 3.0])
        assert np.allclose(T[3], [0, 0, 0, 1])

    def test_symbolic_invert(self):
        t = to.variable("t")
        T = spatial.transform_from(spatial.rotation_z(t), to.constant([1.0, 0.0, 0.0]))
        I = to.evaluate(spatial.transform_invert(T) @ T, {"t": 0.9})
        assert np.abs(I - np.eye(4)).max() <= 1e-12

    def test_translation_accessor(self):
        T = spatial.transform_from(None, [1.0, 2.0, 3.0])
        assert np.allclose(spatial.transform_translation(T).ravel(), [1, 2, 3])

    def test_cross_matches_numpy(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            a, b = rng.normal(size=3), rng.normal(size=3)
            assert np.allclose(spatial.cross(a, b).ravel(), np.cross(a, b))
