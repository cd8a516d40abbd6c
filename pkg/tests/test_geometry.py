"""Camera model and SE(3) algebra.

Pinhole math used for hand-computed values:
    lift:    x = (u - cx) * z / fx,  y = (v - cy) * z / fy,  z = depth
    project: u = fx * x / z + cx,    v = fy * y / z + cy
"""

import numpy as np
import pytest

from conftest import random_transform

from slotfit.errors import InputError
from slotfit.geometry import (
    CameraIntrinsics,
    DepthImage,
    PointCloud,
    RigidTransform,
    lift_depth,
    project_points,
    rotation_angle,
)
from slotfit.masks import BinaryMask


def make_intrinsics(fx=50.0, fy=60.0, cx=40.0, cy=30.0, width=100, height=80):
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


class TestIntrinsics:
    def test_valid(self):
        k = make_intrinsics()
        assert k.matrix()[0, 0] == 50.0
        assert k.matrix()[1, 2] == 30.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"fx": 0.0},
            {"fy": -1.0},
            {"cx": 100.0},
            {"cy": -0.5},
        ],
    )
    def test_invariants(self, kwargs):
        with pytest.raises(InputError):
            make_intrinsics(**kwargs)

    def test_dict_round_trip(self):
        k = make_intrinsics()
        assert CameraIntrinsics.from_dict(k.as_dict()) == k


class TestLiftDepth:
    def test_principal_point(self):
        # pixel (cx, cy) with depth 2.0 -> (0, 0, 2.0)
        k = make_intrinsics()
        depth = np.zeros((80, 100))
        depth[30, 40] = 2.0
        cloud = lift_depth(DepthImage(depth), k)
        np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 2.0]])
        np.testing.assert_array_equal(cloud.pixel_indices, [[40, 30]])

    def test_one_focal_length_right(self):
        # pixel (cx + fx, cy), depth 2.0: x = fx * 2 / fx = 2.0 -> (2, 0, 2)
        k = make_intrinsics()
        depth = np.zeros((80, 100))
        depth[30, 90] = 2.0  # u = cx + fx = 90
        cloud = lift_depth(DepthImage(depth), k)
        np.testing.assert_allclose(cloud.points, [[2.0, 0.0, 2.0]])

    def test_all_invalid_is_empty(self):
        k = make_intrinsics()
        cloud = lift_depth(DepthImage(np.zeros((80, 100))), k)
        assert len(cloud) == 0

    def test_mask_restricts(self):
        k = make_intrinsics()
        depth = np.full((80, 100), 1.5)
        bits = np.zeros((80, 100), dtype=bool)
        bits[10:12, 20:23] = True
        cloud = lift_depth(DepthImage(depth), k, BinaryMask(bits))
        assert len(cloud) == 6

    def test_invalid_pixels_inside_mask_skipped(self):
        k = make_intrinsics()
        depth = np.full((80, 100), 1.5)
        depth[10, 20] = 0.0
        bits = np.zeros((80, 100), dtype=bool)
        bits[10, 20:23] = True
        cloud = lift_depth(DepthImage(depth), k, BinaryMask(bits))
        assert len(cloud) == 2

    def test_dimension_mismatch(self):
        k = make_intrinsics()
        with pytest.raises(InputError):
            lift_depth(DepthImage(np.ones((10, 10))), k)
        with pytest.raises(InputError):
            lift_depth(DepthImage(np.ones((80, 100))), k, BinaryMask(np.ones((5, 5), bool)))


class TestProjectPoints:
    def test_optical_axis(self):
        k = make_intrinsics()
        pixels, dropped = project_points(PointCloud([[0.0, 0.0, 1.0]]), k)
        np.testing.assert_allclose(pixels, [[40.0, 30.0]])
        assert dropped == 0

    def test_behind_camera_dropped(self):
        k = make_intrinsics()
        pixels, dropped = project_points(
            PointCloud([[0.0, 0.0, -1.0], [0.0, 0.0, 2.0]]), k
        )
        assert dropped == 1
        assert pixels.shape == (1, 2)

    def test_round_trip_random_depth(self):
        # project(lift(depth)) must hit every source pixel center within 0.5 px.
        rng = np.random.default_rng(7)
        for _ in range(5):
            k = make_intrinsics()
            depth = rng.uniform(0.5, 3.0, (80, 100))
            depth[rng.random((80, 100)) < 0.3] = 0.0
            cloud = lift_depth(DepthImage(depth), k)
            pixels, dropped = project_points(cloud, k)
            assert dropped == 0
            residual = np.abs(pixels - cloud.pixel_indices)
            assert residual.max() <= 0.5
            # in fact exact up to float error
            assert residual.max() < 1e-9


class TestRigidTransform:
    def test_identity(self):
        i = RigidTransform.identity()
        assert i.compose(i) == i
        assert i.inverse() == i

    def test_rejects_non_rotation(self):
        with pytest.raises(InputError):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))
        reflect = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(InputError):
            RigidTransform(reflect, np.zeros(3))

    def test_compose_inverse_cancels(self, rng):
        t = random_transform(rng)
        result = t.compose(t.inverse())
        np.testing.assert_allclose(result.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(result.translation, 0.0, atol=1e-12)

    def test_compose_matches_homogeneous_product(self, rng):
        # independent oracle: 4x4 homogeneous matrix multiply
        for _ in range(20):
            a = random_transform(rng)
            b = random_transform(rng)
            expected = a.matrix() @ b.matrix()
            np.testing.assert_allclose(a.compose(b).matrix(), expected, atol=1e-12)

    def test_compose_is_apply_after_apply(self, rng):
        a = random_transform(rng)
        b = random_transform(rng)
        cloud = PointCloud(rng.normal(size=(50, 3)))
        lhs = a.compose(b).apply(cloud).points
        rhs = a.apply(b.apply(cloud)).points
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_associativity(self, rng):
        for _ in range(20):
            a, b, c = (random_transform(rng) for _ in range(3))
            lhs = a.compose(b).compose(c)
            rhs = a.compose(b.compose(c))
            np.testing.assert_allclose(lhs.matrix(), rhs.matrix(), atol=1e-9)

    def test_inverse_formula(self, rng):
        t = random_transform(rng)
        inv = t.inverse()
        np.testing.assert_allclose(inv.rotation, t.rotation.T)
        np.testing.assert_allclose(inv.translation, -t.rotation.T @ t.translation)

    def test_inverse_involution(self, rng):
        t = random_transform(rng)
        back = t.inverse().inverse()
        np.testing.assert_allclose(back.matrix(), t.matrix(), atol=1e-12)

    def test_inverse_pointwise_round_trip(self, rng):
        t = random_transform(rng)
        pts = rng.normal(size=(100, 3))
        restored = t.inverse().apply_points(t.apply_points(pts))
        np.testing.assert_allclose(restored, pts, atol=1e-12)

    def test_orthonormal_after_many_compositions(self, rng):
        t = RigidTransform.identity()
        for _ in range(10_000):
            t = t.compose(random_transform(rng, translation_scale=0.1))
        r = t.rotation
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(r) - 1.0) < 1e-9

    def test_immutable(self, rng):
        t = random_transform(rng)
        with pytest.raises(ValueError):
            t.rotation[0, 0] = 5.0


class TestApply:
    def test_identity_unchanged(self, rng):
        cloud = PointCloud(rng.normal(size=(10, 3)))
        assert RigidTransform.identity().apply(cloud) == cloud

    def test_pure_translation(self):
        t = RigidTransform(np.eye(3), [1.0, 2.0, 3.0])
        moved = t.apply(PointCloud([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(moved.points, [[1.0, 2.0, 3.0]])

    def test_z_rotation_90deg(self):
        # Rz(90): (1,0,0) -> (0,1,0)
        rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        t = RigidTransform(rz, np.zeros(3))
        moved = t.apply(PointCloud([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(moved.points, [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_indices_preserved(self):
        cloud = PointCloud([[0.0, 0.0, 1.0]], [[3, 4]])
        t = RigidTransform(np.eye(3), [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(t.apply(cloud).pixel_indices, [[3, 4]])


class TestPointCloud:
    def test_rejects_nan(self):
        with pytest.raises(InputError):
            PointCloud([[np.nan, 0.0, 0.0]])

    def test_rejects_duplicate_indices(self):
        with pytest.raises(InputError):
            PointCloud([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]], [[2, 2], [2, 2]])


def test_rotation_angle():
    assert rotation_angle(np.eye(3)) == 0.0
    rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert rotation_angle(rz) == pytest.approx(np.pi / 2)
