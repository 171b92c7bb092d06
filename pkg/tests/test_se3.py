import numpy as np
import pytest

from usrecon.errors import InvalidInputError
from usrecon.se3 import (
    Pose6,
    PointSet,
    RigidTransform,
    ScaleTransform,
    accumulate_chain,
    compose,
    frame_corners,
    image_relative,
    invert,
    mat_from_pose6,
    pose6_from_mat,
    relative_tool,
    scan_length,
    transform_points,
)

from conftest import random_pose, random_transform, random_transform_euler


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


class TestRigidTransform:
    def test_rejects_non_orthonormal(self):
        bad = np.eye(3)
        bad[0, 0] = 1.001
        with pytest.raises(InvalidInputError):
            RigidTransform(bad, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(InvalidInputError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            RigidTransform(np.eye(3), np.array([0.0, np.nan, 0.0]))

    def test_matrix_bottom_row(self):
        m = random_transform(np.random.default_rng(0)).as_matrix()
        assert np.array_equal(m[3], [0, 0, 0, 1])

    def test_from_matrix_round_trip(self, rng):
        t = random_transform(rng)
        t2 = RigidTransform.from_matrix(t.as_matrix())
        assert np.array_equal(t2.rotation, t.rotation)
        assert np.array_equal(t2.translation, t.translation)


class TestPose6:
    def test_zero_pose_is_identity(self):
        t = mat_from_pose6(Pose6())
        assert np.allclose(t.as_matrix(), np.eye(4), atol=0)

    def test_pure_translation(self):
        t = mat_from_pose6(Pose6(1, 2, 3))
        assert np.array_equal(t.rotation, np.eye(3))
        assert np.array_equal(t.translation, [1, 2, 3])

    def test_rotation_against_matrix_product_oracle(self):
        # independent element-wise oracle: explicit Rz @ Ry @ Rx
        rx, ry, rz = 0.3, -0.2, 0.5
        expected = rot_z(rz) @ rot_y(ry) @ rot_x(rx)
        got = mat_from_pose6(Pose6(0, 0, 0, rx, ry, rz)).rotation
        assert np.max(np.abs(got - expected)) < 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            Pose6(0, 0, float("inf"))

    def test_identity_extraction(self):
        p = pose6_from_mat(RigidTransform.identity())
        assert p.as_array().tolist() == [0, 0, 0, 0, 0, 0]

    def test_round_trip_10k_random_poses(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(10_000):
            p = random_pose(rng, ry_limit=1.4)
            t = mat_from_pose6(p)
            p2 = pose6_from_mat(t)
            assert -np.pi / 2 <= p2.ry <= np.pi / 2
            t2 = mat_from_pose6(p2)
            worst = max(worst, np.max(np.abs(t2.as_matrix() - t.as_matrix())))
        assert worst < 1e-9

    @pytest.mark.parametrize("ry", [np.pi / 2, -np.pi / 2])
    def test_gimbal_lock_rematerializes(self, ry):
        t = mat_from_pose6(Pose6(1, 2, 3, 0.7, ry, -0.4))
        p = pose6_from_mat(t)
        assert p.rx == 0.0
        t2 = mat_from_pose6(p)
        assert np.max(np.abs(t2.as_matrix() - t.as_matrix())) < 1e-9


class TestGroupOps:
    def test_compose_identity(self, rng):
        t = random_transform(rng)
        assert np.allclose(compose(RigidTransform.identity(), t).as_matrix(), t.as_matrix(), atol=0)

    def test_compose_with_inverse_is_identity(self, rng):
        t = random_transform(rng)
        assert np.max(np.abs(compose(t, invert(t)).as_matrix() - np.eye(4))) < 1e-12
        assert np.max(np.abs(compose(invert(t), t).as_matrix() - np.eye(4))) < 1e-12

    def test_compose_against_4x4_product_oracle(self):
        a = RigidTransform(rot_z(np.pi / 2), np.array([1.0, 0, 0]))
        b = RigidTransform(rot_z(np.pi / 2), np.zeros(3))
        expected = a.as_matrix() @ b.as_matrix()
        got = compose(a, b).as_matrix()
        assert np.max(np.abs(got - expected)) < 1e-15
        assert np.max(np.abs(got[:3, :3] - rot_z(np.pi))) < 1e-12
        assert np.allclose(got[:3, 3], [1, 0, 0], atol=1e-12)

    def test_invert_identity_and_translation(self):
        assert np.array_equal(invert(RigidTransform.identity()).as_matrix(), np.eye(4))
        t = RigidTransform(np.eye(3), np.array([0.0, 0, 10]))
        assert np.allclose(invert(t).translation, [0, 0, -10], atol=0)

    def test_invert_is_involution(self, rng):
        for _ in range(50):
            t = random_transform(rng)
            back = invert(invert(t))
            assert np.max(np.abs(back.as_matrix() - t.as_matrix())) < 1e-12

    def test_group_laws_property_suite(self):
        # acceptance criterion 2 relies on this holding over >= 10^4 cases
        rng = np.random.default_rng(7)
        ident = RigidTransform.identity()
        for _ in range(10_000):
            a, b, c = (random_transform(rng) for _ in range(3))
            left = compose(compose(a, b), c).as_matrix()
            right = compose(a, compose(b, c)).as_matrix()
            assert np.max(np.abs(left - right)) < 1e-10
            assert np.max(np.abs(compose(a, ident).as_matrix() - a.as_matrix())) < 1e-15
            assert np.max(np.abs(compose(ident, a).as_matrix() - a.as_matrix())) < 1e-15
            assert np.max(np.abs(compose(a, invert(a)).as_matrix() - np.eye(4))) < 1e-12


class TestRelativeTool:
    def test_equal_poses_give_exact_identity(self, rng):
        t = random_transform(rng)
        rel = relative_tool(t, t)
        assert np.array_equal(rel.as_matrix(), np.eye(4))

    def test_closed_form_inverse_oracle(self):
        t_j = RigidTransform(np.eye(3), np.array([0.0, 0, 10]))
        rel = relative_tool(RigidTransform.identity(), t_j)
        assert np.allclose(rel.translation, [0, 0, -10], atol=1e-15)
        assert np.array_equal(rel.rotation, np.eye(3))

    def test_composition_consistency_on_random_triples(self, rng):
        for _ in range(200):
            ti, tj, tk = (random_transform(rng) for _ in range(3))
            direct = relative_tool(ti, tk)
            chained = compose(relative_tool(tj, tk), relative_tool(ti, tj))
            assert np.max(np.abs(direct.as_matrix() - chained.as_matrix())) < 1e-10


class TestImageRelative:
    def test_identity_calibration_passthrough(self, rng):
        rel = random_transform(rng)
        out = image_relative(rel, RigidTransform.identity())
        assert np.max(np.abs(out.as_matrix() - rel.as_matrix())) < 1e-15

    def test_conjugation_of_identity_is_exact_identity(self, rng):
        t_rigid = random_transform(rng)
        out = image_relative(RigidTransform.identity(), t_rigid)
        assert np.array_equal(out.as_matrix(), np.eye(4))

    def test_conjugation_preserves_rigidity(self, rng):
        for _ in range(100):
            out = image_relative(random_transform(rng), random_transform(rng))
            r = out.rotation
            assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-10

    def test_known_conjugation_against_matrix_oracle(self):
        t_rigid = RigidTransform(rot_z(0.4), np.array([5.0, -3.0, 12.0]))
        rel = RigidTransform(np.eye(3), np.array([0.0, 0, 2]))
        expected = np.linalg.inv(t_rigid.as_matrix()) @ rel.as_matrix() @ t_rigid.as_matrix()
        got = image_relative(rel, t_rigid).as_matrix()
        assert np.max(np.abs(got - expected)) < 1e-12


class TestTransformPoints:
    def test_identity_passthrough(self):
        pts = PointSet([[3, 4, 0], [1, 2, 0]], unit="pixel")
        out = transform_points(RigidTransform.identity(), ScaleTransform(1, 1), pts)
        assert out.unit == "mm"
        assert np.array_equal(out.coords, pts.coords)

    def test_translation_and_scale(self):
        t = RigidTransform(np.eye(3), np.array([0.0, 0, 5]))
        out = transform_points(t, ScaleTransform(1, 1), PointSet([[3, 4, 0]], unit="pixel"))
        assert np.allclose(out.coords, [[3, 4, 5]], atol=0)

    def test_rejects_mm_input(self):
        with pytest.raises(InvalidInputError):
            transform_points(
                RigidTransform.identity(), ScaleTransform(1, 1), PointSet([[1, 2, 3]], unit="mm")
            )

    def test_batch_matches_scalar_loop_oracle(self, rng):
        t = random_transform(rng)
        scale = ScaleTransform(0.2, 0.3)
        uv = rng.uniform(0, 640, size=(100_000, 2))
        pts = PointSet(np.column_stack([uv, np.zeros(len(uv))]), unit="pixel")
        batch = transform_points(t, scale, pts).coords
        s_mat = scale.as_matrix()
        t_mat = t.as_matrix()
        for k in rng.choice(len(uv), size=200, replace=False):
            hom = np.array([uv[k, 0], uv[k, 1], 0.0, 1.0])
            expected = (t_mat @ (s_mat @ hom))[:3]
            assert np.max(np.abs(batch[k] - expected)) < 1e-12

    def test_isometry_after_scaling(self, rng):
        t = random_transform(rng)
        scale = ScaleTransform(0.2, 0.2)
        pts = PointSet(np.column_stack([rng.uniform(0, 100, (50, 2)), np.zeros(50)]), unit="pixel")
        mm_before = scale.apply(pts.coords)
        mm_after = transform_points(t, scale, pts).coords
        d_before = np.linalg.norm(mm_before[:, None] - mm_before[None, :], axis=-1)
        d_after = np.linalg.norm(mm_after[:, None] - mm_after[None, :], axis=-1)
        assert np.max(np.abs(d_before - d_after)) < 1e-9


class TestChain:
    def test_empty_and_single(self, rng):
        assert accumulate_chain([]) == []
        t = random_transform(rng)
        out = accumulate_chain([t])
        assert len(out) == 1
        assert np.array_equal(out[0].as_matrix(), t.as_matrix())

    def test_two_translations(self):
        step = RigidTransform(np.eye(3), np.array([0.0, 0, 1]))
        out = accumulate_chain([step, step])
        assert np.allclose(out[0].translation, [0, 0, 1], atol=0)
        assert np.allclose(out[1].translation, [0, 0, 2], atol=0)

    def test_chain_against_absolute_pose_oracle(self, rng):
        # Simulated absolute camera<-tool poses; chained per-frame relatives
        # must reproduce the direct frame-k -> frame-0 relative.
        t_rigid = random_transform_euler(rng)
        absolute = [random_transform(rng) for _ in range(200)]
        locals_ = [
            image_relative(relative_tool(absolute[i], absolute[i - 1]), t_rigid)
            for i in range(1, len(absolute))
        ]
        chained = accumulate_chain(locals_)
        for k in range(len(chained)):
            direct = image_relative(relative_tool(absolute[k + 1], absolute[0]), t_rigid)
            assert np.max(np.abs(chained[k].as_matrix() - direct.as_matrix())) < 1e-8


class TestFrameGeometry:
    def test_corner_values(self):
        c = frame_corners(640, 480).coords
        assert c.tolist() == [[0, 0, 0], [639, 0, 0], [0, 479, 0], [639, 479, 0]]

    def test_degenerate_one_pixel(self):
        c = frame_corners(1, 1).coords
        assert np.array_equal(c, np.zeros((4, 3)))

    def test_two_by_three(self):
        c = frame_corners(2, 3).coords
        assert c.tolist() == [[0, 0, 0], [1, 0, 0], [0, 2, 0], [1, 2, 0]]

    def test_zero_dimension_rejected(self):
        with pytest.raises(InvalidInputError):
            frame_corners(0, 480)

    def test_scan_length_identity(self):
        globals_ = [RigidTransform.identity()] * 10
        assert scan_length(globals_, ScaleTransform(0.2, 0.2), 640, 480) == 0.0

    def test_scan_length_fewer_than_two_frames(self):
        assert scan_length([], ScaleTransform(1, 1), 640, 480) == 0.0

    def test_scan_length_constant_steps(self):
        globals_ = [
            RigidTransform(np.eye(3), np.array([0.0, 0.0, float(i)])) for i in range(1, 101)
        ]
        got = scan_length(globals_, ScaleTransform(0.2, 0.2), 640, 480)
        assert abs(got - 100.0) < 1e-12

    def test_scan_length_matches_brute_force_oracle(self, rng):
        globals_ = [random_transform(rng, t_scale=5.0) for _ in range(30)]
        scale = ScaleTransform(0.2, 0.25)
        w, h = 64, 48
        got = scan_length(globals_, scale, w, h)
        # brute force: explicit per-corner trajectories via 4x4 products
        corners = [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)]
        mats = [np.eye(4)] + [g.as_matrix() for g in globals_]
        s_mat = scale.as_matrix()
        expected = 0.0
        for i in range(1, len(mats)):
            step = 0.0
            for (u, v) in corners:
                hom = np.array([u, v, 0.0, 1.0])
                a = (mats[i] @ s_mat @ hom)[:3]
                b = (mats[i - 1] @ s_mat @ hom)[:3]
                step += np.linalg.norm(a - b)
            expected += step / 4.0
        assert abs(got - expected) < 1e-9
