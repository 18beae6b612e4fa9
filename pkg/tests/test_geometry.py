import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doapose.errors import DegenerateTranslation, EmptyInput, GimbalDegenerate, SchemaError
from doapose.geometry import (
    Pose,
    RelativePose,
    Rotation,
    mean_rotation,
    read_trajectory,
    relative_pose,
    rotation_error_deg,
    translation_angle_error_deg,
    wrap_deg,
    write_trajectory,
    yaw_of,
)

from conftest import random_pose, random_rotation

quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda q: np.linalg.norm(q) > 1e-3
)
angles = st.floats(-720, 720, allow_nan=False)


class TestRotation:
    @given(quats)
    def test_unit_norm_and_canonical_sign(self, q):
        r = Rotation.from_quat(q)
        assert abs(np.linalg.norm(r.quat) - 1.0) < 1e-9
        assert r.w >= 0

    def test_q_and_minus_q_are_equal(self):
        q = [0.3, -0.5, 0.1, 0.8]
        a, b = Rotation.from_quat(q), Rotation.from_quat([-v for v in q])
        np.testing.assert_array_equal(a.quat, b.quat)

    @given(quats)
    def test_matrix_round_trip(self, q):
        r = Rotation.from_quat(q)
        m = r.as_matrix()
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(m) == pytest.approx(1.0)
        assert Rotation.from_matrix(m).allclose(r, 1e-9)

    def test_composition_matches_matrix_product(self, rng):
        for _ in range(20):
            a, b = random_rotation(rng), random_rotation(rng)
            np.testing.assert_allclose((a @ b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)

    def test_yaw_constructor_rotates_forward_counterclockwise(self):
        np.testing.assert_allclose(Rotation.from_yaw(90).apply([1, 0, 0]), [0, 1, 0], atol=1e-15)


class TestRelativePose:
    def test_identity_case(self, rng):
        p = random_pose(rng)
        rel = relative_pose(p, p)
        assert rel.rotation.allclose(Rotation.identity())
        np.testing.assert_allclose(rel.translation, 0, atol=1e-12)

    def test_source_at_origin(self):
        rel = relative_pose(Pose.identity(), Pose(Rotation.from_yaw(30), np.zeros(3)))
        assert yaw_of(rel.rotation) == pytest.approx(30)
        np.testing.assert_array_equal(rel.translation, 0)

    def test_point_transform_oracle(self, rng):
        for _ in range(20):
            s, t = random_pose(rng), random_pose(rng)
            rel = relative_pose(s, t)
            pts = rng.uniform(-10, 10, (10, 3))
            # target-camera points -> source-camera points, checked through world coordinates
            world = t.rotation.as_matrix() @ pts.T + t.translation[:, None]
            in_source = s.rotation.as_matrix().T @ (world - s.translation[:, None])
            np.testing.assert_allclose(rel.apply(pts), in_source.T, atol=1e-9)

    def test_round_trip_1000_pairs(self, rng):
        for _ in range(1000):
            s, t = random_pose(rng), random_pose(rng)
            assert s.compose(relative_pose(s, t)).allclose(t, 1e-9)

    def test_reverse_is_inverse(self, rng):
        for _ in range(50):
            s, t = random_pose(rng), random_pose(rng)
            assert relative_pose(t, s).allclose(relative_pose(s, t).inverse(), 1e-9)

    def test_relative_pose_type(self, rng):
        assert isinstance(relative_pose(random_pose(rng), random_pose(rng)), RelativePose)


class TestRotationError:
    def test_zero_for_same(self, rng):
        r = random_rotation(rng)
        assert rotation_error_deg(r, r) == pytest.approx(0, abs=1e-6)

    def test_antipodal(self):
        assert rotation_error_deg(Rotation.identity(), Rotation.from_axis_angle([0, 0, 1], 180)) == pytest.approx(180)

    @pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 2, -3]])
    def test_axis_angle(self, axis):
        assert rotation_error_deg(Rotation.identity(), Rotation.from_axis_angle(axis, 30)) == pytest.approx(30)

    @given(quats, quats)
    def test_symmetric_and_bounded(self, qa, qb):
        a, b = Rotation.from_quat(qa), Rotation.from_quat(qb)
        e = rotation_error_deg(a, b)
        assert 0 <= e <= 180
        assert e == pytest.approx(rotation_error_deg(b, a), abs=1e-9)

    def test_left_invariance(self, rng):
        for _ in range(20):
            c = random_rotation(rng)
            expected = rotation_error_deg(Rotation.identity(), c)
            for _ in range(5):
                a = random_rotation(rng)
                assert rotation_error_deg(a, c @ a) == pytest.approx(expected, abs=1e-6)

    def test_sign_flip_is_zero_error(self):
        q = [0.2, 0.4, -0.1, 0.9]
        a = Rotation.from_quat(q)
        assert rotation_error_deg(a, Rotation.from_quat([-v for v in q])) == pytest.approx(0, abs=1e-6)


class TestTranslationError:
    @pytest.mark.parametrize(
        "a,b,expected",
        [((1, 0, 0), (1, 0, 0), 0.0), ((1, 0, 0), (0, 1, 0), 90.0), ((1, 0, 0), (2, 0, 0), 0.0), ((1, 0, 0), (-3, 0, 0), 180.0)],
    )
    def test_cases(self, a, b, expected):
        assert translation_angle_error_deg(a, b) == pytest.approx(expected, abs=1e-6)

    def test_degenerate(self):
        with pytest.raises(DegenerateTranslation) as exc:
            translation_angle_error_deg((0, 0, 0), (1, 0, 0))
        assert exc.value.a_degenerate and not exc.value.b_degenerate
        with pytest.raises(DegenerateTranslation) as exc:
            translation_angle_error_deg((0, 0, 1e-12), (0, 0, 0))
        assert exc.value.a_degenerate and exc.value.b_degenerate


class TestYaw:
    def test_identity(self):
        assert yaw_of(Rotation.identity()) == 0.0

    def test_ninety(self):
        assert yaw_of(Rotation.from_yaw(90)) == pytest.approx(90)

    def test_wraparound(self):
        assert yaw_of(Rotation.from_yaw(350) @ Rotation.from_yaw(20)) == pytest.approx(10)

    @given(angles, angles)
    def test_yaw_composition(self, a, b):
        got = yaw_of(Rotation.from_yaw(a) @ Rotation.from_yaw(b))
        expected = (a + b) % 360.0
        diff = abs(wrap_deg(got - expected))
        assert diff < 1e-9
        assert 0 <= got < 360

    def test_gimbal(self):
        with pytest.raises(GimbalDegenerate):
            yaw_of(Rotation.from_axis_angle([0, 1, 0], -90))

    def test_wrap_deg_range(self):
        vals = np.array([-180.0, 180.0, -180 - 1e-15, 359.9, -540.0])
        w = wrap_deg(vals)
        assert np.all((w >= -180) & (w < 180))
        assert wrap_deg(180.0) == -180.0


def _chordal_cost(q, quats):
    return sum(min(np.sum((q - p) ** 2), np.sum((q + p) ** 2)) for p in quats)


class TestMeanRotation:
    def test_repeated(self, rng):
        r = random_rotation(rng)
        assert mean_rotation([r, r, r]).allclose(r, 1e-9)

    def test_symmetric_yaws(self):
        m = mean_rotation([Rotation.from_yaw(20), Rotation.from_yaw(-20)])
        assert m.allclose(Rotation.identity(), 1e-12)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            mean_rotation([])

    def test_permutation_invariance(self, rng):
        rs = [random_rotation(rng) for _ in range(30)]
        ref = mean_rotation(rs)
        for _ in range(10):
            perm = [rs[i] for i in rng.permutation(len(rs))]
            np.testing.assert_allclose(mean_rotation(perm).quat, ref.quat, atol=1e-9)

    def test_sign_ambiguous_inputs(self, rng):
        base = Rotation.from_axis_angle([0.3, 1, 0.2], 179)
        rs = [base @ Rotation.from_rotvec(rng.normal(0, 0.05, 3)) for _ in range(40)]
        assert rotation_error_deg(mean_rotation(rs), base) < 2.0

    def test_grid_search_oracle(self, rng):
        center = Rotation.from_axis_angle([1, -2, 0.5], 40)
        rs = [center @ Rotation.from_rotvec(np.deg2rad(rng.normal(0, 2.0, 3))) for _ in range(100)]
        quats = np.array([r.quat for r in rs])
        steps = np.deg2rad(np.arange(-5, 6))
        best, best_cost = None, math.inf
        for v in itertools.product(steps, steps, steps):
            cand = center @ Rotation.from_rotvec(v)
            cost = _chordal_cost(cand.quat, quats)
            if cost < best_cost:
                best, best_cost = cand, cost
        mean = mean_rotation(rs)
        # within the grid's half-diagonal, and never worse than the best grid point
        assert rotation_error_deg(mean, best) <= math.sqrt(3) * 0.5 + 1e-9
        assert _chordal_cost(mean.quat, quats) <= best_cost + 1e-12


class TestTrajectory:
    def test_round_trip(self, tmp_path, rng):
        traj = [(0.5 * i, random_pose(rng)) for i in range(5)]
        path = tmp_path / "traj.json"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        assert [t for t, _ in back] == [t for t, _ in traj]
        for (_, a), (_, b) in zip(back, traj):
            assert a.allclose(b, 1e-12)
        assert set(json.loads(path.read_text())[0]) == {"timestamp_s", "qw", "qx", "qy", "qz", "tx", "ty", "tz"}

    def test_rejects_non_increasing(self, tmp_path):
        rec = {"qw": 1, "qx": 0, "qy": 0, "qz": 0, "tx": 0, "ty": 0, "tz": 0}
        path = tmp_path / "traj.json"
        path.write_text(json.dumps([dict(rec, timestamp_s=1.0), dict(rec, timestamp_s=1.0)]))
        with pytest.raises(SchemaError, match=r"\[1\]\.timestamp_s"):
            read_trajectory(path)

    def test_rejects_missing_field(self, tmp_path):
        path = tmp_path / "traj.json"
        path.write_text(json.dumps([{"timestamp_s": 0.0, "qw": 1}]))
        with pytest.raises(SchemaError):
            read_trajectory(path)


@settings(max_examples=50)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_pose_translation_must_be_finite(x, y, z):
    Pose(Rotation.identity(), [x, y, z])
    with pytest.raises(ValueError):
        Pose(Rotation.identity(), [x, math.nan, z])
