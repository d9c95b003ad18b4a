import numpy as np
import pytest

from seld6dof import geometry as geo
from seld6dof.errors import ContractError, DataError, DegenerateGeometryError


def random_quat(r):
    return geo.q_normalize(r.normal(size=4))


def test_rotate_identity():
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(geo.rotate([1, 0, 0, 0], v), v)


def test_rotate_yaw90():
    q = geo.q_from_axis_angle([0, 0, 1], np.pi / 2)
    np.testing.assert_allclose(geo.rotate(q, [1, 0, 0]), [0, 1, 0], atol=1e-12)


def test_rotate_preserves_norm(rng):
    for _ in range(50):
        q = random_quat(rng)
        v = rng.normal(size=3)
        assert abs(np.linalg.norm(geo.rotate(q, v)) - np.linalg.norm(v)) < 1e-12


def test_rotate_rejects_non_unit():
    with pytest.raises(ContractError):
        geo.rotate([1.0, 0.0, 0.0, 0.5], [1, 0, 0])


def test_quat_mul_matches_rotation_composition(rng):
    for _ in range(20):
        qa, qb = random_quat(rng), random_quat(rng)
        v = rng.normal(size=3)
        np.testing.assert_allclose(
            geo.rotate(geo.q_mul(qa, qb), v),
            geo.rotate(qa, geo.rotate(qb, v)), atol=1e-12)


def test_pose_canonicalizes_sign():
    pose = geo.Pose(t=0.0, p=[0, 0, 0], q=[-1.0, 0.0, 0.0, 0.0])
    assert pose.q[0] == 1.0


def test_to_head_frame_ahead():
    head = geo.Pose(t=0.0, p=[0, 0, 0], q=[1, 0, 0, 0])
    doa = geo.to_head_frame([1.0, 0.0, 0.0], head)
    np.testing.assert_allclose(doa.u, [1, 0, 0], atol=1e-12)
    assert doa.az_deg == 0.0 and doa.el_deg == 0.0


def test_to_head_frame_yawed_head():
    # head turned +90 deg (facing room +y): a source on room +x sits to its right
    q = geo.q_from_axis_angle([0, 0, 1], np.pi / 2)
    head = geo.Pose(t=0.0, p=[0, 0, 0], q=q)
    doa = geo.to_head_frame([1.0, 0.0, 0.0], head)
    assert abs(doa.az_deg - (-90.0)) < 1e-9
    assert abs(doa.el_deg) < 1e-9


def test_to_head_frame_roundtrip(rng):
    for _ in range(50):
        head = geo.Pose(t=0.0, p=rng.normal(size=3), q=random_quat(rng))
        src = head.p + rng.normal(size=3) * 2 + np.array([0.5, 0, 0])
        if np.linalg.norm(src - head.p) < 1e-3:
            continue
        doa = geo.to_head_frame(src, head)
        # invert: back to the room frame, scale by range, add head position
        back = head.p + geo.rotate(head.q, doa.u) * np.linalg.norm(src - head.p)
        np.testing.assert_allclose(back, src, atol=1e-9)


def test_to_head_frame_coincident_source():
    head = geo.Pose(t=0.0, p=[1, 2, 3], q=[1, 0, 0, 0])
    with pytest.raises(DegenerateGeometryError):
        geo.to_head_frame([1.0, 2.0, 3.0], head)


def test_yaw_sweep_rate():
    # fixed source, head yawing at +180 deg/s: DOA azimuth sweeps at -180 deg/s
    rate = np.pi  # rad/s
    src = np.array([2.0, 0.0, 0.0])
    ts = np.arange(0.0, 0.5, 0.05)
    az = []
    for t in ts:
        q = geo.q_from_axis_angle([0, 0, 1], rate * t)
        az.append(geo.to_head_frame(src, geo.Pose(t=t, p=[0, 0, 0], q=q)).az_deg)
    az = np.unwrap(np.radians(az))
    slopes = np.diff(az) / np.diff(ts)
    np.testing.assert_allclose(slopes, -rate, atol=1e-9)


def test_pose_from_trackers_identity():
    layout = geo.default_tracker_layout()
    pose = geo.pose_from_trackers(layout[0], layout[1], layout[2])
    np.testing.assert_allclose(pose.p, [0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(pose.q, [1, 0, 0, 0], atol=1e-12)


def test_pose_from_trackers_recovers_rigid_motion(rng):
    layout = geo.default_tracker_layout()
    for _ in range(50):
        q = random_quat(rng)
        t = rng.normal(size=3)
        obs = np.array([geo.rotate(q, v) + t for v in layout])
        pose = geo.pose_from_trackers(obs[0], obs[1], obs[2])
        np.testing.assert_allclose(pose.p, t, atol=1e-9)
        np.testing.assert_allclose(pose.q, q, atol=1e-9)


def test_pose_from_trackers_collinear():
    with pytest.raises(DegenerateGeometryError):
        geo.pose_from_trackers([0, 0, 0], [1, 0, 0], [2, 0, 0])


def test_angular_velocity_zero():
    q = geo.q_from_axis_angle([1, 1, 0], 0.3)
    np.testing.assert_array_equal(geo.angular_velocity(q, q, 0.05), [0, 0, 0])


def test_angular_velocity_constant_yaw():
    # 90 deg over 1 s in dt=0.05 steps
    rate = np.pi / 2
    dt = 0.05
    for k in range(19):
        qa = geo.q_from_axis_angle([0, 0, 1], rate * k * dt)
        qb = geo.q_from_axis_angle([0, 0, 1], rate * (k + 1) * dt)
        np.testing.assert_allclose(
            geo.angular_velocity(qa, qb, dt), [0, 0, rate], atol=1e-6)


def test_angular_velocity_norm_is_angle_over_dt(rng):
    for _ in range(30):
        qa = random_quat(rng)
        axis = rng.normal(size=3)
        angle = rng.uniform(0.01, 2.5)
        qb = geo.q_mul(qa, geo.q_from_axis_angle(axis, angle))
        w = geo.angular_velocity(qa, qb, 0.1)
        assert abs(np.linalg.norm(w) - angle / 0.1) < 1e-9


def test_angular_velocity_rejects_bad_dt():
    with pytest.raises(ContractError):
        geo.angular_velocity([1, 0, 0, 0], [1, 0, 0, 0], 0.0)


def test_pose_csv_roundtrip(tmp_path, rng):
    poses = [geo.Pose(t=0.05 * k, p=rng.normal(size=3), q=random_quat(rng))
             for k in range(7)]
    path = tmp_path / "track.csv"
    geo.save_poses(path, poses)
    loaded = geo.load_poses(path)
    assert len(loaded) == len(poses)
    for a, b in zip(loaded, poses):
        assert abs(a.t - b.t) < 1e-9
        np.testing.assert_allclose(a.p, b.p, atol=1e-8)
        np.testing.assert_allclose(a.q, b.q, atol=1e-8)


def test_pose_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,x,y,z\n0,0,0,0\n")
    with pytest.raises(DataError):
        geo.load_poses(path)
