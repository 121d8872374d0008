import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motiongen import rotations as rot

from conftest import random_quaternions

ALL_FORMS = ["quaternion", "axis_angle", "matrix", "sixd"]
EULER_ORDERS = ["XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"]


def test_identity_quat_to_sixd_and_matrix():
    sixd = rot.convert_rotation(np.array([1.0, 0, 0, 0]), "quaternion", "sixd")
    assert np.allclose(sixd, [1, 0, 0, 0, 1, 0])
    m = rot.sixd_to_matrix(sixd)
    assert np.allclose(m, np.eye(3))


def test_axis_angle_y_quarter_turn_symmetry():
    aa = np.array([0.0, np.pi / 2, 0.0])
    m = rot.convert_rotation(aa, "axis_angle", "matrix")
    back = rot.convert_rotation(m, "matrix", "axis_angle")
    assert np.allclose(back, aa, atol=1e-9)


@pytest.mark.parametrize("src", ALL_FORMS)
@pytest.mark.parametrize("dst", ALL_FORMS)
def test_random_round_trips_all_pairs(src, dst, rng):
    q = random_quaternions(rng, 1000)
    a = rot.convert_rotation(q, "quaternion", src)
    b = rot.convert_rotation(a, src, dst)
    c = rot.convert_rotation(b, dst, src)
    # oracle: compose original with inverse of round-trip result, measure angle
    err = rot.rotation_angle_between(
        rot.convert_rotation(a, src, "quaternion"),
        rot.convert_rotation(c, src, "quaternion"))
    assert err.max() < 1e-6


@pytest.mark.parametrize("order", EULER_ORDERS)
def test_euler_round_trip_every_order(order, rng):
    q = random_quaternions(rng, 300)
    e = rot.convert_rotation(q, "quaternion", "euler", euler_order=order)
    q2 = rot.convert_rotation(e, "euler", "quaternion", euler_order=order)
    assert rot.rotation_angle_between(q, q2).max() < 1e-6


def test_sixd_decode_orthonormal_under_noise(rng):
    q = random_quaternions(rng, 200)
    sixd = rot.convert_rotation(q, "quaternion", "sixd")
    noisy = sixd + rng.normal(scale=0.2, size=sixd.shape)
    m = rot.sixd_to_matrix(noisy)
    gram = m @ np.swapaxes(m, -1, -2)
    assert np.abs(gram - np.eye(3)).max() < 1e-9
    assert np.abs(np.linalg.det(m) - 1.0).max() < 1e-9


def test_zero_norm_quaternion_rejected():
    with pytest.raises(ValueError, match="zero-norm"):
        rot.quat_normalize(np.zeros(4))


def test_degenerate_sixd_rejected():
    parallel = np.array([1.0, 0, 0, 2.0, 0, 0])
    with pytest.raises(ValueError, match="parallel"):
        rot.sixd_to_matrix(parallel)
    with pytest.raises(ValueError, match="zero norm"):
        rot.sixd_to_matrix(np.zeros(6))


def test_euler_requires_order():
    with pytest.raises(ValueError, match="euler_order"):
        rot.convert_rotation(np.zeros(3), "euler", "matrix")


def test_unknown_form_rejected():
    with pytest.raises(ValueError, match="unknown rotation form"):
        rot.convert_rotation(np.zeros(4), "quat", "matrix")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3))
def test_quat_matrix_quat_angle_preserved(vals):
    q = np.asarray(vals) / np.linalg.norm(vals)
    m = rot.quat_to_matrix(q)
    q2 = rot.matrix_to_quat(m)
    # the acos-based metric bottoms out around sqrt(eps); 1e-6 is the contract
    assert float(rot.rotation_angle_between(q, q2)) < 1e-6


def quat_component_distance(a, b):
    """Component-wise distance up to the double-cover sign."""
    return np.minimum(np.linalg.norm(a - b, axis=-1),
                      np.linalg.norm(a + b, axis=-1))


def test_yaw_twist_split_reassembles(rng):
    q = random_quaternions(rng, 500)
    for up in (1, 2):
        yaw, remainder = rot.yaw_twist_split(q, up)
        rebuilt = rot.quat_multiply(rot.yaw_quat(yaw, up), remainder)
        assert quat_component_distance(q, rebuilt).max() < 1e-12
        # remainder carries no twist about the up axis
        yaw_rem, _ = rot.yaw_twist_split(remainder, up)
        assert np.abs(yaw_rem).max() < 1e-9


def test_yaw_twist_invariant_remainder_under_world_yaw(rng):
    q = random_quaternions(rng, 200)
    delta = rot.yaw_quat(np.full(200, 0.83), 1)
    _, rem_a = rot.yaw_twist_split(q, 1)
    _, rem_b = rot.yaw_twist_split(rot.quat_multiply(delta, q), 1)
    assert quat_component_distance(rem_a, rem_b).max() < 1e-12


def test_slerp_endpoints_and_midpoint():
    q0 = rot.axis_angle_to_quat(np.array([0.0, 0.0, 0.0]))
    q1 = rot.axis_angle_to_quat(np.array([0.0, np.pi / 2, 0.0]))
    assert np.allclose(rot.slerp(q0, q1, 0.0), q0)
    assert rot.rotation_angle_between(rot.slerp(q0, q1, 1.0), q1) < 1e-12
    mid = rot.slerp(q0, q1, 0.5)
    expected = rot.axis_angle_to_quat(np.array([0.0, np.pi / 4, 0.0]))
    assert rot.rotation_angle_between(mid, expected) < 1e-12


def test_wrap_angle_range():
    a = np.array([0.0, np.pi, -np.pi, 3 * np.pi, -2.5 * np.pi])
    w = rot.wrap_angle(a)
    assert np.all(w > -np.pi - 1e-12) and np.all(w <= np.pi + 1e-12)
    assert np.allclose(np.cos(w), np.cos(a))
    assert np.allclose(np.sin(w), np.sin(a))
