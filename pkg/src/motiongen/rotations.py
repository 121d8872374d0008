"""Rotation algebra over numpy arrays.

Forms and conventions:
  - quaternion: (..., 4), scalar-first (w, x, y, z), unit norm.
  - axis_angle: (..., 3), axis * angle in radians (rotation vector).
  - matrix: (..., 3, 3), orthonormal, det +1, acts on column vectors.
  - sixd: (..., 6), first two matrix columns stacked [R00,R10,R20,R01,R11,R21];
    decoding re-orthonormalizes by Gram-Schmidt, so any non-degenerate
    6-vector maps to a valid rotation.
  - euler: (..., 3), radians, with an explicit axis-order tag such as "ZXY";
    composition is R(order[0], a0) @ R(order[1], a1) @ R(order[2], a2).
"""

from __future__ import annotations

import numpy as np

FORMS = ("quaternion", "axis_angle", "matrix", "sixd", "euler")

_EPS = 1e-12


def identity_quat(shape=()) -> np.ndarray:
    q = np.zeros(shape + (4,), dtype=np.float64)
    q[..., 0] = 1.0
    return q


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-9):
        raise ValueError("zero-norm quaternion cannot be normalized")
    return q / norm


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b (apply b first, then a)."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_apply(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qvec = q[..., 1:]
    uv = np.cross(qvec, v)
    uuv = np.cross(qvec, uv)
    return v + 2.0 * (q[..., :1] * uv + uuv)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
            2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Shepperd's method, branch chosen per element for stability."""
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    m = m.reshape((-1, 3, 3))
    w2 = 1.0 + m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    x2 = 1.0 + m[:, 0, 0] - m[:, 1, 1] - m[:, 2, 2]
    y2 = 1.0 - m[:, 0, 0] + m[:, 1, 1] - m[:, 2, 2]
    z2 = 1.0 - m[:, 0, 0] - m[:, 1, 1] + m[:, 2, 2]
    q = np.empty((m.shape[0], 4), dtype=np.float64)
    choice = np.argmax(np.stack([w2, x2, y2, z2], axis=-1), axis=-1)

    for c, t2 in enumerate((w2, x2, y2, z2)):
        sel = choice == c
        if not np.any(sel):
            continue
        t = np.sqrt(np.maximum(t2[sel], _EPS))
        s = 0.5 / t
        ms = m[sel]
        if c == 0:
            q[sel, 0] = 0.5 * t
            q[sel, 1] = (ms[:, 2, 1] - ms[:, 1, 2]) * s
            q[sel, 2] = (ms[:, 0, 2] - ms[:, 2, 0]) * s
            q[sel, 3] = (ms[:, 1, 0] - ms[:, 0, 1]) * s
        elif c == 1:
            q[sel, 0] = (ms[:, 2, 1] - ms[:, 1, 2]) * s
            q[sel, 1] = 0.5 * t
            q[sel, 2] = (ms[:, 0, 1] + ms[:, 1, 0]) * s
            q[sel, 3] = (ms[:, 0, 2] + ms[:, 2, 0]) * s
        elif c == 2:
            q[sel, 0] = (ms[:, 0, 2] - ms[:, 2, 0]) * s
            q[sel, 1] = (ms[:, 0, 1] + ms[:, 1, 0]) * s
            q[sel, 2] = 0.5 * t
            q[sel, 3] = (ms[:, 1, 2] + ms[:, 2, 1]) * s
        else:
            q[sel, 0] = (ms[:, 1, 0] - ms[:, 0, 1]) * s
            q[sel, 1] = (ms[:, 0, 2] + ms[:, 2, 0]) * s
            q[sel, 2] = (ms[:, 1, 2] + ms[:, 2, 1]) * s
            q[sel, 3] = 0.5 * t
    # canonical sign: non-negative scalar part
    q = np.where(q[:, :1] < 0, -q, q)
    return quat_normalize(q.reshape(batch + (4,)))


def axis_angle_to_quat(aa: np.ndarray) -> np.ndarray:
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sinc form is stable at angle -> 0
    small = angle < 1e-8
    k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    return np.concatenate([np.cos(half), aa * k], axis=-1)


def quat_to_axis_angle(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    q = np.where(q[..., :1] < 0, -q, q)
    vec_norm = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(vec_norm, q[..., :1])
    small = vec_norm < 1e-9
    scale = np.where(small, 2.0, angle / np.where(small, 1.0, vec_norm))
    return q[..., 1:] * scale


def sixd_to_matrix(sixd: np.ndarray) -> np.ndarray:
    sixd = np.asarray(sixd, dtype=np.float64)
    a = sixd[..., 0:3]
    b = sixd[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < 1e-9):
        raise ValueError("degenerate 6D rotation: first column has zero norm")
    b1 = a / na
    b2 = b - np.sum(b1 * b, axis=-1, keepdims=True) * b1
    nb = np.linalg.norm(b2, axis=-1, keepdims=True)
    if np.any(nb < 1e-9):
        raise ValueError("degenerate 6D rotation: columns are parallel")
    b2 = b2 / nb
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_sixd(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


_AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}


def _axis_rotation(axis: str, angle: np.ndarray) -> np.ndarray:
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    if axis == "X":
        rows = (one, zero, zero, zero, c, -s, zero, s, c)
    elif axis == "Y":
        rows = (c, zero, s, zero, one, zero, -s, zero, c)
    elif axis == "Z":
        rows = (c, -s, zero, s, c, zero, zero, zero, one)
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")
    return np.stack(rows, axis=-1).reshape(angle.shape + (3, 3))


def euler_to_matrix(angles: np.ndarray, order: str) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    if sorted(order) != ["X", "Y", "Z"]:
        raise ValueError(f"euler order must be a permutation of XYZ, got {order!r}")
    m = _axis_rotation(order[0], angles[..., 0])
    m = m @ _axis_rotation(order[1], angles[..., 1])
    m = m @ _axis_rotation(order[2], angles[..., 2])
    return m


def _angle_from_tan(axis: str, other_axis: str, data: np.ndarray,
                    horizontal: bool, tait_bryan: bool) -> np.ndarray:
    i1, i2 = {"X": (2, 1), "Y": (0, 2), "Z": (1, 0)}[axis]
    if horizontal:
        i2, i1 = i1, i2
    even = (axis + other_axis) in ("XY", "YZ", "ZX")
    if horizontal == even:
        return np.arctan2(data[..., i1], data[..., i2])
    if tait_bryan:
        return np.arctan2(-data[..., i2], data[..., i1])
    return np.arctan2(data[..., i2], -data[..., i1])


def matrix_to_euler(m: np.ndarray, order: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if sorted(order) != ["X", "Y", "Z"]:
        raise ValueError(f"euler order must be a permutation of XYZ, got {order!r}")
    i0 = _AXIS_INDEX[order[0]]
    i2 = _AXIS_INDEX[order[2]]
    tait_bryan = i0 != i2
    if tait_bryan:
        central = np.arcsin(np.clip(m[..., i0, i2] * (-1.0 if i0 - i2 in (-1, 2) else 1.0), -1.0, 1.0))
    else:
        central = np.arccos(np.clip(m[..., i0, i0], -1.0, 1.0))
    return np.stack(
        [
            _angle_from_tan(order[0], order[1], m[..., i2], False, tait_bryan),
            central,
            _angle_from_tan(order[2], order[1], m[..., i0, :], True, tait_bryan),
        ],
        axis=-1,
    )


def convert_rotation(data: np.ndarray, src: str, dst: str,
                     euler_order: str | None = None) -> np.ndarray:
    """Convert a rotation between any two supported forms via matrices.

    ``euler_order`` is required whenever ``src`` or ``dst`` is "euler".
    """
    for form in (src, dst):
        if form not in FORMS:
            raise ValueError(f"unknown rotation form {form!r}; expected one of {FORMS}")
    if "euler" in (src, dst) and euler_order is None:
        raise ValueError("euler form requires an explicit euler_order tag")
    if src == dst and src != "euler":
        return np.asarray(data, dtype=np.float64).copy()

    if src == "quaternion":
        m = quat_to_matrix(data)
    elif src == "axis_angle":
        m = quat_to_matrix(axis_angle_to_quat(data))
    elif src == "matrix":
        m = np.asarray(data, dtype=np.float64)
    elif src == "sixd":
        m = sixd_to_matrix(data)
    else:
        m = euler_to_matrix(data, euler_order)

    if dst == "quaternion":
        return matrix_to_quat(m)
    if dst == "axis_angle":
        return quat_to_axis_angle(matrix_to_quat(m))
    if dst == "matrix":
        return m
    if dst == "sixd":
        return matrix_to_sixd(m)
    return matrix_to_euler(m, euler_order)


def rotation_angle_between(a: np.ndarray, b: np.ndarray, form: str = "quaternion") -> np.ndarray:
    """Geodesic angle between two rotations, in radians."""
    qa = convert_rotation(a, form, "quaternion")
    qb = convert_rotation(b, form, "quaternion")
    dot = np.clip(np.abs(np.sum(qa * qb, axis=-1)), 0.0, 1.0)
    return 2.0 * np.arccos(dot)


def slerp(q0: np.ndarray, q1: np.ndarray, t) -> np.ndarray:
    """Spherical interpolation between unit quaternions, shortest arc."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    t = np.asarray(t, dtype=np.float64)[..., None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0, -q1, q1)
    dot = np.abs(dot)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    near = theta < 1e-7
    sin_theta = np.where(near, 1.0, np.sin(theta))
    w0 = np.where(near, 1.0 - t, np.sin((1.0 - t) * theta) / sin_theta)
    w1 = np.where(near, t, np.sin(t * theta) / sin_theta)
    return quat_normalize(w0 * q0 + w1 * q1)


def quat_log(q: np.ndarray) -> np.ndarray:
    """Tangent-space coordinates (rotation vector) of a unit quaternion."""
    return quat_to_axis_angle(q)


def quat_exp(v: np.ndarray) -> np.ndarray:
    return axis_angle_to_quat(v)


def yaw_twist_split(q: np.ndarray, up_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Split q into yaw about the world up axis and a yaw-free remainder.

    Returns (yaw_angle, remainder) with q == twist(yaw) * remainder, so the
    remainder is invariant under any extra world-frame yaw applied to q.
    Degenerate 180-degree tips (zero twist projection) yield yaw 0.
    """
    q = quat_normalize(q)
    w = q[..., 0]
    comp = q[..., 1 + up_index]
    norm = np.sqrt(w * w + comp * comp)
    degenerate = norm < 1e-9
    safe = np.where(degenerate, 1.0, norm)
    tw = np.zeros_like(q)
    tw[..., 0] = np.where(degenerate, 1.0, w / safe)
    tw[..., 1 + up_index] = np.where(degenerate, 0.0, comp / safe)
    yaw = 2.0 * np.arctan2(tw[..., 1 + up_index], tw[..., 0])
    remainder = quat_multiply(quat_conjugate(tw), q)
    return yaw, quat_normalize(remainder)


def yaw_quat(yaw: np.ndarray, up_index: int) -> np.ndarray:
    """Quaternion rotating by ``yaw`` radians about the world up axis."""
    yaw = np.asarray(yaw, dtype=np.float64)
    q = np.zeros(yaw.shape + (4,), dtype=np.float64)
    q[..., 0] = np.cos(0.5 * yaw)
    q[..., 1 + up_index] = np.sin(0.5 * yaw)
    return q


def wrap_angle(a: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    out = (a + np.pi) % (2.0 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


def validate_rotation(data: np.ndarray, form: str, euler_order: str | None = None,
                      atol: float = 1e-9) -> None:
    """Raise ValueError when ``data`` violates its form's invariants."""
    data = np.asarray(data, dtype=np.float64)
    if form == "quaternion":
        norm = np.linalg.norm(data, axis=-1)
        if np.any(np.abs(norm) < 1e-9):
            raise ValueError("zero-norm quaternion")
        if np.any(np.abs(norm - 1.0) > atol):
            raise ValueError("quaternion norm deviates from 1")
    elif form == "matrix":
        ident = np.eye(3)
        gram = data @ np.swapaxes(data, -1, -2)
        if np.any(np.abs(gram - ident) > 10 * atol):
            raise ValueError("matrix is not orthonormal")
        if np.any(np.abs(np.linalg.det(data) - 1.0) > 10 * atol):
            raise ValueError("matrix determinant is not +1")
    elif form == "sixd":
        sixd_to_matrix(data)  # raises on degenerate input
    elif form == "euler" and euler_order is None:
        raise ValueError("euler form requires an axis-order tag")
