"""Rotations, quaternions, and homogeneous transforms.

Every helper accepts symbolic expressions or plain numeric input.  When all
inputs are numeric the result is a numpy array; if anything is symbolic the
result is an :class:`~taskopt.expr.Expression`.

Conventions used throughout the package:

* quaternions are ``(x, y, z, w)``,
* roll-pitch-yaw means extrinsic x-y-z rotations, so
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from __future__ import annotations

import math

import numpy as np

from . import expr
from .expr import Expression, as_expression

__all__ = [
    "rotation_x",
    "rotation_y",
    "rotation_z",
    "rotation_about_axis",
    "rpy_to_matrix",
    "matrix_to_rpy",
    "matrix_to_quaternion",
    "quaternion_to_matrix",
    "quaternion_product",
    "skew",
    "cross",
    "transform_from",
    "transform_compose",
    "transform_invert",
    "transform_translation",
    "transform_rotation",
]


def _symbolic(*xs) -> bool:
    return any(isinstance(x, Expression) for x in xs)


def _finish(e: Expression, symbolic: bool, ravel: bool = False):
    if symbolic:
        return e
    out = expr.evaluate(e)
    return out.ravel() if ravel else out


def rotation_x(theta):
    sym = _symbolic(theta)
    t = as_expression(theta)
    c, s = expr.cos(t), expr.sin(t)
    R = expr.vertcat(
        expr.horzcat(1.0, 0.0, 0.0),
        expr.horzcat(0.0, c, -s),
        expr.horzcat(0.0, s, c),
    )
    return _finish(R, sym)


def rotation_y(theta):
    sym = _symbolic(theta)
    t = as_expression(theta)
    c, s = expr.cos(t), expr.sin(t)
    R = expr.vertcat(
        expr.horzcat(c, 0.0, s),
        expr.horzcat(0.0, 1.0, 0.0),
        expr.horzcat(-s, 0.0, c),
    )
    return _finish(R, sym)


def rotation_z(theta):
    sym = _symbolic(theta)
    t = as_expression(theta)
    c, s = expr.cos(t), expr.sin(t)
    R = expr.vertcat(
        expr.horzcat(c, -s, 0.0),
        expr.horzcat(s, c, 0.0),
        expr.horzcat(0.0, 0.0, 1.0),
    )
    return _finish(R, sym)


def skew(v):
    sym = _symbolic(v)
    e = as_expression(v).vec()
    if e.rows != 3:
        raise ValueError("skew needs a 3-vector")
    x, y, z = e[0, 0], e[1, 0], e[2, 0]
    S = expr.vertcat(
        expr.horzcat(0.0, -z, y),
        expr.horzcat(z, 0.0, -x),
        expr.horzcat(-y, x, 0.0),
    )
    return _finish(S, sym)


def cross(a, b):
    sym = _symbolic(a, b)
    ea, eb = as_expression(a).vec(), as_expression(b).vec()
    if ea.rows != 3 or eb.rows != 3:
        raise ValueError("cross needs 3-vectors")
    ax, ay, az = ea[0, 0], ea[1, 0], ea[2, 0]
    bx, by, bz = eb[0, 0], eb[1, 0], eb[2, 0]
    c = expr.vertcat(ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)
    return _finish(c, sym, ravel=True)


def rotation_about_axis(axis, theta):
    """Rodrigues rotation about a (numeric) unit axis by a possibly symbolic angle."""
    axis = np.asarray(axis, dtype=float).ravel()
    if axis.shape != (3,):
        raise ValueError("axis must be a 3-vector")
    n = np.linalg.norm(axis)
    if abs(n - 1.0) > 1e-9:
        axis = axis / n
    sym = _symbolic(theta)
    t = as_expression(theta)
    K = as_expression(skew(axis))
    I3 = expr.constant(np.eye(3))
    R = I3 + expr.sin(t) * K + (1.0 - expr.cos(t)) * (K @ K)
    return _finish(R, sym)


def rpy_to_matrix(rpy):
    sym = _symbolic(rpy)
    e = as_expression(rpy).vec()
    if e.rows != 3:
        raise ValueError("rpy must be a 3-vector")
    R = (
        as_expression(rotation_z(e[2, 0]))
        @ as_expression(rotation_y(e[1, 0]))
        @ as_expression(rotation_x(e[0, 0]))
    )
    return _finish(R, sym)


def matrix_to_rpy(R):
    """Extrinsic x-y-z angles of a rotation matrix.

    Singular at pitch = +-pi/2; near that pitch the symbolic form evaluates
    to large derivative values rather than raising.
    """
    sym = _symbolic(R)
    e = as_expression(R)
    if e.shape != (3, 3):
        raise ValueError("rotation matrix must be 3x3")
    pitch = expr.atan2(-e[2, 0], expr.sqrt(e[0, 0] * e[0, 0] + e[1, 0] * e[1, 0]))
    roll = expr.atan2(e[2, 1], e[2, 2])
    yaw = expr.atan2(e[1, 0], e[0, 0])
    return _finish(expr.vertcat(roll, pitch, yaw), sym, ravel=True)


def _check_orthonormal(R: np.ndarray):
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > 1e-6:
        raise ValueError(f"matrix is not orthonormal (error {err:.2e})")


def matrix_to_quaternion(R):
    """Quaternion (x, y, z, w) of a rotation matrix, w >= 0.

    Numeric input is validated for orthonormality and converted with
    Shepperd's branch selection.  Symbolic input uses the trace formula,
    which is smooth away from rotations by pi.
    """
    if _symbolic(R):
        e = as_expression(R)
        if e.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        w = 0.5 * expr.sqrt(1.0 + e[0, 0] + e[1, 1] + e[2, 2])
        s = 0.25 / w
        x = (e[2, 1] - e[1, 2]) * s
        y = (e[0, 2] - e[2, 0]) * s
        z = (e[1, 0] - e[0, 1]) * s
        return expr.vertcat(x, y, z, w)

    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation matrix must be 3x3")
    _check_orthonormal(R)
    # Shepperd: branch on the largest of trace and diagonal entries.
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    candidates = [tr, R[0, 0], R[1, 1], R[2, 2]]
    case = int(np.argmax(candidates))
    if case == 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif case == 1:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif case == 2:
        s = math.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    q = np.array([x, y, z, w])
    if q[3] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quaternion_to_matrix(q):
    sym = _symbolic(q)
    e = as_expression(q).vec()
    if e.rows != 4:
        raise ValueError("quaternion must be a 4-vector (x, y, z, w)")
    x, y, z, w = e[0, 0], e[1, 0], e[2, 0], e[3, 0]
    R = expr.vertcat(
        expr.horzcat(1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)),
        expr.horzcat(2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)),
        expr.horzcat(2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)),
    )
    return _finish(R, sym)


def quaternion_product(q1, q2):
    """Hamilton product in (x, y, z, w) order; composes like R1 @ R2."""
    sym = _symbolic(q1, q2)
    a = as_expression(q1).vec()
    b = as_expression(q2).vec()
    if a.rows != 4 or b.rows != 4:
        raise ValueError("quaternions must be 4-vectors")
    x1, y1, z1, w1 = a[0, 0], a[1, 0], a[2, 0], a[3, 0]
    x2, y2, z2, w2 = b[0, 0], b[1, 0], b[2, 0], b[3, 0]
    q = expr.vertcat(
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    )
    if sym:
        return q
    out = expr.evaluate(q).ravel()
    return out / np.linalg.norm(out)


def transform_from(rotation=None, translation=None):
    """Build a 4x4 homogeneous transform from a rotation and/or translation."""
    sym = _symbolic(rotation, translation)
    R = as_expression(rotation if rotation is not None else np.eye(3))
    t = as_expression(
        translation if translation is not None else np.zeros(3)
    ).vec()
    if R.shape != (3, 3) or t.rows != 3:
        raise ValueError("need a 3x3 rotation and a 3-vector translation")
    bottom = expr.constant(np.array([[0.0, 0.0, 0.0, 1.0]]))
    T = expr.vertcat(expr.horzcat(R, t), bottom)
    return _finish(T, sym)


def transform_compose(*transforms):
    if not transforms:
        raise ValueError("need at least one transform")
    sym = _symbolic(*transforms)
    out = as_expression(transforms[0])
    for T in transforms[1:]:
        out = out @ as_expression(T)
    if out.shape != (4, 4):
        raise ValueError("transforms must be 4x4")
    return _finish(out, sym)


def transform_invert(T):
    sym = _symbolic(T)
    e = as_expression(T)
    if e.shape != (4, 4):
        raise ValueError("transform must be 4x4")
    R = e[0:3, 0:3]
    t = e[0:3, 3]
    Rt = R.T
    out = expr.vertcat(
        expr.horzcat(Rt, -(Rt @ t)),
        expr.constant(np.array([[0.0, 0.0, 0.0, 1.0]])),
    )
    return _finish(out, sym)


def transform_translation(T):
    sym = _symbolic(T)
    e = as_expression(T)
    if e.shape != (4, 4):
        raise ValueError("transform must be 4x4")
    return _finish(e[0:3, 3], sym, ravel=True)


def transform_rotation(T):
    sym = _symbolic(T)
    e = as_expression(T)
    if e.shape != (4, 4):
        raise ValueError("transform must be 4x4")
    return _finish(e[0:3, 0:3], sym)
