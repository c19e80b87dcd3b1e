"""SE(3) poses, twists, exp/log maps and pose distances.

Conventions used throughout the package:

- Quaternions are numpy arrays of shape (4,) in [w, x, y, z] order,
  unit norm, canonicalized so that w >= 0 (q and -q encode the same
  rotation; the canonical representative is unique).
- Translations and points are numpy arrays of shape (3,) in meters.
- Twists are numpy arrays of shape (6,) laid out [wx, wy, wz, vx, vy, vz]:
  rotational part first (radians), translational part second (meters).
- Pose composition follows the usual convention: compose(a, b) maps a
  point p to a.apply(b.apply(p)), i.e. b acts first.
- Twist increments act in the body frame: step(g, xi) = compose(g, exp_se3(xi)).
"""

import math

import numpy as np
from dataclasses import dataclass, field

from .errors import NearPiRotation, NegativeGamma, NonPositiveDt

__all__ = [
    "Pose",
    "quat_identity",
    "quat_canonical",
    "quat_multiply",
    "quat_conjugate",
    "quat_rotate",
    "quat_to_matrix",
    "quat_from_matrix",
    "quat_from_axis_angle",
    "compose",
    "inverse",
    "apply_pose",
    "exp_se3",
    "log_se3",
    "angular_distance",
    "translational_distance",
    "pose_distance",
    "sample_wiener",
    "pose_to_dict",
    "pose_from_dict",
]

# Below this rotation angle (radians) series expansions replace the
# closed-form sin/cos coefficient ratios.
SMALL_ANGLE = 1e-8

# log_se3 refuses rotations within this margin of pi, where the axis
# flips sign under perturbation.
NEAR_PI_MARGIN = 1e-6

# Allowed deviation of a quaternion norm from 1.
UNIT_NORM_TOL = 1e-9


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Return the canonical representative of q (w >= 0).

    When w == 0 exactly, the first nonzero component is made positive so
    that canonicalization is idempotent and picks a unique member of the
    {q, -q} pair.
    """
    q = np.asarray(q, dtype=float)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    return q.copy()


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to canonical unit quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
        ])
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([
            (R[0, 2] - R[2, 0]) / s,
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
        ])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([
            (R[1, 0] - R[0, 1]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
        ])
    q /= np.linalg.norm(q)
    return quat_canonical(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return quat_canonical(np.concatenate([[math.cos(h)], math.sin(h) * axis]))


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a vector (or an (N, 3) stack of vectors) by q."""
    R = quat_to_matrix(q)
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return R @ v
    return v @ R.T


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation q ([w, x, y, z], canonical) plus translation t."""

    q: np.ndarray = field(default_factory=quat_identity)
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4)
        t = np.asarray(self.t, dtype=float).reshape(3)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"quaternion norm {n} deviates from 1 by more than {UNIT_NORM_TOL}")
        q = quat_canonical(q / n)
        q.flags.writeable = False
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = quat_to_matrix(self.q)
        M[:3, 3] = self.t
        return M

    def apply(self, points: np.ndarray) -> np.ndarray:
        return apply_pose(self, points)


def compose(a: Pose, b: Pose) -> Pose:
    """Composition a * b (b acts first on points)."""
    return Pose(quat_multiply(a.q, b.q), quat_rotate(a.q, b.t) + a.t)


def inverse(a: Pose) -> Pose:
    qc = quat_conjugate(a.q)
    return Pose(qc, -quat_rotate(qc, a.t))


def apply_pose(a: Pose, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        return quat_rotate(a.q, points) + a.t
    return quat_rotate(a.q, points) + a.t[None, :]


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def _left_jacobian(omega: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(omega)
    K = _skew(omega)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        # 1 - cos cancels badly near the series threshold; the half-angle
        # form is stable at every angle.
        h = math.sin(0.5 * theta)
        a = 2.0 * h * h / (theta * theta)
        b = (theta - math.sin(theta)) / (theta ** 3)
    return np.eye(3) + a * K + b * (K @ K)


def _left_jacobian_inv(omega: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(omega)
    K = _skew(omega)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        c = 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) - 0.5 * K + c * (K @ K)


def exp_se3(xi: np.ndarray) -> Pose:
    """Exponential map from a twist [omega, v] to a pose.

    The rotation is exp(omega); the translation is V(omega) @ v with V
    the left Jacobian of SO(3), so that exp/log are exact inverses for
    rotation angles below pi.
    """
    xi = np.asarray(xi, dtype=float).reshape(6)
    omega, v = xi[:3], xi[3:]
    theta = np.linalg.norm(omega)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        w = 1.0 - t2 / 8.0 + t2 * t2 / 384.0
        s = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0
    else:
        w = math.cos(0.5 * theta)
        s = math.sin(0.5 * theta) / theta
    q = np.concatenate([[w], s * omega])
    q /= np.linalg.norm(q)
    return Pose(q, _left_jacobian(omega) @ v)


def log_se3(g: Pose) -> np.ndarray:
    """Logarithm map from a pose to a twist [omega, v].

    Raises NearPiRotation when the rotation angle is within NEAR_PI_MARGIN
    of pi, where the rotation axis is not uniquely determined.
    """
    q = g.q
    s = np.linalg.norm(q[1:])
    w = q[0]
    theta = 2.0 * math.atan2(s, w)
    if theta > math.pi - NEAR_PI_MARGIN:
        raise NearPiRotation(f"rotation angle {theta} within {NEAR_PI_MARGIN} of pi")
    if s < SMALL_ANGLE:
        f = 2.0 / w * (1.0 - s * s / (3.0 * w * w))
    else:
        f = theta / s
    omega = f * q[1:]
    v = _left_jacobian_inv(omega) @ g.t
    return np.concatenate([omega, v])


def angular_distance(q1: np.ndarray, q2: np.ndarray) -> float:
    """Rotation angle between two unit quaternions, in [0, pi].

    Computed as 2*acos(|<q1, q2>|); the absolute value folds the double
    cover so that q and -q are at distance zero.
    """
    d = abs(float(np.dot(q1, q2)))
    d = min(d, 1.0)
    return 2.0 * math.acos(d)


def translational_distance(t1: np.ndarray, t2: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)))


def pose_distance(g1: Pose, g2: Pose, gamma: float = 1.0,
                  squared_translation: bool = False) -> float:
    """Weighted pose distance: ||t1 - t2|| + gamma * angle(q1, q2).

    With squared_translation the translational term is squared, which
    breaks the triangle inequality; it is off by default.
    """
    if gamma < 0.0:
        raise NegativeGamma(f"gamma must be >= 0, got {gamma}")
    d_t = translational_distance(g1.t, g2.t)
    if squared_translation:
        d_t = d_t * d_t
    return d_t + gamma * angular_distance(g1.q, g2.q)


def sample_wiener(dt: float, sigma_rot: float, sigma_trans: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Draw a Wiener twist increment over a step of length dt.

    Rotational components are N(0, sigma_rot^2 * dt), translational
    components N(0, sigma_trans^2 * dt), all independent.
    """
    if dt <= 0.0:
        raise NonPositiveDt(f"dt must be > 0, got {dt}")
    if sigma_rot < 0.0 or sigma_trans < 0.0:
        raise ValueError("noise scales must be >= 0")
    root = math.sqrt(dt)
    omega = rng.normal(0.0, sigma_rot * root, 3)
    v = rng.normal(0.0, sigma_trans * root, 3)
    return np.concatenate([omega, v])


def pose_to_dict(g: Pose) -> dict:
    return {"q": [float(c) for c in g.q], "t": [float(c) for c in g.t]}


def pose_from_dict(d: dict) -> Pose:
    return Pose(np.asarray(d["q"], dtype=float), np.asarray(d["t"], dtype=float))
