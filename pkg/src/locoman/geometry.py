"""SE(3) pose algebra and operator-to-robot command mappings.

A Pose is a rigid transform (3x3 rotation + 3-vector translation, meters).
All mapping functions are pure; the gripper hysteresis keeps its previous
state in the caller's hands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RejectedInputError

ORTHONORMAL_TOL = 1e-9
QUAT_NORM_TOL = 1e-6


def _as_vec3(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(3)
    return arr


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_world = rotation @ x_local + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        trans = _as_vec3(self.translation)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise RejectedInputError("pose contains non-finite values")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise RejectedInputError(
                f"rotation is not orthonormal (max |R'R - I| = {err:.3e})"
            )
        det = float(np.linalg.det(rot))
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise RejectedInputError(f"rotation determinant {det} != +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return Pose(rot, _as_vec3(translation))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        ax = _as_vec3(axis)
        n = np.linalg.norm(ax)
        if n < 1e-12:
            raise RejectedInputError("rotation axis must be non-zero")
        ax = ax / n
        k = np.array(
            [
                [0.0, -ax[2], ax[1]],
                [ax[2], 0.0, -ax[0]],
                [-ax[1], ax[0], 0.0],
            ]
        )
        rot = np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)
        return Pose(rot, _as_vec3(translation))

    @staticmethod
    def from_quat(quat, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Build from a wire-format unit quaternion (w, x, y, z).

        The quaternion is normalized on ingest; a norm further than
        QUAT_NORM_TOL from 1 is rejected rather than silently rescaled.
        """
        q = np.asarray(quat, dtype=float).reshape(4)
        norm = float(np.linalg.norm(q))
        if not math.isfinite(norm) or abs(norm - 1.0) > QUAT_NORM_TOL:
            raise RejectedInputError(f"quaternion norm {norm} not within tolerance of 1")
        w, x, y, z = q / norm
        rot = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return Pose(rot, _as_vec3(translation))

    def to_quat(self) -> np.ndarray:
        """Rotation as a unit quaternion (w, x, y, z), w >= 0."""
        r = self.rotation
        # Shepperd's method: pick the largest diagonal combination for stability.
        t = np.trace(r)
        if t > 0:
            s = math.sqrt(t + 1.0) * 2.0
            q = np.array(
                [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
            )
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            q = np.array(
                [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
            )
        elif r[1, 1] > r[2, 2]:
            s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            q = np.array(
                [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
            )
        else:
            s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
            q = np.array(
                [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
            )
        if q[0] < 0:
            q = -q
        return q / np.linalg.norm(q)

    def apply(self, point) -> np.ndarray:
        """Map a point from this pose's local frame into the parent frame."""
        return self.rotation @ _as_vec3(point) + self.translation


def compose(a: Pose, b: Pose) -> Pose:
    """a then b: the transform taking b's local frame through a into a's parent."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a: Pose) -> Pose:
    return Pose(a.rotation.T, -(a.rotation.T @ a.translation))


def yaw(a: Pose) -> float:
    """Heading of the rotated x-axis, in radians."""
    return math.atan2(a.rotation[1, 0], a.rotation[0, 0])


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class TeleopConfig:
    """Gains and limits for the operator-to-robot mapping.

    translation_scale compensates for an arm workspace larger than a human's;
    deadzone is the joystick dead radius (meters of wrist displacement).
    """

    translation_scale: float = 1.2
    deadzone: float = 0.05
    yaw_deadzone: float = 0.1
    base_linear_gain: float = 1.0
    base_angular_gain: float = 1.0
    max_linear_speed: float = 0.5
    max_angular_speed: float = 1.0

    def __post_init__(self):
        if self.translation_scale <= 0:
            raise RejectedInputError("translation_scale must be > 0")
        if self.deadzone < 0 or self.yaw_deadzone < 0:
            raise RejectedInputError("deadzones must be >= 0")
        for name in ("base_linear_gain", "base_angular_gain", "max_linear_speed", "max_angular_speed"):
            if getattr(self, name) <= 0:
                raise RejectedInputError(f"{name} must be > 0")


@dataclass(frozen=True)
class BaseCommand:
    """Planar base velocities in the body frame."""

    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    angular_velocity: float = 0.0

    def __post_init__(self):
        lin = np.asarray(self.linear_velocity, dtype=float).reshape(2)
        lin.setflags(write=False)
        object.__setattr__(self, "linear_velocity", lin)
        object.__setattr__(self, "angular_velocity", float(self.angular_velocity))

    @staticmethod
    def zero() -> "BaseCommand":
        return BaseCommand(np.zeros(2), 0.0)

    def clamped(self, max_linear: float, max_angular: float) -> "BaseCommand":
        lin = np.array(self.linear_velocity, dtype=float)
        speed = float(np.linalg.norm(lin))
        if speed > max_linear:
            lin = lin * (max_linear / speed)
        ang = min(max(self.angular_velocity, -max_angular), max_angular)
        return BaseCommand(lin, ang)


@dataclass(frozen=True)
class GripperCommand:
    closed: bool

    @staticmethod
    def open() -> "GripperCommand":
        return GripperCommand(closed=False)

    @staticmethod
    def close() -> "GripperCommand":
        return GripperCommand(closed=True)


def teleop_ee_map(t_right: Pose, cfg: TeleopConfig) -> Pose:
    """Operator right-wrist displacement -> end-effector target.

    Rotation passes through untouched; translation is scaled by
    cfg.translation_scale. Both poses are relative displacements (wrist
    relative to its initial pose in, EE target relative to arm base out).
    """
    return Pose(t_right.rotation, cfg.translation_scale * t_right.translation)


def teleop_base_map(t_left: Pose, pinching: bool, cfg: TeleopConfig) -> BaseCommand:
    """Left-wrist virtual joystick -> planar base command.

    Releasing the pinch zeroes the command. While pinching, displacement
    inside the deadzone radius maps to zero linear velocity; beyond it the
    speed grows linearly from zero at the boundary (continuous). Yaw gets
    the same treatment with its own deadzone. Outputs are clamped to the
    configured speed limits.
    """
    if not pinching:
        return BaseCommand.zero()

    d = np.asarray(t_left.translation[:2], dtype=float)
    dist = float(np.linalg.norm(d))
    if dist <= cfg.deadzone or dist == 0.0:
        lin = np.zeros(2)
    else:
        lin = cfg.base_linear_gain * (dist - cfg.deadzone) * (d / dist)

    wrist_yaw = yaw(t_left)
    if abs(wrist_yaw) <= cfg.yaw_deadzone:
        ang = 0.0
    else:
        ang = cfg.base_angular_gain * (abs(wrist_yaw) - cfg.yaw_deadzone) * math.copysign(1.0, wrist_yaw)

    return BaseCommand(lin, ang).clamped(cfg.max_linear_speed, cfg.max_angular_speed)


def pinch_to_gripper(
    thumb_tip,
    index_tip,
    close_threshold: float,
    open_threshold: float,
    previous: GripperCommand,
) -> GripperCommand:
    """Thumb-index pinch distance -> gripper command with hysteresis.

    Closes below close_threshold, opens above open_threshold, and holds the
    previous state in between so fingertip jitter near one threshold cannot
    chatter the gripper.
    """
    if not (open_threshold > close_threshold > 0):
        raise RejectedInputError("need open_threshold > close_threshold > 0")
    dist = float(np.linalg.norm(_as_vec3(thumb_tip) - _as_vec3(index_tip)))
    if dist < close_threshold:
        return GripperCommand(closed=True)
    if dist > open_threshold:
        return GripperCommand(closed=False)
    return previous
