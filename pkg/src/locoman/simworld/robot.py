"""Robot kinematics: forward chain, geometric Jacobian, damped-least-squares
IK, reachability bounds, and the posture-recruitment rules behind the
whole-body control mode.

The arm's reachable set is approximated by an annulus around the shoulder;
whole-body mode widens it by considering base yaw plus a grid of body
height/pitch postures. Reachability and recruitment share that grid, so a
target reported reachable is one recruitment can actually set up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..config import RobotConfig
from ..errors import RejectedInputError
from ..geometry import BaseCommand, Pose, compose, wrap_angle

CONTROL_MODES = ("whole_body", "decoupled", "arm_only")


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _pitch_rotation(pitch: float) -> np.ndarray:
    # rotation about +y; positive pitch points the nose down
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class RobotState:
    """Full robot configuration; ee_pose is derived from the rest on
    construction so the state can never disagree with its own kinematics."""

    config: RobotConfig
    base_xy: np.ndarray
    base_yaw: float
    body_height: float
    body_pitch: float
    arm_joints: np.ndarray
    gripper_open_fraction: float
    control_mode: str
    ee_pose: Pose = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        cfg = self.config
        xy = np.asarray(self.base_xy, dtype=float).reshape(2)
        joints = np.asarray(self.arm_joints, dtype=float).reshape(cfg.arm.dof)
        if self.control_mode not in CONTROL_MODES:
            raise RejectedInputError(f"unknown control mode '{self.control_mode}'")
        if not (cfg.body.height_min - 1e-9 <= self.body_height <= cfg.body.height_max + 1e-9):
            raise RejectedInputError(f"body height {self.body_height} outside range")
        if abs(self.body_pitch) > cfg.body.pitch_limit + 1e-9:
            raise RejectedInputError(f"body pitch {self.body_pitch} outside limit")
        for i, (q, spec) in enumerate(zip(joints, cfg.arm.joints)):
            if not (spec.lower - 1e-9 <= q <= spec.upper + 1e-9):
                raise RejectedInputError(f"joint {i} value {q} outside [{spec.lower}, {spec.upper}]")
        if not (0.0 <= self.gripper_open_fraction <= 1.0):
            raise RejectedInputError("gripper_open_fraction must be in [0, 1]")
        xy.setflags(write=False)
        joints.setflags(write=False)
        object.__setattr__(self, "base_xy", xy)
        object.__setattr__(self, "arm_joints", joints)
        object.__setattr__(self, "base_yaw", wrap_angle(float(self.base_yaw)))
        object.__setattr__(self, "body_height", float(self.body_height))
        object.__setattr__(self, "body_pitch", float(self.body_pitch))
        object.__setattr__(self, "gripper_open_fraction", float(self.gripper_open_fraction))
        _, _, ee = _chain(cfg, xy, self.base_yaw, self.body_height, self.body_pitch, joints)
        object.__setattr__(self, "ee_pose", ee)


def initial_robot_state(config: RobotConfig, control_mode: str = "whole_body") -> RobotState:
    return RobotState(
        config=config,
        base_xy=np.zeros(2),
        base_yaw=0.0,
        body_height=config.body.default_height,
        body_pitch=0.0,
        arm_joints=np.array(config.arm.start_joints),
        gripper_open_fraction=1.0,
        control_mode=control_mode,
    )


def _chain(cfg: RobotConfig, base_xy, base_yaw, height, pitch, joints):
    """Walk the kinematic chain. Returns per-joint world origins (where each
    axis passes through), world axis directions, and the tool-tip pose."""
    cy, sy = math.cos(base_yaw), math.sin(base_yaw)
    rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    trans = np.array([base_xy[0], base_xy[1], 0.0])
    # body: lift then pitch
    rot = rot @ _pitch_rotation(pitch)
    trans = trans + np.array([0.0, 0.0, height])
    # arm mount rides the pitched body
    trans = trans + rot @ cfg.arm.mount

    origins = np.empty((cfg.arm.dof, 3))
    axes = np.empty((cfg.arm.dof, 3))
    for i, (q, spec) in enumerate(zip(joints, cfg.arm.joints)):
        origins[i] = trans
        axes[i] = rot @ spec.axis
        rot = rot @ _axis_rotation(spec.axis, q)
        trans = trans + rot @ spec.offset
    return origins, axes, Pose(rot, trans)


def forward_kinematics(state: RobotState) -> Pose:
    _, _, ee = _chain(
        state.config, state.base_xy, state.base_yaw, state.body_height, state.body_pitch, state.arm_joints
    )
    return ee


def base_pose(state: RobotState) -> Pose:
    return Pose.from_yaw(state.base_yaw, (state.base_xy[0], state.base_xy[1], 0.0))


def mount_pose(state: RobotState) -> Pose:
    """World pose of the arm base (the frame EE targets are expressed in)."""
    return _mount_pose_at(state.config, state.base_xy, state.base_yaw, state.body_height, state.body_pitch)


def _mount_pose_at(cfg: RobotConfig, base_xy, base_yaw, height, pitch) -> Pose:
    cy, sy = math.cos(base_yaw), math.sin(base_yaw)
    rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]]) @ _pitch_rotation(pitch)
    trans = np.array([base_xy[0], base_xy[1], 0.0]) + np.array([0.0, 0.0, height]) + rot @ cfg.arm.mount
    return Pose(rot, trans)


def shoulder_position(state: RobotState) -> np.ndarray:
    return _shoulder_at(state.config, state.base_xy, state.base_yaw, state.body_height, state.body_pitch, state.arm_joints)


def _shoulder_at(cfg, base_xy, base_yaw, height, pitch, joints) -> np.ndarray:
    origins, _, _ = _chain(cfg, base_xy, base_yaw, height, pitch, joints)
    idx = 1 if cfg.arm.dof > 1 else 0
    return origins[idx]


def _in_annulus(cfg: RobotConfig, shoulder: np.ndarray, target: np.ndarray, margin: float) -> bool:
    d = float(np.linalg.norm(target - shoulder))
    return cfg.arm.reach_min + margin <= d <= cfg.arm.reach_effective - margin


def _posture_grid(cfg: RobotConfig):
    n = cfg.control.recruit_grid
    heights = np.linspace(cfg.body.height_min, cfg.body.height_max, n)
    pitches = np.linspace(-cfg.body.pitch_limit, cfg.body.pitch_limit, n)
    return heights, pitches


def _bearing_to(base_xy, target: np.ndarray) -> float | None:
    dx, dy = float(target[0] - base_xy[0]), float(target[1] - base_xy[1])
    if math.hypot(dx, dy) < 0.05:
        return None
    return math.atan2(dy, dx)


def _recruit_posture(state: RobotState, target: np.ndarray):
    """Pick the grid posture (with the base turned toward the target) that
    brings the target inside the annulus with margin, preferring the posture
    closest to the current one; ties go to grid order. None when no posture
    works."""
    cfg = state.config
    bearing = _bearing_to(state.base_xy, target)
    yaw = state.base_yaw if bearing is None else bearing
    heights, pitches = _posture_grid(cfg)
    best = None
    best_cost = math.inf
    for h in heights:
        for p in pitches:
            shoulder = _shoulder_at(cfg, state.base_xy, yaw, h, p, state.arm_joints)
            if not _in_annulus(cfg, shoulder, target, cfg.control.recruit_margin):
                continue
            cost = abs(h - state.body_height) + 0.5 * abs(p - state.body_pitch)
            if cost < best_cost - 1e-12:
                best_cost = cost
                best = (float(h), float(p))
    return best


def reachable(state: RobotState, target, mode: str | None = None) -> bool:
    """Conservative annulus test. arm_only and decoupled evaluate the current
    posture; whole_body also admits targets that some recruitable posture
    (base turned toward the target, any grid height/pitch) brings in range."""
    cfg = state.config
    mode = mode or state.control_mode
    if mode not in CONTROL_MODES:
        raise RejectedInputError(f"unknown control mode '{mode}'")
    pos = target.translation if isinstance(target, Pose) else np.asarray(target, dtype=float).reshape(3)
    if _in_annulus(cfg, shoulder_position(state), pos, 0.0):
        return True
    if mode != "whole_body":
        return False
    return _recruit_posture(state, pos) is not None


def _rotation_log(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    cos_a = max(-1.0, min(1.0, (float(np.trace(rot)) - 1.0) / 2.0))
    angle = math.acos(cos_a)
    if angle < 1e-10:
        return np.zeros(3)
    if angle > math.pi - 1e-6:
        # near half-turn the skew part vanishes; recover axis from diagonal
        diag = np.clip((np.diag(rot) + 1.0) / 2.0, 0.0, 1.0)
        axis = np.sqrt(diag)
        axis[1] = math.copysign(axis[1], rot[0, 1])
        axis[2] = math.copysign(axis[2], rot[0, 2])
        n = np.linalg.norm(axis)
        return axis / n * angle if n > 1e-12 else np.zeros(3)
    skew = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    return skew / (2.0 * math.sin(angle)) * angle


def pose_error(current: Pose, target: Pose) -> tuple[float, float]:
    """(position error m, rotation error rad) between two poses."""
    pos = float(np.linalg.norm(target.translation - current.translation))
    rot = float(np.linalg.norm(_rotation_log(target.rotation @ current.rotation.T)))
    return pos, rot


def ik_joint_update(state: RobotState, target_world: Pose, dt: float) -> np.ndarray:
    """One damped-least-squares step toward the world-frame target, respecting
    per-joint speed and position limits. Zero error maps to zero motion."""
    cfg = state.config
    origins, axes, ee = _chain(
        cfg, state.base_xy, state.base_yaw, state.body_height, state.body_pitch, state.arm_joints
    )
    w = cfg.arm.ik_rot_weight
    err = np.concatenate(
        [
            target_world.translation - ee.translation,
            w * _rotation_log(target_world.rotation @ ee.rotation.T),
        ]
    )
    if float(np.linalg.norm(err)) < 1e-12:
        # below numerical noise; moving would only churn the state
        return np.array(state.arm_joints)
    jac = np.empty((6, cfg.arm.dof))
    tip = ee.translation
    for i in range(cfg.arm.dof):
        jac[:3, i] = np.cross(axes[i], tip - origins[i])
        jac[3:, i] = w * axes[i]
    lam = cfg.arm.ik_damping
    gram = jac @ jac.T + (lam * lam) * np.eye(6)
    dq = jac.T @ np.linalg.solve(gram, err)
    step_cap = cfg.arm.max_joint_speed * dt
    dq = np.clip(dq, -step_cap, step_cap)
    out = state.arm_joints + dq
    lowers = np.array([j.lower for j in cfg.arm.joints])
    uppers = np.array([j.upper for j in cfg.arm.joints])
    return np.clip(out, lowers, uppers)


def _slew(current: float, target: float, rate: float, dt: float) -> float:
    delta = target - current
    cap = rate * dt
    if delta > cap:
        delta = cap
    elif delta < -cap:
        delta = -cap
    return current + delta


def advance_robot(state: RobotState, base_cmd: BaseCommand, ee_target_mount: Pose | None,
                  gripper_closed: bool, dt: float,
                  body_height_target: float | None = None,
                  body_pitch_target: float | None = None) -> RobotState:
    """Integrate one control tick: base velocities, posture channels, one IK
    step, gripper fraction. ee_target_mount is expressed in the arm-base
    frame; None holds the arm still. Mode semantics:

    - arm_only: base and posture frozen, commands to them ignored
    - decoupled: explicit base command applied; posture follows only the
      explicit height/pitch targets
    - whole_body: explicit base command applied, plus automatic base yaw and
      posture recruitment whenever the target sits outside the current
      annulus
    """
    cfg = state.config
    mode = state.control_mode
    target_pre = None
    if ee_target_mount is not None:
        target_pre = compose(mount_pose(state), ee_target_mount)

    base_xy = np.array(state.base_xy)
    base_yaw = state.base_yaw
    height = state.body_height
    pitch = state.body_pitch

    if mode != "arm_only":
        lin = base_cmd.linear_velocity
        omega = base_cmd.angular_velocity
        if mode == "whole_body":
            if target_pre is not None and not _in_annulus(
                cfg, shoulder_position(state), target_pre.translation, 0.0
            ):
                bearing = _bearing_to(state.base_xy, target_pre.translation)
                if bearing is not None:
                    omega = omega + cfg.control.recruit_yaw_gain * wrap_angle(bearing - base_yaw)
                posture = _recruit_posture(state, target_pre.translation)
                if posture is not None:
                    height = _slew(height, posture[0], cfg.body.height_speed, dt)
                    pitch = _slew(pitch, posture[1], cfg.body.pitch_speed, dt)
        elif mode == "decoupled":
            if body_height_target is not None:
                goal = min(max(body_height_target, cfg.body.height_min), cfg.body.height_max)
                height = _slew(height, goal, cfg.body.height_speed, dt)
            if body_pitch_target is not None:
                goal = min(max(body_pitch_target, -cfg.body.pitch_limit), cfg.body.pitch_limit)
                pitch = _slew(pitch, goal, cfg.body.pitch_speed, dt)
        speed = float(np.linalg.norm(lin))
        if speed > cfg.base.max_linear_speed:
            lin = lin * (cfg.base.max_linear_speed / speed)
        omega = min(max(omega, -cfg.base.max_angular_speed), cfg.base.max_angular_speed)
        if lin[0] != 0.0 or lin[1] != 0.0:
            cy, sy = math.cos(base_yaw), math.sin(base_yaw)
            base_xy = base_xy + dt * np.array([cy * lin[0] - sy * lin[1], sy * lin[0] + cy * lin[1]])
        if omega != 0.0:
            base_yaw = wrap_angle(base_yaw + dt * omega)

    moved = replace_posture(state, base_xy, base_yaw, height, pitch)
    if ee_target_mount is None:
        new_joints = moved.arm_joints
    else:
        # the target rides the arm base, so re-anchor it to the moved mount
        target_world = compose(mount_pose(moved), ee_target_mount)
        new_joints = ik_joint_update(moved, target_world, dt)

    rate = cfg.gripper.speed * dt
    frac = state.gripper_open_fraction
    frac = max(0.0, frac - rate) if gripper_closed else min(1.0, frac + rate)

    return RobotState(
        config=cfg,
        base_xy=base_xy,
        base_yaw=base_yaw,
        body_height=height,
        body_pitch=pitch,
        arm_joints=new_joints,
        gripper_open_fraction=frac,
        control_mode=mode,
    )


def replace_posture(state: RobotState, base_xy, base_yaw, height, pitch) -> RobotState:
    if (
        np.array_equal(base_xy, state.base_xy)
        and base_yaw == state.base_yaw
        and height == state.body_height
        and pitch == state.body_pitch
    ):
        return state
    return RobotState(
        config=state.config,
        base_xy=base_xy,
        base_yaw=base_yaw,
        body_height=height,
        body_pitch=pitch,
        arm_joints=state.arm_joints,
        gripper_open_fraction=state.gripper_open_fraction,
        control_mode=state.control_mode,
    )
