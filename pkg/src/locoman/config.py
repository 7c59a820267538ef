"""Robot description loading and validation.

The YAML schema is versioned; every field is checked here so a bad config
fails at load time with a pointed message instead of deep inside a rollout.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1


def _vec(raw, n, where) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=float).reshape(n)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected {n} numbers, got {raw!r}") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: non-finite value")
    arr.setflags(write=False)
    return arr


def _num(raw, where, positive=False) -> float:
    if not isinstance(raw, (int, float)) or isinstance(raw, bool):
        raise ConfigError(f"{where}: expected a number, got {raw!r}")
    v = float(raw)
    if not np.isfinite(v):
        raise ConfigError(f"{where}: non-finite value")
    if positive and v <= 0:
        raise ConfigError(f"{where}: must be > 0, got {v}")
    return v


@dataclass(frozen=True)
class JointSpec:
    axis: np.ndarray
    offset: np.ndarray
    lower: float
    upper: float


@dataclass(frozen=True)
class ArmConfig:
    joints: tuple
    mount: np.ndarray
    start_joints: np.ndarray
    max_joint_speed: float
    ik_damping: float
    ik_rot_weight: float
    reach_min: float
    reach_efficiency: float

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def reach_max(self) -> float:
        # stretched-out length from the shoulder: offsets of every joint
        # after the first (the first offset is the riser below the shoulder)
        return float(sum(np.linalg.norm(j.offset) for j in self.joints[1:]))

    @property
    def reach_effective(self) -> float:
        return self.reach_efficiency * self.reach_max


@dataclass(frozen=True)
class BodyConfig:
    height_min: float
    height_max: float
    default_height: float
    pitch_limit: float
    height_speed: float
    pitch_speed: float


@dataclass(frozen=True)
class BaseLimits:
    max_linear_speed: float
    max_angular_speed: float


@dataclass(frozen=True)
class GripperConfig:
    grasp_radius: float
    press_radius: float
    speed: float


@dataclass(frozen=True)
class ControlConfig:
    position_tolerance: float
    rotation_tolerance: float
    recruit_margin: float
    recruit_yaw_gain: float
    recruit_grid: int


@dataclass(frozen=True)
class CameraConfig:
    name: str
    mount: str
    offset: np.ndarray
    tilt: float
    focal: float
    width: int
    height: int
    kernel_sigma: float
    near: float


@dataclass(frozen=True)
class RobotConfig:
    arm: ArmConfig
    body: BodyConfig
    base: BaseLimits
    gripper: GripperConfig
    control: ControlConfig
    cameras: tuple
    home_ee_position: np.ndarray
    home_ee_quat: np.ndarray

    def camera(self, name: str) -> CameraConfig:
        for cam in self.cameras:
            if cam.name == name:
                return cam
        raise ConfigError(f"no camera named '{name}' (have: {', '.join(c.name for c in self.cameras)})")


def _parse_joint(raw, idx) -> JointSpec:
    where = f"arm.joints[{idx}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    axis = _vec(raw.get("axis"), 3, f"{where}.axis")
    norm = float(np.linalg.norm(axis))
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(f"{where}.axis: must be unit length, norm is {norm}")
    offset = _vec(raw.get("offset"), 3, f"{where}.offset")
    limits = raw.get("limits")
    if not (isinstance(limits, list) and len(limits) == 2):
        raise ConfigError(f"{where}.limits: expected [lower, upper]")
    lower = _num(limits[0], f"{where}.limits[0]")
    upper = _num(limits[1], f"{where}.limits[1]")
    if lower >= upper:
        raise ConfigError(f"{where}.limits: lower {lower} >= upper {upper}")
    return JointSpec(axis=axis, offset=offset, lower=lower, upper=upper)


def _parse_camera(raw, idx) -> CameraConfig:
    where = f"cameras[{idx}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{where}.name: expected a non-empty string")
    mount = raw.get("mount")
    if mount not in ("body", "ee"):
        raise ConfigError(f"{where}.mount: expected 'body' or 'ee', got {mount!r}")
    width = raw.get("width")
    height = raw.get("height")
    for label, v in (("width", width), ("height", height)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{where}.{label}: expected a positive integer, got {v!r}")
    return CameraConfig(
        name=name,
        mount=mount,
        offset=_vec(raw.get("offset"), 3, f"{where}.offset"),
        tilt=_num(raw.get("tilt"), f"{where}.tilt"),
        focal=_num(raw.get("focal"), f"{where}.focal", positive=True),
        width=width,
        height=height,
        kernel_sigma=_num(raw.get("kernel_sigma"), f"{where}.kernel_sigma", positive=True),
        near=_num(raw.get("near"), f"{where}.near", positive=True),
    )


def parse_robot_config(raw: dict) -> RobotConfig:
    if not isinstance(raw, dict):
        raise ConfigError("robot config: top level must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"robot config: schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")

    arm_raw = raw.get("arm")
    if not isinstance(arm_raw, dict):
        raise ConfigError("robot config: missing 'arm' section")
    joints_raw = arm_raw.get("joints")
    if not isinstance(joints_raw, list) or not joints_raw:
        raise ConfigError("arm.joints: expected a non-empty list")
    joints = tuple(_parse_joint(j, i) for i, j in enumerate(joints_raw))
    start = _vec(arm_raw.get("start_joints"), len(joints), "arm.start_joints")
    for i, (q, j) in enumerate(zip(start, joints)):
        if not (j.lower <= q <= j.upper):
            raise ConfigError(f"arm.start_joints[{i}]: {q} outside limits [{j.lower}, {j.upper}]")
    efficiency = _num(arm_raw.get("reach_efficiency"), "arm.reach_efficiency", positive=True)
    if efficiency > 1.0:
        raise ConfigError(f"arm.reach_efficiency: must be <= 1, got {efficiency}")
    arm = ArmConfig(
        joints=joints,
        mount=_vec(arm_raw.get("mount"), 3, "arm.mount"),
        start_joints=start,
        max_joint_speed=_num(arm_raw.get("max_joint_speed"), "arm.max_joint_speed", positive=True),
        ik_damping=_num(arm_raw.get("ik_damping"), "arm.ik_damping", positive=True),
        ik_rot_weight=_num(arm_raw.get("ik_rot_weight"), "arm.ik_rot_weight", positive=True),
        reach_min=_num(arm_raw.get("reach_min"), "arm.reach_min", positive=True),
        reach_efficiency=efficiency,
    )
    if arm.reach_min >= arm.reach_effective:
        raise ConfigError("arm.reach_min: inner radius exceeds the effective reach")

    body_raw = raw.get("body")
    if not isinstance(body_raw, dict):
        raise ConfigError("robot config: missing 'body' section")
    height_range = body_raw.get("height_range")
    if not (isinstance(height_range, list) and len(height_range) == 2):
        raise ConfigError("body.height_range: expected [min, max]")
    h_min = _num(height_range[0], "body.height_range[0]", positive=True)
    h_max = _num(height_range[1], "body.height_range[1]", positive=True)
    if h_min >= h_max:
        raise ConfigError(f"body.height_range: min {h_min} >= max {h_max}")
    default_height = _num(body_raw.get("default_height"), "body.default_height", positive=True)
    if not (h_min <= default_height <= h_max):
        raise ConfigError(f"body.default_height: {default_height} outside [{h_min}, {h_max}]")
    body = BodyConfig(
        height_min=h_min,
        height_max=h_max,
        default_height=default_height,
        pitch_limit=_num(body_raw.get("pitch_limit"), "body.pitch_limit", positive=True),
        height_speed=_num(body_raw.get("height_speed"), "body.height_speed", positive=True),
        pitch_speed=_num(body_raw.get("pitch_speed"), "body.pitch_speed", positive=True),
    )

    base_raw = raw.get("base")
    if not isinstance(base_raw, dict):
        raise ConfigError("robot config: missing 'base' section")
    base = BaseLimits(
        max_linear_speed=_num(base_raw.get("max_linear_speed"), "base.max_linear_speed", positive=True),
        max_angular_speed=_num(base_raw.get("max_angular_speed"), "base.max_angular_speed", positive=True),
    )

    grip_raw = raw.get("gripper")
    if not isinstance(grip_raw, dict):
        raise ConfigError("robot config: missing 'gripper' section")
    gripper = GripperConfig(
        grasp_radius=_num(grip_raw.get("grasp_radius"), "gripper.grasp_radius", positive=True),
        press_radius=_num(grip_raw.get("press_radius"), "gripper.press_radius", positive=True),
        speed=_num(grip_raw.get("speed"), "gripper.speed", positive=True),
    )

    ctrl_raw = raw.get("control")
    if not isinstance(ctrl_raw, dict):
        raise ConfigError("robot config: missing 'control' section")
    grid = ctrl_raw.get("recruit_grid")
    if not isinstance(grid, int) or isinstance(grid, bool) or grid < 2:
        raise ConfigError(f"control.recruit_grid: expected an integer >= 2, got {grid!r}")
    control = ControlConfig(
        position_tolerance=_num(ctrl_raw.get("position_tolerance"), "control.position_tolerance", positive=True),
        rotation_tolerance=_num(ctrl_raw.get("rotation_tolerance"), "control.rotation_tolerance", positive=True),
        recruit_margin=_num(ctrl_raw.get("recruit_margin"), "control.recruit_margin", positive=True),
        recruit_yaw_gain=_num(ctrl_raw.get("recruit_yaw_gain"), "control.recruit_yaw_gain", positive=True),
        recruit_grid=grid,
    )

    cams_raw = raw.get("cameras")
    if not isinstance(cams_raw, list) or not cams_raw:
        raise ConfigError("robot config: missing 'cameras' section")
    cameras = tuple(_parse_camera(c, i) for i, c in enumerate(cams_raw))
    names = [c.name for c in cameras]
    if len(set(names)) != len(names):
        raise ConfigError("cameras: duplicate names")

    return RobotConfig(
        arm=arm,
        body=body,
        base=base,
        gripper=gripper,
        control=control,
        cameras=cameras,
        home_ee_position=_vec(raw.get("home_ee_position"), 3, "home_ee_position"),
        home_ee_quat=_vec(raw.get("home_ee_quat"), 4, "home_ee_quat"),
    )


def load_robot_config(path=None) -> RobotConfig:
    """Load a robot YAML; with no path, the packaged default."""
    if path is None:
        source = resources.files("locoman.configs").joinpath("robot_default.yaml")
        text = source.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"robot config: invalid YAML: {exc}") from exc
    return parse_robot_config(raw)
