"""World state and the step transition: object attachment, drops onto
support surfaces, press latching, and the glue between commands and the
robot integrator. step is a pure function; states are immutable snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType

import numpy as np

from ..errors import RejectedInputError
from ..geometry import BaseCommand, GripperCommand, Pose, compose, inverse
from .robot import RobotState, advance_robot, mount_pose

MAX_STEP_DT = 0.1
DEFAULT_DT = 0.02


@dataclass(frozen=True)
class WorldObject:
    """A rigid scene element. Receptacles double as support surfaces (their
    rim height is where dropped items land); pressables latch `pressed` the
    first time the tool tip comes close enough."""

    id: str
    category: str
    pose: Pose
    graspable: bool = False
    attached_to_gripper: bool = False
    text_labels: tuple = ()
    half_extent: float = 0.02
    is_receptacle: bool = False
    footprint_radius: float = 0.0
    top_height: float = 0.0
    pressable: bool = False
    pressed: bool = False
    grasp_offset: Pose | None = None

    def __post_init__(self):
        if not self.id:
            raise RejectedInputError("object id must be non-empty")
        object.__setattr__(self, "text_labels", tuple(self.text_labels))
        if self.attached_to_gripper and self.grasp_offset is None:
            raise RejectedInputError(f"object '{self.id}' attached without a grasp offset")
        if self.is_receptacle and self.footprint_radius <= 0:
            raise RejectedInputError(f"receptacle '{self.id}' needs a positive footprint_radius")


@dataclass(frozen=True)
class WorldState:
    robot: RobotState
    objects: tuple
    waypoints: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    time: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        objects = tuple(self.objects)
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids):
            raise RejectedInputError("duplicate object ids in world")
        if sum(1 for o in objects if o.attached_to_gripper) > 1:
            raise RejectedInputError("more than one object attached to the gripper")
        object.__setattr__(self, "objects", objects)
        if not isinstance(self.waypoints, MappingProxyType):
            object.__setattr__(self, "waypoints", MappingProxyType(dict(self.waypoints)))

    def object_by_id(self, object_id: str) -> WorldObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise RejectedInputError(f"no object with id '{object_id}'")

    @property
    def attached_object(self) -> WorldObject | None:
        for obj in self.objects:
            if obj.attached_to_gripper:
                return obj
        return None


@dataclass(frozen=True)
class WholeBodyCommand:
    """One control tick's worth of intent. ee_target is relative to the arm
    base; None holds the arm. The two body_* fields are the decoupled mode's
    manual posture channel (ignored in the other modes)."""

    base: BaseCommand = field(default_factory=BaseCommand.zero)
    ee_target: Pose | None = None
    gripper: GripperCommand = field(default_factory=GripperCommand.open)
    body_height_target: float | None = None
    body_pitch_target: float | None = None


def hold_command(world: WorldState) -> WholeBodyCommand:
    """The null command: no base motion, arm held, gripper kept as-is."""
    grip = GripperCommand(closed=world.robot.gripper_open_fraction < 0.5)
    return WholeBodyCommand(base=BaseCommand.zero(), ee_target=None, gripper=grip)


def command_for_world_target(world: WorldState, target_world: Pose,
                             gripper: GripperCommand | None = None,
                             base: BaseCommand | None = None,
                             body_height_target: float | None = None,
                             body_pitch_target: float | None = None) -> WholeBodyCommand:
    """Express a world-frame EE target in the arm-base frame at the current
    posture. Callers re-issue this every tick so the target stays pinned in
    the world even while the base moves."""
    mount = mount_pose(world.robot)
    if gripper is None:
        gripper = GripperCommand(closed=world.robot.gripper_open_fraction < 0.5)
    return WholeBodyCommand(
        base=base if base is not None else BaseCommand.zero(),
        ee_target=compose(inverse(mount), target_world),
        gripper=gripper,
        body_height_target=body_height_target,
        body_pitch_target=body_pitch_target,
    )


def ee_position_error(world: WorldState, target_world) -> float:
    pos = target_world.translation if isinstance(target_world, Pose) else np.asarray(target_world, dtype=float)
    return float(np.linalg.norm(world.robot.ee_pose.translation - pos))


def _support_height(objects, x: float, y: float, below_z: float) -> float:
    """Top of the highest support surface under (x, y) that sits below the
    release height; the floor (z = 0) is always available."""
    best = 0.0
    for obj in objects:
        if not obj.is_receptacle:
            continue
        t = obj.pose.translation
        if math.hypot(x - t[0], y - t[1]) > obj.footprint_radius:
            continue
        top = t[2] + obj.top_height
        if top <= below_z + 1e-9 and top > best:
            best = top
    return best


def step(world: WorldState, cmd: WholeBodyCommand, dt: float = DEFAULT_DT) -> WorldState:
    """Advance the world by one control tick."""
    if not (0.0 < dt <= MAX_STEP_DT):
        raise RejectedInputError(f"dt must be in (0, {MAX_STEP_DT}], got {dt}")

    robot = advance_robot(
        world.robot,
        cmd.base,
        cmd.ee_target,
        cmd.gripper.closed,
        dt,
        body_height_target=cmd.body_height_target,
        body_pitch_target=cmd.body_pitch_target,
    )
    ee = robot.ee_pose
    objects = list(world.objects)

    # carried object rides the gripper rigidly
    for i, obj in enumerate(objects):
        if obj.attached_to_gripper:
            objects[i] = replace(obj, pose=compose(ee, obj.grasp_offset))

    held = next((o for o in objects if o.attached_to_gripper), None)

    if cmd.gripper.closed and robot.gripper_open_fraction <= 0.5 and held is None:
        # closing near a graspable object attaches the nearest one
        candidates = []
        for i, obj in enumerate(objects):
            if not obj.graspable or obj.attached_to_gripper:
                continue
            dist = float(np.linalg.norm(obj.pose.translation - ee.translation))
            if dist <= robot.config.gripper.grasp_radius:
                candidates.append((dist, obj.id, i))
        if candidates:
            candidates.sort()
            _, _, idx = candidates[0]
            grabbed = objects[idx]
            objects[idx] = replace(
                grabbed,
                attached_to_gripper=True,
                grasp_offset=compose(inverse(ee), grabbed.pose),
            )
    elif not cmd.gripper.closed and robot.gripper_open_fraction >= 0.5 and held is not None:
        # release: drop straight down onto whatever supports that spot
        idx = objects.index(held)
        t = held.pose.translation
        support = _support_height(
            (o for o in objects if o.id != held.id), float(t[0]), float(t[1]), float(t[2])
        )
        rest = Pose(held.pose.rotation, np.array([t[0], t[1], support + held.half_extent]))
        objects[idx] = replace(held, pose=rest, attached_to_gripper=False, grasp_offset=None)

    # pressables latch on tool-tip proximity
    press_radius = robot.config.gripper.press_radius
    for i, obj in enumerate(objects):
        if obj.pressable and not obj.pressed:
            if float(np.linalg.norm(obj.pose.translation - ee.translation)) <= press_radius:
                objects[i] = replace(obj, pressed=True)

    return WorldState(
        robot=robot,
        objects=tuple(objects),
        waypoints=world.waypoints,
        time=world.time + dt,
        rng_seed=world.rng_seed,
    )
