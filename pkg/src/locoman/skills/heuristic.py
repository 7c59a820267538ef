"""Analytical manipulation skills built as small stage machines.

Each skill localizes its target by peaking the attention map for its text
query, lifts the peak cell to a world point through the depth channel, and
walks a fixed stage sequence of end-effector goals. The wrist camera is
preferred once it sees the target confidently, the head camera otherwise.
End signals are 0.0 until the terminal stage and 1.0 from then on.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..attention import AttentionMap, localize, localize_subpixel
from ..errors import RejectedInputError
from ..geometry import BaseCommand, GripperCommand, Pose, compose, inverse, wrap_angle
from ..simworld import Observation, WholeBodyCommand, back_project, mount_pose, shoulder_position
from .base import Skill, SkillSpec, SkillStepOutput


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def reach_orientation(origin: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Tool orientation whose x axis points from origin toward the target.
    Yaw about the world z first, then pitch; roll stays free at zero, which
    keeps the orientation always reachable for the yaw-pitch-roll wrist."""
    d = np.asarray(point, dtype=float) - np.asarray(origin, dtype=float)
    horiz = math.hypot(d[0], d[1])
    bearing = math.atan2(d[1], d[0]) if horiz > 1e-9 else 0.0
    pitch = math.atan2(-d[2], horiz)
    return _rot_z(bearing) @ _rot_y(pitch)


class _StagedSkill(Skill):
    """Shared localization and command plumbing for the stage machines.

    Every stage machine opens with a seek stage that walks the base until the
    target sits inside the skill's working band of horizontal distances. The
    cameras cannot image the near floor, so a target that is not visible yet
    is handled by backing away until it enters the field of view.
    """

    # working band of base-to-target horizontal distance, overridden per skill
    _SEEK_BAND = (0.56, 0.64)

    def __init__(self, spec: SkillSpec):
        self.spec = spec
        if not spec.text_queries:
            raise RejectedInputError(f"skill '{spec.name}' needs a text query")
        self._query = spec.text_queries[0]
        p = spec.parameters
        self._min_peak = float(p.get("min_peak", 0.35))
        self._wrist_peak = float(p.get("wrist_peak", 0.6))
        self._seek_band = (
            float(p.get("seek_min", self._SEEK_BAND[0])),
            float(p.get("seek_max", self._SEEK_BAND[1])),
        )
        self._seek_backup = float(p.get("seek_backup_speed", 0.15))
        self._seek_bearing_tol = float(p.get("seek_bearing_tolerance", 0.3))
        self._last_point: np.ndarray | None = None
        self.reset()

    def _locate(self, obs: Observation, per_camera: Mapping[str, AttentionMap]) -> np.ndarray | None:
        for name, threshold in (("wrist", self._wrist_peak), ("head", self._min_peak)):
            cap = obs.captures.get(name)
            att = per_camera.get(name)
            if cap is None or att is None:
                continue
            (pr, pc), peak = localize(att)
            if peak < threshold:
                continue
            depth = float(cap.depth[pr, pc])
            if depth <= 0 or not math.isfinite(depth):
                continue
            row, col = localize_subpixel(att)
            return back_project(cap.pose, cap.config, col, row, depth)
        return None

    def _target(self, obs: Observation,
                attention: Mapping[str, Mapping[str, AttentionMap]]) -> np.ndarray | None:
        per_camera = attention.get(self._query)
        if per_camera is None:
            raise RejectedInputError(
                f"skill '{self.spec.name}' was not given attention for query '{self._query}'")
        point = self._locate(obs, per_camera)
        if point is not None:
            self._last_point = point
        return self._last_point

    def _goal_command(self, obs: Observation, position: np.ndarray,
                      rotation: np.ndarray, closed: bool) -> WholeBodyCommand:
        goal_world = Pose(rotation, position)
        goal_mount = compose(inverse(mount_pose(obs.robot)), goal_world)
        return WholeBodyCommand(base=BaseCommand.zero(), ee_target=goal_mount,
                                gripper=GripperCommand(closed=closed))

    @staticmethod
    def _hold(closed: bool) -> WholeBodyCommand:
        return WholeBodyCommand(base=BaseCommand.zero(), ee_target=None,
                                gripper=GripperCommand(closed=closed))

    @staticmethod
    def _ee(obs: Observation) -> np.ndarray:
        return obs.robot.ee_pose.translation


class GraspSkill(_StagedSkill):
    """Approach above the target, descend, close, retract.

    The grasp point is re-measured every tick until the gripper starts
    closing, after which the last estimate is frozen so the arm does not
    chase the object it is about to hold.
    """

    def __init__(self, spec: SkillSpec):
        p = spec.parameters
        self._approach_height = float(p.get("approach_height", 0.15))
        self._retract_height = float(p.get("retract_height", 0.15))
        self._stage_tol = float(p.get("stage_tolerance", 0.02))
        self._close_distance = float(p.get("close_distance", 0.035))
        self._closed_fraction = float(p.get("closed_fraction", 0.05))
        super().__init__(spec)

    def reset(self) -> None:
        self._stage = "approach"
        self._last_point = None
        self._anchor: tuple[np.ndarray, np.ndarray] | None = None

    def step(self, obs, attention):
        if self._stage == "done":
            return SkillStepOutput(self._hold(closed=True), 1.0)
        if self._stage in ("approach", "descend"):
            target = self._target(obs, attention)
            if target is None:
                return SkillStepOutput(self._hold(closed=False), 0.0)
            rot = reach_orientation(shoulder_position(obs.robot), target)
            ee = self._ee(obs)
            if self._stage == "approach":
                goal = target + np.array([0.0, 0.0, self._approach_height])
                if np.linalg.norm(ee - goal) < self._stage_tol:
                    self._stage = "descend"
                return SkillStepOutput(self._goal_command(obs, goal, rot, closed=False), 0.0)
            if np.linalg.norm(ee - target) <= self._close_distance:
                self._anchor = (target, rot)
                self._stage = "close"
            return SkillStepOutput(self._goal_command(obs, target, rot, closed=False), 0.0)
        anchor_point, anchor_rot = self._anchor
        if self._stage == "close":
            if obs.robot.gripper_open_fraction <= self._closed_fraction:
                self._stage = "retract"
            return SkillStepOutput(self._goal_command(obs, anchor_point, anchor_rot, closed=True), 0.0)
        # retract
        goal = anchor_point + np.array([0.0, 0.0, self._retract_height])
        if np.linalg.norm(self._ee(obs) - goal) < 0.03:
            self._stage = "done"
            return SkillStepOutput(self._hold(closed=True), 1.0)
        return SkillStepOutput(self._goal_command(obs, goal, anchor_rot, closed=True), 0.0)


class PlaceSkill(_StagedSkill):
    """Carry to a point above the localized receptacle and open the gripper."""

    def __init__(self, spec: SkillSpec):
        p = spec.parameters
        self._drop_height = float(p.get("drop_height", 0.25))
        self._stage_tol = float(p.get("stage_tolerance", 0.03))
        self._open_fraction = float(p.get("open_fraction", 0.95))
        super().__init__(spec)

    def reset(self) -> None:
        self._stage = "approach"
        self._last_point = None
        self._anchor = None

    def step(self, obs, attention):
        if self._stage == "done":
            return SkillStepOutput(self._hold(closed=False), 1.0)
        if self._stage == "approach":
            target = self._target(obs, attention)
            if target is None:
                return SkillStepOutput(self._hold(closed=True), 0.0)
            goal = target + np.array([0.0, 0.0, self._drop_height])
            rot = reach_orientation(shoulder_position(obs.robot), target)
            if np.linalg.norm(self._ee(obs) - goal) < self._stage_tol:
                self._anchor = (goal, rot)
                self._stage = "release"
            return SkillStepOutput(self._goal_command(obs, goal, rot, closed=True), 0.0)
        goal, rot = self._anchor
        if obs.robot.gripper_open_fraction >= self._open_fraction:
            self._stage = "done"
            return SkillStepOutput(self._hold(closed=False), 1.0)
        return SkillStepOutput(self._goal_command(obs, goal, rot, closed=False), 0.0)


class PressSkill(_StagedSkill):
    """Line up in front of the target, push a fixed depth past its surface
    along the approach direction, then withdraw. The gripper is left as the
    caller had it."""

    def __init__(self, spec: SkillSpec):
        p = spec.parameters
        self._approach_distance = float(p.get("approach_distance", 0.08))
        self._press_depth = float(p.get("press_depth", 0.02))
        self._stage_tol = float(p.get("stage_tolerance", 0.02))
        self._advance_tol = float(p.get("advance_tolerance", 0.012))
        self._withdraw_tol = float(p.get("withdraw_tolerance", 0.02))
        super().__init__(spec)

    def reset(self) -> None:
        self._stage = "approach"
        self._last_point = None
        self._anchor = None

    def _grip(self, obs) -> bool:
        return obs.robot.gripper_open_fraction < 0.5

    def step(self, obs, attention):
        closed = self._grip(obs)
        if self._stage == "done":
            return SkillStepOutput(self._hold(closed=closed), 1.0)
        if self._stage == "approach":
            target = self._target(obs, attention)
            if target is None:
                return SkillStepOutput(self._hold(closed=closed), 0.0)
            d = target - shoulder_position(obs.robot)
            horiz = math.hypot(d[0], d[1])
            direction = (np.array([d[0], d[1], 0.0]) / horiz) if horiz > 1e-9 else np.array([1.0, 0.0, 0.0])
            rot = reach_orientation(shoulder_position(obs.robot), target)
            goal = target - self._approach_distance * direction
            if np.linalg.norm(self._ee(obs) - goal) < self._stage_tol:
                self._anchor = (target, direction, rot)
                self._stage = "advance"
            return SkillStepOutput(self._goal_command(obs, goal, rot, closed=closed), 0.0)
        target, direction, rot = self._anchor
        if self._stage == "advance":
            goal = target + self._press_depth * direction
            if np.linalg.norm(self._ee(obs) - goal) < self._advance_tol:
                self._stage = "withdraw"
            return SkillStepOutput(self._goal_command(obs, goal, rot, closed=closed), 0.0)
        # withdraw
        goal = target - self._approach_distance * direction
        if np.linalg.norm(self._ee(obs) - goal) < self._withdraw_tol:
            self._stage = "done"
            return SkillStepOutput(self._hold(closed=closed), 1.0)
        return SkillStepOutput(self._goal_command(obs, goal, rot, closed=closed), 0.0)
