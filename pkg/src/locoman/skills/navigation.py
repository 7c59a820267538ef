"""Waypoint following for the planar base.

A PD law steers heading and speed: the base turns toward the goal, drives
forward with a gate that collapses when badly misaligned, then rotates in
place to the waypoint's final heading. Derivative terms use caller-threaded
memory so the function itself stays pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from ..errors import RejectedInputError
from ..geometry import BaseCommand, GripperCommand, Pose, wrap_angle, yaw
from ..simworld import Observation, WholeBodyCommand
from .base import AttentionMap, Skill, SkillSpec, SkillStepOutput


@dataclass(frozen=True)
class PDGains:
    kp_linear: float = 1.0
    kd_linear: float = 0.1
    kp_yaw: float = 2.5
    kd_yaw: float = 0.2
    max_linear: float = 0.6
    max_angular: float = 1.2
    position_tolerance: float = 0.05
    yaw_tolerance: float = 0.1

    def __post_init__(self):
        for name in ("kp_linear", "kd_linear", "kp_yaw", "kd_yaw"):
            if getattr(self, name) < 0:
                raise RejectedInputError(f"{name} must be >= 0")
        for name in ("max_linear", "max_angular", "position_tolerance", "yaw_tolerance"):
            if getattr(self, name) <= 0:
                raise RejectedInputError(f"{name} must be > 0")


class NavResult(NamedTuple):
    command: BaseCommand
    done: bool
    memory: tuple


def navigate_waypoint(current, target, gains: PDGains = PDGains(),
                      memory: tuple | None = None, dt: float = 0.02) -> NavResult:
    """One tick of waypoint control.

    current and target are (x, y, yaw) triples in the world frame. Done means
    position within gains.position_tolerance and heading within
    gains.yaw_tolerance, at which point the command is exactly zero. Pass the
    returned memory back in for derivative damping; None starts with a zero
    derivative.
    """
    if dt <= 0:
        raise RejectedInputError(f"dt must be > 0, got {dt}")
    x, y, yaw = (float(v) for v in current)
    tx, ty, tyaw = (float(v) for v in target)
    dx, dy = tx - x, ty - y
    dist = math.hypot(dx, dy)
    yaw_err_final = wrap_angle(tyaw - yaw)
    if dist < gains.position_tolerance and abs(yaw_err_final) < gains.yaw_tolerance:
        return NavResult(BaseCommand.zero(), True, (0.0, 0.0))

    # close to the goal the heading objective switches to the waypoint yaw
    if dist >= gains.position_tolerance:
        heading_err = wrap_angle(math.atan2(dy, dx) - yaw)
    else:
        heading_err = yaw_err_final
    prev_dist, prev_heading = memory if memory is not None else (dist, heading_err)

    lin = gains.kp_linear * dist + gains.kd_linear * (dist - prev_dist) / dt
    lin = min(max(lin, 0.0), gains.max_linear)
    lin *= max(0.0, math.cos(heading_err)) ** 2
    if dist < gains.position_tolerance:
        lin = 0.0
    omega = gains.kp_yaw * heading_err + gains.kd_yaw * wrap_angle(heading_err - prev_heading) / dt
    omega = min(max(omega, -gains.max_angular), gains.max_angular)
    return NavResult(BaseCommand(np.array([lin, 0.0]), omega), False, (dist, heading_err))


class NavigationSkill(Skill):
    """Drives the base to a named waypoint while the arm holds still."""

    def __init__(self, spec: SkillSpec, target: Pose, gains: PDGains = PDGains(), dt: float = 0.02):
        self.spec = spec
        self._target = (float(target.translation[0]), float(target.translation[1]), yaw(target))
        self._gains = gains
        self._dt = float(spec.parameters.get("dt", dt))
        self._memory: tuple | None = None

    def reset(self) -> None:
        self._memory = None

    def step(self, obs: Observation, attention: Mapping[str, Mapping[str, AttentionMap]]) -> SkillStepOutput:
        current = (obs.robot.base_xy[0], obs.robot.base_xy[1], obs.robot.base_yaw)
        result = navigate_waypoint(current, self._target, self._gains,
                                   memory=self._memory, dt=self._dt)
        self._memory = result.memory
        grip = GripperCommand(closed=obs.robot.gripper_open_fraction < 0.5)
        cmd = WholeBodyCommand(base=result.command, ee_target=None, gripper=grip)
        return SkillStepOutput(cmd, 1.0 if result.done else 0.0)
