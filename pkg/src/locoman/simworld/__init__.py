from .robot import (
    CONTROL_MODES,
    RobotState,
    forward_kinematics,
    initial_robot_state,
    mount_pose,
    reachable,
    shoulder_position,
)
from .world import (
    WholeBodyCommand,
    WorldObject,
    WorldState,
    command_for_world_target,
    ee_position_error,
    hold_command,
    step,
)
from .sensors import CameraCapture, Observation, back_project, render_observation

__all__ = [
    "CONTROL_MODES",
    "RobotState",
    "forward_kinematics",
    "initial_robot_state",
    "mount_pose",
    "reachable",
    "shoulder_position",
    "WholeBodyCommand",
    "WorldObject",
    "WorldState",
    "command_for_world_target",
    "ee_position_error",
    "hold_command",
    "step",
    "CameraCapture",
    "Observation",
    "back_project",
    "render_observation",
]
