"""Synthetic perception: pinhole cameras that render embedding-space feature
maps instead of pixels.

Camera frames follow the usual optical convention: +z forward, +x right,
+y down. Each feature cell blends the background embedding with the
embedding of the nearest visible object's category, weighted by a Gaussian
kernel around the object's continuous projected center. A depth map allows
cells to be lifted back into the world.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from ..attention import EmbeddingBank, FeatureMap
from ..config import CameraConfig
from ..errors import ConfigError, RejectedInputError
from ..geometry import Pose, compose
from .robot import RobotState, base_pose
from .world import WorldState

# columns: camera x (right) -> -y body, camera y (down) -> -z body,
# camera z (forward) -> +x body
_CAM_ALIGN = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)

DOMINANCE_THRESHOLD = 0.15
BACKGROUND_LABEL = "background"


def _tilt(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def camera_pose(robot: RobotState, cam: CameraConfig) -> Pose:
    """World pose of a camera given its mount."""
    local = Pose(_tilt(cam.tilt) @ _CAM_ALIGN, cam.offset)
    if cam.mount == "body":
        carrier = compose(base_pose(robot), Pose(
            _tilt(robot.body_pitch), np.array([0.0, 0.0, robot.body_height])
        ))
    elif cam.mount == "ee":
        carrier = robot.ee_pose
    else:
        raise ConfigError(f"camera '{cam.name}': unknown mount '{cam.mount}'")
    return compose(carrier, local)


def project_point(cam_pose: Pose, cam: CameraConfig, point_world) -> tuple[float, float, float] | None:
    """(col, row, depth) in continuous cell coordinates, or None when the
    point is behind the near plane or outside the image."""
    p = np.asarray(point_world, dtype=float).reshape(3)
    local = cam_pose.rotation.T @ (p - cam_pose.translation)
    depth = float(local[2])
    if depth <= cam.near:
        return None
    cx = (cam.width - 1) / 2.0
    cy = (cam.height - 1) / 2.0
    u = cam.focal * float(local[0]) / depth + cx
    v = cam.focal * float(local[1]) / depth + cy
    if not (-0.5 <= u <= cam.width - 0.5 and -0.5 <= v <= cam.height - 0.5):
        return None
    return u, v, depth


def back_project(cam_pose: Pose, cam: CameraConfig, u: float, v: float, depth: float) -> np.ndarray:
    """Lift a cell coordinate and depth back to a world point."""
    if depth <= 0 or not math.isfinite(depth):
        raise RejectedInputError(f"cannot back-project depth {depth}")
    cx = (cam.width - 1) / 2.0
    cy = (cam.height - 1) / 2.0
    ray = np.array([(u - cx) / cam.focal, (v - cy) / cam.focal, 1.0])
    return cam_pose.rotation @ (depth * ray) + cam_pose.translation


@dataclass(frozen=True)
class CameraCapture:
    """One camera's output for a tick."""

    name: str
    pose: Pose
    config: CameraConfig
    features: FeatureMap
    depth: np.ndarray
    projections: MappingProxyType  # object id -> (u, v, depth) for visible objects

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)
        if not isinstance(self.projections, MappingProxyType):
            object.__setattr__(self, "projections", MappingProxyType(dict(self.projections)))


@dataclass(frozen=True)
class Observation:
    """Everything a skill or policy sees at one tick."""

    time: float
    robot: RobotState
    proprio: np.ndarray
    captures: MappingProxyType  # camera name -> CameraCapture

    def __post_init__(self):
        p = np.asarray(self.proprio, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "proprio", p)
        if not isinstance(self.captures, MappingProxyType):
            object.__setattr__(self, "captures", MappingProxyType(dict(self.captures)))


def proprio_vector(robot: RobotState) -> np.ndarray:
    """Canonical proprioception layout:
    [x, y, yaw, height, pitch, joints x dof, gripper, ee xyz, ee quat wxyz]."""
    quat = robot.ee_pose.to_quat()
    return np.concatenate(
        [
            robot.base_xy,
            [robot.base_yaw, robot.body_height, robot.body_pitch],
            robot.arm_joints,
            [robot.gripper_open_fraction],
            robot.ee_pose.translation,
            quat,
        ]
    )


def _floor_depths(cam_pose: Pose, cam: CameraConfig) -> np.ndarray:
    """Depth at which each cell's ray meets the floor plane (inf if never)."""
    cx = (cam.width - 1) / 2.0
    cy = (cam.height - 1) / 2.0
    us = (np.arange(cam.width) - cx) / cam.focal
    vs = (np.arange(cam.height) - cy) / cam.focal
    uu, vv = np.meshgrid(us, vs)
    rays = np.stack([uu, vv, np.ones_like(uu)], axis=-1)  # H x W x 3, camera frame
    world_z = rays @ cam_pose.rotation.T[:, 2]  # z component of each world ray
    origin_z = float(cam_pose.translation[2])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(world_z < -1e-9, -origin_z / world_z, np.inf)
    return np.where(t > cam.near, t, np.inf)


def render_camera(world: WorldState, cam: CameraConfig, bank: EmbeddingBank,
                  background_label: str = BACKGROUND_LABEL) -> CameraCapture:
    if background_label not in bank:
        raise ConfigError(f"embedding bank lacks the '{background_label}' entry needed for rendering")
    pose = camera_pose(world.robot, cam)
    bg = np.asarray(bank.embedding(background_label).vector, dtype=float)
    dim = bg.shape[0]

    projections = {}
    centers = []
    for obj in sorted(world.objects, key=lambda o: o.id):
        hit = project_point(pose, cam, obj.pose.translation)
        if hit is None:
            continue
        if obj.category not in bank:
            raise ConfigError(f"embedding bank lacks an entry for category '{obj.category}'")
        projections[obj.id] = hit
        centers.append((hit, np.asarray(bank.embedding(obj.category).vector, dtype=float)))

    rows = np.arange(cam.height, dtype=float)[:, None]
    cols = np.arange(cam.width, dtype=float)[None, :]
    feats = np.broadcast_to(bg, (cam.height, cam.width, dim)).copy()
    depth = _floor_depths(pose, cam)

    if centers:
        sig2 = 2.0 * cam.kernel_sigma * cam.kernel_sigma
        weights = np.stack(
            [
                np.exp(-(((cols - u) ** 2) + ((rows - v) ** 2)) / sig2)
                for (u, v, _), _ in centers
            ]
        )  # n x H x W
        dominant = np.argmax(weights, axis=0)  # first max wins: id-sorted order
        wmax = np.take_along_axis(weights, dominant[None], axis=0)[0]
        emb = np.stack([vec for _, vec in centers])  # n x C
        obj_feats = emb[dominant]  # H x W x C
        w = wmax[..., None]
        feats = w * obj_feats + (1.0 - w) * feats
        obj_depths = np.array([d for (_, _, d), _ in centers])
        cell_obj_depth = obj_depths[dominant]
        depth = np.where(wmax >= DOMINANCE_THRESHOLD, cell_obj_depth, depth)

    return CameraCapture(
        name=cam.name,
        pose=pose,
        config=cam,
        features=FeatureMap(feats),
        depth=depth,
        projections=MappingProxyType(projections),
    )


def render_observation(world: WorldState, bank: EmbeddingBank,
                       cameras=None, background_label: str = BACKGROUND_LABEL) -> Observation:
    """Render the given cameras (default: all configured) plus proprioception.
    Deterministic: same world and bank give bit-identical output."""
    cams = world.robot.config.cameras if cameras is None else tuple(
        world.robot.config.camera(name) for name in cameras
    )
    captures = {
        cam.name: render_camera(world, cam, bank, background_label) for cam in cams
    }
    return Observation(
        time=world.time,
        robot=world.robot,
        proprio=proprio_vector(world.robot),
        captures=MappingProxyType(captures),
    )
