"""Demonstration retrieval policy with action chunking.

Training is storage: every demonstration tick contributes a feature vector
(proprioception plus the pooled attention grid) and the chunk of the next k
actions. Inference finds the nearest stored feature by Euclidean distance
and replays its chunk; chunks born on different ticks are blended with
exponentially decaying weights so the executed command changes smoothly.

Actions travel as fixed-width vectors:

    [0:3]  base command (vx, vy, yaw rate)
    [3:6]  end-effector target position, arm-base frame
    [6:10] end-effector target quaternion (w, x, y, z)
    [10]   gripper, 1 closed / 0 open
    [11]   1 when an end-effector target is present, 0 for hold

The manual posture channel of decoupled control is deliberately not part of
the codec; demonstrations for learning are whole-body recordings.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..attention import AttentionMap, pool_attention
from ..errors import ConfigError, CorruptFileError, RejectedInputError
from ..geometry import BaseCommand, GripperCommand, Pose
from ..simworld import Observation, WholeBodyCommand
from .base import Skill, SkillSpec, SkillStepOutput

ACTION_DIM = 12
_BASE = slice(0, 3)
_EE_POS = slice(3, 6)
_EE_QUAT = slice(6, 10)
_GRIP = 10
_HAS_EE = 11

_POLICY_MAGIC = "locopolicy"
_POLICY_VERSION = 1


def encode_action(cmd: WholeBodyCommand) -> np.ndarray:
    """Flatten a command to the fixed 12-dim layout."""
    vec = np.zeros(ACTION_DIM)
    vec[0:2] = cmd.base.linear_velocity
    vec[2] = cmd.base.angular_velocity
    if cmd.ee_target is not None:
        vec[_EE_POS] = cmd.ee_target.translation
        vec[_EE_QUAT] = cmd.ee_target.to_quat()
        vec[_HAS_EE] = 1.0
    else:
        vec[6] = 1.0  # identity quaternion placeholder
    vec[_GRIP] = 1.0 if cmd.gripper.closed else 0.0
    return vec


def decode_action(vec: np.ndarray) -> WholeBodyCommand:
    arr = np.asarray(vec, dtype=float)
    if arr.shape != (ACTION_DIM,):
        raise RejectedInputError(f"action vector must have shape ({ACTION_DIM},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError("action vector contains non-finite values")
    ee = None
    if arr[_HAS_EE] > 0.5:
        quat = arr[_EE_QUAT]
        norm = float(np.linalg.norm(quat))
        if norm <= 1e-9:
            raise RejectedInputError("action vector carries a zero quaternion")
        ee = Pose.from_quat(quat / norm, arr[_EE_POS])
    return WholeBodyCommand(
        base=BaseCommand(arr[0:2].copy(), float(arr[2])),
        ee_target=ee,
        gripper=GripperCommand(closed=bool(arr[_GRIP] > 0.5)),
    )


def policy_features(obs: Observation, att: AttentionMap,
                    pool_rows: int = 8, pool_cols: int = 8) -> np.ndarray:
    """Feature vector a stored demonstration tick is indexed by."""
    pooled = pool_attention(att, pool_rows, pool_cols)
    return np.concatenate([obs.proprio, pooled.ravel()])


@dataclass(frozen=True)
class ChunkedPolicy:
    """Frozen nearest-neighbor dataset: one row per demonstration tick."""

    features: np.ndarray       # N x F
    action_chunks: np.ndarray  # N x chunk_size x ACTION_DIM
    end_chunks: np.ndarray     # N x chunk_size
    chunk_size: int = 20
    decay: float = 0.1
    neighbors: int = 1
    query: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        acts = np.asarray(self.action_chunks, dtype=float)
        ends = np.asarray(self.end_chunks, dtype=float)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise RejectedInputError(f"features must be N x F with N >= 1, got {feats.shape}")
        n = feats.shape[0]
        if acts.shape != (n, self.chunk_size, ACTION_DIM):
            raise RejectedInputError(
                f"action chunks must be {n} x {self.chunk_size} x {ACTION_DIM}, got {acts.shape}")
        if ends.shape != (n, self.chunk_size):
            raise RejectedInputError(f"end chunks must be {n} x {self.chunk_size}, got {ends.shape}")
        if self.chunk_size < 1 or self.neighbors < 1:
            raise RejectedInputError("chunk_size and neighbors must be >= 1")
        if not (np.isfinite(self.decay) and self.decay >= 0):
            raise RejectedInputError(f"decay must be finite and >= 0, got {self.decay}")
        for arr, name in ((feats, "features"), (acts, "action_chunks"), (ends, "end_chunks")):
            if not np.all(np.isfinite(arr)):
                raise RejectedInputError(f"{name} contain non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "action_chunks", acts)
        object.__setattr__(self, "end_chunks", ends)

    def __len__(self) -> int:
        return self.features.shape[0]

    @classmethod
    def build(cls, features: np.ndarray, actions: np.ndarray, end_labels: np.ndarray,
              chunk_size: int = 20, decay: float = 0.1, neighbors: int = 1,
              query: str = "") -> "ChunkedPolicy":
        """Assemble chunks from per-tick arrays. Chunks that run past the end
        of the demonstration repeat its final action."""
        feats = np.asarray(features, dtype=float)
        acts = np.asarray(actions, dtype=float)
        ends = np.asarray(end_labels, dtype=float)
        if feats.ndim != 2 or acts.ndim != 2 or acts.shape[1] != ACTION_DIM:
            raise RejectedInputError("build expects features N x F and actions N x 12")
        n = feats.shape[0]
        if acts.shape[0] != n or ends.shape != (n,):
            raise RejectedInputError("features, actions, and end labels must share their length")
        if chunk_size < 1:
            raise RejectedInputError("chunk_size must be >= 1")
        idx = np.minimum(np.arange(n)[:, None] + np.arange(chunk_size)[None, :], n - 1)
        return cls(features=feats, action_chunks=acts[idx], end_chunks=ends[idx],
                   chunk_size=chunk_size, decay=decay, neighbors=neighbors, query=query)


def policy_infer(policy: ChunkedPolicy, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Retrieve the action and end-signal chunks for a feature vector.

    Nearest neighbor by Euclidean distance; exact ties resolve to the lowest
    stored index. With neighbors > 1 the retrieved chunks are averaged.
    """
    f = np.asarray(features, dtype=float)
    if f.shape != (policy.features.shape[1],):
        raise RejectedInputError(
            f"feature vector must have dimension {policy.features.shape[1]}, got {f.shape}")
    d2 = np.sum((policy.features - f) ** 2, axis=1)
    if policy.neighbors == 1:
        best = int(np.argmin(d2))
        return policy.action_chunks[best], policy.end_chunks[best]
    order = np.argsort(d2, kind="stable")[: policy.neighbors]
    return (np.mean(policy.action_chunks[order], axis=0),
            np.mean(policy.end_chunks[order], axis=0))


def temporal_ensemble(entries: Sequence[tuple[int, np.ndarray]], decay: float,
                      layout: str = "command") -> np.ndarray:
    """Blend per-chunk contributions for the current tick.

    Each entry is (age, vector) where age counts ticks since the chunk was
    retrieved; weights are exp(-decay * age), normalized. The command layout
    averages linear components, renormalizes a sign-aligned quaternion
    average, and settles the gripper and target-presence bits by weighted
    majority. The linear layout is a plain weighted mean.
    """
    if len(entries) == 0:
        raise RejectedInputError("temporal ensemble needs at least one contribution")
    if not (np.isfinite(decay) and decay >= 0):
        raise RejectedInputError(f"decay must be finite and >= 0, got {decay}")
    ages = np.array([float(age) for age, _ in entries])
    if np.any(ages < 0):
        raise RejectedInputError("contribution ages must be >= 0")
    vectors = np.array([np.asarray(v, dtype=float) for _, v in entries])
    if vectors.ndim != 2:
        raise RejectedInputError("contributions must share one vector shape")
    weights = np.exp(-decay * ages)
    weights = weights / np.sum(weights)

    if layout == "linear":
        return weights @ vectors
    if layout != "command":
        raise RejectedInputError(f"unknown ensemble layout '{layout}'")
    if vectors.shape[1] != ACTION_DIM:
        raise RejectedInputError(
            f"command layout needs {ACTION_DIM}-dim vectors, got {vectors.shape[1]}")

    out = np.zeros(ACTION_DIM)
    out[_BASE] = weights @ vectors[:, _BASE]
    closed_mass = float(np.sum(weights[vectors[:, _GRIP] > 0.5]))
    out[_GRIP] = 1.0 if closed_mass > 0.5 else 0.0
    has_mass = float(np.sum(weights[vectors[:, _HAS_EE] > 0.5]))
    if has_mass > 0.5:
        out[_HAS_EE] = 1.0
        mask = vectors[:, _HAS_EE] > 0.5
        w = weights[mask] / np.sum(weights[mask])
        sub = vectors[mask]
        out[_EE_POS] = w @ sub[:, _EE_POS]
        quats = sub[:, _EE_QUAT].copy()
        signs = np.where(quats @ quats[0] < 0, -1.0, 1.0)
        quat = (w * signs) @ quats
        norm = float(np.linalg.norm(quat))
        if norm <= 1e-9:
            raise RejectedInputError("quaternion contributions cancel out")
        out[_EE_QUAT] = quat / norm
    else:
        out[6] = 1.0
    return out


def save_policy(policy: ChunkedPolicy, path) -> None:
    """Write the dataset: one JSON header line, then little-endian float64
    payloads for features, action chunks, and end chunks, then a CRC32 line."""
    n, f = policy.features.shape
    header = {
        "format": _POLICY_MAGIC,
        "version": _POLICY_VERSION,
        "count": n,
        "feature_dim": f,
        "action_dim": ACTION_DIM,
        "chunk_size": policy.chunk_size,
        "decay": policy.decay,
        "neighbors": policy.neighbors,
        "query": policy.query,
    }
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for arr in (policy.features, policy.action_chunks, policy.end_chunks)
    )
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n" + payload
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(zlib.crc32(blob).to_bytes(4, "little"))


def load_policy(path) -> ChunkedPolicy:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 5 or b"\n" not in blob:
        raise CorruptFileError(f"policy file {path} is too short")
    body, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(body).to_bytes(4, "little") != crc_bytes:
        raise CorruptFileError(f"policy file {path} failed its checksum")
    header_line, _, payload = body.partition(b"\n")
    try:
        header = json.loads(header_line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"policy file {path} has an unreadable header") from exc
    if not isinstance(header, dict) or header.get("format") != _POLICY_MAGIC:
        raise CorruptFileError(f"policy file {path} has the wrong format marker")
    if header.get("version") != _POLICY_VERSION:
        raise CorruptFileError(f"policy file {path}: unsupported version {header.get('version')}")
    try:
        n = int(header["count"])
        f = int(header["feature_dim"])
        a = int(header["action_dim"])
        k = int(header["chunk_size"])
        decay = float(header["decay"])
        neighbors = int(header["neighbors"])
        query = str(header.get("query", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"policy file {path} has a malformed header") from exc
    if a != ACTION_DIM or n < 1 or f < 1 or k < 1:
        raise CorruptFileError(f"policy file {path} declares impossible dimensions")
    expected = 8 * (n * f + n * k * a + n * k)
    if len(payload) != expected:
        raise CorruptFileError(
            f"policy file {path}: payload is {len(payload)} bytes, expected {expected}")
    cursor = 0

    def take(count):
        nonlocal cursor
        out = np.frombuffer(payload, dtype="<f8", count=count, offset=cursor * 8)
        cursor += count
        return out.astype(float)

    feats = take(n * f).reshape(n, f)
    acts = take(n * k * a).reshape(n, k, a)
    ends = take(n * k).reshape(n, k)
    try:
        return ChunkedPolicy(features=feats, action_chunks=acts, end_chunks=ends,
                             chunk_size=k, decay=decay, neighbors=neighbors, query=query)
    except RejectedInputError as exc:
        raise CorruptFileError(f"policy file {path} holds invalid data: {exc}") from exc


class ImitationSkill(Skill):
    """Executes a ChunkedPolicy with per-tick retrieval and ensembling."""

    def __init__(self, spec: SkillSpec, policy: ChunkedPolicy):
        if not spec.text_queries:
            raise ConfigError(f"skill '{spec.name}' needs a text query for its features")
        if not isinstance(policy, ChunkedPolicy):
            raise ConfigError(f"skill '{spec.name}' needs a ChunkedPolicy, got {type(policy).__name__}")
        self.spec = spec
        self._policy = policy
        self._query = spec.text_queries[0]
        self.reset()

    def reset(self) -> None:
        self._tick = 0
        self._pending: list[tuple[int, np.ndarray, np.ndarray]] = []

    def step(self, obs: Observation, attention: Mapping[str, Mapping[str, AttentionMap]]) -> SkillStepOutput:
        per_camera = attention.get(self._query)
        if per_camera is None or "head" not in per_camera:
            raise RejectedInputError(
                f"skill '{self.spec.name}' needs head-camera attention for '{self._query}'")
        features = policy_features(obs, per_camera["head"])
        chunk, ends = policy_infer(self._policy, features)
        self._pending.append((self._tick, chunk, ends))
        k = self._policy.chunk_size
        self._pending = [(born, c, e) for born, c, e in self._pending if self._tick - born < k]
        action_entries = [(self._tick - born, c[self._tick - born]) for born, c, _ in self._pending]
        end_entries = [(self._tick - born, np.array([e[self._tick - born]]))
                       for born, _, e in self._pending]
        vec = temporal_ensemble(action_entries, self._policy.decay)
        end = float(temporal_ensemble(end_entries, self._policy.decay, layout="linear")[0])
        self._tick += 1
        return SkillStepOutput(decode_action(vec), min(1.0, max(0.0, end)))
