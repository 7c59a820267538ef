"""Demonstration episodes: recording, labeling, storage, replay support.

An episode is the unit that turns teleoperation into training data. Each
frame stores what the policy will later see (proprioception, per-camera
feature grids, attention maps for the active text queries) next to the
command the operator issued, plus the end-signal supervision bit applied
when the recording closes.

File container: one JSON header line, then one length-prefixed binary record
per frame (little-endian float64 payloads), then a CRC32 of everything
before it. Loading is fail-closed: any truncation, checksum mismatch, or
header/body disagreement raises CorruptFileError rather than returning a
partial episode. Feature payloads are the rendered embedding grids, not
pixels; each camera entry carries a channel-type tag so a future raw-image
payload can coexist with the current format.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .attention import AttentionMap, EmbeddingBank, FeatureMap, pool_attention
from .errors import CorruptFileError, RejectedInputError
from .simworld import Observation, WholeBodyCommand
from .skills.base import TerminationConfig, compute_attention, label_end_signal
from .skills.imitation import ACTION_DIM, ChunkedPolicy, encode_action

_DEMO_MAGIC = "locodemo"
_DEMO_VERSION = 1
_FEATURE_CHANNEL_TAG = "embedding_grid"

_DEFAULT_METADATA = {"scene_id": "", "seed": 0, "operator": "", "success": False}


@dataclass(frozen=True)
class Frame:
    """One recorded tick."""

    timestamp: float
    proprio: np.ndarray
    features: Mapping[str, FeatureMap]
    attention: Mapping[str, Mapping[str, AttentionMap]]
    action: np.ndarray
    end_signal_label: float

    def __post_init__(self):
        p = np.asarray(self.proprio, dtype=float)
        a = np.asarray(self.action, dtype=float)
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise RejectedInputError("frame proprioception must be a finite 1-D vector")
        if a.shape != (ACTION_DIM,) or not np.all(np.isfinite(a)):
            raise RejectedInputError(f"frame action must be a finite ({ACTION_DIM},) vector")
        if self.end_signal_label not in (0.0, 1.0):
            raise RejectedInputError(f"end signal label must be 0 or 1, got {self.end_signal_label}")
        p.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "proprio", p)
        object.__setattr__(self, "action", a)
        object.__setattr__(self, "features", MappingProxyType(dict(self.features)))
        object.__setattr__(self, "attention", MappingProxyType(
            {q: MappingProxyType(dict(per_cam)) for q, per_cam in self.attention.items()}))


@dataclass(frozen=True)
class Episode:
    """An ordered, labeled demonstration."""

    skill_name: str
    text_queries: tuple
    frames: tuple
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.skill_name:
            raise RejectedInputError("episode needs a skill name")
        object.__setattr__(self, "text_queries", tuple(self.text_queries))
        frames = tuple(self.frames)
        if not frames:
            raise RejectedInputError("episode must contain at least one frame")
        times = [f.timestamp for f in frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise RejectedInputError("frame timestamps must be strictly increasing")
        labels = [f.end_signal_label for f in frames]
        if labels[-1] != 1.0 or any(b < a for a, b in zip(labels, labels[1:])):
            raise RejectedInputError(
                "end-signal labels must be a run of zeros followed by ones ending at 1")
        object.__setattr__(self, "frames", frames)
        meta = dict(_DEFAULT_METADATA)
        meta.update(self.metadata)
        for key, value in meta.items():
            if not isinstance(value, (str, int, float, bool)):
                raise RejectedInputError(f"metadata '{key}' must be a scalar, got {type(value).__name__}")
        object.__setattr__(self, "metadata", MappingProxyType(meta))

    def __len__(self) -> int:
        return len(self.frames)


class DemoRecorder:
    """Accumulates (observation, command) pairs into an Episode.

    The recorder computes attention for its text queries itself so the stored
    maps come from the same pipeline inference will use. Base commands are
    clamped to the robot's limits before storage; the simulator would clamp
    them anyway, so the file reflects what actually ran.
    """

    def __init__(self, skill_name: str, text_queries: Sequence[str], bank: EmbeddingBank,
                 metadata: Mapping | None = None,
                 termination: TerminationConfig = TerminationConfig()):
        self._skill_name = skill_name
        self._queries = tuple(text_queries)
        self._bank = bank
        self._metadata = dict(metadata or {})
        self._termination = termination
        self._frames: list[Frame] = []

    def add(self, obs: Observation, command: WholeBodyCommand) -> None:
        limits = obs.robot.config.base
        clamped = dataclasses.replace(
            command, base=command.base.clamped(limits.max_linear_speed, limits.max_angular_speed))
        self._frames.append(Frame(
            timestamp=obs.time,
            proprio=np.array(obs.proprio),
            features={name: cap.features for name, cap in obs.captures.items()},
            attention=compute_attention(obs, self._bank, self._queries),
            action=encode_action(clamped),
            end_signal_label=0.0,
        ))

    def close(self, success: bool | None = None) -> Episode | None:
        """Apply end-signal labels and build the episode. None if nothing
        was recorded."""
        if not self._frames:
            return None
        labels = label_end_signal(len(self._frames), self._termination)
        frames = tuple(
            dataclasses.replace(f, end_signal_label=float(labels[i]))
            for i, f in enumerate(self._frames)
        )
        meta = dict(self._metadata)
        if success is not None:
            meta["success"] = success
        return Episode(skill_name=self._skill_name, text_queries=self._queries,
                       frames=frames, metadata=meta)


def record_demonstration(stream: Iterable[tuple[Observation, WholeBodyCommand]], *,
                         skill_name: str, text_queries: Sequence[str], bank: EmbeddingBank,
                         metadata: Mapping | None = None,
                         termination: TerminationConfig = TerminationConfig()) -> Episode | None:
    recorder = DemoRecorder(skill_name, text_queries, bank, metadata, termination)
    for obs, command in stream:
        recorder.add(obs, command)
    return recorder.close()


# ---------------------------------------------------------------------------
# serialization


def _episode_layout(episode: Episode):
    """Camera shape table plus the fixed per-frame payload size, validated
    against every frame."""
    first = episode.frames[0]
    cam_names = sorted(first.features)
    shapes = {n: first.features[n].data.shape for n in cam_names}
    att_shapes = {}
    for query in episode.text_queries:
        if query not in first.attention:
            raise RejectedInputError(f"frames lack attention for query '{query}'")
        per_cam = first.attention[query]
        if sorted(per_cam) != cam_names:
            raise RejectedInputError(
                f"attention for '{query}' must cover exactly the cameras {cam_names}")
        for n in cam_names:
            att_shapes[(query, n)] = per_cam[n].values.shape
    p_dim = first.proprio.shape[0]
    for frame in episode.frames:
        if sorted(frame.features) != cam_names or frame.proprio.shape[0] != p_dim:
            raise RejectedInputError("frames disagree on cameras or proprioception size")
        for n in cam_names:
            if frame.features[n].data.shape != shapes[n]:
                raise RejectedInputError(f"camera '{n}' changes shape mid-episode")
        if sorted(frame.attention) != sorted(episode.text_queries):
            raise RejectedInputError("frames disagree with the episode's text queries")
        for query in episode.text_queries:
            for n in cam_names:
                if frame.attention[query][n].values.shape != att_shapes[(query, n)]:
                    raise RejectedInputError(f"attention '{query}/{n}' changes shape mid-episode")
    scalars = 2 + ACTION_DIM + p_dim
    cells = sum(int(np.prod(shapes[n])) for n in cam_names)
    att_cells = sum(int(np.prod(s)) for s in att_shapes.values())
    return cam_names, shapes, att_shapes, p_dim, 8 * (scalars + cells + att_cells)


def save_episode(episode: Episode, path) -> None:
    cam_names, shapes, att_shapes, p_dim, record_size = _episode_layout(episode)
    header = {
        "format": _DEMO_MAGIC,
        "version": _DEMO_VERSION,
        "skill": episode.skill_name,
        "text_queries": list(episode.text_queries),
        "frame_count": len(episode.frames),
        "proprio_dim": p_dim,
        "cameras": [
            {"name": n, "height": shapes[n][0], "width": shapes[n][1],
             "channels": shapes[n][2], "channel_type": _FEATURE_CHANNEL_TAG}
            for n in cam_names
        ],
        "metadata": dict(episode.metadata),
    }
    parts = [json.dumps(header, sort_keys=True, separators=(",", ":")).encode(), b"\n"]
    for frame in episode.frames:
        chunks = [np.array([frame.timestamp, frame.end_signal_label]),
                  frame.action, frame.proprio]
        chunks.extend(frame.features[n].data.ravel() for n in cam_names)
        for query in episode.text_queries:
            chunks.extend(frame.attention[query][n].values.ravel() for n in cam_names)
        payload = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in chunks)
        assert len(payload) == record_size
        parts.append(len(payload).to_bytes(4, "little"))
        parts.append(payload)
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(zlib.crc32(body).to_bytes(4, "little"))


def load_episode(path) -> Episode:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 5 or b"\n" not in blob[:-4]:
        raise CorruptFileError(f"episode file {path} is too short")
    body, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(body).to_bytes(4, "little") != crc_bytes:
        raise CorruptFileError(f"episode file {path} failed its checksum")
    header_line, _, payload = body.partition(b"\n")
    try:
        header = json.loads(header_line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"episode file {path} has an unreadable header") from exc
    if not isinstance(header, dict) or header.get("format") != _DEMO_MAGIC:
        raise CorruptFileError(f"episode file {path} has the wrong format marker")
    if header.get("version") != _DEMO_VERSION:
        raise CorruptFileError(
            f"episode file {path}: unsupported version {header.get('version')}")
    try:
        skill = str(header["skill"])
        queries = [str(q) for q in header["text_queries"]]
        count = int(header["frame_count"])
        p_dim = int(header["proprio_dim"])
        cameras = [(str(c["name"]), int(c["height"]), int(c["width"]), int(c["channels"]))
                   for c in header["cameras"]]
        metadata = dict(header["metadata"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"episode file {path} has a malformed header") from exc
    if count < 1 or p_dim < 1:
        raise CorruptFileError(f"episode file {path} declares impossible dimensions")

    scalars = 2 + ACTION_DIM + p_dim
    cells = sum(h * w * c for _, h, w, c in cameras)
    att_cells = len(queries) * sum(h * w for _, h, w, _ in cameras)
    record_size = 8 * (scalars + cells + att_cells)

    frames = []
    cursor = 0
    for _ in range(count):
        if cursor + 4 > len(payload):
            raise CorruptFileError(f"episode file {path} ends inside a record prefix")
        declared = int.from_bytes(payload[cursor:cursor + 4], "little")
        cursor += 4
        if declared != record_size:
            raise CorruptFileError(
                f"episode file {path}: record declares {declared} bytes, layout needs {record_size}")
        if cursor + record_size > len(payload):
            raise CorruptFileError(f"episode file {path} ends inside a frame record")
        values = np.frombuffer(payload, dtype="<f8", count=record_size // 8, offset=cursor)
        cursor += record_size
        pos = 0

        def take(n):
            nonlocal pos
            out = values[pos:pos + n].astype(float)
            pos += n
            return out

        timestamp, label = take(2)
        action = take(ACTION_DIM)
        proprio = take(p_dim)
        features = {}
        for name, h, w, c in cameras:
            features[name] = FeatureMap(take(h * w * c).reshape(h, w, c))
        attention = {}
        for query in queries:
            attention[query] = {
                name: AttentionMap(take(h * w).reshape(h, w)) for name, h, w, _ in cameras
            }
        frames.append(Frame(timestamp=float(timestamp), proprio=proprio, features=features,
                            attention=attention, action=action, end_signal_label=float(label)))
    if cursor != len(payload):
        raise CorruptFileError(f"episode file {path} has {len(payload) - cursor} trailing bytes")
    try:
        return Episode(skill_name=skill, text_queries=tuple(queries),
                       frames=tuple(frames), metadata=metadata)
    except RejectedInputError as exc:
        raise CorruptFileError(f"episode file {path} holds an invalid episode: {exc}") from exc


# ---------------------------------------------------------------------------
# dataset assembly


def episode_features(episode: Episode, pool_rows: int = 8, pool_cols: int = 8) -> np.ndarray:
    """Per-frame feature matrix: proprioception plus the pooled head-camera
    attention for the episode's primary text query."""
    if not episode.text_queries:
        raise RejectedInputError(f"episode '{episode.skill_name}' has no text query to featurize")
    query = episode.text_queries[0]
    rows = []
    for frame in episode.frames:
        per_cam = frame.attention.get(query)
        if per_cam is None or "head" not in per_cam:
            raise RejectedInputError(
                f"episode '{episode.skill_name}' lacks head-camera attention for '{query}'")
        pooled = pool_attention(per_cam["head"], pool_rows, pool_cols)
        rows.append(np.concatenate([frame.proprio, pooled.ravel()]))
    return np.array(rows)


def build_policy_dataset(episodes: Sequence[Episode], chunk_size: int = 20,
                         decay: float = 0.1, neighbors: int = 1,
                         pool_rows: int = 8, pool_cols: int = 8) -> ChunkedPolicy:
    """Turn labeled episodes into the retrieval dataset. Chunks never cross
    an episode boundary; short tails pad by repeating the final action."""
    episodes = list(episodes)
    if not episodes:
        raise RejectedInputError("dataset needs at least one episode")
    skills = {e.skill_name for e in episodes}
    if len(skills) > 1:
        raise RejectedInputError(f"episodes mix skills: {sorted(skills)}")
    parts = []
    for episode in episodes:
        feats = episode_features(episode, pool_rows, pool_cols)
        acts = np.array([f.action for f in episode.frames])
        labels = np.array([f.end_signal_label for f in episode.frames])
        parts.append(ChunkedPolicy.build(feats, acts, labels, chunk_size=chunk_size,
                                         decay=decay, neighbors=neighbors))
    dims = {p.features.shape[1] for p in parts}
    if len(dims) > 1:
        raise RejectedInputError(f"episodes disagree on feature dimension: {sorted(dims)}")
    return ChunkedPolicy(
        features=np.concatenate([p.features for p in parts]),
        action_chunks=np.concatenate([p.action_chunks for p in parts]),
        end_chunks=np.concatenate([p.end_chunks for p in parts]),
        chunk_size=chunk_size, decay=decay, neighbors=neighbors,
        query=episodes[0].text_queries[0] if episodes[0].text_queries else "",
    )
