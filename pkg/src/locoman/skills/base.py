"""Skill abstraction: specs, per-tick outputs, end-signal tooling, and the
library manifest.

A skill consumes one observation per control tick plus the attention maps for
its own text queries, and emits a whole-body command together with a scalar
end signal in [0, 1]. Termination is decided downstream by thresholding a
window of those signals, which keeps the skills themselves stateless about
time limits.
"""

from __future__ import annotations

import importlib.resources
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
import yaml

from ..attention import AttentionMap, EmbeddingBank, cross_attention
from ..errors import ConfigError, RejectedInputError
from ..geometry import Pose
from ..simworld import Observation, WholeBodyCommand

SKILL_KINDS = ("learned", "analytical")


@dataclass(frozen=True)
class TerminationConfig:
    """Shared thresholding parameters for end-signal streams.

    threshold: a prediction counts as confident when strictly above this.
    window: consecutive confident predictions required to terminate.
    label_tail: how many final frames of a demonstration are labeled 1.
    """

    threshold: float = 0.8
    window: int = 10
    label_tail: int = 10

    def __post_init__(self):
        if not (0.0 <= self.threshold < 1.0):
            raise RejectedInputError(f"threshold must be in [0, 1), got {self.threshold}")
        if self.window < 1:
            raise RejectedInputError("window must be >= 1")
        if self.label_tail < 1:
            raise RejectedInputError("label_tail must be >= 1")


def detect_termination(values: Sequence[float], cfg: TerminationConfig = TerminationConfig()) -> int | None:
    """First index at which the last `window` signals all exceed the
    threshold, or None. Strictly-above comparison; adding later values can
    never change an already-fired index."""
    run = 0
    for i, v in enumerate(values):
        run = run + 1 if v > cfg.threshold else 0
        if run >= cfg.window:
            return i
    return None


def label_end_signal(length: int, cfg: TerminationConfig = TerminationConfig()) -> np.ndarray:
    """Supervision target for an episode of the given length: zeros with the
    final `label_tail` frames set to one."""
    if length < 0:
        raise RejectedInputError(f"episode length must be >= 0, got {length}")
    labels = np.zeros(length)
    labels[max(0, length - cfg.label_tail):] = 1.0
    return labels


@dataclass(frozen=True)
class SkillSpec:
    """Declarative description of one library entry.

    text_queries are the open-vocabulary labels the skill attends to;
    parameters carry behavior selection plus numeric knobs; preconditions
    are predicate names the planner checks before dispatch.
    """

    name: str
    kind: str
    text_queries: tuple = ()
    parameters: Mapping = field(default_factory=dict)
    preconditions: tuple = ()

    def __post_init__(self):
        if not self.name:
            raise RejectedInputError("skill name must be non-empty")
        if self.kind not in SKILL_KINDS:
            raise RejectedInputError(f"skill kind must be one of {SKILL_KINDS}, got '{self.kind}'")
        queries = tuple(self.text_queries)
        if any(not isinstance(q, str) or not q for q in queries):
            raise RejectedInputError("text queries must be non-empty strings")
        object.__setattr__(self, "text_queries", queries)
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))
        object.__setattr__(self, "preconditions", tuple(self.preconditions))


@dataclass(frozen=True)
class SkillStepOutput:
    command: WholeBodyCommand
    end_signal: float

    def __post_init__(self):
        e = float(self.end_signal)
        if not np.isfinite(e) or not (0.0 <= e <= 1.0):
            raise RejectedInputError(f"end signal must be in [0, 1], got {self.end_signal}")
        object.__setattr__(self, "end_signal", e)


class Skill(ABC):
    """One executable behavior. Implementations keep only their stage state,
    so replaying the same observation stream reproduces the same commands."""

    spec: SkillSpec

    @abstractmethod
    def reset(self) -> None:
        ...

    @abstractmethod
    def step(self, obs: Observation, attention: Mapping[str, Mapping[str, AttentionMap]]) -> SkillStepOutput:
        ...


def skill_step(skill: Skill, obs: Observation,
               attention: Mapping[str, Mapping[str, AttentionMap]]) -> SkillStepOutput:
    """Advance a skill by one tick."""
    out = skill.step(obs, attention)
    if not isinstance(out, SkillStepOutput):
        raise RejectedInputError(f"skill '{skill.spec.name}' returned {type(out).__name__}")
    return out


def compute_attention(obs: Observation, bank: EmbeddingBank,
                      queries: Sequence[str]) -> dict[str, dict[str, AttentionMap]]:
    """Attention maps for each query against every camera in the observation.
    Raises ConfigError when a query has no embedding."""
    result: dict[str, dict[str, AttentionMap]] = {}
    for query in queries:
        txt = bank.embedding(query)
        result[query] = {
            name: cross_attention(cap.features, txt) for name, cap in obs.captures.items()
        }
    return result


# ---------------------------------------------------------------------------
# library manifest


def _spec_from_entry(entry, index: int) -> SkillSpec:
    if not isinstance(entry, dict):
        raise ConfigError(f"skill manifest entry {index} must be a mapping")
    name = entry.get("name")
    kind = entry.get("kind")
    if not isinstance(name, str) or not name:
        raise ConfigError(f"skill manifest entry {index}: missing name")
    if kind not in SKILL_KINDS:
        raise ConfigError(f"skill '{name}': kind must be one of {SKILL_KINDS}, got {kind!r}")
    queries = entry.get("text_queries", [])
    if not isinstance(queries, list) or any(not isinstance(q, str) for q in queries):
        raise ConfigError(f"skill '{name}': text_queries must be a list of strings")
    params = entry.get("parameters", {})
    if params is None:
        params = {}
    if not isinstance(params, dict):
        raise ConfigError(f"skill '{name}': parameters must be a mapping")
    precond = entry.get("preconditions", [])
    if not isinstance(precond, list) or any(not isinstance(p, str) for p in precond):
        raise ConfigError(f"skill '{name}': preconditions must be a list of strings")
    return SkillSpec(name=name, kind=kind, text_queries=tuple(queries),
                     parameters=params, preconditions=tuple(precond))


def load_skill_library(path=None) -> dict[str, SkillSpec]:
    """Parse a skill manifest. With no path, loads the packaged default."""
    if path is None:
        source = importlib.resources.files("locoman.configs").joinpath("skills_default.yaml")
        text = source.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"skill manifest is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("schema_version") != 1:
        raise ConfigError("skill manifest must declare schema_version: 1")
    entries = raw.get("skills")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("skill manifest needs a non-empty 'skills' list")
    library: dict[str, SkillSpec] = {}
    for i, entry in enumerate(entries):
        spec = _spec_from_entry(entry, i)
        if spec.name in library:
            raise ConfigError(f"duplicate skill name '{spec.name}' in manifest")
        library[spec.name] = spec
    return library


def make_skill(spec: SkillSpec, *, bank: EmbeddingBank | None = None,
               waypoints: Mapping[str, Pose] | None = None, policy=None) -> Skill:
    """Instantiate the executable behavior for a spec.

    Query embeddings are resolved here, so a missing label fails at
    invocation rather than mid-episode.
    """
    from .heuristic import GraspSkill, PlaceSkill, PressSkill
    from .imitation import ImitationSkill, load_policy
    from .navigation import NavigationSkill, PDGains

    behavior = spec.parameters.get("behavior", spec.name)
    if behavior == "navigate":
        target_name = spec.parameters.get("waypoint")
        if not target_name:
            raise ConfigError(f"skill '{spec.name}': navigate needs a 'waypoint' parameter")
        if waypoints is None or target_name not in waypoints:
            raise ConfigError(f"skill '{spec.name}': unknown waypoint '{target_name}'")
        gains = PDGains(
            position_tolerance=float(spec.parameters.get("position_tolerance", 0.05)),
            yaw_tolerance=float(spec.parameters.get("yaw_tolerance", 0.1)),
        )
        return NavigationSkill(spec, waypoints[target_name], gains=gains)

    if behavior in ("grasp", "place", "press"):
        if bank is None:
            raise ConfigError(f"skill '{spec.name}': needs an embedding bank")
        if not spec.text_queries:
            raise ConfigError(f"skill '{spec.name}': needs at least one text query")
        for query in spec.text_queries:
            bank.embedding(query)  # raises ConfigError for unknown labels
        cls = {"grasp": GraspSkill, "place": PlaceSkill, "press": PressSkill}[behavior]
        return cls(spec)

    if behavior == "imitation":
        if policy is None:
            path = spec.parameters.get("policy_path")
            if not path:
                raise ConfigError(f"skill '{spec.name}': learned skill needs a policy")
            policy = load_policy(path)
        if bank is None:
            raise ConfigError(f"skill '{spec.name}': needs an embedding bank")
        if not spec.text_queries:
            raise ConfigError(f"skill '{spec.name}': needs at least one text query")
        for query in spec.text_queries:
            bank.embedding(query)
        return ImitationSkill(spec, policy)

    raise ConfigError(f"skill '{spec.name}': unknown behavior '{behavior}'")
