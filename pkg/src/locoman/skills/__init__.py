from .base import (
    Skill,
    SkillSpec,
    SkillStepOutput,
    TerminationConfig,
    compute_attention,
    detect_termination,
    label_end_signal,
    load_skill_library,
    make_skill,
    skill_step,
)
from .heuristic import GraspSkill, PlaceSkill, PressSkill
from .navigation import NavigationSkill, PDGains, navigate_waypoint
from .imitation import (
    ChunkedPolicy,
    ImitationSkill,
    load_policy,
    policy_features,
    policy_infer,
    save_policy,
    temporal_ensemble,
)

__all__ = [
    "Skill",
    "SkillSpec",
    "SkillStepOutput",
    "TerminationConfig",
    "compute_attention",
    "detect_termination",
    "label_end_signal",
    "load_skill_library",
    "make_skill",
    "skill_step",
    "GraspSkill",
    "PlaceSkill",
    "PressSkill",
    "NavigationSkill",
    "PDGains",
    "navigate_waypoint",
    "ChunkedPolicy",
    "ImitationSkill",
    "load_policy",
    "policy_features",
    "policy_infer",
    "save_policy",
    "temporal_ensemble",
]
