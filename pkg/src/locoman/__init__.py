"""Desk-scale loco-manipulation stack.

Whole-body teleoperation math, language-conditioned skills with autonomous
termination, demonstration recording and imitation, a scene-graph planner,
and a deterministic kinematic simulator for a quadruped with an arm.
"""

__version__ = "0.1.0"
