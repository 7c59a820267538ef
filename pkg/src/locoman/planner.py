"""Hierarchical planning over an annotated scene graph.

An instruction is first decomposed into atomic tasks, then each task is
grounded: breadth-first search enumerates the pose waypoints reachable from
the robot's current node, the evaluator scores every candidate against the
task text, and the best-scoring node becomes the navigation goal. The plan is
a flat step list alternating navigation hops and skill invocations.
"""

import math
from collections import deque
from dataclasses import dataclass

from .errors import ConfigError, PlanningError, RejectedInputError
from .geometry import Pose
from .llm_client import NodeScore

_KINDS = ("pose_waypoint", "abstract")
_STEP_KINDS = ("navigate", "invoke_skill")


@dataclass(frozen=True)
class SceneNode:
    """One vertex of the scene graph.

    Pose waypoints are physical places the robot can stand; abstract nodes
    group waypoints into named regions and carry no pose of their own.
    """

    id: str
    kind: str
    pose: Pose | None = None
    description: str = ""
    object_list: tuple[str, ...] = ()
    parent: str | None = None

    def __post_init__(self):
        if not self.id or not isinstance(self.id, str):
            raise RejectedInputError("node id must be a non-empty string")
        if self.kind not in _KINDS:
            raise RejectedInputError(f"node kind must be one of {_KINDS}, got '{self.kind}'")
        if self.kind == "pose_waypoint" and self.pose is None:
            raise RejectedInputError(f"waypoint '{self.id}' needs a pose")
        if self.kind == "abstract" and self.pose is not None:
            raise RejectedInputError(f"abstract node '{self.id}' must not carry a pose")
        object.__setattr__(self, "object_list", tuple(self.object_list))


@dataclass(frozen=True)
class SceneGraph:
    """Waypoints with undirected traversal edges plus an abstract grouping forest."""

    nodes: tuple[SceneNode, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("scene graph has duplicate node ids")
        by_id = {n.id: n for n in self.nodes}
        for a, b in self.edges:
            if a not in by_id or b not in by_id or a == b:
                raise ConfigError(f"edge ({a}, {b}) does not join two distinct known nodes")
            if by_id[a].kind != "pose_waypoint" or by_id[b].kind != "pose_waypoint":
                raise ConfigError(f"edge ({a}, {b}) may only join pose waypoints")
        children: dict[str, int] = {}
        for node in self.nodes:
            if node.parent is None:
                continue
            parent = by_id.get(node.parent)
            if parent is None:
                raise ConfigError(f"node '{node.id}' names unknown parent '{node.parent}'")
            if parent.kind != "abstract":
                raise ConfigError(f"parent of '{node.id}' must be an abstract node")
            children[node.parent] = children.get(node.parent, 0) + 1
        for node in self.nodes:
            if node.kind == "abstract" and children.get(node.id, 0) == 0:
                raise ConfigError(f"abstract node '{node.id}' has no children")
            # parent chains must terminate; a revisit means a cycle
            seen = {node.id}
            cur = node.parent
            while cur is not None:
                if cur in seen:
                    raise ConfigError(f"grouping hierarchy has a cycle through '{cur}'")
                seen.add(cur)
                cur = by_id[cur].parent

    def node(self, node_id: str) -> SceneNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise RejectedInputError(f"unknown scene node '{node_id}'")

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        out = set()
        for a, b in self.edges:
            if a == node_id:
                out.add(b)
            elif b == node_id:
                out.add(a)
        return tuple(sorted(out))


@dataclass(frozen=True)
class TaskStep:
    kind: str
    node_id: str
    skill_name: str | None = None
    text_queries: tuple[str, ...] = ()
    score: NodeScore | None = None
    task_index: int = 0

    def __post_init__(self):
        if self.kind not in _STEP_KINDS:
            raise RejectedInputError(f"step kind must be one of {_STEP_KINDS}")
        if self.kind == "invoke_skill" and not self.skill_name:
            raise RejectedInputError("invoke_skill steps need a skill name")
        object.__setattr__(self, "text_queries", tuple(self.text_queries))


@dataclass(frozen=True)
class Plan:
    instruction: str
    tasks: tuple[str, ...]
    steps: tuple[TaskStep, ...]


def _bfs(graph: SceneGraph, start: str):
    """Discovery order and shortest-path parents, neighbors visited in sorted id order."""
    parents: dict[str, str | None] = {start: None}
    order = [start]
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nb in graph.neighbors(cur):
            if nb not in parents:
                parents[nb] = cur
                order.append(nb)
                queue.append(nb)
    return order, parents


def _context_description(graph: SceneGraph, node: SceneNode) -> str:
    parts = [node.description]
    if node.parent is not None:
        parent = graph.node(node.parent)
        if parent.description:
            parts.append(parent.description)
    return " ".join(p for p in parts if p)


def coarse_plan(instruction: str, evaluator) -> list[str]:
    """Decompose an instruction into atomic tasks."""
    if not instruction or not instruction.strip():
        raise RejectedInputError("instruction is empty")
    tasks = evaluator.decompose(instruction)
    if not tasks:
        raise PlanningError(f"decomposition produced no tasks for '{instruction}'")
    return tasks


def fine_plan(task, graph, manifest, evaluator, start, *, task_index=0,
              early_exit=False, early_exit_threshold=0.95,
              likelihood_floor=0.1) -> tuple[TaskStep, ...]:
    """Ground one task: pick a goal waypoint and emit the steps to serve it.

    All waypoints reachable from start are scored in BFS discovery order
    (optionally stopping early at a confident match). Ties keep the earlier
    discovery. A best score below the floor means the task cannot be
    grounded in this scene.
    """
    if graph.node(start).kind != "pose_waypoint":
        raise RejectedInputError(f"start node '{start}' is not a pose waypoint")
    order, parents = _bfs(graph, start)
    scores: list[NodeScore] = []
    for nid in order:
        node = graph.node(nid)
        score = evaluator.score_node(task, nid, _context_description(graph, node), node.object_list)
        scores.append(score)
        if early_exit and score.likelihood >= early_exit_threshold:
            break
    best = scores[0]
    for score in scores[1:]:
        if score.likelihood > best.likelihood:
            best = score
    if best.likelihood < likelihood_floor:
        ranked = sorted(scores, key=lambda s: -s.likelihood)
        raise PlanningError(f"unplannable task: no reachable waypoint fits '{task}'", candidates=ranked)
    hops = [best.node_id]
    while parents[hops[-1]] is not None:
        hops.append(parents[hops[-1]])
    hops.reverse()
    steps = [TaskStep("navigate", nid, None, (), best, task_index) for nid in hops[1:]]
    selection = evaluator.select_skill(task, tuple(manifest))
    if selection is None:
        raise PlanningError(f"no skill matches task '{task}'")
    name, queries = selection
    if name not in manifest:
        raise PlanningError(f"selected skill '{name}' is not in the manifest")
    if name != "navigate":
        steps.append(TaskStep("invoke_skill", best.node_id, name, tuple(queries), best, task_index))
    return tuple(steps)


def plan(instruction, graph, manifest, evaluator, start, *, early_exit=False) -> Plan:
    """Full pipeline: decompose, then ground each task from where the last one ended."""
    tasks = coarse_plan(instruction, evaluator)
    current = start
    steps: list[TaskStep] = []
    for index, task in enumerate(tasks):
        try:
            fragment = fine_plan(task, graph, manifest, evaluator, current,
                                 task_index=index, early_exit=early_exit)
        except PlanningError as exc:
            if exc.task_index is None:
                exc.task_index = index
            raise
        steps.extend(fragment)
        if fragment:
            current = fragment[-1].node_id
    result = Plan(instruction=instruction, tasks=tuple(tasks), steps=tuple(steps))
    validate_plan(result, graph, manifest, start)
    return result


def validate_plan(plan: Plan, graph: SceneGraph, manifest, start: str) -> None:
    """Check structural soundness; raises on the first violation."""
    current = graph.node(start).id
    edge_set = {frozenset(e) for e in graph.edges}
    for step in plan.steps:
        node = graph.node(step.node_id)
        if node.kind != "pose_waypoint":
            raise PlanningError(f"step targets non-waypoint node '{step.node_id}'")
        if step.kind == "navigate":
            if frozenset((current, step.node_id)) not in edge_set:
                raise PlanningError(f"no edge from '{current}' to '{step.node_id}'")
            current = step.node_id
        else:
            if step.node_id != current:
                raise PlanningError(
                    f"skill step at '{step.node_id}' but the robot would be at '{current}'"
                )
            if step.skill_name not in manifest:
                raise PlanningError(f"plan invokes unknown skill '{step.skill_name}'")


# ------------------------------------------------------------- annotation


def _orientation(a, b, c) -> int:
    value = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if value > 0:
        return 1
    if value < 0:
        return -1
    return 0


def _on_segment(a, b, p) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def segments_intersect(p, q, r, s) -> bool:
    """Inclusive 2D segment intersection (shared endpoints count)."""
    o1 = _orientation(p, q, r)
    o2 = _orientation(p, q, s)
    o3 = _orientation(r, s, p)
    o4 = _orientation(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p, q, r):
        return True
    if o2 == 0 and _on_segment(p, q, s):
        return True
    if o3 == 0 and _on_segment(r, s, p):
        return True
    return o4 == 0 and _on_segment(r, s, q)


def annotate_graph(waypoints, *, groups=(), obstacles=(), adjacency_radius=3.0) -> SceneGraph:
    """Build a scene graph from a waypoint scan.

    waypoints: iterable of (id, pose, description, object labels).
    groups: iterable of (id, description, child waypoint ids) abstract regions.
    obstacles: 2D segments ((x1, y1), (x2, y2)) that block line of sight.
    Two waypoints are connected when they sit within the adjacency radius and
    no obstacle segment crosses the straight line between them.
    """
    seen_ids: set[str] = set()
    parent_of: dict[str, str] = {}
    group_nodes: list[SceneNode] = []
    waypoint_records = list(waypoints)
    waypoint_ids = {rec[0] for rec in waypoint_records}
    for gid, description, children in groups:
        if gid in seen_ids or gid in waypoint_ids:
            raise ConfigError(f"duplicate node id '{gid}'")
        seen_ids.add(gid)
        if not children:
            raise ConfigError(f"group '{gid}' lists no waypoints")
        for child in children:
            if child not in waypoint_ids:
                raise ConfigError(f"group '{gid}' references unknown waypoint '{child}'")
            if child in parent_of:
                raise ConfigError(f"waypoint '{child}' is listed in more than one group")
            parent_of[child] = gid
        group_nodes.append(SceneNode(id=gid, kind="abstract", description=description))
    nodes: list[SceneNode] = []
    for nid, pose, description, objects in waypoint_records:
        if nid in seen_ids:
            raise ConfigError(f"duplicate node id '{nid}'")
        seen_ids.add(nid)
        nodes.append(SceneNode(
            id=nid, kind="pose_waypoint", pose=pose, description=description,
            object_list=tuple(objects), parent=parent_of.get(nid),
        ))
    edges: list[tuple[str, str]] = []
    for i, a in enumerate(nodes):
        pa = (a.pose.translation[0], a.pose.translation[1])
        for b in nodes[i + 1:]:
            pb = (b.pose.translation[0], b.pose.translation[1])
            if math.dist(pa, pb) > adjacency_radius:
                continue
            if any(segments_intersect(pa, pb, tuple(o[0]), tuple(o[1])) for o in obstacles):
                continue
            edges.append(tuple(sorted((a.id, b.id))))
    return SceneGraph(nodes=tuple(nodes) + tuple(group_nodes), edges=tuple(sorted(edges)))


# ---------------------------------------------------------- serialization


def plan_to_dict(plan: Plan) -> dict:
    def step_dict(step: TaskStep) -> dict:
        score = None
        if step.score is not None:
            score = {
                "node_id": step.score.node_id,
                "likelihood": step.score.likelihood,
                "rationale": step.score.rationale,
            }
        return {
            "kind": step.kind,
            "node_id": step.node_id,
            "skill_name": step.skill_name,
            "text_queries": list(step.text_queries),
            "score": score,
            "task_index": step.task_index,
        }

    return {
        "version": 1,
        "instruction": plan.instruction,
        "tasks": list(plan.tasks),
        "steps": [step_dict(s) for s in plan.steps],
    }


def plan_from_dict(data: dict) -> Plan:
    if data.get("version") != 1:
        raise ConfigError("plan payload must carry version: 1")
    steps = []
    for raw in data["steps"]:
        score = raw.get("score")
        steps.append(TaskStep(
            kind=raw["kind"],
            node_id=raw["node_id"],
            skill_name=raw.get("skill_name"),
            text_queries=tuple(raw.get("text_queries", ())),
            score=None if score is None else NodeScore(**score),
            task_index=raw.get("task_index", 0),
        ))
    return Plan(
        instruction=data["instruction"],
        tasks=tuple(data["tasks"]),
        steps=tuple(steps),
    )
