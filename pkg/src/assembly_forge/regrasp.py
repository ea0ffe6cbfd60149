"""Regrasp planning: a graph over (grasp sample, part pose, finger) tuples.

Nodes exist where a finger can reach its grasp pose collision-free at one of
the seed part poses at the regrasp location. A regrasp edge joins two nodes
at the same pose with different fingers whose simultaneous grasps are clear
of each other; a repose edge joins two poses the same grip can move between.
Plans minimize the number of regrasp (handoff) edges, with repose count as
the tie breaker.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .geom import BoxCompound, Transform, collide, quat_multiply
from .grasp import FingerModel, GraspDefinition

HOVER_OFFSET = 0.03
OPEN_PADDING = 0.004


class RegraspError(RuntimeError):
    pass


class EmptyGraph(RegraspError):
    pass


class NoPath(RegraspError):
    pass


class NoFeasibleHandoff(RegraspError):
    pass


@dataclass(frozen=True)
class GripperContext:
    """What the graph needs to know about one gripper."""

    finger: FingerModel
    reach_lo: np.ndarray
    reach_hi: np.ndarray

    def reaches(self, point: np.ndarray) -> bool:
        return bool(np.all(point >= self.reach_lo) and np.all(point <= self.reach_hi))


@dataclass(frozen=True)
class GraspSample:
    """One concrete tip pose drawn from an authored grasp definition."""

    def_index: int
    sample_index: int
    tip_pose: Transform  # in the part frame
    opening: float

    @property
    def key(self) -> tuple[int, int]:
        return (self.def_index, self.sample_index)


@dataclass(frozen=True)
class RegraspNode:
    sample: GraspSample
    pose_id: int
    finger_id: int


@dataclass
class RegraspGraph:
    part_body: BoxCompound
    nodes: list  # of RegraspNode
    seed_poses: list  # of Transform, world frame
    grippers: list  # of GripperContext
    adjacency: dict = field(default_factory=dict)  # id -> list[(other, kind)]
    environment: list = field(default_factory=list)

    def neighbors(self, node_id: int):
        return self.adjacency.get(node_id, [])

    def nodes_with(self, sample_key=None, finger_id=None, pose_id=None):
        out = []
        for i, n in enumerate(self.nodes):
            if sample_key is not None and n.sample.key != sample_key:
                continue
            if finger_id is not None and n.finger_id != finger_id:
                continue
            if pose_id is not None and n.pose_id != pose_id:
                continue
            out.append(i)
        return out

    def to_json(self) -> dict:
        edges = []
        for a, nbrs in sorted(self.adjacency.items()):
            for b, kind in nbrs:
                if a < b:
                    edges.append({"a": a, "b": b, "kind": kind})
        return {
            "nodes": [{
                "id": i,
                "grasp_def": n.sample.def_index,
                "grasp_sample": n.sample.sample_index,
                "pose_id": n.pose_id,
                "finger_id": n.finger_id,
            } for i, n in enumerate(self.nodes)],
            "edges": edges,
        }


def grasp_samples(defs: list[GraspDefinition]) -> list[GraspSample]:
    """Ranges contribute their endpoints and midpoint; singles one sample."""
    out = []
    for j, gd in enumerate(defs):
        poses = gd.sample_poses(3) if gd.is_range else [gd.pose]
        for k, tip in enumerate(poses):
            out.append(GraspSample(j, k, tip, gd.opening))
    return out


def standard_seed_poses(center, n_yaws: int = 4) -> list[Transform]:
    """The default pose seeding: every face up, a few yaws each."""
    center = np.asarray(center, dtype=float)
    face_ups = [
        Transform.identity(),
        Transform.from_axis_angle([1, 0, 0], np.pi),
        Transform.from_axis_angle([1, 0, 0], np.pi / 2),
        Transform.from_axis_angle([1, 0, 0], -np.pi / 2),
        Transform.from_axis_angle([0, 1, 0], np.pi / 2),
        Transform.from_axis_angle([0, 1, 0], -np.pi / 2),
    ]
    poses = []
    for face in face_ups:
        for k in range(n_yaws):
            yaw = Transform.from_axis_angle([0, 0, 1], 2 * np.pi * k / n_yaws)
            q = quat_multiply(yaw.rotation, face.rotation)
            poses.append(Transform(q / np.linalg.norm(q), center))
    return poses


def _interp(a: Transform, b: Transform, steps: int):
    """Screw interpolation between two poses, endpoints included."""
    qa, qb = a.rotation, b.rotation
    if float(qa @ qb) < 0:
        qb = -qb
    for t in np.linspace(0.0, 1.0, steps):
        q = (1 - t) * qa + t * qb
        q = q / np.linalg.norm(q)
        yield Transform(q, (1 - t) * a.translation + t * b.translation)


def _grasp_free(finger: FingerModel, sample: GraspSample, part_pose: Transform,
                environment) -> bool:
    body = finger.body_at(sample.opening)
    tip_world = part_pose @ sample.tip_pose
    return not any(collide(body, tip_world, ob, pose) for ob, pose in environment)


def _swept_clear(radius: float, a: np.ndarray, b: np.ndarray, env_aabbs,
                 margin: float = 0.001) -> bool:
    """Conservative test: the capsule swept by a bounding sphere misses all
    environment boxes, so no interpolated step needs checking."""
    lo = np.minimum(a, b) - radius - margin
    hi = np.maximum(a, b) + radius + margin
    for ob_lo, ob_hi in env_aabbs:
        if np.all(lo <= ob_hi) and np.all(hi >= ob_lo):
            return False
    return True


def _env_aabbs(environment):
    return [ob.aabb(pose) for ob, pose in environment]


def _repose_free(g: GripperContext, sample: GraspSample, part: BoxCompound,
                 pose_a: Transform, pose_b: Transform, environment,
                 steps: int = 16, env_aabbs=None) -> bool:
    fa, fb = pose_a @ sample.tip_pose, pose_b @ sample.tip_pose
    # tip translations interpolate linearly, and reach volumes are convex
    if not (g.reaches(fa.translation) and g.reaches(fb.translation)):
        return False
    if env_aabbs is None:
        env_aabbs = _env_aabbs(environment)
    grip_inv = sample.tip_pose.invert()
    radius = (g.finger.body_at(sample.opening).bounding_radius()
              + np.linalg.norm(grip_inv.translation) + part.bounding_radius())
    if _swept_clear(radius, fa.translation, fb.translation, env_aabbs):
        return True
    body = g.finger.body_at(sample.opening)
    for tip in _interp(fa, fb, steps):
        part_pose = tip @ grip_inv
        for ob, ob_pose in environment:
            if collide(body, tip, ob, ob_pose) or collide(part, part_pose, ob, ob_pose):
                return False
    return True


def _simultaneous_free(ga: GripperContext, sa: GraspSample, ta: Transform,
                       gb: GripperContext, sb: GraspSample, tb: Transform) -> bool:
    return not collide(ga.finger.body_at(sa.opening), ta,
                       gb.finger.body_at(sb.opening), tb)


def build_graph(part_body: BoxCompound, defs: list[GraspDefinition],
                seed_poses: list[Transform], grippers: list[GripperContext],
                environment: list[tuple[BoxCompound, Transform]] = (),
                repose_steps: int = 16) -> RegraspGraph:
    """Enumerate feasible (grasp sample, pose, finger) nodes and their edges."""
    if not seed_poses:
        raise RegraspError("need at least one seed pose")
    if len(grippers) != 2:
        raise RegraspError("the regrasp graph assumes exactly two grippers")
    samples = grasp_samples(defs)
    environment = list(environment)

    nodes = []
    for pose_id, pose in enumerate(seed_poses):
        for finger_id, g in enumerate(grippers):
            for sample in samples:
                tip_world = pose @ sample.tip_pose
                if not g.reaches(tip_world.translation):
                    continue
                if not _grasp_free(g.finger, sample, pose, environment):
                    continue
                nodes.append(RegraspNode(sample, pose_id, finger_id))
    if not nodes:
        raise EmptyGraph("no feasible grasp/pose/finger combination")

    graph = RegraspGraph(part_body, nodes, list(seed_poses), list(grippers),
                         environment=environment)
    adj = graph.adjacency
    by_pose: dict[int, list[int]] = {}
    by_grip: dict[tuple, list[int]] = {}
    for i, n in enumerate(nodes):
        by_pose.setdefault(n.pose_id, []).append(i)
        by_grip.setdefault((n.sample.key, n.finger_id), []).append(i)

    for pose_id, ids in by_pose.items():
        pose = seed_poses[pose_id]
        for i, j in itertools.combinations(ids, 2):
            a, b = nodes[i], nodes[j]
            if a.finger_id == b.finger_id:
                continue
            ta = pose @ a.sample.tip_pose
            tb = pose @ b.sample.tip_pose
            if _simultaneous_free(grippers[a.finger_id], a.sample, ta,
                                  grippers[b.finger_id], b.sample, tb):
                adj.setdefault(i, []).append((j, "regrasp"))
                adj.setdefault(j, []).append((i, "regrasp"))

    repose_cache: dict = {}
    env_aabbs = _env_aabbs(environment)
    for (sample_key, finger_id), ids in by_grip.items():
        for i, j in itertools.combinations(ids, 2):
            a, b = nodes[i], nodes[j]
            key = (sample_key, finger_id, min(a.pose_id, b.pose_id), max(a.pose_id, b.pose_id))
            if key not in repose_cache:
                repose_cache[key] = _repose_free(
                    grippers[finger_id], a.sample, part_body,
                    seed_poses[a.pose_id], seed_poses[b.pose_id],
                    environment, repose_steps, env_aabbs)
            if repose_cache[key]:
                adj.setdefault(i, []).append((j, "repose"))
                adj.setdefault(j, []).append((i, "repose"))
    return graph


@dataclass
class RegraspPlan:
    node_ids: list  # visited graph nodes, start included
    edge_kinds: list  # one per transition
    regrasp_count: int

    def __len__(self):
        return len(self.edge_kinds)


def plan_regrasp(graph: RegraspGraph, start_nodes, goal_sample_key,
                 goal_finger: int | None = None) -> RegraspPlan:
    """Dijkstra on (regrasp count, repose count) from any start to the goal grasp.

    The goal is any node holding `goal_sample_key` (with `goal_finger` when
    given). Raises NoPath when unreachable.
    """
    starts = list(start_nodes)
    if not starts:
        raise NoPath("no start nodes")

    def is_goal(node_id: int) -> bool:
        n = graph.nodes[node_id]
        if n.sample.key != goal_sample_key:
            return False
        return goal_finger is None or n.finger_id == goal_finger

    counter = itertools.count()
    heap = [(0, 0, next(counter), s, None) for s in starts]
    heapq.heapify(heap)
    best: dict[int, tuple] = {}
    parent: dict[int, int | None] = {}
    while heap:
        regrasps, reposes, _, node_id, par = heapq.heappop(heap)
        if node_id in best and best[node_id] <= (regrasps, reposes):
            continue
        best[node_id] = (regrasps, reposes)
        parent[node_id] = par
        if is_goal(node_id):
            path = [node_id]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            path.reverse()
            kinds = []
            for a, b in zip(path, path[1:]):
                kind = next(k for o, k in graph.neighbors(a) if o == b)
                kinds.append(kind)
            return RegraspPlan(path, kinds, regrasps)
        for other, kind in graph.neighbors(node_id):
            cost = (regrasps + (1 if kind == "regrasp" else 0),
                    reposes + (1 if kind == "repose" else 0))
            if other in best and best[other] <= cost:
                continue
            heapq.heappush(heap, (cost[0], cost[1], next(counter), other, node_id))
    raise NoPath(f"goal grasp {goal_sample_key} unreachable")


def match_sample(graph: RegraspGraph, in_hand: Transform,
                 lin_tol: float = 0.006, ang_tol_deg: float = 10.0) -> GraspSample | None:
    """The graph grasp sample closest to an estimated in-hand grip, if any."""
    best, best_d = None, np.inf
    seen = set()
    for n in graph.nodes:
        s = n.sample
        if s.key in seen:
            continue
        seen.add(s.key)
        d_lin = float(np.linalg.norm(s.tip_pose.translation - in_hand.translation))
        d_ang = np.degrees(s.tip_pose.rotation_distance(in_hand))
        if d_lin <= lin_tol and d_ang <= ang_tol_deg and d_lin < best_d:
            best, best_d = s, d_lin
    return best


def entry_repose_free(graph: RegraspGraph, holder: int, in_hand: Transform,
                      part_pose: Transform, pose_id: int, steps: int = 16) -> bool:
    """Can the holding gripper move the part from its current pose to a seed pose?"""
    g = graph.grippers[holder]
    fa = part_pose @ in_hand
    fb = graph.seed_poses[pose_id] @ in_hand
    if not (g.reaches(fa.translation) and g.reaches(fb.translation)):
        return False
    finger_body = g.finger.body_at(min(g.finger.max_opening, _entry_opening(graph, in_hand)))
    grip_inv = in_hand.invert()
    radius = (finger_body.bounding_radius() + np.linalg.norm(grip_inv.translation)
              + graph.part_body.bounding_radius())
    if _swept_clear(radius, fa.translation, fb.translation, _env_aabbs(graph.environment)):
        return True
    for tip in _interp(fa, fb, steps):
        pp = tip @ grip_inv
        for ob, ob_pose in graph.environment:
            if collide(finger_body, tip, ob, ob_pose) or collide(graph.part_body, pp, ob, ob_pose):
                return False
    return True


def _entry_opening(graph: RegraspGraph, in_hand: Transform) -> float:
    s = match_sample(graph, in_hand, lin_tol=np.inf, ang_tol_deg=np.inf)
    return s.opening if s is not None else 0.05


def initial_grasp(graph: RegraspGraph, part_pose: Transform, in_hand: Transform,
                  holder: int, goal_sample_key, goal_finger: int | None = None) -> int:
    """Pick the free-finger node to hand off into after pickup.

    Candidates are nodes of the non-holding finger whose seed pose the holder
    can repose to and whose grasp stays clear of the holding fingers; among
    them the one with the shortest downstream regrasp sequence wins.
    """
    free = 1 - holder
    holder_ctx = graph.grippers[holder]
    holder_body = holder_ctx.finger.body_at(_entry_opening(graph, in_hand))
    best_node, best_cost = None, None
    for node_id in graph.nodes_with(finger_id=free):
        n = graph.nodes[node_id]
        pose = graph.seed_poses[n.pose_id]
        if not entry_repose_free(graph, holder, in_hand, part_pose, n.pose_id):
            continue
        tip_holder = pose @ in_hand
        tip_free = pose @ n.sample.tip_pose
        free_body = graph.grippers[free].finger.body_at(n.sample.opening)
        if collide(holder_body, tip_holder, free_body, tip_free):
            continue
        try:
            downstream = plan_regrasp(graph, [node_id], goal_sample_key, goal_finger)
        except NoPath:
            continue
        cost = (1 + downstream.regrasp_count, len(downstream.edge_kinds), node_id)
        if best_cost is None or cost < best_cost:
            best_node, best_cost = node_id, cost
    if best_node is None:
        raise NoFeasibleHandoff("no reachable, collision-free handoff node")
    return best_node


@dataclass(frozen=True)
class MotionPrimitive:
    kind: str  # repose | hover | descend | close | release | retreat | clear
    finger_id: int
    target: Transform | None = None
    opening: float | None = None


def emit_motions(plan: RegraspPlan, graph: RegraspGraph,
                 clear_poses: dict[int, Transform],
                 hover: float = HOVER_OFFSET, padding: float = OPEN_PADDING
                 ) -> list[MotionPrimitive]:
    """Expand a plan into linear motion primitives with explicit tip targets.

    Each handoff: the free fingers hover just above their grasp pose slightly
    over-opened, descend, close; the old fingers release, retreat straight up,
    and move clear.
    """
    if not plan.node_ids:
        raise RegraspError("empty plan")
    out: list[MotionPrimitive] = []
    lift = Transform.from_translation([0, 0, hover])
    for (a, b), kind in zip(zip(plan.node_ids, plan.node_ids[1:]), plan.edge_kinds):
        na, nb = graph.nodes[a], graph.nodes[b]
        pose_b = graph.seed_poses[nb.pose_id]
        if kind == "repose":
            out.append(MotionPrimitive("repose", na.finger_id,
                                       pose_b @ na.sample.tip_pose))
            continue
        new_tip = pose_b @ nb.sample.tip_pose
        old_tip = pose_b @ na.sample.tip_pose
        out.append(MotionPrimitive("hover", nb.finger_id, lift @ new_tip,
                                   min(nb.sample.opening + padding,
                                       graph.grippers[nb.finger_id].finger.max_opening)))
        out.append(MotionPrimitive("descend", nb.finger_id, new_tip))
        out.append(MotionPrimitive("close", nb.finger_id, new_tip, nb.sample.opening))
        out.append(MotionPrimitive("release", na.finger_id, old_tip,
                                   min(na.sample.opening + padding,
                                       graph.grippers[na.finger_id].finger.max_opening)))
        out.append(MotionPrimitive("retreat", na.finger_id, lift @ old_tip))
        out.append(MotionPrimitive("clear", na.finger_id, clear_poses[na.finger_id]))
    return out
