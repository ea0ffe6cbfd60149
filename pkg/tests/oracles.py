"""Independent reference implementations used to cross-check the library.

These deliberately avoid the production code paths: collision by point
sampling, search optimality by exhaustive breadth-first enumeration, camera
math by direct ray-surface intersection.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

from assembly_forge.geom import Box, BoxCompound, Transform


def sampled_overlap(a: BoxCompound, pose_a: Transform, b: BoxCompound, pose_b: Transform,
                    n: int, rng: np.random.Generator) -> bool:
    """Monte-Carlo intersection test: any interior sample of one body inside the other."""
    pts_a = pose_a.apply(a.sample_points(n, rng))
    if b.contains(pts_a, pose_b).any():
        return True
    pts_b = pose_b.apply(b.sample_points(n, rng))
    return bool(a.contains(pts_b, pose_a).any())


def ray_box_depth(origin: np.ndarray, direction: np.ndarray, box: Box, pose: Transform) -> float:
    """Entry parameter t of origin + t*direction against one posed box, inf if missed."""
    world = pose @ box.pose
    r = world.matrix
    o = r.T @ (np.asarray(origin, float) - world.translation)
    d = r.T @ np.asarray(direction, float)
    t_lo, t_hi = -np.inf, np.inf
    for k in range(3):
        h = box.half_extents[k]
        if abs(d[k]) < 1e-12:
            if abs(o[k]) > h:
                return np.inf
            continue
        t1 = (-h - o[k]) / d[k]
        t2 = (h - o[k]) / d[k]
        t_lo = max(t_lo, min(t1, t2))
        t_hi = min(t_hi, max(t1, t2))
    if t_hi < t_lo or t_hi <= 0:
        return np.inf
    return t_lo if t_lo > 0 else t_hi


def lattice_min_direction_changes(valid, start, is_goal, max_nodes=200_000):
    """Exhaustive 0-1 BFS over (cell, incoming direction) states.

    Returns the minimum number of direction changes over all goal-reaching
    lattice paths, or None if no path exists. `valid(cell)` and
    `is_goal(cell)` take integer 3-tuples.
    """
    dirs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    dq = deque()
    best = {}
    for d in range(6):
        dq.append((0, start, d, True))  # virtual start: first move is free of charge
    seen_nodes = set()
    while dq:
        changes, cell, d, fresh = dq.popleft()
        key = (cell, d)
        if key in best and best[key] <= changes:
            continue
        best[key] = changes
        if is_goal(cell):
            return changes
        seen_nodes.add(cell)
        if len(seen_nodes) > max_nodes:
            raise RuntimeError("lattice oracle exceeded node budget")
        step = dirs[d]
        nxt = (cell[0] + step[0], cell[1] + step[1], cell[2] + step[2])
        if valid(nxt):
            dq.appendleft((changes, nxt, d, False))
        if not fresh:
            for d2 in range(6):
                if d2 == d:
                    continue
                key2 = (cell, d2)
                if key2 in best and best[key2] <= changes + 1:
                    continue
                dq.append((changes + 1, cell, d2, False))
    # goal may be the start itself
    if is_goal(start):
        return 0
    return None


def regrasp_min_steps(n_nodes: int, edges, starts, goals) -> int | None:
    """Exhaustive Dijkstra on regrasp-step count: regrasp edges cost 1, repose 0.

    `edges` is an iterable of (u, v, kind) with kind in {"regrasp", "repose"}.
    Returns the minimum regrasp count from any start to any goal, else None.
    """
    adj = [[] for _ in range(n_nodes)]
    for u, v, kind in edges:
        w = 1 if kind == "regrasp" else 0
        adj[u].append((v, w))
        adj[v].append((u, w))
    goal_set = set(goals)
    dist = {s: 0 for s in starts}
    heap = [(0, s) for s in starts]
    heapq.heapify(heap)
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, np.inf):
            continue
        if u in goal_set:
            return d
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return None


def random_box(rng: np.random.Generator, lo=0.02, hi=0.08) -> BoxCompound:
    return BoxCompound.single(rng.uniform(lo, hi, 3))


def random_transform(rng: np.random.Generator, max_translation=0.15) -> Transform:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Transform.from_axis_angle(axis, rng.uniform(0, np.pi),
                                     rng.uniform(-max_translation, max_translation, 3))
