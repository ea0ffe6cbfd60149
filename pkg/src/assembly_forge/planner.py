"""Disassembly verification by best-first search on a translation lattice.

Extraction of a part is searched over +-x/y/z steps along the part's local
axes while a maintained grasp keeps the finger body rigidly attached. Node
validity allows resting contact (penetration up to the contact epsilon) so
parts can slide through tight, touching assemblies. Path cost is step count
plus a large per-direction-change penalty, which makes the number of
direction changes lexicographically dominant.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .geom import CONTACT_EPS, BoxCompound, GeometryError, Transform, _pair_separation, collide, separation
from .grasp import FingerModel, GraspDefinition

DIRECTIONS = np.array([
    [1, 0, 0], [-1, 0, 0],
    [0, 1, 0], [0, -1, 0],
    [0, 0, 1], [0, 0, -1],
], dtype=int)


class PlanningError(RuntimeError):
    pass


class Blocked(PlanningError):
    """No collision-free extraction path exists for any grasp."""

    def __init__(self, msg, part_index=None, trial=None):
        super().__init__(msg)
        self.part_index = part_index
        self.trial = trial


class NoValidGrasp(PlanningError):
    """Every grasp placement collides already at the goal pose."""

    def __init__(self, msg, part_index=None, trial=None):
        super().__init__(msg)
        self.part_index = part_index
        self.trial = trial


@dataclass(frozen=True)
class DesignPart:
    part_class: int
    body: BoxCompound
    goal_pose: Transform  # in the assembly frame


@dataclass(frozen=True)
class AssemblyDesign:
    parts: tuple
    base_body: BoxCompound
    base_pose: Transform  # in the assembly frame
    frame: Transform = field(default_factory=Transform)  # assembly -> workcell

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise GeometryError("design needs at least one part")

    def check_goal_clearances(self) -> None:
        """Goal poses must not interpenetrate beyond the contact epsilon."""
        bodies = [(p.body, p.goal_pose) for p in self.parts]
        bodies.append((self.base_body, self.base_pose))
        for (a, ta), (b, tb) in itertools.combinations(bodies, 2):
            if collide(a, ta, b, tb, margin=-CONTACT_EPS):
                raise GeometryError("design goal poses interpenetrate")

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        lows, highs = [], []
        for p in self.parts:
            lo, hi = p.body.aabb(p.goal_pose)
            lows.append(lo)
            highs.append(hi)
        lo, hi = self.base_body.aabb(self.base_pose)
        lows.append(lo)
        highs.append(hi)
        return np.min(lows, axis=0), np.max(highs, axis=0)

    def min_clearance(self) -> float:
        """Smallest positive gap between any two design bodies."""
        bodies = [(p.body, p.goal_pose) for p in self.parts]
        bodies.append((self.base_body, self.base_pose))
        best = np.inf
        for (a, ta), (b, tb) in itertools.combinations(bodies, 2):
            s = separation(a, ta, b, tb)
            if s > CONTACT_EPS:
                best = min(best, s)
        return float(best)


@dataclass(frozen=True)
class LatticeConfig:
    step: float
    lo: np.ndarray  # assembly-frame bounds around the design
    hi: np.ndarray
    margin: float = 0.01
    change_penalty: int = 1000
    max_nodes: int = 400_000

    def __post_init__(self):
        if self.step <= 0:
            raise GeometryError("lattice step must be positive")
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    @staticmethod
    def from_design(design: AssemblyDesign, margin: float = 0.01,
                    step: float | None = None) -> "LatticeConfig":
        """Step defaults to half the smallest clearance, floored at 1 mm."""
        if step is None:
            clear = design.min_clearance()
            step = 0.001 if not np.isfinite(clear) else min(max(clear / 2, 0.001), 0.01)
        lo, hi = design.aabb()
        return LatticeConfig(step, lo, hi, margin)


@dataclass
class WaypointPath:
    """Extraction waypoints: finger poses in the workcell at every turn point."""

    waypoints: list  # of Transform, workcell frame
    grasp: GraspDefinition
    grasp_pose: Transform  # tip frame in the part frame (the chosen sample)
    base_pose: Transform  # world pose of the fixed base when planned
    direction_changes: int
    steps: int
    part_cells: list  # lattice cells of the waypoints, for re-simulation


class _StaticBoxes:
    """World-frame obstacle boxes with AABBs for cheap prefiltering."""

    def __init__(self, bodies: list[tuple[BoxCompound, Transform]]):
        halfs, rots, trans, lows, highs = [], [], [], [], []
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=float)
        for body, pose in bodies:
            for box in body.boxes:
                world = pose @ box.pose
                halfs.append(box.half_extents)
                rots.append(world.matrix)
                trans.append(world.translation)
                pts = world.apply(signs * box.half_extents)
                lows.append(pts.min(axis=0))
                highs.append(pts.max(axis=0))
        self.n = len(halfs)
        if self.n:
            self.half = np.array(halfs)
            self.rot = np.array(rots)
            self.trans = np.array(trans)
            self.lo = np.array(lows)
            self.hi = np.array(highs)

    def collides(self, half: np.ndarray, rot: np.ndarray, trans: np.ndarray,
                 lo: np.ndarray, hi: np.ndarray, margin: float) -> bool:
        if self.n == 0:
            return False
        pad = max(margin, 0.0) + 1e-9
        cand = np.nonzero(np.all(self.lo <= hi + pad, axis=1) & np.all(self.hi >= lo - pad, axis=1))[0]
        for k in cand:
            if _pair_separation(half, rot, trans, self.half[k], self.rot[k], self.trans[k],
                                stop_at=margin) < margin:
                return True
        return False


class _MovingBody:
    """A rigid compound whose pose varies only by translation during search."""

    def __init__(self, body: BoxCompound, pose0: Transform):
        self.boxes = []
        for box in body.boxes:
            world = pose0 @ box.pose
            signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                             dtype=float)
            pts = world.apply(signs * box.half_extents)
            self.boxes.append((box.half_extents, world.matrix, world.translation,
                               pts.min(axis=0), pts.max(axis=0)))

    def collides(self, offset: np.ndarray, obstacles: _StaticBoxes, margin: float) -> bool:
        return any(obstacles.collides(half, rot, trans + offset, lo + offset, hi + offset, margin)
                   for half, rot, trans, lo, hi in self.boxes)

    def aabb(self, offset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = np.min([b[3] for b in self.boxes], axis=0)
        hi = np.max([b[4] for b in self.boxes], axis=0)
        return lo + offset, hi + offset


def _grasp_samples(defs: list[GraspDefinition]):
    for def_idx, gd in enumerate(defs):
        poses = gd.sample_poses(3) if gd.is_range else [gd.pose]
        for sample_idx, tip in enumerate(poses):
            yield def_idx, sample_idx, gd, tip


@dataclass
class _LatticeProblem:
    part: _MovingBody  # in the assembly frame
    finger: _MovingBody | None
    obstacles: _StaticBoxes
    step_vectors: np.ndarray  # (6, 3) assembly-frame displacement per step
    lattice: LatticeConfig
    margin: float = -CONTACT_EPS

    def part_axes(self) -> np.ndarray:
        # rows: displacement per +x/+y/+z lattice unit
        return self.step_vectors[[0, 2, 4]]

    def valid(self, cell) -> bool:
        off = np.asarray(cell, dtype=float) @ self.part_axes()
        if self.part.collides(off, self.obstacles, self.margin):
            return False
        if self.finger is not None and self.finger.collides(off, self.obstacles, self.margin):
            return False
        return True

    def is_goal(self, cell) -> bool:
        off = np.asarray(cell, dtype=float) @ self.part_axes()
        lo, hi = self.part.aabb(off)
        m = self.lattice.margin
        return bool(np.any(lo > self.lattice.hi + m) or np.any(hi < self.lattice.lo - m))

    def heuristic(self, cell) -> int:
        off = np.asarray(cell, dtype=float) @ self.part_axes()
        lo, hi = self.part.aabb(off)
        m = self.lattice.margin
        best = np.inf
        for d in range(6):
            v = self.step_vectors[d]
            for a in range(3):
                if v[a] > 1e-9:
                    best = min(best, (self.lattice.hi[a] + m - lo[a]) / v[a])
                elif v[a] < -1e-9:
                    best = min(best, (hi[a] - (self.lattice.lo[a] - m)) / (-v[a]))
        if not np.isfinite(best) or best <= 0:
            return 0
        return int(np.ceil(best - 1e-9))


def lattice_problem(design: AssemblyDesign, part_index: int, removed: set[int],
                    finger: FingerModel | None, grasp: GraspDefinition | None,
                    tip_pose: Transform | None, lattice: LatticeConfig,
                    environment: list[tuple[BoxCompound, Transform]] = (),
                    frame: Transform | None = None) -> _LatticeProblem:
    """Build the search problem for one part and one grasp sample.

    Everything is expressed in the assembly frame so that random design
    placements reuse identical lattice geometry; world-frame environment
    obstacles are mapped in through `frame` (defaults to the design frame).
    """
    frame = frame if frame is not None else design.frame
    to_asm = frame.invert()
    part = design.parts[part_index]
    obstacles = [(design.base_body, design.base_pose)]
    obstacles += [(p.body, p.goal_pose) for j, p in enumerate(design.parts)
                  if j != part_index and j not in removed]
    obstacles += [(body, to_asm @ pose) for body, pose in environment]
    moving_part = _MovingBody(part.body, part.goal_pose)
    moving_finger = None
    if finger is not None and grasp is not None and tip_pose is not None:
        moving_finger = _MovingBody(finger.body_at(grasp.opening), part.goal_pose @ tip_pose)
    rot = part.goal_pose.matrix
    step_vectors = np.array([s * lattice.step * rot[:, a]
                             for a in range(3) for s in (1.0, -1.0)])
    return _LatticeProblem(moving_part, moving_finger, _StaticBoxes(obstacles),
                           step_vectors, lattice)


def _search(problem: _LatticeProblem) -> tuple[list, int, int] | None:
    """A* over (cell, incoming direction); returns (cells, changes, steps)."""
    penalty = problem.lattice.change_penalty
    start = (0, 0, 0)
    if not problem.valid(start):
        return None
    counter = itertools.count()
    h0 = problem.heuristic(start)
    heap = [(h0, next(counter), 0, 0, start, -1, None)]
    best: dict = {}
    parents: dict = {}
    popped = 0
    while heap:
        f, _, changes, steps, cell, last_dir, parent = heapq.heappop(heap)
        key = (cell, last_dir)
        if key in best and best[key] <= changes * penalty + steps:
            continue
        best[key] = changes * penalty + steps
        parents[key] = parent
        popped += 1
        if popped > problem.lattice.max_nodes:
            raise PlanningError("lattice search exceeded its node budget")
        if problem.is_goal(cell):
            cells = [key]
            while parents[cells[-1]] is not None:
                cells.append(parents[cells[-1]])
            cells.reverse()
            return [c for c, _ in cells], changes, steps
        for d in range(6):
            step = DIRECTIONS[d]
            nxt = (cell[0] + step[0], cell[1] + step[1], cell[2] + step[2])
            nchanges = changes + (1 if last_dir not in (-1, d) else 0)
            nsteps = steps + 1
            nkey = (nxt, d)
            ncost = nchanges * penalty + nsteps
            if nkey in best and best[nkey] <= ncost:
                continue
            if not problem.valid(nxt):
                continue
            heapq.heappush(heap, (ncost + problem.heuristic(nxt), next(counter),
                                  nchanges, nsteps, nxt, d, key))
    return None


def _dedupe_cells(cells: list) -> list:
    """Waypoint cells: endpoints plus every direction change."""
    if len(cells) <= 2:
        return list(cells)
    out = [cells[0]]
    prev_dir = None
    for a, b in zip(cells, cells[1:]):
        d = tuple(np.subtract(b, a))
        if prev_dir is not None and d != prev_dir:
            out.append(a)
        prev_dir = d
    out.append(cells[-1])
    return out


def _alignment(grasp_tip: Transform, cells: list) -> float:
    """How well the finger closing axis lines up with some motion segment."""
    x_in_part = grasp_tip.matrix[:, 0]
    best = 0.0
    for a, b in zip(cells, cells[1:]):
        d = np.subtract(b, a).astype(float)
        d /= np.linalg.norm(d)
        best = max(best, abs(float(x_in_part @ d)))
    return best


def verify_extraction(design: AssemblyDesign, part_index: int,
                      grasp_sets: dict[int, list[GraspDefinition]],
                      finger: FingerModel, lattice: LatticeConfig,
                      removed: set[int] | None = None,
                      environment: list[tuple[BoxCompound, Transform]] = (),
                      frame: Transform | None = None) -> WaypointPath:
    """Search an extraction path for one part under a maintained grasp.

    Each grasp sample is searched independently; among the succeeding ones a
    grasp whose closing axis aligns with a motion segment is preferred (it
    resists twisting during contact), then the lowest authored index. Raises
    NoValidGrasp when no finger placement is collision-free at the goal pose
    and Blocked when no grasp admits a path.
    """
    frame = frame if frame is not None else design.frame
    removed = removed or set()
    part = design.parts[part_index]
    defs = grasp_sets.get(part.part_class)
    if not defs:
        raise NoValidGrasp(f"part class {part.part_class} has no grasps", part_index)

    part_only = lattice_problem(design, part_index, removed, None, None, None,
                                lattice, environment, frame)
    if not part_only.valid((0, 0, 0)):
        raise Blocked(f"part {part_index} interpenetrates at its goal pose", part_index)

    results = []
    any_start_valid = False
    seen_bodies: dict = {}
    for def_idx, sample_idx, gd, tip in _grasp_samples(defs):
        problem = lattice_problem(design, part_index, removed, finger, gd, tip,
                                  lattice, environment, frame)
        body_key = _finger_body_key(finger, gd, part.goal_pose @ tip)
        if body_key in seen_bodies:
            outcome = seen_bodies[body_key]
        else:
            outcome = _search(problem)
            seen_bodies[body_key] = outcome
        if problem.valid((0, 0, 0)):
            any_start_valid = True
        if outcome is None:
            continue
        cells, changes, steps = outcome
        results.append((def_idx, sample_idx, gd, tip, cells, changes, steps))

    if not results:
        if not any_start_valid:
            raise NoValidGrasp(f"no grasp is collision-free at the goal of part {part_index}",
                               part_index)
        raise Blocked(f"part {part_index} cannot be extracted", part_index)

    aligned = [r for r in results if _alignment(r[3], r[4]) >= 1.0 - 1e-6]
    pool = aligned if aligned else results
    def_idx, sample_idx, gd, tip, cells, changes, steps = min(pool, key=lambda r: (r[0], r[1]))

    waypoint_cells = _dedupe_cells(cells)
    rot = part.goal_pose.matrix
    waypoints = []
    for cell in waypoint_cells:
        offset_asm = np.asarray(cell, dtype=float) @ (lattice.step * rot.T)
        part_pose_asm = Transform(part.goal_pose.rotation,
                                  part.goal_pose.translation + offset_asm)
        waypoints.append(frame @ part_pose_asm @ tip)
    return WaypointPath(waypoints, gd, tip, frame @ design.base_pose,
                        changes, steps, waypoint_cells)


def _finger_body_key(finger: FingerModel, gd: GraspDefinition, tip_world: Transform):
    """Grasp samples whose finger bodies coincide search identically."""
    body = finger.body_at(gd.opening)
    parts = []
    for box in body.boxes:
        world = tip_world @ box.pose
        parts.append((tuple(np.round(box.half_extents, 9)),
                      tuple(np.round(world.matrix.ravel(), 6)),
                      tuple(np.round(world.translation, 9))))
    return frozenset(parts)


@dataclass
class PartVerification:
    part_index: int
    sequence_position: int
    failures: list  # of (trial, str)

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class SequenceReport:
    results: list  # of PartVerification, in sequence order
    canonical_paths: dict  # part_index -> WaypointPath at the design frame
    trials: int

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)


def verify_sequence(design: AssemblyDesign, sequence: list[int],
                    grasp_sets: dict[int, list[GraspDefinition]],
                    finger: FingerModel, lattice: LatticeConfig,
                    trials: int = 5, seed: int = 0,
                    area: tuple | None = None,
                    environment: list[tuple[BoxCompound, Transform]] = ()) -> SequenceReport:
    """Verify a disassembly order at the canonical pose plus random trials.

    Every trial places the whole design at a random position and yaw inside
    `area` ((lo_xy, hi_xy) in the workcell) and extracts parts in sequence
    order, hiding the already-extracted ones. All failures are collected per
    part rather than raised.
    """
    if sorted(sequence) != list(range(len(design.parts))):
        raise PlanningError("sequence must be a permutation of the part indices")
    rng = np.random.default_rng(seed)
    frames = [design.frame]
    for _ in range(trials):
        if area is None:
            frames.append(design.frame)
        else:
            lo, hi = np.asarray(area[0], dtype=float), np.asarray(area[1], dtype=float)
            xy = rng.uniform(lo, hi)
            yaw = rng.uniform(0, 2 * np.pi)
            frames.append(Transform.from_axis_angle([0, 0, 1], yaw,
                                                    [xy[0], xy[1], design.frame.translation[2]]))

    results = [PartVerification(p, k, []) for k, p in enumerate(sequence)]
    canonical: dict = {}
    for trial, frame in enumerate(frames):
        removed: set[int] = set()
        for k, part_index in enumerate(sequence):
            try:
                path = verify_extraction(design, part_index, grasp_sets, finger,
                                         lattice, removed, environment, frame)
                if trial == 0:
                    canonical[part_index] = path
            except PlanningError as err:
                label = "canonical" if trial == 0 else f"trial {trial - 1}"
                results[k].failures.append((label, f"{type(err).__name__}: {err}"))
            removed.add(part_index)
    return SequenceReport(results, canonical, trials)


def insertion_waypoints(extraction: WaypointPath, base_pose: Transform,
                        in_hand: Transform) -> list[Transform]:
    """Reverse the extraction and re-express it for the observed situation.

    `base_pose` is the observed world pose of the fixed base and `in_hand`
    the estimated tip-in-part offset of the currently held part; the planned
    part motion (relative to the base) is replayed through both.
    """
    if not extraction.waypoints:
        raise PlanningError("empty extraction path")
    rebase = base_pose @ extraction.base_pose.invert()
    regrip = extraction.grasp_pose.invert() @ in_hand
    return [rebase @ w @ regrip for w in reversed(extraction.waypoints)]
