"""Simulated execution of a recipe in a kinematic workcell.

The loop mirrors the generated recipe: localize the fixed base once, then
per part pick from the pile (grasp oracle), estimate the in-hand pose (pose
oracle), regrasp to the goal grasp via the regrasp graph, and drive the
insertion waypoints. Grippers are kinematic: parts move rigidly with the
finger that holds them, releases settle parts onto their support, and every
commanded pose is checked for interpenetration. Shallow support penetration
from estimation error is resolved upward, standing in for the compliance of
a physical grasp. All stochastic choices flow from the run seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .geom import CONTACT_EPS, BoxCompound, Transform, collide
from .grasp import PlacedPart, commanded_opening, infer_grasps, label_scene, select_grasp
from .planner import AssemblyDesign, insertion_waypoints
from .pose import estimate_pose, label_pose
from .recipe import Recipe, build_regrasp_graphs, fill_view_camera
from .regrasp import (
    NoFeasibleHandoff,
    NoPath,
    RegraspGraph,
    RegraspPlan,
    entry_repose_free,
    initial_grasp,
    match_sample,
    plan_regrasp,
)
from .render import GridSpec, Heightmap, camera_facing_grid, render_depth, to_heightmap
from .workcell import PartsLibrary, WorkcellModel


class ExecutionError(RuntimeError):
    pass


class StepFailed(ExecutionError):
    def __init__(self, step_index: int, cause: str):
        super().__init__(f"step {step_index} failed after retries: {cause}")
        self.step_index = step_index
        self.cause = cause


class SimulationFault(ExecutionError):
    """A recoverable, retryable failure inside one step attempt."""


@dataclass
class FaultModel:
    """Deterministic fault injection: fail the first N pick attempts per step."""

    pick_failures: dict = field(default_factory=dict)  # step index -> count

    def pick_fails(self, step_index: int, attempt: int) -> bool:
        return attempt <= self.pick_failures.get(step_index, 0)

    @staticmethod
    def single_pick_failure_every_step(n_steps: int) -> "FaultModel":
        return FaultModel({i: 1 for i in range(n_steps)})


@dataclass
class SimState:
    part_poses: list  # true world pose per design part index
    held: dict = field(default_factory=dict)  # gripper id -> (part index, tip-in-part)
    finger_tips: dict = field(default_factory=dict)  # gripper id -> commanded tip pose
    finger_openings: dict = field(default_factory=dict)
    placed: set = field(default_factory=set)

    def held_parts(self) -> set:
        return {p for p, _ in self.held.values()}


@dataclass
class ExecutionLog:
    events: list = field(default_factory=list)
    rasters: dict = field(default_factory=dict)  # raster id -> Heightmap
    tick: int = 0

    def add(self, kind: str, state: SimState | None = None, **data):
        event = {"tick": self.tick, "type": kind, **data}
        if state is not None:
            event["parts"] = [_pose_json(p) for p in state.part_poses]
            event["fingers"] = {str(g): _pose_json(t) for g, t in sorted(state.finger_tips.items())}
            event["held"] = {str(g): p for g, (p, _) in sorted(state.held.items())}
        self.events.append(event)
        self.tick += 1

    def to_json(self) -> dict:
        return {"schema_version": 1, "events": self.events,
                "raster_ids": sorted(self.rasters)}


def _pose_json(t: Transform) -> dict:
    return {"rotation": [round(float(v), 12) for v in t.rotation],
            "translation": [round(float(v), 12) for v in t.translation]}


def scatter_pile(design: AssemblyDesign, workcell: WorkcellModel, seed: int,
                 spacing: float = 0.12) -> list[Transform]:
    """Upright parts at random positions and yaws in the pickup area, resting
    on the support plane with a minimum center spacing."""
    rng = np.random.default_rng(seed)
    area = workcell.pickup_area
    poses: list[Transform] = []
    for part in design.parts:
        body_lo, body_hi = part.body.aabb()
        rest_z = -float(body_lo[2])
        # any yaw keeps the part inside a disc of this radius around (0, 0)
        corners = np.array([[x, y] for x in (body_lo[0], body_hi[0])
                            for y in (body_lo[1], body_hi[1])])
        radius = float(np.linalg.norm(corners, axis=1).max())
        lo = area.lo[:2] + max(spacing / 2, radius + 0.005)
        hi = area.hi[:2] - max(spacing / 2, radius + 0.005)
        if np.any(hi <= lo):
            raise ExecutionError("pickup area too small for the pile")
        for _ in range(500):
            xy = rng.uniform(lo, hi)
            yaw = rng.uniform(0, 2 * np.pi)
            if all(np.linalg.norm(xy - p.translation[:2]) >= spacing for p in poses):
                poses.append(Transform.from_axis_angle([0, 0, 1], yaw, [xy[0], xy[1], rest_z]))
                break
        else:
            raise ExecutionError("could not scatter the pile with the requested spacing")
    return poses


class Simulator:
    """Owns one simulation run; `execute` below is the functional entry point."""

    def __init__(self, recipe: Recipe, workcell: WorkcellModel, library: PartsLibrary,
                 design: AssemblyDesign, config: PipelineConfig | None = None,
                 graphs: dict[int, RegraspGraph] | None = None):
        self.recipe = recipe
        self.workcell = workcell
        self.library = library
        self.design = design
        self.config = config or PipelineConfig()
        self.graphs = graphs if graphs is not None else build_regrasp_graphs(
            workcell, library, self.config, {s.part_class for s in recipe.steps})
        self.log = ExecutionLog()
        self.base_estimate: Transform | None = None

    # -- world queries ------------------------------------------------------

    def _obstacles(self, state: SimState, exclude: set):
        out = [(self.library.base_body, self.design.frame @ self.design.base_pose)]
        out += list(self.workcell.environment)
        for i, pose in enumerate(state.part_poses):
            if i not in exclude:
                out.append((self.design.parts[i].body, pose))
        return out

    def _assert_clear(self, state: SimState, body: BoxCompound, pose: Transform,
                      exclude: set, what: str, moving_finger: int | None = None):
        for ob, ob_pose in self._obstacles(state, exclude):
            if collide(body, pose, ob, ob_pose, margin=-CONTACT_EPS):
                raise ExecutionError(f"interpenetration during {what}")
        if moving_finger is not None:
            for g, tip in state.finger_tips.items():
                if g == moving_finger:
                    continue
                other = self.workcell.grippers[g].finger.body_at(
                    min(state.finger_openings.get(g, 0.05),
                        self.workcell.grippers[g].finger.max_opening))
                if collide(body, pose, other, tip, margin=-CONTACT_EPS):
                    raise ExecutionError(f"gripper-gripper contact during {what}")

    def _project_contact(self, state: SimState, part_index: int, pose: Transform,
                         max_lift: float = 0.003) -> Transform:
        """Lift a commanded part pose out of shallow support penetration."""
        body = self.design.parts[part_index].body
        exclude = {part_index} | state.held_parts()
        obstacles = self._obstacles(state, exclude)
        if not any(collide(body, pose, ob, op, margin=0.0) for ob, op in obstacles):
            return pose
        lo_lift, hi_lift = 0.0, max_lift
        for _ in range(24):
            mid = 0.5 * (lo_lift + hi_lift)
            test = Transform(pose.rotation, pose.translation + [0, 0, mid])
            if any(collide(body, test, ob, op, margin=0.0) for ob, op in obstacles):
                lo_lift = mid
            else:
                hi_lift = mid
        return Transform(pose.rotation, pose.translation + [0, 0, hi_lift])

    def _settle(self, state: SimState, part_index: int, max_drop: float = 0.06) -> None:
        """Drop a released part straight down onto its support."""
        pose = state.part_poses[part_index]
        body = self.design.parts[part_index].body
        obstacles = self._obstacles(state, {part_index})

        def free_at(drop: float) -> bool:
            test = Transform(pose.rotation, pose.translation - [0, 0, drop])
            return not any(collide(body, test, ob, op, margin=0.0) for ob, op in obstacles)

        if not free_at(0.0):
            state.part_poses[part_index] = self._project_contact(state, part_index, pose)
            return
        lo_drop = 0.0
        if free_at(max_drop):
            lo_drop = 0.0  # nothing below within reach; leave the part where it is
        else:
            hi_drop = max_drop
            for _ in range(26):
                mid = 0.5 * (lo_drop + hi_drop)
                if free_at(mid):
                    lo_drop = mid
                else:
                    hi_drop = mid
        state.part_poses[part_index] = Transform(pose.rotation,
                                                 pose.translation - [0, 0, lo_drop])

    # -- gripper kinematics ---------------------------------------------------

    def _move_finger(self, state: SimState, gripper_id: int, tip: Transform,
                     what: str, opening: float | None = None) -> None:
        finger = self.workcell.grippers[gripper_id].finger
        if opening is not None:
            state.finger_openings[gripper_id] = min(opening, finger.max_opening)
        body = finger.body_at(state.finger_openings.get(gripper_id, 0.05))
        held = state.held.get(gripper_id)
        exclude = {held[0]} if held is not None else set()
        if held is not None:
            part_index, grip = held
            new_part = self._project_contact(state, part_index, tip @ grip.invert())
            state.part_poses[part_index] = new_part
            # compliance may shift the true in-hand offset slightly
            state.held[gripper_id] = (part_index, new_part.invert() @ tip)
            self._assert_clear(state, self.design.parts[part_index].body, new_part,
                               exclude | state.held_parts(), what)
        self._assert_clear(state, body, tip, exclude, what, moving_finger=gripper_id)
        state.finger_tips[gripper_id] = tip
        self.log.add("move", state, finger=gripper_id, motion=what)

    def _attach(self, state: SimState, gripper_id: int, part_index: int,
                tip: Transform, opening: float) -> None:
        state.finger_openings[gripper_id] = opening
        state.held[gripper_id] = (part_index,
                                  state.part_poses[part_index].invert() @ tip)

    def _release(self, state: SimState, gripper_id: int, padding: float) -> int:
        part_index, _ = state.held.pop(gripper_id)
        finger = self.workcell.grippers[gripper_id].finger
        state.finger_openings[gripper_id] = min(
            state.finger_openings.get(gripper_id, 0.05) + padding, finger.max_opening)
        return part_index

    # -- perception -------------------------------------------------------------

    def _localize_base(self, state: SimState) -> Transform:
        base_world = self.design.frame @ self.design.base_pose
        intr = self.workcell.grippers[self.recipe.assembly_camera].camera
        cam = fill_view_camera(intr, self.library.base_body, base_world, [0, 0, 1],
                               self.config.pose_fill_target)
        d = float(np.linalg.norm(cam.pose.translation - base_world.translation))
        lo, hi = self.library.base_body.aabb(base_world)
        grid = camera_facing_grid(cam, d + float(hi[2] - lo[2]) + 0.02,
                                  2.2 * float(np.max(hi - lo)), self.config.pose_cell)
        label = label_pose(self.library.base_id, self.library.base_body, base_world,
                           cam, self.library.pose_tables[self.library.base_id],
                           grid, None)
        self.log.rasters["base-pose"] = label
        part_id, est = estimate_pose(label, self.library.pose_tables)
        if part_id != self.library.base_id:
            raise ExecutionError("base localization decoded the wrong id")
        self.log.add("base_pose_estimate", state, pose=_pose_json(est))
        return est

    def _pickup_scene(self, state: SimState) -> list[tuple[int, PlacedPart]]:
        skip = state.placed | state.held_parts()
        out = []
        for i, pose in enumerate(state.part_poses):
            if i in skip:
                continue
            lo, hi = self.design.parts[i].body.aabb(pose)
            if self.workcell.pickup_area.contains_box(lo, hi):
                out.append((i, PlacedPart(self.design.parts[i].part_class,
                                          self.design.parts[i].body, pose)))
        return out

    def _pickup_grid(self) -> GridSpec:
        area = self.workcell.pickup_area
        cell = self.config.heightmap_cell
        nx = int(round((area.hi[0] - area.lo[0]) / cell))
        ny = int(round((area.hi[1] - area.lo[1]) / cell))
        return GridSpec(Transform.from_translation([area.lo[0], area.lo[1], 0.0]),
                        cell, nx, ny)

    # -- the behavior loop --------------------------------------------------------

    def run(self, pile: list[Transform], fault_model: FaultModel | None = None) -> SimState:
        fault_model = fault_model or FaultModel()
        state = SimState(list(pile))
        center_y = self.workcell.regrasp_area.center[1]
        park = {0: Transform.from_translation([-0.35, center_y, self.config.transit_height]),
                1: Transform.from_translation([0.35, center_y, self.config.transit_height])}
        for g in (0, 1):
            state.finger_tips[g] = park[g]
            state.finger_openings[g] = 0.05
        self.log.add("start", state, parts=len(pile))
        self.base_estimate = self._localize_base(state)

        self._pile0 = list(pile)
        for step_index, step in enumerate(self.recipe.steps):
            self.log.add("step_start", state, step=step_index, part_class=step.part_class)
            cause = None
            for attempt in range(1, self.config.retry_limit + 1):
                try:
                    self._run_step(state, step_index, step, attempt, fault_model, park)
                    cause = None
                    break
                except SimulationFault as fault:
                    cause = str(fault)
                    self._recover_held(state, park)
                    self.log.add("retry", state, step=step_index, attempt=attempt,
                                 cause=cause)
            if cause is not None:
                self.log.add("step_failed", state, step=step_index, cause=cause)
                raise StepFailed(step_index, cause)
            self.log.add("step_done", state, step=step_index)
        self.log.add("done", state)
        return state

    def _recover_held(self, state: SimState, park: dict) -> None:
        """Return any held part to its pile spot so the step can restart."""
        for gripper_id in sorted(state.held):
            part_index, grip = state.held[gripper_id]
            home = self._pile0[part_index]
            tip_now = state.finger_tips[gripper_id]
            self._move_finger(state, gripper_id,
                              Transform(tip_now.rotation,
                                        [tip_now.translation[0], tip_now.translation[1],
                                         self.config.transit_height]), "recover-lift")
            drop = home @ grip
            self._move_finger(state, gripper_id,
                              Transform(drop.rotation,
                                        [drop.translation[0], drop.translation[1],
                                         self.config.transit_height]), "recover-transit")
            self._move_finger(state, gripper_id, drop, "recover-descend")
            part = self._release(state, gripper_id, self.config.opening_padding)
            self._settle(state, part)
            self.log.add("recover", state, part=part)
            self._move_finger(state, gripper_id, park[gripper_id], "recover-park")

    def _run_step(self, state: SimState, step_index: int, step, attempt: int,
                  fault_model: FaultModel, park: dict) -> None:
        gp = step.pickup_gripper
        gi = step.insertion_gripper
        finger = self.workcell.grippers[gp].finger

        # --- pickup ----------------------------------------------------------
        cam = self.workcell.grippers[step.pickup_camera].camera.looking_down(
            self.workcell.pickup_area.center[:2], self.config.pickup_camera_height)
        grid = self._pickup_grid()
        scene = self._pickup_scene(state)
        bodies = [(p.body, p.pose) for _, p in scene]
        self.log.rasters[f"step{step_index}-try{attempt}-scene"] = (
            to_heightmap(render_depth(bodies, cam), cam, grid) if bodies
            else Heightmap.empty(grid))
        label = label_scene([p for _, p in scene], self.library.expanded_grasp_sets,
                            finger, list(self.workcell.environment), cam, grid,
                            self.config.range_steps)
        self.log.rasters[f"step{step_index}-try{attempt}-grasps"] = label
        proposals = infer_grasps(label)
        try:
            chosen = select_grasp(proposals, step.part_class, cam.pose)
        except Exception as err:
            raise SimulationFault(f"no grasp proposal: {err}") from err
        opening = commanded_opening(chosen, finger, self.config.opening_padding)
        tip = chosen.frame.as_transform()
        hover = Transform(tip.rotation, tip.translation + [0, 0, 0.10])

        self._move_finger(state, gp, hover, "pick-hover", opening)
        if fault_model.pick_fails(step_index, attempt):
            self._move_finger(state, gp, park[gp], "pick-abort")
            raise SimulationFault("injected pick failure")
        self._move_finger(state, gp, tip, "pick-descend")
        target = self._nearest_free_part(state, step.part_class, tip.translation)
        if target is None:
            raise SimulationFault("no part under the grasp")
        self._attach(state, gp, target, tip, chosen.width)
        self.log.add("pick_close", state, part=target, opening=round(opening, 6))
        lift = Transform(tip.rotation,
                         [tip.translation[0], tip.translation[1], self.config.transit_height])
        self._move_finger(state, gp, lift, "pick-lift")

        # --- present and estimate the in-hand pose ------------------------------
        center = self.workcell.regrasp_area.center
        present_tip = Transform(lift.rotation, [center[0], center[1], center[2] + 0.02])
        self._move_finger(state, gp, present_tip, "present")
        part_pose_true = state.part_poses[target]
        intr = self.workcell.grippers[step.pose_camera].camera
        body = self.library.specs[step.part_class].body
        pose_cam = fill_view_camera(intr, body, part_pose_true, [0, 0, 1],
                                    self.config.pose_fill_target)
        d = float(np.linalg.norm(pose_cam.pose.translation - part_pose_true.translation))
        lo, hi = body.aabb(part_pose_true)
        grid = camera_facing_grid(pose_cam, d + float(hi[2] - lo[2]) + 0.02,
                                  2.5 * float(np.max(hi - lo)), self.config.pose_cell)
        label = label_pose(step.part_class, body, part_pose_true, pose_cam,
                           self.library.pose_tables[step.part_class], grid,
                           self.config.pose_fill)
        self.log.rasters[f"step{step_index}-try{attempt}-pose"] = label
        est_class, part_est = estimate_pose(label, self.library.pose_tables)
        if est_class != step.part_class:
            raise SimulationFault(f"pose estimate decoded class {est_class}")
        in_hand = part_est.invert() @ present_tip
        self.log.add("pose_estimate", state, part=target, pose=_pose_json(part_est))

        # --- regrasp to the goal grasp ----------------------------------------
        in_hand = self._regrasp(state, step, target, part_est, in_hand, park)

        # --- insertion ----------------------------------------------------------
        waypoints = insertion_waypoints(step.extraction, self.base_estimate, in_hand)
        w0 = waypoints[0]
        approach = Transform(w0.rotation,
                             [w0.translation[0], w0.translation[1],
                              max(self.config.transit_height, w0.translation[2] + 0.02)])
        self._move_finger(state, gi, approach, "insert-approach")
        for k, w in enumerate(waypoints):
            self._move_finger(state, gi, w, f"insert-waypoint-{k}")
            self.log.add("insert_waypoint", state, index=k)
        placed = self._release(state, gi, self.config.opening_padding)
        self._settle(state, placed)
        state.placed.add(placed)
        self.log.add("release", state, part=placed)
        w_last = state.finger_tips[gi]
        self._move_finger(state, gi,
                          Transform(w_last.rotation, w_last.translation + [0, 0, 0.08]),
                          "insert-retreat")
        self._move_finger(state, gi, park[gi], "park")

    def _nearest_free_part(self, state: SimState, part_class: int,
                           point: np.ndarray) -> int | None:
        best, best_d = None, 0.08
        skip = state.placed | state.held_parts()
        for i, pose in enumerate(state.part_poses):
            if i in skip or self.design.parts[i].part_class != part_class:
                continue
            d = float(np.linalg.norm(pose.translation - np.asarray(point)))
            if d < best_d:
                best, best_d = i, d
        return best

    # -- regrasping ----------------------------------------------------------------

    def _regrasp(self, state: SimState, step, part_index: int, part_est: Transform,
                 in_hand: Transform, park: dict) -> Transform:
        """Bring the part to the goal grasp on the insertion gripper.

        Returns the believed tip-in-part offset afterwards.
        """
        gp = step.pickup_gripper
        gi = step.insertion_gripper
        graph = self.graphs[step.part_class]
        goal_key = (step.goal_grasp_def_index, step.goal_grasp_sample_index)
        goal_tip = step.goal_tip_pose

        if gp == gi and in_hand.almost_equal(goal_tip, 0.004, np.deg2rad(5)):
            return in_hand  # picked directly into the goal grasp

        matched = match_sample(graph, in_hand)
        try:
            if matched is not None:
                starts = [n for n in graph.nodes_with(sample_key=matched.key, finger_id=gp)
                          if entry_repose_free(graph, gp, in_hand, part_est,
                                               graph.nodes[n].pose_id,
                                               self.config.repose_steps)]
                if not starts:
                    raise NoPath("no reachable entry pose")
                plan = plan_regrasp(graph, starts, goal_key, gi)
            else:
                node0 = initial_grasp(graph, part_est, in_hand, gp, goal_key, gi)
                plan = plan_regrasp(graph, [node0], goal_key, gi)
        except (NoPath, NoFeasibleHandoff) as err:
            raise SimulationFault(f"regrasp planning failed: {err}") from err

        first = graph.nodes[plan.node_ids[0]]
        entry_pose = graph.seed_poses[first.pose_id]
        self._move_finger(state, gp, entry_pose @ in_hand, "regrasp-entry")
        if matched is None:
            # ad-hoc grip: hand off into the first graph node before following it
            self._handoff(state, part_index, new_finger=first.finger_id,
                          new_tip_local=first.sample.tip_pose,
                          new_opening=first.sample.opening,
                          old_finger=gp, part_pose=entry_pose, park=park)

        believed_part = entry_pose
        for (a, b), kind in zip(zip(plan.node_ids, plan.node_ids[1:]), plan.edge_kinds):
            na, nb = graph.nodes[a], graph.nodes[b]
            pose_b = graph.seed_poses[nb.pose_id]
            if kind == "repose":
                self._move_finger(state, na.finger_id, pose_b @ na.sample.tip_pose,
                                  "regrasp-repose")
                believed_part = pose_b
            else:
                self._handoff(state, part_index, new_finger=nb.finger_id,
                              new_tip_local=nb.sample.tip_pose,
                              new_opening=nb.sample.opening,
                              old_finger=na.finger_id, part_pose=believed_part,
                              park=park)
        return graph.nodes[plan.node_ids[-1]].sample.tip_pose

    def _handoff(self, state: SimState, part_index: int, new_finger: int,
                 new_tip_local: Transform, new_opening: float, old_finger: int,
                 part_pose: Transform, park: dict) -> None:
        """Hover, descend, close with the free fingers; release and clear the old."""
        pad = self.config.opening_padding
        hover = Transform.from_translation([0, 0, self.config.hover_offset])
        new_tip = part_pose @ new_tip_local
        self._move_finger(state, new_finger, hover @ new_tip, "handoff-hover",
                          opening=new_opening + pad)
        self._move_finger(state, new_finger, new_tip, "handoff-descend")
        self._attach(state, new_finger, part_index, new_tip, new_opening)
        self.log.add("regrasp_close", state, finger=new_finger)
        self._release(state, old_finger, pad)
        self.log.add("regrasp_release", state, finger=old_finger)
        old_tip = state.finger_tips[old_finger]
        self._move_finger(state, old_finger, hover @ old_tip, "handoff-retreat")
        self._move_finger(state, old_finger, park[old_finger], "handoff-clear")


def execute(recipe: Recipe, workcell: WorkcellModel, library: PartsLibrary,
            design: AssemblyDesign, pile: list[Transform], seed: int = 0,
            fault_model: FaultModel | None = None,
            config: PipelineConfig | None = None,
            graphs: dict[int, RegraspGraph] | None = None
            ) -> tuple[ExecutionLog, SimState]:
    """Run a recipe against a pile; returns the log and the final state."""
    sim = Simulator(recipe, workcell, library, design, config, graphs)
    state = sim.run(pile, fault_model)
    return sim.log, state


def placement_errors(design: AssemblyDesign, library: PartsLibrary,
                     state: SimState) -> list[tuple[float, float]]:
    """Per design slot: (translation m, rotation deg) error of the part placed
    there, minimized over the part's annotated symmetry rotations.

    Parts of one class are interchangeable, so slots and physical instances
    are matched per class by the best assignment.
    """
    import itertools as it

    def error(instance: int, slot: int) -> tuple[float, float]:
        goal = design.frame @ design.parts[slot].goal_pose
        actual = state.part_poses[instance]
        best = (np.inf, np.inf)
        for sym in library.symmetry_rotations(design.parts[slot].part_class):
            cand = actual @ sym
            lin = float(np.linalg.norm(cand.translation - goal.translation))
            ang = float(np.degrees(cand.rotation_distance(goal)))
            if (lin, ang) < best:
                best = (lin, ang)
        return best

    out: list = [None] * len(design.parts)
    by_class: dict[int, list[int]] = {}
    for i, p in enumerate(design.parts):
        by_class.setdefault(p.part_class, []).append(i)
    for indices in by_class.values():
        best_assign, best_cost = None, None
        for perm in it.permutations(indices):
            errs = [error(inst, slot) for inst, slot in zip(perm, indices)]
            cost = max(e[0] for e in errs)
            if best_cost is None or cost < best_cost:
                best_assign, best_cost = list(zip(perm, indices, errs)), cost
        for _, slot, e in best_assign:
            out[slot] = e
    return out
