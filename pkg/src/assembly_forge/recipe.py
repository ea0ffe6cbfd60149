"""Authoring validation and recipe generation.

Validation runs the cheap structural checks first (grasp sets, camera
coverage, reach), then the expensive ones (regrasp graph feasibility,
disassembly verification over random trials). Each failing check names the
authoring step to revisit. A recipe is only generated from an all-pass
report and contains everything the executor needs per part: class, areas,
cameras, fingers, the goal grasp, and the insertion waypoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .geom import Transform
from .grasp import GraspDefinition
from .planner import AssemblyDesign, LatticeConfig, SequenceReport, WaypointPath, verify_sequence
from .pose import check_in_view, PartOutOfView
from .regrasp import EmptyGraph, RegraspGraph, build_graph, standard_seed_poses
from .render import CameraModel, look_at_pose
from .workcell import PartsLibrary, WorkcellModel


class RecipeError(RuntimeError):
    pass


class NotValidated(RecipeError):
    pass


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    detail: str
    authoring_step: int  # 1 sequence, 2 grasps, 3 workcell layout


@dataclass
class ValidationReport:
    checks: list
    sequence_report: SequenceReport | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{
                "name": c.name, "passed": c.passed, "detail": c.detail,
                "authoring_step": c.authoring_step,
            } for c in self.checks],
        }


def fill_view_camera(intrinsics, body, pose: Transform, direction,
                     fill: float = 0.33) -> CameraModel:
    """A camera along `direction` whose distance makes the part fill `fill`
    of the image width."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    lo, hi = body.aabb(pose)
    extent = float(np.linalg.norm(hi - lo))
    d = intrinsics.focal * extent / (fill * intrinsics.width)
    for _ in range(2):  # refine against the measured footprint
        cam = intrinsics.at(look_at_pose(pose.translation + u * d, pose.translation))
        corners = np.vstack([pose.apply(b.corners()) for b in body.boxes])
        proj = cam.project(corners)
        measured = max(proj[:, 0].max() - proj[:, 0].min(),
                       proj[:, 1].max() - proj[:, 1].min()) / intrinsics.width
        d *= measured / fill
    return intrinsics.at(look_at_pose(pose.translation + u * d, pose.translation))


def build_regrasp_graphs(workcell: WorkcellModel, library: PartsLibrary,
                         config: PipelineConfig,
                         classes: set[int] | None = None) -> dict[int, RegraspGraph]:
    """One graph per part class, seeded at the regrasp area center."""
    center = workcell.regrasp_area.center
    seeds = standard_seed_poses(center, config.seed_pose_yaws)
    graphs = {}
    for cls in sorted(classes if classes is not None else set(library.specs)):
        graphs[cls] = build_graph(library.specs[cls].body,
                                  library.expanded_grasp_sets[cls], seeds,
                                  workcell.gripper_contexts(),
                                  list(workcell.environment), config.repose_steps)
    return graphs


def validate_authoring(workcell: WorkcellModel, library: PartsLibrary,
                       design: AssemblyDesign, sequence: list[int],
                       config: PipelineConfig) -> ValidationReport:
    checks: list[ValidationCheck] = []
    design_classes = sorted({p.part_class for p in design.parts})

    missing = [cls for cls in design_classes if not library.specs.get(cls)
               or not library.specs[cls].grasps]
    checks.append(ValidationCheck(
        "grasp-sets", not missing,
        "every part class has authored grasps" if not missing
        else f"classes without grasps: {missing}", 2))

    problems = workcell.check_invariants()
    checks.append(ValidationCheck(
        "workcell-layout", not problems,
        "areas and reach volumes consistent" if not problems else "; ".join(problems), 3))

    cam_issues = []
    pickup_cam = workcell.grippers[workcell.pickup_camera].camera.looking_down(
        workcell.pickup_area.center[:2], config.pickup_camera_height)
    proj = pickup_cam.project(workcell.pickup_area.corners())
    if (proj[:, 2] <= 0).any() or proj[:, 0].min() < 0 or proj[:, 1].min() < 0 \
            or proj[:, 0].max() >= pickup_cam.width or proj[:, 1].max() >= pickup_cam.height:
        cam_issues.append("pickup camera cannot cover the pickup area")
    base_world = design.frame @ design.base_pose
    assembly_cam = fill_view_camera(workcell.grippers[workcell.assembly_camera].camera,
                                    library.base_body, base_world, [0, 0, 1],
                                    config.pose_fill_target)
    try:
        check_in_view(library.base_body, base_world, assembly_cam, config.pose_fill)
    except PartOutOfView as err:
        cam_issues.append(f"assembly camera cannot view the base: {err}")
    for cls in design_classes:
        if not library.specs.get(cls):
            continue
        body = library.specs[cls].body
        present = Transform.from_translation(workcell.regrasp_area.center)
        pose_cam = fill_view_camera(workcell.grippers[workcell.pose_camera].camera,
                                    body, present, [0, 0, 1], config.pose_fill_target)
        try:
            check_in_view(body, present, pose_cam, config.pose_fill)
        except PartOutOfView as err:
            cam_issues.append(f"pose camera cannot view class {cls}: {err}")
    checks.append(ValidationCheck(
        "camera-coverage", not cam_issues,
        "cameras cover their areas" if not cam_issues else "; ".join(cam_issues), 3))

    pick_g = workcell.grippers[workcell.pickup_gripper]
    ins_g = workcell.grippers[workcell.insertion_gripper]
    reach_issues = []
    if not pick_g.reaches_box(workcell.pickup_area.lo, workcell.pickup_area.hi):
        reach_issues.append("pickup area outside the pickup gripper's reach")
    if not ins_g.reaches_box(workcell.assembly_area.lo, workcell.assembly_area.hi):
        reach_issues.append("assembly area outside the insertion gripper's reach")
    checks.append(ValidationCheck(
        "reach", not reach_issues,
        "areas inside the assigned reach volumes" if not reach_issues
        else "; ".join(reach_issues), 3))

    graph_issues = []
    if not missing:
        try:
            graphs = build_regrasp_graphs(workcell, library, config, set(design_classes))
            for cls, graph in graphs.items():
                fingers = {n.finger_id for n in graph.nodes}
                if workcell.insertion_gripper not in fingers:
                    graph_issues.append(
                        f"class {cls}: no feasible insertion-gripper grasp at the regrasp area")
        except EmptyGraph as err:
            graph_issues.append(str(err))
    else:
        graph_issues.append("skipped: missing grasp sets")
    checks.append(ValidationCheck(
        "regrasp-graph", not graph_issues,
        "all classes re-graspable" if not graph_issues else "; ".join(graph_issues), 2))

    sequence_report = None
    if sorted(sequence) != list(range(len(design.parts))):
        checks.append(ValidationCheck(
            "sequence", False, "sequence is not a permutation of the part indices", 1))
    elif all(c.passed for c in checks):
        lattice = LatticeConfig.from_design(design, config.lattice_margin, config.lattice_step)
        shrink = 0.5 * (design.aabb()[1] - design.aabb()[0])[:2]
        area = (workcell.assembly_area.lo[:2] + shrink, workcell.assembly_area.hi[:2] - shrink)
        sequence_report = verify_sequence(
            design, sequence, library.expanded_grasp_sets,
            ins_g.finger, lattice, config.trials, config.verify_seed,
            area if np.all(area[1] > area[0]) else None,
            list(workcell.environment))
        if sequence_report.ok:
            checks.append(ValidationCheck("sequence", True,
                                          f"verified over {config.trials} random trials", 1))
        else:
            bad = [f"position {r.sequence_position} (part {r.part_index}): {r.failures[0][1]}"
                   for r in sequence_report.results if not r.ok]
            checks.append(ValidationCheck("sequence", False, "; ".join(bad), 1))
    else:
        checks.append(ValidationCheck(
            "sequence", False, "skipped: earlier checks failed", 1))
    return ValidationReport(checks, sequence_report)


@dataclass
class RecipeStep:
    part_index: int
    part_class: int
    pickup_area: str
    pickup_camera: int
    pickup_gripper: int
    pose_camera: int
    insertion_gripper: int
    goal_grasp: GraspDefinition
    goal_grasp_def_index: int  # into the expanded grasp set
    goal_grasp_sample_index: int
    goal_tip_pose: Transform  # the planned tip-in-part pose
    extraction: WaypointPath


@dataclass
class Recipe:
    assembly_camera: int
    assembly_area: str
    base_part_id: int
    steps: list
    schema_version: int = 1

    def assembly_sequence(self) -> list[int]:
        return [s.part_index for s in self.steps]


def generate_recipe(workcell: WorkcellModel, library: PartsLibrary,
                    design: AssemblyDesign, sequence: list[int],
                    report: ValidationReport) -> Recipe:
    """Turn a passing validation report into per-part task instructions."""
    if not report.passed or report.sequence_report is None:
        raise NotValidated("authoring validation has not passed")
    paths = report.sequence_report.canonical_paths
    steps = []
    for part_index in reversed(sequence):
        part = design.parts[part_index]
        path = paths[part_index]
        defs = library.expanded_grasp_sets[part.part_class]
        def_index = next(i for i, d in enumerate(defs) if d is path.grasp)
        samples = path.grasp.sample_poses(3) if path.grasp.is_range else [path.grasp.pose]
        sample_index = int(np.argmin([
            np.linalg.norm(s.translation - path.grasp_pose.translation) for s in samples]))
        steps.append(RecipeStep(
            part_index=part_index,
            part_class=part.part_class,
            pickup_area=workcell.pickup_area.name,
            pickup_camera=workcell.pickup_camera,
            pickup_gripper=workcell.pickup_gripper,
            pose_camera=workcell.pose_camera,
            insertion_gripper=workcell.insertion_gripper,
            goal_grasp=path.grasp,
            goal_grasp_def_index=def_index,
            goal_grasp_sample_index=sample_index,
            goal_tip_pose=path.grasp_pose,
            extraction=path,
        ))
    return Recipe(workcell.assembly_camera, workcell.assembly_area.name,
                  library.base_id, steps)
