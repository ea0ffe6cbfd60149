import json

import numpy as np
import pytest

from assembly_forge import demo
from assembly_forge.bundle import ProjectBundle, recipe_from_json, recipe_to_json
from assembly_forge.config import PipelineConfig
from assembly_forge.executor import (
    FaultModel,
    StepFailed,
    execute,
    placement_errors,
    scatter_pile,
)
from assembly_forge.geom import CONTACT_EPS, Transform, collide
from assembly_forge.recipe import NotValidated, generate_recipe, validate_authoring
from assembly_forge.workcell import Area, WorkcellModel


def test_validation_report_all_pass(demo_validation):
    assert demo_validation.passed
    names = [c.name for c in demo_validation.checks]
    assert names == ["grasp-sets", "workcell-layout", "camera-coverage", "reach",
                     "regrasp-graph", "sequence"]


def test_validation_flags_missing_grasps(demo_bundle):
    b = demo_bundle
    from assembly_forge.workcell import PartsLibrary, PartSpec

    specs = {cls: PartSpec(cls, s.name, s.body, () if cls == demo.PLUG else s.grasps,
                           s.symmetry)
             for cls, s in b.library.specs.items()}
    hollow = PartsLibrary(specs, b.library.base_body)
    report = validate_authoring(b.workcell, hollow, b.design, b.sequence, b.config)
    assert not report.passed
    check = next(c for c in report.checks if c.name == "grasp-sets")
    assert not check.passed
    assert check.authoring_step == 2


def test_validation_flags_unreachable_pickup_area(demo_bundle):
    b = demo_bundle
    w = b.workcell
    moved = WorkcellModel(
        grippers=w.grippers,
        pickup_area=Area("pickup", [-2.48, -0.20, 0.0], [-2.08, 0.20, 0.14]),
        regrasp_area=w.regrasp_area,
        assembly_area=w.assembly_area,
        environment=w.environment,
        pickup_gripper=w.pickup_gripper, insertion_gripper=w.insertion_gripper,
        pickup_camera=w.pickup_camera, pose_camera=w.pose_camera,
        assembly_camera=w.assembly_camera)
    report = validate_authoring(moved, b.library, b.design, b.sequence,
                                PipelineConfig(trials=0))
    assert not report.passed
    check = next(c for c in report.checks if c.name == "reach")
    assert not check.passed
    assert check.authoring_step == 3


def test_validation_flags_blocked_first_sequence(demo_bundle):
    b = demo_bundle
    report = validate_authoring(b.workcell, b.library, b.design, [3, 4, 2, 1, 0],
                                PipelineConfig(trials=0))
    assert not report.passed
    check = next(c for c in report.checks if c.name == "sequence")
    assert not check.passed
    assert "position 0" in check.detail and "Blocked" in check.detail


def test_recipe_requires_validation(demo_bundle):
    b = demo_bundle
    bad = validate_authoring(b.workcell, b.library, b.design, [3, 4, 2, 1, 0],
                             PipelineConfig(trials=0))
    with pytest.raises(NotValidated):
        generate_recipe(b.workcell, b.library, b.design, [3, 4, 2, 1, 0], bad)


def test_recipe_structure(demo_bundle, demo_recipe):
    r = demo_recipe
    assert r.assembly_sequence() == list(reversed(demo_bundle.sequence))
    assert r.base_part_id == demo_bundle.library.base_id
    for step in r.steps:
        assert step.pickup_area == "pickup"
        assert step.pickup_gripper == 0
        assert step.insertion_gripper == 1
    nub_step = next(s for s in r.steps if s.part_class == demo.NUB_BLOCK)
    assert nub_step.extraction.direction_changes == 1
    # the nub block's goal grasp closes along its slide direction
    x_axis = nub_step.goal_tip_pose.matrix[:, 0]
    assert abs(x_axis[1]) == pytest.approx(1.0, abs=1e-9)


def test_recipe_json_roundtrip(demo_recipe):
    doc = recipe_to_json(demo_recipe)
    text = json.dumps(doc, sort_keys=True)
    back = recipe_from_json(json.loads(text))
    assert json.dumps(recipe_to_json(back), sort_keys=True) == text


def test_single_part_recipe():
    from assembly_forge.planner import AssemblyDesign, DesignPart
    from assembly_forge.workcell import PartsLibrary, PartSpec

    body = demo.plug_body()
    lib = PartsLibrary({demo.PLUG: PartSpec(demo.PLUG, "plug", body,
                                            demo.grasp_sets()[demo.PLUG],
                                            demo.symmetry_annotations()[demo.PLUG])},
                       demo.base_body())
    design = AssemblyDesign(
        (DesignPart(demo.PLUG, body, Transform.from_translation([0, 0.050, 0.077])),),
        demo.base_body(), Transform(), Transform.from_translation([0.28, 0, 0]))
    workcell = demo.workcell()
    config = PipelineConfig(trials=1)
    report = validate_authoring(workcell, lib, design, [0], config)
    assert report.passed, [c.detail for c in report.checks if not c.passed]
    recipe = generate_recipe(workcell, lib, design, [0], report)
    assert len(recipe.steps) == 1


@pytest.fixture(scope="module")
def executed(demo_bundle, demo_recipe, demo_graphs):
    b = demo_bundle
    pile = scatter_pile(b.design, b.workcell, seed=2)
    log, state = execute(demo_recipe, b.workcell, b.library, b.design, pile,
                         seed=2, config=b.config, graphs=demo_graphs)
    return pile, log, state


def test_execute_places_all_parts(demo_bundle, executed):
    _, log, state = executed
    assert state.placed == {0, 1, 2, 3, 4}
    errs = placement_errors(demo_bundle.design, demo_bundle.library, state)
    assert max(e[0] for e in errs) <= 0.001
    assert max(e[1] for e in errs) <= 1.0


def test_execute_log_event_flow(executed):
    _, log, state = executed
    kinds = [e["type"] for e in log.events]
    assert kinds[0] == "start"
    assert "base_pose_estimate" in kinds
    assert kinds[-1] == "done"
    assert kinds.count("step_start") == 5
    assert kinds.count("step_done") == 5
    assert kinds.count("pose_estimate") == 5
    # every part needs at least one handoff (pickup and insertion grippers differ)
    assert kinds.count("regrasp_close") >= 5
    # snapshots ride on every stateful event
    moves = [e for e in log.events if e["type"] == "move"]
    assert all("parts" in e and "fingers" in e for e in moves)


def test_execute_no_interpenetration_at_every_snapshot(demo_bundle, executed):
    _, log, state = executed
    design = demo_bundle.design
    base = (demo_bundle.library.base_body, design.frame @ design.base_pose)
    for event in log.events:
        if "parts" not in event:
            continue
        poses = [Transform(np.array(p["rotation"]), np.array(p["translation"]))
                 for p in event["parts"]]
        held = {int(p) for p in event.get("held", {}).values()}
        for i in range(len(poses)):
            for j in range(i + 1, len(poses)):
                assert not collide(design.parts[i].body, poses[i],
                                   design.parts[j].body, poses[j],
                                   margin=-2 * CONTACT_EPS)
            if i not in held:
                assert not collide(design.parts[i].body, poses[i], *base,
                                   margin=-2 * CONTACT_EPS)


def test_execute_deterministic(demo_bundle, demo_recipe, demo_graphs):
    b = demo_bundle
    pile = scatter_pile(b.design, b.workcell, seed=9)
    log1, _ = execute(demo_recipe, b.workcell, b.library, b.design, pile, seed=9,
                      config=b.config, graphs=demo_graphs)
    log2, _ = execute(demo_recipe, b.workcell, b.library, b.design, pile, seed=9,
                      config=b.config, graphs=demo_graphs)
    assert json.dumps(log1.to_json(), sort_keys=True) == \
           json.dumps(log2.to_json(), sort_keys=True)


def test_fault_injection_retries_then_succeeds(demo_bundle, demo_recipe, demo_graphs):
    b = demo_bundle
    pile = scatter_pile(b.design, b.workcell, seed=6)
    fm = FaultModel.single_pick_failure_every_step(len(demo_recipe.steps))
    log, state = execute(demo_recipe, b.workcell, b.library, b.design, pile,
                         seed=6, fault_model=fm, config=b.config, graphs=demo_graphs)
    retries = [e for e in log.events if e["type"] == "retry"]
    assert len(retries) == len(demo_recipe.steps)
    assert state.placed == {0, 1, 2, 3, 4}
    errs = placement_errors(b.design, b.library, state)
    assert max(e[0] for e in errs) <= 0.001


def test_fault_exhaustion_respects_attempt_cap(demo_bundle, demo_recipe, demo_graphs):
    b = demo_bundle
    pile = scatter_pile(b.design, b.workcell, seed=6)
    fm = FaultModel({0: 99})
    sim_log = None
    with pytest.raises(StepFailed) as exc:
        from assembly_forge.executor import Simulator

        sim = Simulator(demo_recipe, b.workcell, b.library, b.design, b.config,
                        demo_graphs)
        sim_log = sim.log
        sim.run(pile, fm)
    assert exc.value.step_index == 0
    attempts = [e for e in sim_log.events if e["type"] == "retry" and e["step"] == 0]
    assert len(attempts) == b.config.retry_limit == 3
    assert any(e["type"] == "step_failed" for e in sim_log.events)


def test_empty_recipe_executes_to_empty_log(demo_bundle, demo_graphs):
    from assembly_forge.recipe import Recipe

    b = demo_bundle
    recipe = Recipe(b.workcell.assembly_camera, "assembly", b.library.base_id, [])
    log, state = execute(recipe, b.workcell, b.library, b.design,
                         scatter_pile(b.design, b.workcell, seed=1), seed=1,
                         config=b.config, graphs=demo_graphs)
    kinds = [e["type"] for e in log.events]
    assert kinds.count("step_start") == 0
    assert kinds[-1] == "done"
    assert state.placed == set()


def test_scatter_pile_respects_area_and_spacing(demo_bundle):
    b = demo_bundle
    for seed in range(6):
        pile = scatter_pile(b.design, b.workcell, seed=seed)
        for i, pose in enumerate(pile):
            lo, hi = b.design.parts[i].body.aabb(pose)
            assert b.workcell.pickup_area.contains_box(lo, hi)
            for j in range(i):
                d = np.linalg.norm(pose.translation[:2] - pile[j].translation[:2])
                assert d >= 0.12 - 1e-9
