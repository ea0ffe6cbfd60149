"""The bundled demonstration scene: a five-part interlocking block design.

Three slabs stack inside a walled pocket; a nub block rides on top with its
nub tucked under a bridge at the back rim (it must slide forward before it
can lift out); a thin plug fills the space in front of the nub block and
pins that slide. The only valid disassembly order is therefore
plug -> nub block -> slabs top-down. All contacts are authored exact and all
sliding fits have 2 mm clearance.
"""

from __future__ import annotations

import numpy as np

from .geom import Box, BoxCompound, Transform
from .grasp import FingerModel, GraspDefinition
from .planner import AssemblyDesign, DesignPart
from .pose import ViewDirection

SLAB, NUB_BLOCK, PLUG = 0, 1, 2

_RZ90 = Transform.from_axis_angle([0, 0, 1], np.pi / 2)


def slab_body() -> BoxCompound:
    return BoxCompound.single([0.038, 0.030, 0.009])


def nub_block_body() -> BoxCompound:
    return BoxCompound((
        Box([0.026, 0.024, 0.030]),
        Box([0.012, 0.024, 0.011], Transform.from_translation([0, -0.048, -0.019])),
    ))


def plug_body() -> BoxCompound:
    # full-height slat: stands on the base plate in the slot in front of the
    # nub block, pinning its escape slide
    return BoxCompound.single([0.026, 0.010, 0.057])


def base_body() -> BoxCompound:
    return BoxCompound((
        Box([0.072, 0.080, 0.010], Transform.from_translation([0, 0, 0.010])),     # plate
        Box([0.008, 0.080, 0.049], Transform.from_translation([0.048, 0, 0.069])),  # +x wall
        Box([0.008, 0.080, 0.049], Transform.from_translation([-0.048, 0, 0.069])),  # -x wall
        Box([0.040, 0.008, 0.049], Transform.from_translation([0, 0.070, 0.069])),  # front wall
        Box([0.040, 0.008, 0.049], Transform.from_translation([0, -0.070, 0.069])),  # back wall
        Box([0.040, 0.008, 0.010], Transform.from_translation([0, -0.054, 0.108])),  # bridge
    ))


def part_bodies() -> dict[int, BoxCompound]:
    return {SLAB: slab_body(), NUB_BLOCK: nub_block_body(), PLUG: plug_body()}


def part_names() -> dict[int, str]:
    return {SLAB: "slab", NUB_BLOCK: "nub-block", PLUG: "plug"}


def grasp_sets() -> dict[int, list[GraspDefinition]]:
    """Authored grasps (unexpanded): tip frames in the part frames."""
    return {
        SLAB: [
            # closing across the 60 mm depth, sliding range along the length;
            # endpoints far enough apart that two grippers fit side by side
            GraspDefinition(SLAB, opening=0.064,
                            pose_a=Transform(_RZ90.rotation, [-0.025, 0, -0.001]),
                            pose_b=Transform(_RZ90.rotation, [0.025, 0, -0.001])),
        ],
        NUB_BLOCK: [
            GraspDefinition(NUB_BLOCK, opening=0.056,
                            pose=Transform.from_translation([0, 0, 0.018])),
            GraspDefinition(NUB_BLOCK, opening=0.052,
                            pose=Transform(_RZ90.rotation, [0, 0, 0.018])),
        ],
        PLUG: [
            GraspDefinition(PLUG, opening=0.056,
                            pose=Transform.from_translation([0, 0, 0.045])),
            # thin-side range: lets the two grippers trade the plug between
            # the wide grasp and both range endpoints
            GraspDefinition(PLUG, opening=0.024,
                            pose_a=Transform(_RZ90.rotation, [-0.012, 0, 0.045]),
                            pose_b=Transform(_RZ90.rotation, [0.012, 0, 0.045])),
        ],
    }


def symmetry_annotations() -> dict[int, dict[ViewDirection, int]]:
    """Rectangular faces of the plain boxes are 2-fold; the nub breaks all."""
    two_fold = {view: 2 for view in ViewDirection}
    return {SLAB: dict(two_fold), NUB_BLOCK: {}, PLUG: dict(two_fold)}


def design(frame: Transform | None = None) -> AssemblyDesign:
    """Parts listed in assembly order (bottom slab first, plug last)."""
    bodies = part_bodies()
    parts = (
        DesignPart(SLAB, bodies[SLAB], Transform.from_translation([0, 0, 0.029])),
        DesignPart(SLAB, bodies[SLAB], Transform.from_translation([0, 0, 0.047])),
        DesignPart(SLAB, bodies[SLAB], Transform.from_translation([0, 0, 0.065])),
        DesignPart(NUB_BLOCK, bodies[NUB_BLOCK], Transform.from_translation([0, 0.012, 0.104])),
        DesignPart(PLUG, bodies[PLUG], Transform.from_translation([0, 0.050, 0.077])),
    )
    return AssemblyDesign(parts, base_body(), Transform(),
                          frame if frame is not None else Transform.from_translation([0.28, 0, 0]))


def disassembly_sequence() -> list[int]:
    return [4, 3, 2, 1, 0]


def pickup_finger() -> FingerModel:
    return FingerModel.parallel_jaw(finger_width=0.016, jaw_thickness=0.008,
                                    jaw_length=0.040, max_opening=0.085,
                                    palm_thickness=0.012, name="small-jaw")


def insertion_finger() -> FingerModel:
    return FingerModel.parallel_jaw(finger_width=0.018, jaw_thickness=0.010,
                                    jaw_length=0.055, max_opening=0.085,
                                    palm_thickness=0.014, name="wide-jaw")


def table() -> tuple[BoxCompound, Transform]:
    return (BoxCompound.single([0.55, 0.45, 0.010]), Transform.from_translation([0, 0, -0.010]))


def workcell():
    from .workcell import Area, CameraIntrinsics, Gripper, WorkcellModel

    intr = CameraIntrinsics(focal=300.0, width=320, height=240, near=0.05, far=3.0)
    grippers = (
        Gripper("left-arm", pickup_finger(), [-0.60, -0.50, 0.0], [0.18, 0.50, 0.60], intr),
        Gripper("right-arm", insertion_finger(), [-0.18, -0.50, 0.0], [0.60, 0.50, 0.60], intr),
    )
    return WorkcellModel(
        grippers=grippers,
        pickup_area=Area("pickup", [-0.48, -0.20, 0.0], [-0.08, 0.20, 0.14]),
        regrasp_area=Area("regrasp", [-0.15, 0.13, 0.16], [0.15, 0.43, 0.45]),
        assembly_area=Area("assembly", [0.08, -0.20, 0.0], [0.48, 0.20, 0.15]),
        environment=(table(),),
        pickup_gripper=0, insertion_gripper=1,
        pickup_camera=0, pose_camera=1, assembly_camera=1,
    )


def library():
    from .workcell import PartsLibrary, PartSpec

    bodies = part_bodies()
    names = part_names()
    sym = symmetry_annotations()
    sets = grasp_sets()
    specs = {cls: PartSpec(cls, names[cls], bodies[cls], sets[cls], sym[cls])
             for cls in sorted(bodies)}
    return PartsLibrary(specs, base_body())
