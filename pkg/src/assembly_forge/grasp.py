"""Grasp proposal generation and inference for parallel-jaw fingers.

Generation places the finger body at every authored grasp of every part in a
scene, keeps the collision-free placements, and rasterizes the surviving
grasp rectangles into a label heightmap. Inference reverses the process:
cluster the label, fit each cluster's rectangle, and decode the finger
closing direction from the embedded value gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geom import CONTACT_EPS, Box, BoxCompound, GeometryError, RectFrame, Transform, collide, pca_rect_frame
from .render import CameraModel, GridSpec, Heightmap, stamp_rectangle

_FLIP_Z = Transform.from_axis_angle([0, 0, 1], np.pi)


class GraspError(ValueError):
    pass


class MissingGraspSet(GraspError):
    """A scene part's class has no authored grasps."""


class NoProposalForClass(GraspError):
    pass


@dataclass(frozen=True, eq=False)
class FingerModel:
    """Parallel-jaw finger pair described in the tip frame.

    The tip frame origin sits at the midpoint between the two fingertips,
    x is the closing direction, z points from the fingertips up into the
    gripper body. `jaw` is one jaw in its own frame: origin at the fingertip
    center of the inner face, +x away from the gap, +z along the jaw.
    """

    jaw: BoxCompound
    finger_width: float
    max_opening: float
    name: str = "fingers"

    def __post_init__(self):
        if self.max_opening <= 0:
            raise GeometryError("max opening must be positive")

    @staticmethod
    def parallel_jaw(finger_width: float, jaw_thickness: float, jaw_length: float,
                     max_opening: float, palm_thickness: float = 0.012,
                     name: str = "fingers") -> "FingerModel":
        """Two-box jaw: the finger itself plus a bridge arm toward the palm.

        The bridge arms of the two jaws always overlap at the centerline, so
        the assembled body is connected at any opening.
        """
        arm_len = max_opening / 2 + 2 * jaw_thickness
        jaw = BoxCompound((
            Box([jaw_thickness / 2, finger_width / 2, jaw_length / 2],
                Transform.from_translation([jaw_thickness / 2, 0, jaw_length / 2])),
            Box([arm_len / 2, finger_width / 2, palm_thickness / 2],
                Transform.from_translation([jaw_thickness - arm_len / 2, 0,
                                            jaw_length + palm_thickness / 2])),
        ))
        return FingerModel(jaw, finger_width, max_opening, name)

    def body_at(self, opening: float) -> BoxCompound:
        """Both jaws in the tip frame with the inner faces `opening` apart."""
        if opening < 0 or opening > self.max_opening + 1e-9:
            raise GeometryError(f"opening {opening} outside [0, {self.max_opening}]")
        right = Transform.from_translation([opening / 2, 0, 0])
        left = Transform.from_axis_angle([0, 0, 1], np.pi, [-opening / 2, 0, 0])
        boxes = []
        for mount in (right, left):
            boxes.extend(Box(b.half_extents, mount @ b.pose) for b in self.jaw.boxes)
        return BoxCompound(tuple(boxes), "tip")


@dataclass(frozen=True, eq=False)
class GraspDefinition:
    """Authored finger placement: tip frame expressed in the part frame.

    Either a single pose or a translation range between two endpoint poses
    sharing one orientation.
    """

    part_class: int
    opening: float
    pose: Transform | None = None
    pose_a: Transform | None = None
    pose_b: Transform | None = None

    def __post_init__(self):
        if self.pose is None:
            if self.pose_a is None or self.pose_b is None:
                raise GraspError("grasp needs a pose or two endpoints")
            if self.pose_a.rotation_distance(self.pose_b) > 1e-9:
                raise GraspError("range endpoints must differ only by translation")
        elif self.pose_a is not None or self.pose_b is not None:
            raise GraspError("give either a single pose or endpoints, not both")
        if self.opening <= 0:
            raise GraspError("opening must be positive")

    @property
    def is_range(self) -> bool:
        return self.pose is None

    def sample_poses(self, steps: int) -> list[Transform]:
        """Discretize the grasp into tip poses (a single grasp yields one)."""
        if not self.is_range:
            return [self.pose]
        if steps < 2:
            ta = 0.5 * (self.pose_a.translation + self.pose_b.translation)
            return [Transform(self.pose_a.rotation, ta)]
        fracs = np.linspace(0.0, 1.0, steps)
        return [Transform(self.pose_a.rotation,
                          (1 - f) * self.pose_a.translation + f * self.pose_b.translation)
                for f in fracs]

    def flipped(self) -> "GraspDefinition":
        """The same grip rotated 180 degrees about the fingers' z axis."""
        if self.is_range:
            return GraspDefinition(self.part_class, self.opening,
                                   pose_a=self.pose_a @ _FLIP_Z, pose_b=self.pose_b @ _FLIP_Z)
        return GraspDefinition(self.part_class, self.opening, self.pose @ _FLIP_Z)


def expand_grasp_set(defs: list[GraspDefinition]) -> list[GraspDefinition]:
    """Each authored grasp contributes itself plus its 180-degree twin."""
    out = []
    for d in defs:
        out.append(d)
        out.append(d.flipped())
    return out


@dataclass(frozen=True)
class PlacedPart:
    part_class: int
    body: BoxCompound
    pose: Transform


@dataclass
class PlacedProposal:
    """A surviving grasp region in the workcell frame."""

    part_index: int
    part_class: int
    rect: RectFrame
    def_index: int
    opening: float
    tip_pose: Transform  # workcell frame, after the right-half flip


@dataclass
class GraspProposal:
    """Inference result: rectangle frame, extents, class, and member cells."""

    frame: RectFrame
    width: float
    height: float
    part_class: int
    cell_index: np.ndarray  # (N, 2) (iy, ix)
    cell_heights: np.ndarray
    cell_gradients: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return self.frame.center


def commanded_opening(proposal: GraspProposal, finger: FingerModel, padding: float = 0.004) -> float:
    """Finger opening to command for a proposal: its width plus padding."""
    return min(proposal.width + padding, finger.max_opening)


def _right_half_flip(rect: RectFrame, tip: Transform, camera: CameraModel) -> tuple[RectFrame, Transform]:
    cam_right = camera.pose.rotate(np.array([1.0, 0.0, 0.0]))
    if float(rect.x_axis @ cam_right) < 0:
        return rect.flipped(), tip @ _FLIP_Z
    return rect, tip


def _image_footprint(rect: RectFrame, camera: CameraModel) -> np.ndarray | None:
    """Sorted unique pixel ids covered by the projected rectangle."""
    import cv2

    proj = camera.project(rect.corners())
    if np.any(proj[:, 2] <= 0):
        return None
    poly = np.round(proj[:, :2]).astype(np.int32)
    mask = np.zeros((camera.height, camera.width), dtype=np.uint8)
    cv2.fillConvexPoly(mask, poly, 1)
    return np.flatnonzero(mask)


def propose_grasps(scene: list[PlacedPart], grasp_sets: dict[int, list[GraspDefinition]],
                   finger: FingerModel, environment: list[tuple[BoxCompound, Transform]],
                   camera: CameraModel, range_steps: int = 5,
                   margin: float = CONTACT_EPS) -> list[PlacedProposal]:
    """Collision-checked grasp regions for every part in the scene.

    Range grasps are discretized into `range_steps` placements; maximal runs
    of consecutive valid placements become one proposal each, centered on the
    run midpoint with height grown by the run span. Proposal x axes point
    toward the right half of the camera view, and of two proposals that
    overlap in the image the one farther from the camera is dropped.
    """
    proposals: list[PlacedProposal] = []
    for i, part in enumerate(scene):
        defs = grasp_sets.get(part.part_class)
        if not defs:
            raise MissingGraspSet(f"part class {part.part_class} has no grasps")
        obstacles = [(p.body, p.pose) for j, p in enumerate(scene) if j != i]
        obstacles += list(environment)
        for j, gd in enumerate(defs):
            body = finger.body_at(gd.opening)
            steps = gd.sample_poses(range_steps if gd.is_range else 1)
            valid = []
            for tip_local in steps:
                tip_world = part.pose @ tip_local
                free = not any(collide(body, tip_world, ob, ob_pose, margin)
                               for ob, ob_pose in obstacles)
                valid.append(free)
            for k0, k1 in _runs(valid):
                mid = 0.5 * (steps[k0].translation + steps[k1].translation)
                span = float(np.linalg.norm(steps[k1].translation - steps[k0].translation))
                tip_world = part.pose @ Transform(steps[k0].rotation, mid)
                r = tip_world.matrix
                rect = RectFrame(tip_world.translation, r[:, 0], r[:, 1], r[:, 2],
                                 gd.opening, finger.finger_width + span)
                rect, tip_world = _right_half_flip(rect, tip_world, camera)
                proposals.append(PlacedProposal(i, part.part_class, rect, j, gd.opening, tip_world))
    return _drop_occluded(proposals, camera)


def _runs(valid: list[bool]):
    start = None
    for k, v in enumerate(valid):
        if v and start is None:
            start = k
        if not v and start is not None:
            yield start, k - 1
            start = None
    if start is not None:
        yield start, len(valid) - 1


def _drop_occluded(proposals: list[PlacedProposal], camera: CameraModel) -> list[PlacedProposal]:
    cam_pos = camera.pose.translation
    order = sorted(range(len(proposals)),
                   key=lambda k: float(np.linalg.norm(proposals[k].rect.center - cam_pos)))
    taken: list[int] = []
    footprints = {}
    keep = []
    for k in order:
        fp = _image_footprint(proposals[k].rect, camera)
        if fp is None or len(fp) == 0:
            continue
        if any(len(np.intersect1d(fp, footprints[t], assume_unique=True)) > 0 for t in taken):
            continue
        footprints[k] = fp
        taken.append(k)
        keep.append(k)
    return [proposals[k] for k in sorted(keep)]


def rasterize_proposals(proposals: list[PlacedProposal], grid: GridSpec) -> Heightmap:
    """Render proposal rectangles into a label heightmap."""
    label = Heightmap.empty(grid)
    for prop in proposals:
        stamp_rectangle(label, prop.rect, prop.part_class)
    return label


def label_scene(scene: list[PlacedPart], grasp_sets: dict[int, list[GraspDefinition]],
                finger: FingerModel, environment: list[tuple[BoxCompound, Transform]],
                camera: CameraModel, grid: GridSpec, range_steps: int = 5) -> Heightmap:
    """Full label pipeline: propose, filter, and rasterize the grasp regions."""
    return rasterize_proposals(
        propose_grasps(scene, grasp_sets, finger, environment, camera, range_steps), grid)


def infer_grasps(label: Heightmap) -> list[GraspProposal]:
    """Recover grasp proposals from a label heightmap.

    8-connected clusters of labeled cells are fitted with a PCA rectangle;
    the x axis is re-anchored to the direction of decreasing gradient and the
    class is the majority vote over the cluster.
    """
    mask = label.occupied()
    if not mask.any():
        return []
    clusters, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    out = []
    up = label.grid.origin.rotate(np.array([0.0, 0.0, 1.0]))
    for c in range(1, n + 1):
        cmask = clusters == c
        pts = label.cell_points(cmask)
        if len(pts) < 3:
            continue
        try:
            rect = pca_rect_frame(pts)
        except GeometryError:
            continue
        iy, ix = np.nonzero(cmask)
        grads = label.gradient[iy, ix]
        x_axis = _gradient_descent_axis(pts, grads, rect)
        if x_axis is None:
            continue
        z_axis = rect.z_axis if float(rect.z_axis @ up) >= 0 else -rect.z_axis
        x_axis = x_axis - (x_axis @ z_axis) * z_axis
        x_axis /= np.linalg.norm(x_axis)
        y_axis = np.cross(z_axis, x_axis)
        rel = pts - rect.center
        sx = rel @ x_axis
        sy = rel @ y_axis
        width = float(sx.max() - sx.min()) + label.grid.cell_size
        height = float(sy.max() - sy.min()) + label.grid.cell_size
        frame = RectFrame(rect.center, x_axis, y_axis, z_axis, width, height)
        vals, counts = np.unique(label.class_id[iy, ix], return_counts=True)
        cls = int(vals[np.argmax(counts)])
        out.append(GraspProposal(frame, width, height, cls,
                                 np.column_stack([iy, ix]),
                                 label.height[iy, ix], grads))
    return out


def _gradient_descent_axis(pts: np.ndarray, grads: np.ndarray, rect: RectFrame) -> np.ndarray | None:
    """In-plane direction of steepest gradient decrease (least squares fit)."""
    rel = pts - rect.center
    a = np.column_stack([rel @ rect.x_axis, rel @ rect.y_axis, np.ones(len(pts))])
    coef, *_ = np.linalg.lstsq(a, grads, rcond=None)
    slope = coef[:2]
    norm = np.linalg.norm(slope)
    if norm < 1e-9:
        return None
    d = -slope / norm
    return d[0] * rect.x_axis + d[1] * rect.y_axis


def select_grasp(proposals: list[GraspProposal], part_class: int,
                 camera_pose: Transform) -> GraspProposal:
    """The proposal of the requested class whose center is nearest the camera."""
    candidates = [p for p in proposals if p.part_class == part_class]
    if not candidates:
        raise NoProposalForClass(f"no proposal for class {part_class}")
    cam = camera_pose.translation
    return min(candidates, key=lambda p: float(np.linalg.norm(p.center - cam)))
