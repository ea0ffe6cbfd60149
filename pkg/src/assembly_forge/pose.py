"""Six-view pose proposals and 6-DOF pose recovery for box-compound parts.

A part gets one rectangular proposal per primary view direction: the matching
face of its local-frame bounding box, with a recorded offset back to the part
frame. Labels rasterize the view-appropriate proposal; estimation fits the
labeled rectangle, decodes the combined part/view id, and applies the stored
offset.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .geom import BoxCompound, GeometryError, RectFrame, Transform, pca_rect_frame
from .grasp import _gradient_descent_axis
from .render import CameraModel, GridSpec, Heightmap, stamp_rectangle

VIEWS_PER_PART = 6


class PoseError(ValueError):
    pass


class PartOutOfView(PoseError):
    pass


class AmbiguousCluster(PoseError):
    """The label does not contain exactly one proposal cluster."""


class UnknownId(PoseError):
    pass


class ViewDirection(IntEnum):
    TOP = 0
    BOTTOM = 1
    LEFT = 2
    RIGHT = 3
    FRONT = 4
    BACK = 5


# outward axis of each view in the part frame, in tie-priority order
VIEW_AXES: dict[ViewDirection, np.ndarray] = {
    ViewDirection.TOP: np.array([0.0, 0.0, 1.0]),
    ViewDirection.BOTTOM: np.array([0.0, 0.0, -1.0]),
    ViewDirection.LEFT: np.array([-1.0, 0.0, 0.0]),
    ViewDirection.RIGHT: np.array([1.0, 0.0, 0.0]),
    ViewDirection.FRONT: np.array([0.0, 1.0, 0.0]),
    ViewDirection.BACK: np.array([0.0, -1.0, 0.0]),
}


def combined_id(part_id: int, view: ViewDirection | int) -> int:
    return int(view) + VIEWS_PER_PART * int(part_id)


def split_combined_id(value: int) -> tuple[int, ViewDirection]:
    if value < 0:
        raise UnknownId(f"negative combined id {value}")
    return value // VIEWS_PER_PART, ViewDirection(value % VIEWS_PER_PART)


def primary_view(direction) -> ViewDirection:
    """The primary view whose 45-degree frustum contains the direction.

    Exact boundary ties resolve by the enum's fixed priority order.
    """
    d = np.asarray(direction, dtype=float)
    n = np.linalg.norm(d)
    if abs(n - 1.0) > 1e-6:
        raise PoseError(f"direction must be a unit vector, |d| = {n}")
    best, best_dot = ViewDirection.TOP, -np.inf
    for view, axis in VIEW_AXES.items():
        dot = float(d @ axis)
        if dot > best_dot + 1e-12:
            best, best_dot = view, dot
    return best


@dataclass(frozen=True)
class PoseProposal:
    """A bounding-box face rectangle with a fixed offset to the part frame."""

    view: ViewDirection
    frame: RectFrame  # in the part frame
    offset: Transform  # proposal frame -> part frame
    symmetry_order: int = 1

    def __post_init__(self):
        if self.symmetry_order < 1:
            raise PoseError("symmetry order must be >= 1")


def build_pose_proposals(part: BoxCompound,
                         symmetry: dict[ViewDirection, int] | None = None
                         ) -> dict[ViewDirection, PoseProposal]:
    """One proposal per face of the part's local-frame bounding box.

    The face frame has z along the outward normal and x/y along the two
    remaining box axes (x picked from +x, else +y, right-handed). Symmetry
    orders are authored metadata, default 1 (asymmetric).
    """
    symmetry = symmetry or {}
    lo, hi = part.aabb()
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    out = {}
    for view, normal in VIEW_AXES.items():
        axis_idx = int(np.argmax(np.abs(normal)))
        x_axis = np.array([0.0, 1.0, 0.0]) if axis_idx == 0 else np.array([1.0, 0.0, 0.0])
        y_axis = np.cross(normal, x_axis)
        face_center = center + normal * half[axis_idx]
        width = 2 * float(np.abs(half @ np.abs(x_axis)))
        height = 2 * float(np.abs(half @ np.abs(y_axis)))
        rect = RectFrame(face_center, x_axis, y_axis, normal, width, height)
        offset = rect.as_transform().invert()
        out[view] = PoseProposal(view, rect, offset, symmetry.get(view, 1))
    return out


def view_of_pose(part_pose: Transform, camera: CameraModel) -> ViewDirection:
    """Primary view of the camera from the part's perspective."""
    to_cam = camera.pose.translation - part_pose.translation
    n = np.linalg.norm(to_cam)
    if n < 1e-9:
        raise PoseError("camera at the part origin")
    return primary_view(part_pose.invert().rotate(to_cam / n))


def check_in_view(body: BoxCompound, part_pose: Transform, camera: CameraModel,
                  fill_range: tuple[float, float] | None = (0.25, 0.40)) -> None:
    """Raise PartOutOfView unless the part projects fully and large enough."""
    corners = np.vstack([part_pose.apply(b.corners()) for b in body.boxes])
    proj = camera.project(corners)
    if np.any(proj[:, 2] <= 0):
        raise PartOutOfView("part behind the camera")
    u, v = proj[:, 0], proj[:, 1]
    if u.min() < 0 or v.min() < 0 or u.max() >= camera.width or v.max() >= camera.height:
        raise PartOutOfView("part footprint exceeds the image")
    if fill_range is not None:
        fill = max(u.max() - u.min(), v.max() - v.min()) / camera.width
        if not (fill_range[0] <= fill <= fill_range[1]):
            raise PartOutOfView(f"part fills {fill:.2f} of the view, "
                                f"outside [{fill_range[0]}, {fill_range[1]}]")


def _anchor_rotation(rect_world: RectFrame, order: int, camera: CameraModel) -> RectFrame:
    """Re-anchor a symmetric proposal's x axis toward the camera's right half.

    Among the `order` equivalent in-plane rotations, take the smallest one
    (by rotation magnitude, then index) that lands the x axis in the right
    half of the view.
    """
    if order <= 1:
        return rect_world
    cam_right = camera.pose.rotate(np.array([1.0, 0.0, 0.0]))
    js = sorted(range(order), key=lambda j: (min(j, order - j), j))
    for j in js:
        cand = rect_world.rotate_in_plane(2 * np.pi * j / order)
        if float(cand.x_axis @ cam_right) >= 0:
            return cand
    return rect_world


def label_pose(part_id: int, body: BoxCompound, part_pose: Transform,
               camera: CameraModel, proposals: dict[ViewDirection, PoseProposal],
               grid: GridSpec, fill_range: tuple[float, float] | None = (0.25, 0.40)
               ) -> Heightmap:
    """Rasterize the view-appropriate pose proposal of a posed part.

    The class channel carries the combined id (view + 6 * part id); the
    gradient ramps along the anchored proposal x axis.
    """
    check_in_view(body, part_pose, camera, fill_range)
    view = view_of_pose(part_pose, camera)
    prop = proposals[view]
    local = prop.frame
    world_t = part_pose @ local.as_transform()
    r = world_t.matrix
    rect_world = RectFrame(world_t.translation, r[:, 0], r[:, 1], r[:, 2],
                           local.width, local.height)
    rect_world = _anchor_rotation(rect_world, prop.symmetry_order, camera)
    label = Heightmap.empty(grid)
    if stamp_rectangle(label, rect_world, combined_id(part_id, view)) == 0:
        raise PartOutOfView("proposal rectangle missed the label grid")
    return label


def estimate_pose(label: Heightmap,
                  tables: dict[int, dict[ViewDirection, PoseProposal]]
                  ) -> tuple[int, Transform]:
    """Recover (part id, part pose in the workcell frame) from a pose label.

    Requires exactly one labeled cluster; the combined id picks the proposal
    whose stored offset maps the fitted rectangle back to the part frame.
    """
    mask = label.occupied()
    clusters, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n != 1:
        raise AmbiguousCluster(f"expected 1 cluster, found {n}")
    pts = label.cell_points(mask)
    if len(pts) < 3:
        raise AmbiguousCluster("cluster too small to fit")
    iy, ix = np.nonzero(mask)
    vals, counts = np.unique(label.class_id[iy, ix], return_counts=True)
    part_id, view = split_combined_id(int(vals[np.argmax(counts)]))
    table = tables.get(part_id)
    if table is None:
        raise UnknownId(f"no proposal table for part id {part_id}")
    prop = table[view]

    rect = pca_rect_frame(pts)
    grads = label.gradient[iy, ix]
    x_axis = _gradient_descent_axis(pts, grads, rect)
    if x_axis is None:
        raise AmbiguousCluster("label carries no usable gradient")
    up = label.grid.origin.rotate(np.array([0.0, 0.0, 1.0]))
    z_axis = rect.z_axis if float(rect.z_axis @ up) >= 0 else -rect.z_axis
    x_axis = x_axis - (x_axis @ z_axis) * z_axis
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    prop_pose = Transform.from_matrix(np.column_stack([x_axis, y_axis, z_axis]), rect.center)
    return part_id, prop_pose @ prop.offset
