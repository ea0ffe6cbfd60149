"""Software depth rendering, sensor-style degradation, and heightmap binning.

The renderer casts one ray per pixel against every box of the scene and keeps
the nearest hit (z-buffer semantics: stored values are the camera-frame z of
the hit, in meters, 0 where nothing was hit). Heightmaps are orthographic
grids of maximum surface height above a support plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import BoxCompound, GeometryError, Transform


class RenderError(ValueError):
    pass


class GridMismatch(RenderError):
    """No back-projected depth sample landed inside the target grid."""


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: +z forward, +x image-right, +y image-down.

    `pose` places the camera in the workcell frame. A point p_cam in camera
    coordinates projects to pixel (u, v) = (f*x/z + cx, f*y/z + cy).
    """

    pose: Transform
    focal: float
    width: int
    height: int
    cx: float | None = None
    cy: float | None = None
    near: float = 0.05
    far: float = 3.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("image dimensions must be positive")
        if not (0 < self.near < self.far):
            raise GeometryError("need 0 < near < far")
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)

    def downsampled(self, factor: int) -> "CameraModel":
        """The camera matching a block-downsampled image of this one."""
        if factor == 1:
            return self
        return CameraModel(self.pose, self.focal / factor,
                           self.width // factor, self.height // factor,
                           self.cx / factor, self.cy / factor, self.near, self.far)

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions with unit z, shape (H, W, 3)."""
        us = (np.arange(self.width) + 0.5 - self.cx) / self.focal
        vs = (np.arange(self.height) + 0.5 - self.cy) / self.focal
        uu, vv = np.meshgrid(us, vs)
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    def project(self, points_world: np.ndarray) -> np.ndarray:
        """World points -> (u, v, z_cam) rows; z <= 0 means behind the camera."""
        p = self.pose.invert().apply(np.atleast_2d(points_world))
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.focal * p[:, 0] / p[:, 2] + self.cx
            v = self.focal * p[:, 1] / p[:, 2] + self.cy
        return np.column_stack([u, v, p[:, 2]])

    def look_at(self) -> np.ndarray:
        return self.pose.rotate(np.array([0.0, 0.0, 1.0]))


def look_at_pose(eye, target, up=(0.0, 1.0, 0.0)) -> Transform:
    """Camera pose with +z pointing from eye toward target."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise GeometryError("eye and target coincide")
    z = z / nz
    up = np.asarray(up, dtype=float)
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-9:  # up parallel to view axis, pick another
        x = np.cross(np.array([1.0, 0.0, 0.0]), z)
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(np.array([0.0, 1.0, 0.0]), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Transform.from_matrix(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True)
class DepthImage:
    width: int
    height: int
    depth: np.ndarray  # (H, W), meters, 0 = no hit

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        if d.shape != (self.height, self.width):
            raise RenderError(f"depth shape {d.shape} != ({self.height}, {self.width})")
        if not np.all(np.isfinite(d)):
            raise RenderError("depth must be finite")
        object.__setattr__(self, "depth", d)


@dataclass(frozen=True)
class GridSpec:
    """Orthographic grid: cell (iy, ix) covers [ix, ix+1) x [iy, iy+1) cells
    from the origin frame's x/y axes; heights are measured along origin +z."""

    origin: Transform
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.cell_size <= 0 or self.nx <= 0 or self.ny <= 0:
            raise GeometryError("invalid grid spec")

    def cell_centers(self) -> np.ndarray:
        """World-frame centers of all cells at plane height 0, shape (ny, nx, 3)."""
        xs = (np.arange(self.nx) + 0.5) * self.cell_size
        ys = (np.arange(self.ny) + 0.5) * self.cell_size
        xx, yy = np.meshgrid(xs, ys)
        pts = np.stack([xx, yy, np.zeros_like(xx)], axis=-1)
        return self.origin.apply(pts.reshape(-1, 3)).reshape(self.ny, self.nx, 3)


@dataclass
class Heightmap:
    """Per-cell max height above the grid plane plus label channels.

    `height` is 0 for empty cells; `class_id` carries a part or combined id
    and `gradient` a unit-range ramp sample, both 0 where unlabeled.
    """

    grid: GridSpec
    height: np.ndarray
    class_id: np.ndarray = None
    gradient: np.ndarray = None

    def __post_init__(self):
        shape = (self.grid.ny, self.grid.nx)
        self.height = np.asarray(self.height, dtype=float)
        if self.height.shape != shape:
            raise RenderError(f"height shape {self.height.shape} != {shape}")
        if np.any(self.height < 0):
            raise RenderError("heights must be non-negative")
        if self.class_id is None:
            self.class_id = np.zeros(shape, dtype=np.int32)
        else:
            self.class_id = np.asarray(self.class_id, dtype=np.int32)
        if self.gradient is None:
            self.gradient = np.zeros(shape, dtype=float)
        else:
            self.gradient = np.asarray(self.gradient, dtype=float)

    @staticmethod
    def empty(grid: GridSpec) -> "Heightmap":
        return Heightmap(grid, np.zeros((grid.ny, grid.nx)))

    def occupied(self) -> np.ndarray:
        return self.height > 0

    def cell_points(self, mask: np.ndarray | None = None) -> np.ndarray:
        """World-frame 3D points of (occupied) cells at their stored height."""
        if mask is None:
            mask = self.occupied()
        iy, ix = np.nonzero(mask)
        local = np.column_stack([
            (ix + 0.5) * self.grid.cell_size,
            (iy + 0.5) * self.grid.cell_size,
            self.height[iy, ix],
        ])
        return self.grid.origin.apply(local)


def render_depth(scene: list[tuple[BoxCompound, Transform]], camera: CameraModel) -> DepthImage:
    """Ray-cast the scene into a depth image (nearest camera-frame z per pixel)."""
    h, w = camera.height, camera.width
    depth = np.full((h, w), np.inf)
    if scene:
        rays = camera.pixel_rays().reshape(-1, 3)
        cam_rot = camera.pose.matrix
        cam_pos = camera.pose.translation
        for compound, pose in scene:
            for box in compound.boxes:
                world = pose @ box.pose
                r = world.matrix
                # ray origins/directions in the box frame; t stays in camera-z units
                o = r.T @ (cam_pos - world.translation)
                d = rays @ (cam_rot.T @ r).T
                t_lo = np.full(len(rays), -np.inf)
                t_hi = np.full(len(rays), np.inf)
                miss = np.zeros(len(rays), dtype=bool)
                for k in range(3):
                    dk = d[:, k]
                    parallel = np.abs(dk) < 1e-12
                    miss |= parallel & (np.abs(o[k]) > box.half_extents[k])
                    with np.errstate(divide="ignore", invalid="ignore"):
                        t1 = (-box.half_extents[k] - o[k]) / dk
                        t2 = (box.half_extents[k] - o[k]) / dk
                    lo = np.minimum(t1, t2)
                    hi = np.maximum(t1, t2)
                    ok = ~parallel
                    t_lo[ok] = np.maximum(t_lo[ok], lo[ok])
                    t_hi[ok] = np.minimum(t_hi[ok], hi[ok])
                t = np.where(t_lo > 0, t_lo, t_hi)
                hit = ~miss & (t_hi >= t_lo) & (t > 0)
                hit &= (t >= camera.near) & (t <= camera.far)
                t = np.where(hit, t, np.inf)
                depth = np.minimum(depth, t.reshape(h, w))
    depth[~np.isfinite(depth)] = 0.0
    return DepthImage(w, h, depth)


def perlin_noise(shape: tuple[int, int], scale: float, seed: int) -> np.ndarray:
    """Classic 2D gradient-lattice noise in [-1, 1], deterministic by seed.

    `scale` is the lattice spacing in cells; values are smooth-interpolated
    dot products with unit lattice gradients, normalized by sqrt(1/2).
    """
    h, w = shape
    rng = np.random.default_rng(seed)
    gy = int(np.ceil(h / scale)) + 1
    gx = int(np.ceil(w / scale)) + 1
    angles = rng.uniform(0, 2 * np.pi, size=(gy, gx))
    grads = np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    ys = np.arange(h) / scale
    xs = np.arange(w) / scale
    xg, yg = np.meshgrid(xs, ys)
    x0 = np.floor(xg).astype(int)
    y0 = np.floor(yg).astype(int)
    fx = xg - x0
    fy = yg - y0

    def dot_corner(ix, iy, ox, oy):
        g = grads[iy + oy, ix + ox]
        return g[..., 0] * (fx - ox) + g[..., 1] * (fy - oy)

    def fade(t):
        return t * t * t * (t * (t * 6 - 15) + 10)

    u, v = fade(fx), fade(fy)
    n00 = dot_corner(x0, y0, 0, 0)
    n10 = dot_corner(x0, y0, 1, 0)
    n01 = dot_corner(x0, y0, 0, 1)
    n11 = dot_corner(x0, y0, 1, 1)
    top = n00 + u * (n10 - n00)
    bot = n01 + u * (n11 - n01)
    return (top + v * (bot - top)) / np.sqrt(0.5)


def degrade(img: DepthImage, factor: int = 2, amplitude: float = 0.002,
            scale: float = 8.0, seed: int = 0) -> DepthImage:
    """Block-average downsample then add lattice noise to non-empty pixels.

    Blocks average only their non-empty pixels (a block of misses stays 0),
    and noise is never applied to empty pixels, so mask structure survives.
    """
    if factor < 1:
        raise RenderError("downsample factor must be >= 1")
    d = img.depth
    if factor > 1:
        ny = img.height // factor
        nx = img.width // factor
        d = d[: ny * factor, : nx * factor]
        blocks = d.reshape(ny, factor, nx, factor)
        hits = (blocks > 0).sum(axis=(1, 3))
        total = blocks.sum(axis=(1, 3))
        with np.errstate(invalid="ignore"):
            d = np.where(hits > 0, total / np.maximum(hits, 1), 0.0)
    else:
        d = d.copy()
    if amplitude > 0:
        noise = perlin_noise(d.shape, scale, seed) * amplitude
        mask = d > 0
        d[mask] = np.maximum(d[mask] + noise[mask], 1e-9)
    return DepthImage(d.shape[1], d.shape[0], d)


def to_heightmap(img: DepthImage, camera: CameraModel, grid: GridSpec) -> Heightmap:
    """Back-project depth pixels and bin the max height per grid cell.

    Raises GridMismatch when the image has hits but none lands in the grid.
    Points below the grid plane are clamped to height 0.
    """
    vv, uu = np.nonzero(img.depth > 0)
    heights = np.zeros((grid.ny, grid.nx))
    if len(vv) == 0:
        return Heightmap(grid, heights)
    z = img.depth[vv, uu]
    x = (uu + 0.5 - camera.cx) * z / camera.focal
    y = (vv + 0.5 - camera.cy) * z / camera.focal
    pts_world = camera.pose.apply(np.column_stack([x, y, z]))
    local = grid.origin.invert().apply(pts_world)
    ix = np.floor(local[:, 0] / grid.cell_size).astype(int)
    iy = np.floor(local[:, 1] / grid.cell_size).astype(int)
    keep = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
    if not keep.any():
        raise GridMismatch("no depth sample back-projects into the grid")
    np.maximum.at(heights, (iy[keep], ix[keep]), np.maximum(local[keep, 2], 0.0))
    return Heightmap(grid, heights)


def stamp_rectangle(label: Heightmap, rect, class_value: int) -> int:
    """Rasterize an oriented rectangle into a label heightmap.

    Covered cells get the rectangle plane height, `class_value`, and a value
    gradient ramping 1 -> 0 along the rectangle +x axis. Where the rectangle
    falls below existing content the existing (higher) cells win. Returns the
    number of cells written.
    """
    grid = label.grid
    to_grid = grid.origin.invert()
    corners = to_grid.apply(rect.corners())
    center = to_grid.apply(rect.center)
    x_axis = to_grid.rotate(rect.x_axis)
    normal = to_grid.rotate(rect.z_axis)
    poly = corners[:, :2] / grid.cell_size
    ix_lo = max(int(np.floor(poly[:, 0].min())), 0)
    ix_hi = min(int(np.ceil(poly[:, 0].max())), grid.nx - 1)
    iy_lo = max(int(np.floor(poly[:, 1].min())), 0)
    iy_hi = min(int(np.ceil(poly[:, 1].max())), grid.ny - 1)
    if ix_hi < ix_lo or iy_hi < iy_lo:
        return 0
    xs = (np.arange(ix_lo, ix_hi + 1) + 0.5) * grid.cell_size
    ys = (np.arange(iy_lo, iy_hi + 1) + 0.5) * grid.cell_size
    xx, yy = np.meshgrid(xs, ys)
    pts2 = np.column_stack([xx.ravel(), yy.ravel()])
    inside = _points_in_convex_poly(pts2, corners[:, :2])
    if not inside.any():
        return 0
    px, py = pts2[inside, 0], pts2[inside, 1]
    if abs(normal[2]) > 0.2:
        z = center[2] - (normal[0] * (px - center[0]) + normal[1] * (py - center[1])) / normal[2]
    else:  # nearly edge-on rectangle: use its top edge height
        z = np.full(px.shape, corners[:, 2].max())
    s_x = (np.column_stack([px, py, z]) - center) @ x_axis
    grad = np.clip(0.5 - s_x / max(rect.width, 1e-9), 0.0, 1.0)
    iy = (py / grid.cell_size - 0.5).round().astype(int)
    ix = (px / grid.cell_size - 0.5).round().astype(int)
    z = np.maximum(z, 0.0)
    higher = z > label.height[iy, ix]
    label.height[iy[higher], ix[higher]] = z[higher]
    label.class_id[iy[higher], ix[higher]] = class_value
    label.gradient[iy[higher], ix[higher]] = grad[higher]
    return int(higher.sum())


def _points_in_convex_poly(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    n = len(poly)
    area2 = sum(poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]
                for i in range(n))
    sign = 1.0 if area2 >= 0 else -1.0
    inside = np.ones(len(pts), dtype=bool)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        edge = b - a
        rel = pts - a
        cross = edge[0] * rel[:, 1] - edge[1] * rel[:, 0]
        inside &= sign * cross >= -1e-12
    return inside


def camera_facing_grid(camera: CameraModel, distance: float, extent: float,
                       cell_size: float) -> GridSpec:
    """Grid orthogonal to the view axis at `distance`, z pointing back at the camera.

    Used for pose work, where "height" means proximity to the camera rather
    than elevation over a table.
    """
    n = int(round(extent / cell_size))
    half = 0.5 * n * cell_size
    # origin corner so the grid is centered on the optical axis
    flip = Transform.from_axis_angle([1, 0, 0], np.pi)  # z toward the camera
    corner = Transform.from_translation([-half, half, distance]) @ flip
    return GridSpec(camera.pose @ corner, cell_size, n, n)
