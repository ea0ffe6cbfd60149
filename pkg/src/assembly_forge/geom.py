"""Rigid transforms, box-compound bodies, collision tests, and rectangle fitting.

Everything downstream (rendering, grasp/pose oracles, planners, the simulator)
builds on the three types in this module. All lengths are meters, all
rotations unit quaternions in (w, x, y, z) order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Gap below which two bodies count as touching/colliding (meters).
CONTACT_EPS = 1e-4

_QUAT_TOL = 1e-9


class GeometryError(ValueError):
    pass


class DegeneratePointSet(GeometryError):
    """Raised when a point set has no usable planar extent."""


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid pose: rotation (unit quaternion, wxyz) plus translation (m)."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        n = math.sqrt(float(q @ q))
        if not np.isfinite(n) or abs(n) < 1e-12:
            raise GeometryError(f"invalid quaternion {q!r}")
        if abs(n - 1.0) > 1e-6:
            raise GeometryError(f"quaternion not normalized: |q| = {n}")
        q = q / n
        if q[0] < 0:  # canonical hemisphere, keeps serialization stable
            q = -q
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", _as_vec3(self.translation).copy())
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @staticmethod
    def _trusted(q: np.ndarray, t: np.ndarray) -> "Transform":
        """Internal fast path: `q` must already be unit length."""
        obj = object.__new__(Transform)
        if q[0] < 0:
            q = -q
        object.__setattr__(obj, "rotation", q)
        object.__setattr__(obj, "translation", t)
        return obj

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Transform":
        a = _as_vec3(axis)
        n = np.linalg.norm(a)
        if n < 1e-12:
            raise GeometryError("zero rotation axis")
        a = a / n
        h = 0.5 * angle
        q = np.concatenate([[np.cos(h)], np.sin(h) * a])
        return Transform(q, translation)

    @staticmethod
    def from_matrix(rotation_matrix, translation=(0.0, 0.0, 0.0)) -> "Transform":
        return Transform(matrix_to_quat(rotation_matrix), translation)

    @staticmethod
    def from_translation(translation) -> "Transform":
        return Transform(np.array([1.0, 0.0, 0.0, 0.0]), translation)

    @cached_property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def compose(self, other: "Transform") -> "Transform":
        """self ∘ other: apply `other` first, then `self`."""
        q = quat_multiply(self.rotation, other.rotation)
        q /= math.sqrt(float(q @ q))
        return Transform._trusted(q, self.matrix @ other.translation + self.translation)

    def __matmul__(self, other: "Transform") -> "Transform":
        return self.compose(other)

    def invert(self) -> "Transform":
        q_inv = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return Transform._trusted(q_inv, -(self.matrix.T @ self.translation))

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or many points (N, 3)."""
        p = np.asarray(points, dtype=float)
        r = self.matrix
        if p.ndim == 1:
            return r @ p + self.translation
        return p @ r.T + self.translation

    def rotate(self, vectors) -> np.ndarray:
        v = np.asarray(vectors, dtype=float)
        r = self.matrix
        if v.ndim == 1:
            return r @ v
        return v @ r.T

    def almost_equal(self, other: "Transform", lin_tol: float = 1e-9, ang_tol: float = 1e-9) -> bool:
        if np.linalg.norm(self.translation - other.translation) > lin_tol:
            return False
        return self.rotation_distance(other) <= ang_tol

    def rotation_distance(self, other: "Transform") -> float:
        """Absolute rotation angle between the two orientations, radians."""
        d = abs(float(np.dot(self.rotation, other.rotation)))
        return 2.0 * np.arccos(min(1.0, d))


def rotation_angle(q: np.ndarray) -> float:
    return 2.0 * np.arccos(min(1.0, abs(float(q[0]))))


@dataclass(frozen=True, eq=False)
class Box:
    """One oriented box of a compound: half extents plus pose in the compound frame."""

    half_extents: np.ndarray
    pose: Transform = field(default_factory=Transform)

    def __post_init__(self):
        h = _as_vec3(self.half_extents)
        if np.any(h <= 0):
            raise GeometryError(f"half extents must be positive, got {h}")
        object.__setattr__(self, "half_extents", h.copy())
        self.half_extents.setflags(write=False)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    def corners(self) -> np.ndarray:
        """The 8 corners in the compound frame, shape (8, 3)."""
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.pose.apply(signs * self.half_extents)


@dataclass(frozen=True, eq=False)
class BoxCompound:
    """A rigid body expressed as a union of oriented boxes in a local frame."""

    boxes: tuple
    frame: str = "local"

    def __post_init__(self):
        if len(self.boxes) == 0:
            raise GeometryError("compound needs at least one box")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    @staticmethod
    def single(half_extents, pose: Transform | None = None, frame: str = "local") -> "BoxCompound":
        return BoxCompound((Box(half_extents, pose or Transform()),), frame)

    def transformed(self, t: Transform) -> "BoxCompound":
        return BoxCompound(tuple(Box(b.half_extents, t @ b.pose) for b in self.boxes), self.frame)

    def aabb(self, pose: Transform | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds (min, max) of the compound under `pose`."""
        pose = pose or Transform()
        pts = np.vstack([pose.apply(b.corners()) for b in self.boxes])
        return pts.min(axis=0), pts.max(axis=0)

    def bounding_radius(self) -> float:
        return max(float(np.linalg.norm(b.pose.translation) + b.radius) for b in self.boxes)

    def sample_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform interior samples in the compound frame (per-box volume weighted)."""
        vols = np.array([np.prod(2 * b.half_extents) for b in self.boxes])
        counts = rng.multinomial(n, vols / vols.sum())
        chunks = []
        for b, k in zip(self.boxes, counts):
            if k == 0:
                continue
            local = rng.uniform(-b.half_extents, b.half_extents, size=(k, 3))
            chunks.append(b.pose.apply(local))
        return np.vstack(chunks) if chunks else np.zeros((0, 3))

    def contains(self, points: np.ndarray, pose: Transform | None = None, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of world `points` inside the posed compound."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pose = pose or Transform()
        inside = np.zeros(len(pts), dtype=bool)
        for b in self.boxes:
            world = pose @ b.pose
            local = (pts - world.translation) @ world.matrix
            inside |= np.all(np.abs(local) <= b.half_extents + tol, axis=1)
        return inside


_CYCLIC = ((1, 2), (2, 0), (0, 1))


def _pair_separation(ha: np.ndarray, ra: np.ndarray, ta: np.ndarray,
                     hb: np.ndarray, rb: np.ndarray, tb: np.ndarray,
                     stop_at: float | None = None) -> float:
    """Signed separation of two oriented boxes: positive gap, negative penetration.

    Max over the 15 SAT axes (3 + 3 face normals, 9 edge cross products,
    evaluated in closed form from the frame product matrix) of the projected
    center distance minus the projected radii. For disjoint boxes this
    lower-bounds the true gap; for intersecting boxes its negation is the
    minimum translation distance. With `stop_at`, returns early once the
    separation provably reaches that value.
    """
    d = tb - ta
    r = ra.T @ rb
    abs_r = np.abs(r)
    da = ra.T @ d
    db = rb.T @ d
    ha0, ha1, ha2 = float(ha[0]), float(ha[1]), float(ha[2])
    hb0, hb1, hb2 = float(hb[0]), float(hb[1]), float(hb[2])
    hav = (ha0, ha1, ha2)
    hbv = (hb0, hb1, hb2)
    best = -np.inf
    for i in range(3):
        s = abs(float(da[i])) - hav[i] - (hb0 * abs_r[i, 0] + hb1 * abs_r[i, 1] + hb2 * abs_r[i, 2])
        if s > best:
            best = s
            if stop_at is not None and best >= stop_at:
                return best
    for j in range(3):
        s = abs(float(db[j])) - hbv[j] - (ha0 * abs_r[0, j] + ha1 * abs_r[1, j] + ha2 * abs_r[2, j])
        if s > best:
            best = s
            if stop_at is not None and best >= stop_at:
                return best
    for i in range(3):
        i1, i2 = _CYCLIC[i]
        for j in range(3):
            j1, j2 = _CYCLIC[j]
            # axis = a_i x b_j, |axis|^2 = 1 - (a_i . b_j)^2
            n_sq = 1.0 - r[i, j] * r[i, j]
            if n_sq < 1e-12:
                continue
            t_l = abs(float(da[i2]) * r[i1, j] - float(da[i1]) * r[i2, j])
            pa = hav[i1] * abs_r[i2, j] + hav[i2] * abs_r[i1, j]
            pb = hbv[j1] * abs_r[i, j2] + hbv[j2] * abs_r[i, j1]
            s = (t_l - pa - pb) / np.sqrt(n_sq)
            if s > best:
                best = s
                if stop_at is not None and best >= stop_at:
                    return best
    return float(best)


def separation(a: BoxCompound, pose_a: Transform, b: BoxCompound, pose_b: Transform) -> float:
    """Signed separation between two posed compounds (min over box pairs)."""
    world_a = [(pose_a @ box.pose, box) for box in a.boxes]
    world_b = [(pose_b @ box.pose, box) for box in b.boxes]
    best = np.inf
    for ta, box_a in world_a:
        ra = ta.matrix
        ca = ta.translation
        for tb, box_b in world_b:
            # cheap sphere reject: distance between centers already bounds the gap
            lo = float(np.linalg.norm(tb.translation - ca)) - box_a.radius - box_b.radius
            if lo >= best:
                continue
            s = _pair_separation(box_a.half_extents, ra, ca,
                                 box_b.half_extents, tb.matrix, tb.translation)
            if s < best:
                best = s
    return float(best)


def collide(a: BoxCompound, pose_a: Transform, b: BoxCompound, pose_b: Transform,
            margin: float = CONTACT_EPS) -> bool:
    """True iff any box pair intersects, counting gaps below `margin` as contact.

    The default margin treats bodies closer than CONTACT_EPS as colliding; pass
    a negative margin to tolerate shallow penetration (e.g. resting contact).
    """
    world_a = [(pose_a @ box.pose, box) for box in a.boxes]
    world_b = [(pose_b @ box.pose, box) for box in b.boxes]
    for ta, box_a in world_a:
        ra = ta.matrix
        ca = ta.translation
        for tb, box_b in world_b:
            lo = float(np.linalg.norm(tb.translation - ca)) - box_a.radius - box_b.radius
            if lo >= margin:
                continue
            s = _pair_separation(box_a.half_extents, ra, ca,
                                 box_b.half_extents, tb.matrix, tb.translation,
                                 stop_at=margin)
            if s < margin:
                return True
    return False


@dataclass(frozen=True, eq=False)
class RectFrame:
    """An oriented rectangle: center, orthonormal axes, and extents along x/y."""

    center: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray
    width: float
    height: float

    def __post_init__(self):
        for name in ("center", "x_axis", "y_axis", "z_axis"):
            object.__setattr__(self, name, _as_vec3(getattr(self, name)).copy())
        axes = np.stack([self.x_axis, self.y_axis, self.z_axis])
        if not np.allclose(axes @ axes.T, np.eye(3), atol=1e-6):
            raise GeometryError("rectangle axes not orthonormal")
        if self.width < 0 or self.height < 0:
            raise GeometryError("negative rectangle extent")

    def as_transform(self) -> Transform:
        return Transform.from_matrix(np.column_stack([self.x_axis, self.y_axis, self.z_axis]),
                                     self.center)

    def corners(self) -> np.ndarray:
        hw, hh = 0.5 * self.width, 0.5 * self.height
        return np.array([self.center + sx * hw * self.x_axis + sy * hh * self.y_axis
                         for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))])

    def rotate_in_plane(self, angle: float) -> "RectFrame":
        """Rotate x/y about the rectangle normal; extents follow the axes."""
        c, s = np.cos(angle), np.sin(angle)
        nx = c * self.x_axis + s * self.y_axis
        ny = -s * self.x_axis + c * self.y_axis
        return RectFrame(self.center, nx, ny, self.z_axis, self.width, self.height)

    def flipped(self) -> "RectFrame":
        return self.rotate_in_plane(np.pi)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    for ref in np.eye(3):
        d = float(v @ ref)
        if abs(d) > 1e-9:
            return v if d > 0 else -v
    return v


def pca_rect_frame(points) -> RectFrame:
    """Fit an oriented rectangle to a roughly planar point set.

    Axes are the principal components sorted by descending variance
    (major -> x, minor -> y, normal -> z); width/height are the extents along
    major/minor. Axis signs are canonicalized toward the world axes, and a
    near-tie between the top two eigenvalues is broken toward world +x.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 3:
        raise DegeneratePointSet(f"need at least 3 points, got {pts.shape[0]}")
    center = pts.mean(axis=0)
    centered = pts - center
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    lam_minor, lam_major = evals[1], evals[2]
    if lam_major <= 0 or lam_minor <= 1e-10 * lam_major:
        raise DegeneratePointSet("points are collinear")
    major, minor, normal = evecs[:, 2], evecs[:, 1], evecs[:, 0]
    if abs(lam_major - lam_minor) <= 1e-9 * lam_major:
        # tie: prefer the axis better aligned with world +x as major
        if abs(minor[0]) > abs(major[0]):
            major, minor = minor, major
    major = _canonical_sign(major)
    minor = _canonical_sign(minor)
    normal = np.cross(major, minor)
    proj_x = centered @ major
    proj_y = centered @ minor
    return RectFrame(center, major, minor, normal,
                     float(proj_x.max() - proj_x.min()),
                     float(proj_y.max() - proj_y.min()))
