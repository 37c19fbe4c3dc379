"""Rigid transforms, pinhole camera model, and mesh/point-cloud containers.

Conventions used throughout the package:

* right-handed camera frame, +Z forward into the scene, image origin at the
  top-left corner, v grows downward (BOP convention)
* all lengths in millimeters
* pixel (u, v) samples the continuous image point (u + 0.5, v + 0.5)
* rotations stored as full 3x3 matrices (BOP records keep 9 row-major floats)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHONORMAL_TOL = 1e-6
UNIT_NORMAL_TOL = 1e-4
_REORTHO_DRIFT = 1e-9


def _as_float_array(a, shape, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix back onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def rotation_drift(rotation: np.ndarray) -> float:
    """Max element-wise deviation of R^T R from the identity."""
    return float(np.max(np.abs(rotation.T @ rotation - np.eye(3))))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """6D pose: 3x3 rotation plus translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _as_float_array(self.rotation, (3, 3), "rotation")
        trans = _as_float_array(self.translation, (3,), "translation")
        drift = rotation_drift(rot)
        if drift > ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (drift {drift:.2e})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(f"rotation determinant is {det:.8f}, expected +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidTransform":
        m = _as_float_array(matrix, (4, 4), "matrix")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) or (3,) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def __repr__(self) -> str:
        t = self.translation
        return f"RigidTransform(t=[{t[0]:.3f}, {t[1]:.3f}, {t[2]:.3f}] mm)"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition a∘b: applies b first, then a."""
    rot = a.rotation @ b.rotation
    trans = a.rotation @ b.translation + a.translation
    if rotation_drift(rot) > _REORTHO_DRIFT:
        rot = orthonormalize(rot)
    return RigidTransform(rot, trans)


def invert(t: RigidTransform) -> RigidTransform:
    rot = t.rotation.T
    return RigidTransform(rot, -rot @ t.translation)


def axis_angle_rotation(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotation matrix about an arbitrary axis (Rodrigues formula)."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise ValueError("rotation axis must be non-zero")
    x, y, z = axis / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def rotation_about_z(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixels plus the image size they refer to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @classmethod
    def from_matrix(cls, k: np.ndarray, width: int, height: int) -> "CameraIntrinsics":
        k = _as_float_array(k, (3, 3), "cam_K")
        return cls(fx=float(k[0, 0]), fy=float(k[1, 1]),
                   cx=float(k[0, 2]), cy=float(k[1, 2]),
                   width=int(width), height=int(height))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


def project(points: np.ndarray, k: CameraIntrinsics):
    """Project camera-frame points to continuous pixel coordinates.

    Returns ``(uv, valid)`` where ``valid`` marks points with z > 0; uv rows
    for invalid points are NaN. Accepts a single (3,) point or an (N, 3)
    array and mirrors the input arity in the output.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    valid = z > 0
    uv = np.full((pts.shape[0], 2), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv[valid, 0] = k.fx * pts[valid, 0] / z[valid] + k.cx
        uv[valid, 1] = k.fy * pts[valid, 1] / z[valid] + k.cy
    if single:
        return uv[0], bool(valid[0])
    return uv, valid


def valid_depth_mask(depth: np.ndarray) -> np.ndarray:
    """Validity convention for depth images: finite and strictly positive."""
    return np.isfinite(depth) & (depth > 0)


def backproject(depth: np.ndarray, k: CameraIntrinsics) -> "PointCloud":
    """Lift every valid depth pixel to a 3D point in the camera frame.

    Pixel (u, v) back-projects through its center (u + 0.5, v + 0.5); points
    come out in row-major pixel order.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (k.height, k.width):
        raise ValueError(
            f"depth shape {depth.shape} does not match intrinsics "
            f"{k.height}x{k.width}")
    mask = valid_depth_mask(depth)
    vs, us = np.nonzero(mask)
    z = depth[vs, us]
    x = (us + 0.5 - k.cx) * z / k.fx
    y = (vs + 0.5 - k.cy) * z / k.fy
    return PointCloud(points=np.column_stack([x, y, z]))


@dataclass(eq=False)
class PointCloud:
    """Unordered 3D points in mm with optional unit normals and sRGB colors."""

    points: np.ndarray
    normals: np.ndarray | None = None
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        self.points = pts
        n = pts.shape[0]
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != (n, 3):
                raise ValueError("normals must match point count")
            lengths = np.linalg.norm(nrm, axis=1)
            if n and np.max(np.abs(lengths - 1.0)) > UNIT_NORMAL_TOL:
                raise ValueError("normals must have unit length")
            self.normals = nrm
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.float64)
            if col.shape != (n, 3):
                raise ValueError("colors must match point count")
            self.colors = col

    def __len__(self) -> int:
        return self.points.shape[0]


def transform_points(cloud: PointCloud, t: RigidTransform) -> PointCloud:
    """Rigidly move a cloud; normals are rotated only."""
    normals = None if cloud.normals is None else cloud.normals @ t.rotation.T
    colors = None if cloud.colors is None else cloud.colors.copy()
    return PointCloud(points=t.apply(cloud.points), normals=normals, colors=colors)


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle mesh in mm.

    ``groups`` optionally names disjoint sets of triangles (component
    sub-meshes), keyed by name with arrays of triangle indices.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_colors: np.ndarray | None = None
    vertex_normals: np.ndarray | None = None
    groups: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        tris = np.asarray(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must be (N, 3), got {verts.shape}")
        if tris.size == 0:
            tris = tris.reshape(0, 3)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError(f"triangles must be (M, 3), got {tris.shape}")
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise ValueError("triangle index out of range")
        if tris.size:
            a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
            if np.any((a == b) | (b == c) | (a == c)):
                raise ValueError("degenerate triangle with repeated vertex index")
        self.vertices = verts
        self.triangles = tris
        n = verts.shape[0]
        if self.vertex_colors is not None:
            col = np.asarray(self.vertex_colors, dtype=np.float64)
            if col.shape != (n, 3):
                raise ValueError("vertex_colors must match vertex count")
            self.vertex_colors = col
        if self.vertex_normals is not None:
            nrm = np.asarray(self.vertex_normals, dtype=np.float64)
            if nrm.shape != (n, 3):
                raise ValueError("vertex_normals must match vertex count")
            lengths = np.linalg.norm(nrm, axis=1)
            if n and np.max(np.abs(lengths - 1.0)) > UNIT_NORMAL_TOL:
                raise ValueError("vertex_normals must have unit length")
            self.vertex_normals = nrm
        self.groups = {name: np.asarray(idx, dtype=np.int64)
                       for name, idx in self.groups.items()}
        for name, idx in self.groups.items():
            if idx.size and (idx.min() < 0 or idx.max() >= tris.shape[0]):
                raise ValueError(f"group {name!r} references missing triangles")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def face_normals(self) -> np.ndarray:
        """Unit normals per triangle; zero rows for degenerate faces."""
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        lengths = np.linalg.norm(n, axis=1)
        safe = lengths > 0
        n[safe] /= lengths[safe][:, None]
        return n

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(n, axis=1)

    def transformed(self, t: RigidTransform) -> "TriangleMesh":
        normals = None
        if self.vertex_normals is not None:
            normals = self.vertex_normals @ t.rotation.T
        return TriangleMesh(
            vertices=t.apply(self.vertices),
            triangles=self.triangles.copy(),
            vertex_colors=None if self.vertex_colors is None else self.vertex_colors.copy(),
            vertex_normals=normals,
            groups={k: v.copy() for k, v in self.groups.items()},
        )

    def group_vertex_indices(self, name: str) -> np.ndarray:
        """Sorted unique vertex indices referenced by a named group."""
        if name not in self.groups:
            raise KeyError(f"unknown mesh group {name!r}")
        return np.unique(self.triangles[self.groups[name]])

    def without_group(self, name: str) -> "TriangleMesh":
        """Copy of the mesh with one named component's triangles removed."""
        if name not in self.groups:
            raise KeyError(f"unknown mesh group {name!r}")
        drop = np.zeros(self.n_triangles, dtype=bool)
        drop[self.groups[name]] = True
        keep = ~drop
        new_index = np.cumsum(keep) - 1
        groups = {}
        for g, idx in self.groups.items():
            if g == name:
                continue
            kept = idx[keep[idx]]
            groups[g] = new_index[kept]
        return TriangleMesh(
            vertices=self.vertices.copy(),
            triangles=self.triangles[keep],
            vertex_colors=None if self.vertex_colors is None else self.vertex_colors.copy(),
            vertex_normals=None if self.vertex_normals is None else self.vertex_normals.copy(),
            groups=groups,
        )

    def with_group_color(self, name: str, color) -> "TriangleMesh":
        """Copy with every vertex of a named component recolored."""
        idx = self.group_vertex_indices(name)
        if self.vertex_colors is None:
            colors = np.full((self.n_vertices, 3), 128.0 / 255.0)
        else:
            colors = self.vertex_colors.copy()
        colors[idx] = np.asarray(color, dtype=np.float64)
        return TriangleMesh(
            vertices=self.vertices.copy(),
            triangles=self.triangles.copy(),
            vertex_colors=colors,
            vertex_normals=None if self.vertex_normals is None else self.vertex_normals.copy(),
            groups={k: v.copy() for k, v in self.groups.items()},
        )
