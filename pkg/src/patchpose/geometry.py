"""Camera geometry: rigid poses, pinhole projection, plane-induced homographies.

Coordinate conventions
----------------------
Camera frame: right-handed, camera at the origin looking along +z;
  +x right, +y down (so +y projects downward in the image).
Image frame: pixels, origin at the top-left corner; u right, v down.
Patch frame: the patch is the square [-s/2, s/2]^2 in its local xy-plane
  with corners ordered top-left, top-right, bottom-right, bottom-left.
  Its front normal is local -z, so an unrotated patch at positive depth
  faces the camera.
Angles are degrees. Yaw rotates about the camera y-axis (out of plane),
roll about the camera z-axis (in plane); a placement applies roll first,
then yaw tilts the rolled plane.

All math is double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Minimum depth (world units) in front of the camera for a point to project.
DEPTH_EPS = 1e-6
# Projected quads with less area (px^2) count as degenerate.
MIN_QUAD_AREA = 4.0


class BehindCameraError(ValueError):
    """A point to be projected lies at or behind the camera plane."""


class DegenerateCorrespondenceError(ValueError):
    """Point correspondences do not determine a homography (e.g. collinear)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units.

    ``intrinsics_from_fov`` builds the standard centered camera; direct
    construction permits arbitrary principal points (used in tests).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    fov_deg: float | None = None

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image dimensions must be positive")


def intrinsics_from_fov(fov_deg: float, width: int, height: int) -> CameraIntrinsics:
    """Centered pinhole camera from a horizontal field of view.

    fx = fy = (width/2) / tan(fov/2); the principal point is the image center.
    """
    if not 0.0 < fov_deg < 180.0:
        raise ValueError(f"fov_deg must be in (0, 180), got {fov_deg}")
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return CameraIntrinsics(
        fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height, fov_deg=float(fov_deg),
    )


def rotation_y(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_angles(yaw_deg: float, roll_deg: float) -> np.ndarray:
    """R = R_y(yaw) @ R_z(roll): in-plane roll first, then yaw tilts the plane."""
    return rotation_y(yaw_deg) @ rotation_z(roll_deg)


def is_rotation(m: np.ndarray, tol: float = 1e-9) -> bool:
    """True when m is orthonormal with determinant +1 within tol."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    return (
        np.max(np.abs(m.T @ m - np.eye(3))) <= tol
        and abs(np.linalg.det(m) - 1.0) <= tol
    )


@dataclass(frozen=True)
class Pose:
    """Rigid motion p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))
        if not is_rotation(self.rotation):
            raise ValueError("rotation must be orthonormal with det +1")


def transform_point(pose: Pose, p0) -> np.ndarray:
    """Rigid transform of a single 3D point: R @ p0 + T."""
    return pose.rotation @ np.asarray(p0, dtype=float).reshape(3) + pose.translation


def project(k: CameraIntrinsics, p) -> np.ndarray:
    """Perspective projection of one camera-frame point into pixel coordinates.

    Returns (cx + fx*X/Z, cy + fy*Y/Z); raises BehindCameraError for Z <= DEPTH_EPS.
    """
    p = np.asarray(p, dtype=float).reshape(3)
    if p[2] <= DEPTH_EPS:
        raise BehindCameraError(f"point depth {p[2]} is behind the camera plane")
    return np.array([k.cx + k.fx * p[0] / p[2], k.cy + k.fy * p[1] / p[2]])


def project_points(k: CameraIntrinsics, pts: np.ndarray) -> np.ndarray:
    """Vectorized projection of (N, 3) camera-frame points; all depths must exceed DEPTH_EPS."""
    pts = np.asarray(pts, dtype=float)
    z = pts[:, 2]
    if np.any(z <= DEPTH_EPS):
        raise BehindCameraError("some points are behind the camera plane")
    return np.stack([k.cx + k.fx * pts[:, 0] / z, k.cy + k.fy * pts[:, 1] / z], axis=1)


@dataclass(frozen=True)
class PatchPlacement:
    """One sampled 3D pose of the square patch plane.

    ``offset`` is the lateral (x, y) position of the patch center at depth
    ``depth`` along the optical axis; ``side`` is the square's edge length.
    All lengths are world units.
    """

    yaw_deg: float = 0.0
    roll_deg: float = 0.0
    depth: float = 7.0
    offset: tuple[float, float] = (0.0, 0.0)
    side: float = 2.0

    def __post_init__(self):
        if not self.depth > 0:
            raise ValueError(f"depth must be positive, got {self.depth}")
        if not self.side > 0:
            raise ValueError(f"side must be positive, got {self.side}")

    def pose(self) -> Pose:
        return Pose(
            rotation_from_angles(self.yaw_deg, self.roll_deg),
            np.array([self.offset[0], self.offset[1], self.depth]),
        )

    def normal(self) -> np.ndarray:
        """Front normal of the patch plane in the camera frame."""
        return rotation_from_angles(self.yaw_deg, self.roll_deg) @ np.array([0.0, 0.0, -1.0])


def patch_corners_local(side: float) -> np.ndarray:
    """Patch-local corners (4, 3), ordered TL, TR, BR, BL."""
    h = side / 2.0
    return np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])


def patch_corners_world(placement: PatchPlacement) -> np.ndarray:
    """The four patch corners in the camera frame, (4, 3), order TL, TR, BR, BL."""
    pose = placement.pose()
    return patch_corners_local(placement.side) @ pose.rotation.T + pose.translation


def quad_signed_area(quad: np.ndarray) -> float:
    """Shoelace area; positive for TL,TR,BR,BL order in y-down pixel coordinates."""
    q = np.asarray(quad, dtype=float)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def quad_is_convex(quad: np.ndarray) -> bool:
    """True when consecutive edge cross products are all strictly positive."""
    q = np.asarray(quad, dtype=float)
    e = np.roll(q, -1, axis=0) - q
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    return bool(np.all(cross > 0.0))


def project_patch(placement: PatchPlacement, k: CameraIntrinsics) -> np.ndarray | None:
    """Project the patch outline into the image.

    Returns the (4, 2) pixel quad in corner order, or None when the placement
    cannot be rendered: a corner at or behind the camera, a back-facing plane,
    a non-convex/self-intersecting projection, or area below MIN_QUAD_AREA.
    Sweeps rely on the None marker to stay defined at grazing poses.
    """
    corners = patch_corners_world(placement)
    if np.any(corners[:, 2] <= DEPTH_EPS):
        return None
    center = np.array([placement.offset[0], placement.offset[1], placement.depth])
    if float(placement.normal() @ center) > 0.0:
        return None
    quad = project_points(k, corners)
    if not quad_is_convex(quad):
        return None
    if quad_signed_area(quad) < MIN_QUAD_AREA:
        return None
    return quad


def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale so h[2,2] = 1 when possible, else unit Frobenius norm."""
    h = np.asarray(h, dtype=float)
    if abs(h[2, 2]) > 1e-12:
        return h / h[2, 2]
    return h / np.linalg.norm(h)


def apply_homography(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Map (N, 2) or (2,) points through a 3x3 homography with perspective division."""
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    p = np.atleast_2d(pts)
    ones = np.ones((p.shape[0], 1))
    hp = np.hstack([p, ones]) @ h.T
    w = hp[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise DegenerateCorrespondenceError("point maps to infinity under homography")
    out = hp[:, :2] / w[:, None]
    return out[0] if single else out


def _normalizing_similarity(pts: np.ndarray) -> np.ndarray:
    """Similarity transform centering pts with mean distance sqrt(2) (conditioning aid)."""
    mean = pts.mean(axis=0)
    d = np.sqrt(((pts - mean) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateCorrespondenceError("coincident correspondence points")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * mean[0]], [0.0, s, -s * mean[1]], [0.0, 0.0, 1.0]])


def homography_from_correspondences(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform from four point correspondences.

    Builds the 8x9 system in normalized coordinates, takes the smallest
    right singular vector, and denormalizes. The result maps each src
    corner onto its dst corner to well under 1e-8 px for non-degenerate
    quads. Raises DegenerateCorrespondenceError for collinear/rank-deficient
    configurations.
    """
    src = np.asarray(src, dtype=float).reshape(4, 2)
    dst = np.asarray(dst, dtype=float).reshape(4, 2)
    t_src = _normalizing_similarity(src)
    t_dst = _normalizing_similarity(dst)
    sn = apply_homography(t_src, src)
    dn = apply_homography(t_dst, dst)

    a = np.zeros((8, 9))
    for i in range(4):
        x, y = sn[i]
        u, v = dn[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]

    _, sigma, vt = np.linalg.svd(a)
    if sigma[-1] < 1e-10 * sigma[0]:
        # Rank below 8 means the nullspace is not unique (collinear points).
        raise DegenerateCorrespondenceError("correspondences are rank-deficient (collinear points?)")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    h = normalize_homography(h)
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateCorrespondenceError("correspondences span a degenerate (rank-deficient) map")
    return h
