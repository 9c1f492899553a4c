"""Pixel-to-workspace geometry for the tabletop plane.

Two interchangeable paths map a camera pixel onto the table:

  * a 3x3 homography estimated from pixel/tabletop correspondences by the
    normalized direct linear transform, applied with perspective division
    and the result pinned to the calibrated table height, and
  * a full camera model (pinhole intrinsics plus a base-from-camera pose)
    that casts the pixel ray and intersects it with the z = z_plane plane.

For a camera actually observing that plane the two agree to numerical
precision; induced_homography builds the homography a given camera model
implies, which is how the default scene keeps both representations
consistent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GeometryError(Exception):
    """Base class for geometry failures."""


class InsufficientPairs(GeometryError):
    """Fewer than four point correspondences."""


class DegenerateConfiguration(GeometryError):
    """Correspondences do not determine a homography (collinear or collapsed)."""


class PointAtInfinity(GeometryError):
    """The homography sends this pixel to the plane at infinity."""


class RayParallelToPlane(GeometryError):
    """The pixel ray never meets the requested plane."""


@dataclass(frozen=True)
class WorkspacePoint:
    """A point in robot-base coordinates, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for value in (self.x, self.y, self.z):
            if not math.isfinite(value):
                raise ValueError(f"workspace coordinates must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class WorkspaceBounds:
    """Axis-aligned reachable region in base coordinates, closed bounds."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self) -> None:
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max and self.z_min <= self.z_max):
            raise ValueError(f"bounds must be ordered, got {self}")

    def contains(self, p: WorkspacePoint) -> bool:
        return (
            self.x_min <= p.x <= self.x_max
            and self.y_min <= p.y <= self.y_max
            and self.z_min <= p.z <= self.z_max
        )


@dataclass(frozen=True, eq=False)
class Homography:
    """Pixel-to-tabletop homography with the table height it refers to.

    H is stored normalized: h33 = 1 when that entry is meaningfully
    non-zero, unit Frobenius norm otherwise. H must be invertible.
    """

    H: np.ndarray
    z_table: float = 0.0
    reprojection_rms: float | None = None

    def __post_init__(self) -> None:
        H = np.asarray(self.H, dtype=float)
        if H.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {H.shape}")
        if abs(H[2, 2]) > 1e-12:
            H = H / H[2, 2]
        else:
            H = H / np.linalg.norm(H)
        if abs(np.linalg.det(H)) <= 1e-12:
            raise ValueError("homography must be invertible")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        if not math.isfinite(self.z_table):
            raise ValueError(f"z_table must be finite, got {self.z_table}")

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.H), z_table=self.z_table)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics and the base-from-camera rigid transform.

    T_base_camera maps camera-frame coordinates into robot-base
    coordinates; its rotation block must be orthonormal with determinant
    +1. Pixels relate to camera rays via x = fx * X/Z + cx, y = fy * Y/Z + cy.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    T_base_camera: np.ndarray

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        T = np.asarray(self.T_base_camera, dtype=float)
        if T.shape != (4, 4):
            raise ValueError(f"T_base_camera must be 4x4, got {T.shape}")
        R = T[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation block must be orthonormal")
        if not math.isclose(np.linalg.det(R), 1.0, abs_tol=1e-9):
            raise ValueError("rotation block must have determinant +1")
        if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("last row of T_base_camera must be [0, 0, 0, 1]")
        T.setflags(write=False)
        object.__setattr__(self, "T_base_camera", T)

    @property
    def rotation(self) -> np.ndarray:
        return self.T_base_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.T_base_camera[:3, 3]


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform sending the centroid to the origin with mean
    distance sqrt(2). Raises DegenerateConfiguration for collapsed clouds."""
    centroid = points.mean(axis=0)
    distances = np.linalg.norm(points - centroid, axis=1)
    mean_dist = distances.mean()
    if mean_dist <= 1e-12:
        raise DegenerateConfiguration("all points coincide")
    scale = math.sqrt(2.0) / mean_dist
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def estimate_homography(
    pairs: Sequence[tuple[tuple[float, float], tuple[float, float]]],
    z_table: float = 0.0,
) -> Homography:
    """Fit the pixel-to-plane homography by the normalized DLT.

    pairs holds ((pixel_x, pixel_y), (X, Y)) correspondences with X, Y on
    the z = z_table plane. Requires at least 4 pairs in general position;
    raises DegenerateConfiguration when the system is rank deficient
    (three collinear source points, coincident clouds).
    """
    if len(pairs) < 4:
        raise InsufficientPairs(f"need at least 4 pairs, got {len(pairs)}")
    src = np.array([p[0] for p in pairs], dtype=float)
    dst = np.array([p[1] for p in pairs], dtype=float)
    T_src = _hartley_normalization(src)
    T_dst = _hartley_normalization(dst)
    src_h = np.column_stack([src, np.ones(len(src))]) @ T_src.T
    dst_h = np.column_stack([dst, np.ones(len(dst))]) @ T_dst.T

    rows = []
    for (sx, sy, _), (dx, dy, _) in zip(src_h, dst_h):
        rows.append([0.0, 0.0, 0.0, -sx, -sy, -1.0, dy * sx, dy * sy, dy])
        rows.append([sx, sy, 1.0, 0.0, 0.0, 0.0, -dx * sx, -dx * sy, -dx])
    A = np.array(rows)

    _, singular, Vt = np.linalg.svd(A)
    # a unique (up to scale) solution needs rank 8: the 8th singular value
    # must stand clear of zero relative to the largest
    if singular[7] <= 1e-9 * singular[0]:
        raise DegenerateConfiguration("correspondences do not determine a homography")
    H_norm = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(T_dst) @ H_norm @ T_src
    try:
        homography = Homography(H, z_table=z_table)
    except ValueError as exc:
        raise DegenerateConfiguration(str(exc)) from exc

    sq_sum = 0.0
    for (px, py), (X, Y) in pairs:
        mapped = pixel_to_workspace(homography, (px, py))
        sq_sum += (mapped.x - X) ** 2 + (mapped.y - Y) ** 2
    rms = math.sqrt(sq_sum / len(pairs))
    return Homography(homography.H, z_table=z_table, reprojection_rms=rms)


def pixel_to_workspace(h: Homography, pixel: tuple[float, float]) -> WorkspacePoint:
    """Map a camera pixel onto the table plane with perspective division."""
    v = h.H @ np.array([pixel[0], pixel[1], 1.0])
    if abs(v[2]) <= 1e-9:
        raise PointAtInfinity(f"pixel {pixel} maps to infinity")
    return WorkspacePoint(float(v[0] / v[2]), float(v[1] / v[2]), h.z_table)


def workspace_to_pixel(h: Homography, p: WorkspacePoint) -> tuple[float, float]:
    """Inverse mapping, for projecting simulated objects into the camera."""
    v = np.linalg.solve(h.H, np.array([p.x, p.y, 1.0]))
    if abs(v[2]) <= 1e-9:
        raise PointAtInfinity(f"workspace point {p} maps to infinity")
    return (float(v[0] / v[2]), float(v[1] / v[2]))


def backproject_to_plane(
    cam: CameraModel, pixel: tuple[float, float], z_plane: float
) -> WorkspacePoint:
    """Cast the pixel ray from the camera center onto the z = z_plane plane.

    Raises RayParallelToPlane when the unit ray direction has no component
    along the plane normal (|d_z| <= 1e-9).
    """
    d_cam = np.array([(pixel[0] - cam.cx) / cam.fx, (pixel[1] - cam.cy) / cam.fy, 1.0])
    d_base = cam.rotation @ d_cam
    d_base = d_base / np.linalg.norm(d_base)
    origin = cam.translation
    if abs(d_base[2]) <= 1e-9:
        raise RayParallelToPlane(f"pixel {pixel} ray runs parallel to z={z_plane}")
    s = (z_plane - origin[2]) / d_base[2]
    hit = origin + s * d_base
    return WorkspacePoint(float(hit[0]), float(hit[1]), float(z_plane))


def induced_homography(cam: CameraModel, z_plane: float) -> Homography:
    """The pixel-to-plane homography a camera model implies.

    A plane point (X, Y, z_plane) projects through the camera as
    K R^T ([X, Y, z_plane]^T - t), which is linear in [X, Y, 1]; inverting
    that 3x3 map gives the pixel-to-plane direction used here.
    """
    K = np.array([[cam.fx, 0.0, cam.cx], [0.0, cam.fy, cam.cy], [0.0, 0.0, 1.0]])
    R_T = cam.rotation.T
    t = cam.translation
    plane_to_pixel = K @ np.column_stack(
        [R_T[:, 0], R_T[:, 1], R_T @ (np.array([0.0, 0.0, z_plane]) - t)]
    )
    if abs(np.linalg.det(plane_to_pixel)) <= 1e-12:
        raise DegenerateConfiguration("camera axis lies in the requested plane")
    return Homography(np.linalg.inv(plane_to_pixel), z_table=z_plane)


def save_geometry(path: str, h: Homography, cam: CameraModel | None = None) -> None:
    """Write the homography (and optional camera model) as JSON."""
    payload: dict = {
        "kind": "workspace-geometry",
        "homography": h.H.tolist(),
        "z_table": h.z_table,
        "reprojection_rms": h.reprojection_rms,
    }
    if cam is not None:
        payload["camera"] = {
            "fx": cam.fx,
            "fy": cam.fy,
            "cx": cam.cx,
            "cy": cam.cy,
            "T_base_camera": cam.T_base_camera.tolist(),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_geometry(path: str) -> tuple[Homography, CameraModel | None]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "workspace-geometry":
        raise GeometryError(f"{path} is not a geometry file")
    rms = payload.get("reprojection_rms")
    h = Homography(
        np.array(payload["homography"]),
        z_table=float(payload["z_table"]),
        reprojection_rms=None if rms is None else float(rms),
    )
    cam = None
    if "camera" in payload:
        c = payload["camera"]
        cam = CameraModel(
            fx=float(c["fx"]),
            fy=float(c["fy"]),
            cx=float(c["cx"]),
            cy=float(c["cy"]),
            T_base_camera=np.array(c["T_base_camera"]),
        )
    return h, cam


def parse_pairs_file(path: str) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Read 'pixel_x pixel_y X Y' lines; '#' starts a comment."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = body.split()
            if len(fields) != 4:
                raise GeometryError(f"{path}:{lineno}: expected 4 numbers, got {len(fields)}")
            px, py, X, Y = (float(f) for f in fields)
            pairs.append(((px, py), (X, Y)))
    return pairs
