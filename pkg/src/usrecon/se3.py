"""Rigid-transform algebra over the image, tracker-tool and camera frames.

Conventions (pinned here, documented in FORMATS.md):
  * rotations compose intrinsically as Rz(rz) @ Ry(ry) @ Rx(rx), angles in
    radians;
  * the pixel origin is the top-left pixel center, x right, y down, z into
    the image;
  * all translations are millimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

# Frobenius drift above which a rotation is rejected (constructor) or
# re-orthonormalized (compose).
ORTHO_TOL = 1e-9


def _check_rotation(r: np.ndarray) -> None:
    if r.shape != (3, 3):
        raise InvalidInputError(f"rotation must be 3x3, got {r.shape}")
    drift = np.linalg.norm(r.T @ r - np.eye(3))
    if drift >= ORTHO_TOL:
        raise InvalidInputError(f"rotation is not orthonormal (drift {drift:.3e})")
    if abs(np.linalg.det(r) - 1.0) >= ORTHO_TOL:
        raise InvalidInputError("rotation must have determinant +1")


@dataclass(frozen=True)
class RigidTransform:
    """A rigid map x -> rotation @ x + translation (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidInputError("transform entries must be finite")
        _check_rotation(r)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def is_identity(self) -> bool:
        return np.array_equal(self.rotation, np.eye(3)) and not self.translation.any()

    def value_equal(self, other: "RigidTransform") -> bool:
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise InvalidInputError(f"expected a 4x4 matrix, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidInputError("bottom row must be (0,0,0,1)")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to an (N,3) or (3,) array of mm points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Pose6:
    """Translation (mm) plus Z-Y-X Euler angles (radians)."""

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0

    def __post_init__(self):
        vals = (self.tx, self.ty, self.tz, self.rx, self.ry, self.rz)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("pose components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz, self.rx, self.ry, self.rz])


@dataclass(frozen=True)
class ScaleTransform:
    """Pixel-to-mm scaling, diag(sx, sy, 1, 1)."""

    sx: float
    sy: float

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise InvalidInputError("scale factors must be positive")

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.sx, self.sy, 1.0, 1.0])

    def apply(self, pixels: np.ndarray) -> np.ndarray:
        """Scale (N,3) pixel coordinates into mm (third coordinate kept)."""
        p = np.asarray(pixels, dtype=float)
        return p * np.array([self.sx, self.sy, 1.0])


@dataclass(frozen=True)
class PointSet:
    """N points with a unit tag, either "pixel" or "mm"."""

    coords: np.ndarray
    unit: str = "mm"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if c.ndim != 2 or c.shape[1] != 3:
            raise InvalidInputError(f"coords must be N x 3, got {c.shape}")
        if self.unit not in ("pixel", "mm"):
            raise InvalidInputError(f"unknown unit {self.unit!r}")
        if self.unit == "pixel" and np.any(c[:, 2] != 0.0):
            raise InvalidInputError("pixel points must have zero third coordinate")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def __len__(self) -> int:
        return self.coords.shape[0]


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def mat_from_pose6(pose: Pose6) -> RigidTransform:
    """Materialize a 6-DoF pose as Rz(rz) @ Ry(ry) @ Rx(rx) plus translation."""
    rot = _rz(pose.rz) @ _ry(pose.ry) @ _rx(pose.rx)
    return RigidTransform(rot, np.array([pose.tx, pose.ty, pose.tz]))


def pose6_from_mat(t: RigidTransform) -> Pose6:
    """Extract the Z-Y-X Euler pose; inverse of mat_from_pose6.

    Near gimbal lock (|cos ry| ~ 0) only rx±rz is determined; rx is fixed
    to 0 and rz absorbs the in-plane rotation, so the result always
    re-materializes to the input matrix even though (rx, rz) are not unique.
    """
    r = t.rotation
    sy = -r[2, 0]
    sy = min(1.0, max(-1.0, sy))
    ry = math.asin(sy)
    if abs(math.cos(ry)) < 1e-9:
        rx = 0.0
        rz = math.atan2(-r[0, 1], r[1, 1])
    else:
        rx = math.atan2(r[2, 1], r[2, 2])
        rz = math.atan2(r[1, 0], r[0, 0])
    tx, ty, tz = t.translation
    return Pose6(tx, ty, tz, rx, ry, rz)


def _reorthonormalize(r: np.ndarray) -> np.ndarray:
    # Polar factor: nearest rotation in Frobenius norm.
    u, _, vt = np.linalg.svd(r)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] = -u[:, -1]
        rot = u @ vt
    return rot


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Homogeneous product a @ b (apply b first, then a).

    The rotation is re-orthonormalized via polar decomposition only when
    accumulated drift exceeds the constructor tolerance; unconditional
    re-projection would mask bugs.
    """
    rot = a.rotation @ b.rotation
    if np.linalg.norm(rot.T @ rot - np.eye(3)) >= ORTHO_TOL:
        rot = _reorthonormalize(rot)
    return RigidTransform(rot, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    """Group inverse: (R, t) -> (R^T, -R^T t)."""
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


def relative_tool(t_i_cam: RigidTransform, t_j_cam: RigidTransform) -> RigidTransform:
    """Tool-to-tool transform of frame i expressed in frame j's tool system.

    Both arguments are camera<-tool transforms; the result is
    (t_j_cam)^-1 @ t_i_cam. Identical poses give the exact identity (a static
    probe must produce exactly zero displacement downstream).
    """
    if t_i_cam.value_equal(t_j_cam):
        return RigidTransform.identity()
    return compose(invert(t_j_cam), t_i_cam)


def image_relative(t_tool_rel: RigidTransform, t_rigid: RigidTransform) -> RigidTransform:
    """Conjugate a tool-relative transform into image-mm coordinates.

    t_rigid is the calibration image(mm)->tool transform; the result is
    t_rigid^-1 @ t_tool_rel @ t_rigid. Conjugating the identity returns the
    exact identity.
    """
    if t_tool_rel.is_identity():
        return RigidTransform.identity()
    return compose(compose(invert(t_rigid), t_tool_rel), t_rigid)


def transform_points(t: RigidTransform, scale: ScaleTransform, pts: PointSet) -> PointSet:
    """Map pixel points through scale then rigid transform into mm.

    Row k of the result is t @ scale @ (u_k, v_k, 0, 1) dropped to 3 components.
    """
    if pts.unit != "pixel":
        raise InvalidInputError("transform_points expects pixel-unit points")
    mm = t.apply(scale.apply(pts.coords))
    return PointSet(mm, unit="mm")


def accumulate_chain(locals_: "list[RigidTransform]") -> "list[RigidTransform]":
    """Running products of frame-to-previous-frame transforms.

    With locals_[k] mapping frame k+1 into frame k, output[k] maps frame k+1
    into frame 0: locals_[0] @ locals_[1] @ ... @ locals_[k].
    """
    out = []
    acc = None
    for loc in locals_:
        acc = loc if acc is None else compose(acc, loc)
        out.append(acc)
    return out


def frame_corners(width: int, height: int) -> PointSet:
    """The four frame corner pixels, ordered TL, TR, BL, BR."""
    if width < 1 or height < 1:
        raise InvalidInputError("frame dimensions must be >= 1 pixel")
    w, h = float(width - 1), float(height - 1)
    return PointSet(
        np.array([[0.0, 0.0, 0.0], [w, 0.0, 0.0], [0.0, h, 0.0], [w, h, 0.0]]),
        unit="pixel",
    )


def scan_length(
    globals_: "list[RigidTransform]",
    scale: ScaleTransform,
    width: int,
    height: int,
) -> float:
    """Cumulative mean corner displacement across consecutive frames, in mm.

    globals_[k] maps frame k+1 to the reference frame; the reference frame
    itself (identity) is implicit. Per consecutive frame pair the Euclidean
    displacements of the four corners are averaged, then summed over pairs.
    """
    corners_mm = scale.apply(frame_corners(width, height).coords)
    prev = corners_mm
    total = 0.0
    for g in globals_:
        cur = g.apply(corners_mm)
        total += float(np.mean(np.linalg.norm(cur - prev, axis=1)))
        prev = cur
    return total
