"""Displacement-field generation for scans: dense per-pixel and per-landmark.

Dense fields are exposed through `DenseField`, a frame-indexed view that can
be array-backed (in memory or memmapped from disk) or transform-backed
(computed on demand), so a full scan's displacement volume never has to be
resident; array layout is frame-major, row-major pixels (v outer, u inner),
xyz interleaved.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .calib import CalibrationSolution
from .errors import InvalidInputError, InvalidLandmarkError
from .se3 import RigidTransform, ScaleTransform, accumulate_chain, image_relative, relative_tool


@dataclass(frozen=True)
class LandmarkSet:
    """Rows of (frame_index, u, v); frame 0 is rejected at DDF time."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int64)
        if e.size == 0:
            e = e.reshape(0, 3)
        if e.ndim != 2 or e.shape[1] != 3:
            raise InvalidInputError(f"landmark entries must be L x 3, got {e.shape}")
        if np.any(e[:, 1:] < 0):
            raise InvalidInputError("landmark pixel coordinates must be >= 0")
        if np.any(e[:, 0] < 0):
            raise InvalidInputError("landmark frame indices must be >= 0")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def empty(cls) -> "LandmarkSet":
        return cls(np.zeros((0, 3), dtype=np.int64))


@dataclass(frozen=True)
class ScanPoses:
    """Per-frame camera<-tool transforms with timestamps (s)."""

    transforms: tuple
    timestamps: np.ndarray

    def __post_init__(self):
        transforms = tuple(self.transforms)
        t = np.asarray(self.timestamps, dtype=float)
        if len(transforms) < 2:
            raise InvalidInputError("a scan needs at least 2 frames")
        if t.shape != (len(transforms),):
            raise InvalidInputError("one timestamp per frame required")
        if np.any(np.diff(t) < 0):
            raise InvalidInputError("timestamps must be non-decreasing")
        t.setflags(write=False)
        object.__setattr__(self, "transforms", transforms)
        object.__setattr__(self, "timestamps", t)

    def __len__(self) -> int:
        return len(self.transforms)


@lru_cache(maxsize=8)
def _pixel_base(width: int, height: int, sx: float, sy: float, dtype_str: str) -> np.ndarray:
    """(H*W, 3) rows [sx*u, sy*v, 1]; the trailing 1 carries the translation.

    Cached and read-only so all fields over the same grid share one array
    (keeps the streamed evaluator within its two-frame memory budget).
    """
    u = np.arange(width, dtype=np.float64) * sx
    v = np.arange(height, dtype=np.float64) * sy
    base = np.empty((height * width, 3), dtype=np.dtype(dtype_str))
    base[:, 0] = np.tile(u, height)
    base[:, 1] = np.repeat(v, width)
    base[:, 2] = 1.0
    base.setflags(write=False)
    return base


def _displacement_matrix(t: RigidTransform, dtype) -> np.ndarray:
    """3x3 A with displacement = base @ A; rows are (R-I) x/y columns and t."""
    m = np.empty((3, 3), dtype=np.float64)
    ri = t.rotation - np.eye(3)
    m[0] = ri[:, 0]
    m[1] = ri[:, 1]
    m[2] = t.translation
    return m.astype(dtype, copy=False)


class DenseField:
    """Frame-indexed dense displacement view, (H, W, 3) per frame in mm."""

    width: int
    height: int
    dtype: np.dtype

    def __len__(self) -> int:
        raise NotImplementedError

    def frame_into(self, i: int, out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def frame(self, i: int) -> np.ndarray:
        out = np.empty((self.height, self.width, 3), dtype=self.dtype)
        return self.frame_into(i, out)

    def to_array(self) -> np.ndarray:
        """Materialize all frames; intended for small scans and tests."""
        out = np.empty((len(self), self.height, self.width, 3), dtype=self.dtype)
        for i in range(len(self)):
            self.frame_into(i, out[i])
        return out


class ArrayDenseField(DenseField):
    """Backed by an (M, H, W, 3) ndarray or memmap."""

    def __init__(self, array: np.ndarray):
        if array.ndim != 4 or array.shape[3] != 3:
            raise InvalidInputError(f"dense array must be M x H x W x 3, got {array.shape}")
        self._array = array
        self.height = array.shape[1]
        self.width = array.shape[2]
        self.dtype = array.dtype

    def __len__(self) -> int:
        return self._array.shape[0]

    def frame_into(self, i, out):
        np.copyto(out, self._array[i])
        return out

    def to_array(self) -> np.ndarray:
        return np.asarray(self._array)


class TransformDenseField(DenseField):
    """Computed on demand from per-frame transforms: T @ (S p) - S p."""

    def __init__(self, transforms, scale: ScaleTransform, width: int, height: int, dtype=np.float64):
        self.transforms = tuple(transforms)
        self.scale = scale
        self.width = int(width)
        self.height = int(height)
        self.dtype = np.dtype(dtype)
        self._base = _pixel_base(
            self.width, self.height, float(scale.sx), float(scale.sy), self.dtype.str
        )
        self._mats = [_displacement_matrix(t, self.dtype) for t in self.transforms]

    def __len__(self) -> int:
        return len(self.transforms)

    def displacement_matrix(self, i: int) -> np.ndarray:
        return self._mats[i]

    @property
    def base(self) -> np.ndarray:
        return self._base

    def frame_into(self, i, out):
        flat = out.reshape(self.height * self.width, 3)
        if flat.flags.c_contiguous and flat.dtype == self.dtype:
            np.dot(self._base, self._mats[i], out=flat)
        else:
            np.copyto(flat, self._base @ self._mats[i])
        return out


@dataclass(frozen=True)
class DdfSet:
    """The four displacement-vector sets of one scan, in mm."""

    gp: DenseField
    gl: np.ndarray
    lp: DenseField
    ll: np.ndarray
    width: int
    height: int
    frame_count: int
    landmark_count: int

    def __post_init__(self):
        gl = np.asarray(self.gl, dtype=float).reshape(-1, 3)
        ll = np.asarray(self.ll, dtype=float).reshape(-1, 3)
        if self.frame_count < 2:
            raise InvalidInputError("a scan needs at least 2 frames")
        for name, fld in (("gp", self.gp), ("lp", self.lp)):
            if len(fld) != self.frame_count - 1:
                raise InvalidInputError(
                    f"{name} holds {len(fld)} frames, expected {self.frame_count - 1}"
                )
            if (fld.width, fld.height) != (self.width, self.height):
                raise InvalidInputError(f"{name} frame size mismatch")
        if gl.shape[0] != self.landmark_count or ll.shape[0] != self.landmark_count:
            raise InvalidInputError("landmark vector counts do not match landmark_count")
        if not (np.all(np.isfinite(gl)) and np.all(np.isfinite(ll))):
            raise InvalidInputError("landmark displacement values must be finite")
        object.__setattr__(self, "gl", gl)
        object.__setattr__(self, "ll", ll)

    def dims(self):
        return (self.frame_count, self.height, self.width, self.landmark_count)


def globals_from_locals(locals_):
    """Chain frame-to-previous transforms into frame-to-first transforms."""
    return accumulate_chain(locals_)


def ddf_global_pixels(globals_, scale: ScaleTransform, width: int, height: int) -> np.ndarray:
    """Dense global displacements, (N-1, H, W, 3); frame i at index i-1."""
    return TransformDenseField(globals_, scale, width, height).to_array()


def ddf_local_pixels(locals_, scale: ScaleTransform, width: int, height: int) -> np.ndarray:
    """Dense local displacements of each frame relative to its predecessor."""
    return TransformDenseField(locals_, scale, width, height).to_array()


def ddf_landmarks(
    transforms,
    scale: ScaleTransform,
    landmarks: LandmarkSet,
    level: str = "global",
    width: int | None = None,
    height: int | None = None,
) -> np.ndarray:
    """Displacement rows at landmark positions, straight from the transforms.

    transforms[i-1] must be the global (or local, per `level`) transform of
    frame i; no dense array is materialized.
    """
    if level not in ("global", "local"):
        raise InvalidInputError(f"level must be 'global' or 'local', got {level!r}")
    n_transforms = len(transforms)
    out = np.empty((len(landmarks), 3))
    for row, (fi, u, v) in enumerate(landmarks.entries):
        if fi < 1 or fi > n_transforms:
            raise InvalidLandmarkError(
                f"landmark row {row}: frame index {fi} outside [1, {n_transforms}] "
                "(the first frame holds no displacement)"
            )
        if (width is not None and u >= width) or (height is not None and v >= height):
            raise InvalidLandmarkError(
                f"landmark row {row}: pixel ({u}, {v}) outside {width}x{height} frame"
            )
        t = transforms[fi - 1]
        p = np.array([u * scale.sx, v * scale.sy, 0.0])
        out[row] = t.apply(p) - p
    return out


def locals_from_poses(poses: ScanPoses, calib: CalibrationSolution):
    """Per-frame image-mm transforms T_(i-1 <- i) from tracker poses."""
    return [
        image_relative(
            relative_tool(poses.transforms[i], poses.transforms[i - 1]), calib.t_rigid
        )
        for i in range(1, len(poses))
    ]


def ddf_from_transforms(
    locals_,
    scale: ScaleTransform,
    landmarks: LandmarkSet,
    width: int,
    height: int,
    dtype=np.float64,
) -> DdfSet:
    """Assemble a DdfSet (lazy dense fields) from frame-to-previous transforms."""
    globals_ = accumulate_chain(locals_)
    return DdfSet(
        gp=TransformDenseField(globals_, scale, width, height, dtype=dtype),
        gl=ddf_landmarks(globals_, scale, landmarks, "global", width, height),
        lp=TransformDenseField(locals_, scale, width, height, dtype=dtype),
        ll=ddf_landmarks(locals_, scale, landmarks, "local", width, height),
        width=width,
        height=height,
        frame_count=len(locals_) + 1,
        landmark_count=len(landmarks),
    )


def gt_ddf_from_scan(
    poses: ScanPoses,
    calib: CalibrationSolution,
    landmarks: LandmarkSet,
    width: int,
    height: int,
    dtype=np.float64,
) -> DdfSet:
    """Ground-truth DdfSet of a tracked scan, via the full transform chain."""
    return ddf_from_transforms(
        locals_from_poses(poses, calib), calib.scale, landmarks, width, height, dtype=dtype
    )
