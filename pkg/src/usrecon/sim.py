"""Synthetic scan generator: probe trajectories, pinhead sightings, and
controlled prediction corruption, all deterministic given their seeds.

Paths live in the camera x-y plane with the chord along +x. The C path is a
single arc and the S path two mirror-image arcs of equal length whose start
heading is tilted by minus half the per-arc turn, so each arc individually
contributes zero lateral offset and the path snakes around the chord axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calib import CalibrationSolution, PinheadObservation
from .ddf import ScanPoses
from .errors import InvalidInputError
from .se3 import Pose6, RigidTransform, compose, mat_from_pose6

SHAPES = ("straight", "c_shape", "s_shape")
DIRECTIONS = ("forward", "reverse")
ORIENTATIONS = ("perpendicular", "parallel")

C_TOTAL_TURN_DEFAULT = math.pi / 2
S_ARC_TURN_DEFAULT = math.pi / 3

FRAME_RATE_HZ = 20.0


@dataclass(frozen=True)
class TrajectorySpec:
    shape: str = "straight"
    direction: str = "forward"
    orientation: str = "perpendicular"
    length_mm: float = 100.0
    frame_count: int = 100
    curvature: float = 0.0  # 1/mm; 0 selects the per-shape default turn
    jitter_trans: float = 0.0  # mm std per frame, per axis
    jitter_rot: float = 0.0  # rad std per frame
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidInputError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.direction not in DIRECTIONS:
            raise InvalidInputError(f"direction must be one of {DIRECTIONS}")
        if self.orientation not in ORIENTATIONS:
            raise InvalidInputError(f"orientation must be one of {ORIENTATIONS}")
        if not self.length_mm > 0:
            raise InvalidInputError("length must be > 0 mm")
        if self.frame_count < 2:
            raise InvalidInputError("need at least 2 frames")
        if self.curvature < 0:
            raise InvalidInputError("curvature must be >= 0")
        if self.jitter_trans < 0 or self.jitter_rot < 0:
            raise InvalidInputError("jitter magnitudes must be >= 0")


@dataclass(frozen=True)
class CorruptionSpec:
    sigma_rot: float = 0.0  # rad
    sigma_trans: float = 0.0  # mm
    bias: tuple = (0.0, 0.0, 0.0)  # mm per frame
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rot < 0 or self.sigma_trans < 0:
            raise InvalidInputError("corruption sigmas must be >= 0")
        b = tuple(float(x) for x in self.bias)
        if len(b) != 3 or not all(math.isfinite(x) for x in b):
            raise InvalidInputError("bias must be a finite 3-vector")
        object.__setattr__(self, "bias", b)

    @property
    def is_zero(self) -> bool:
        return self.sigma_rot == 0 and self.sigma_trans == 0 and self.bias == (0.0, 0.0, 0.0)


def _headings_and_positions(spec: TrajectorySpec):
    """Heading angle psi(s) and position for each arc-length sample."""
    length = spec.length_mm
    s = np.linspace(0.0, length, spec.frame_count)
    if spec.shape == "straight":
        psi = np.zeros_like(s)
        pos = np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
        return psi, pos

    if spec.shape == "c_shape":
        turn = spec.curvature * length if spec.curvature > 0 else C_TOTAL_TURN_DEFAULT
        if turn > math.pi:
            raise InvalidInputError(
                f"c-shape total turn {turn:.3f} rad exceeds pi; lower the curvature"
            )
        kappa = turn / length
        psi0 = -turn / 2.0
        psi = psi0 + kappa * s
        x = (np.sin(psi) - math.sin(psi0)) / kappa
        y = -(np.cos(psi) - math.cos(psi0)) / kappa
        pos = np.column_stack([x, y, np.zeros_like(s)])
        return psi, pos

    # s_shape: arc of +kappa then -kappa, equal lengths; with the start
    # heading tilted by -turn/2, each arc ends back on the chord axis
    half = length / 2.0
    turn = spec.curvature * half if spec.curvature > 0 else S_ARC_TURN_DEFAULT
    if turn > math.pi:
        raise InvalidInputError(
            f"s-shape per-arc turn {turn:.3f} rad exceeds pi; lower the curvature"
        )
    kappa = turn / half
    psi0 = -turn / 2.0
    psi1 = turn / 2.0  # heading at the arc junction
    x1 = 2.0 * math.sin(psi1) / kappa  # junction position (y = 0 there)
    first = s <= half
    psi = np.where(first, psi0 + kappa * s, psi1 - kappa * (s - half))
    x = np.where(
        first,
        (np.sin(psi) - math.sin(psi0)) / kappa,
        x1 - (np.sin(psi) - math.sin(psi1)) / kappa,
    )
    y = np.where(
        first,
        -(np.cos(psi) - math.cos(psi0)) / kappa,
        (np.cos(psi) - math.cos(psi1)) / kappa,
    )
    pos = np.column_stack([x, y, np.zeros_like(s)])
    return psi, pos


def _orientation_matrix(psi: float, orientation: str) -> np.ndarray:
    """Tool rotation whose image axes follow the path tangent.

    perpendicular: image normal (z) along travel; parallel: image x along
    travel with the image plane containing the travel direction.
    """
    c, s = math.cos(psi), math.sin(psi)
    tangent = np.array([c, s, 0.0])
    lateral = np.array([-s, c, 0.0])  # plane normal x tangent
    normal = np.array([0.0, 0.0, 1.0])
    if orientation == "perpendicular":
        x_axis, y_axis, z_axis = lateral, normal, tangent
    else:
        x_axis, y_axis, z_axis = tangent, -normal, lateral
    return np.column_stack([x_axis, y_axis, z_axis])


def _axis_angle_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def gen_trajectory(spec: TrajectorySpec) -> ScanPoses:
    """Camera<-tool poses along the requested path, timestamped at 20 Hz."""
    psi, pos = _headings_and_positions(spec)
    poses = [
        RigidTransform(_orientation_matrix(p, spec.orientation), xyz)
        for p, xyz in zip(psi, pos)
    ]
    if spec.direction == "reverse":
        poses = poses[::-1]
    if spec.jitter_trans > 0 or spec.jitter_rot > 0:
        rng = np.random.default_rng(spec.seed)
        jittered = []
        for t in poses:
            d_rot = np.eye(3)
            if spec.jitter_rot > 0:
                axis = rng.normal(size=3)
                angle = rng.normal(0.0, spec.jitter_rot)
                d_rot = _axis_angle_rotation(axis, angle)
            d_t = np.zeros(3)
            if spec.jitter_trans > 0:
                d_t = rng.normal(0.0, spec.jitter_trans, size=3)
            jittered.append(RigidTransform(d_rot @ t.rotation, t.translation + d_t))
        poses = jittered
    timestamps = np.arange(spec.frame_count) / FRAME_RATE_HZ
    return ScanPoses(transforms=tuple(poses), timestamps=timestamps)


def default_calibration() -> CalibrationSolution:
    """A fixed plausible calibration for simulated scans (0.2 mm pixels)."""
    t_rigid = mat_from_pose6(Pose6(12.0, -4.0, 30.0, 0.20, -0.10, 0.35))
    return CalibrationSolution(t_rigid=t_rigid, sx=0.2, sy=0.2, pin_world=np.zeros(3))


def gen_pinhead_observations(
    true_calib: CalibrationSolution,
    pin_world,
    count: int,
    pixel_noise_std: float = 0.0,
    seed: int = 0,
    width: int = 640,
    height: int = 480,
) -> "list[PinheadObservation]":
    """Tracker poses plus pin pixels exactly consistent with the calibration.

    For each draw the pin's pixel location and the probe orientation are
    sampled, then the tool translation is solved so the imaged pin lands at
    that pixel; Gaussian pixel noise is added afterwards.
    """
    if count < 1:
        raise InvalidInputError("need at least one observation")
    rng = np.random.default_rng(seed)
    pin = np.asarray(pin_world, dtype=float).reshape(3)
    obs = []
    for _ in range(count):
        u = rng.uniform(0.1 * width, 0.9 * width)
        v = rng.uniform(0.1 * height, 0.9 * height)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        rot = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        p_img = np.array([true_calib.sx * u, true_calib.sy * v, 0.0])
        p_tool = true_calib.t_rigid.apply(p_img)
        trans = pin - rot @ p_tool
        du, dv = (rng.normal(0.0, pixel_noise_std, size=2) if pixel_noise_std > 0 else (0.0, 0.0))
        obs.append(
            PinheadObservation(
                t_cam_tool=RigidTransform(rot, trans),
                pin_pixel=(u + du, v + dv),
            )
        )
    return obs


def corrupt_locals(gt_locals, spec: CorruptionSpec) -> "list[RigidTransform]":
    """Perturb each local transform by random rotation/translation plus bias."""
    if spec.is_zero:
        return list(gt_locals)
    rng = np.random.default_rng(spec.seed)
    bias = np.array(spec.bias)
    out = []
    for t in gt_locals:
        d_rot = np.eye(3)
        if spec.sigma_rot > 0:
            axis = rng.normal(size=3)
            angle = rng.normal(0.0, spec.sigma_rot)
            d_rot = _axis_angle_rotation(axis, angle)
        noise = rng.normal(0.0, spec.sigma_trans, size=3) if spec.sigma_trans > 0 else np.zeros(3)
        out.append(compose(RigidTransform(d_rot, noise + bias), t))
    return out
