"""Spatial (pinhead) and temporal probe calibration.

The spatial solver jointly estimates the pixel scales, the rigid image->tool
transform and the fixed pin position from repeated images of a stationary
pin target, by Levenberg-Marquardt over 11 parameters. The temporal solver
estimates the tracker/image clock offset by maximizing normalized
cross-correlation on a common resampled grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DegenerateSignalError,
    InsufficientDataError,
    InvalidInputError,
)
from .se3 import Pose6, RigidTransform, ScaleTransform, mat_from_pose6, pose6_from_mat

PARAM_NAMES = ("tx", "ty", "tz", "rx", "ry", "rz", "sx", "sy", "px", "py", "pz")

MIN_OBSERVATIONS = 6


@dataclass(frozen=True)
class PinheadObservation:
    """One pinhead sighting: tracker pose plus the pin's pixel location."""

    t_cam_tool: RigidTransform
    pin_pixel: tuple

    def __post_init__(self):
        u, v = self.pin_pixel
        if not (math.isfinite(u) and math.isfinite(v) and u >= 0 and v >= 0):
            raise InvalidInputError(f"pin pixel must be finite and >= 0, got {self.pin_pixel}")
        object.__setattr__(self, "pin_pixel", (float(u), float(v)))


@dataclass(frozen=True)
class CalibrationSolution:
    """Recovered calibration: scales, rigid image->tool map, pin position."""

    t_rigid: RigidTransform
    sx: float
    sy: float
    pin_world: np.ndarray | None = None
    rms_residual: float | None = None
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise InvalidInputError("scale factors must be positive")
        if self.rms_residual is not None and not self.rms_residual >= 0:
            raise InvalidInputError("rms residual must be >= 0")
        if self.pin_world is not None:
            p = np.asarray(self.pin_world, dtype=float).reshape(3)
            p.setflags(write=False)
            object.__setattr__(self, "pin_world", p)

    @property
    def scale(self) -> ScaleTransform:
        return ScaleTransform(self.sx, self.sy)


@dataclass(frozen=True)
class MotionSignal:
    """A scalar channel sampled at strictly increasing timestamps (s)."""

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise InvalidInputError("signal needs >= 2 samples with matching shapes")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("timestamps must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 200
    ftol: float = 1e-10     # relative objective decrease on an accepted step
    gtol: float = 1e-8      # 2-norm of the objective gradient J^T r
    lambda0: float = 1e-3   # initial LM damping
    multistarts: int = 8    # extra random-rotation starts if the first fails
    seed: int = 0
    check_conditioning: bool = True


@dataclass(frozen=True)
class CalibParams:
    """Free parameters of the pinhead problem."""

    t_rigid: RigidTransform
    sx: float
    sy: float
    pin_world: np.ndarray

    def as_vector(self) -> np.ndarray:
        pose = pose6_from_mat(self.t_rigid)
        return np.concatenate([pose.as_array(), [self.sx, self.sy], np.asarray(self.pin_world, dtype=float)])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "CalibParams":
        return cls(
            t_rigid=mat_from_pose6(Pose6(*x[:6])),
            sx=float(x[6]),
            sy=float(x[7]),
            pin_world=np.asarray(x[8:11], dtype=float),
        )


def _prepare(obs: "list[PinheadObservation]"):
    rots = np.stack([o.t_cam_tool.rotation for o in obs])
    trans = np.stack([o.t_cam_tool.translation for o in obs])
    pix = np.array([o.pin_pixel for o in obs])
    return rots, trans, pix


def _residual_vector(x: np.ndarray, rots, trans, pix) -> np.ndarray:
    # r_i = T_i (R_rigid S p_i + t_rigid) - P, stacked as 3N components
    rot = mat_from_pose6(Pose6(0, 0, 0, x[3], x[4], x[5])).rotation
    t_rigid = x[:3]
    sx, sy = x[6], x[7]
    pin = x[8:11]
    p_img = np.column_stack([sx * pix[:, 0], sy * pix[:, 1], np.zeros(len(pix))])
    p_tool = p_img @ rot.T + t_rigid
    p_cam = np.einsum("nij,nj->ni", rots, p_tool) + trans
    return (p_cam - pin).ravel()


def calibration_residuals(params: CalibParams, obs: "list[PinheadObservation]") -> np.ndarray:
    """Signed 3-component residuals of Eq-of-constancy for each observation.

    The scalar least-squares objective is the sum of squared components;
    returning components (length 3*len(obs)) keeps the Jacobian well posed.
    """
    if len(obs) < 1:
        raise InsufficientDataError("need at least one observation")
    rots, trans, pix = _prepare(obs)
    return _residual_vector(params.as_vector(), rots, trans, pix)


def _jacobian(x: np.ndarray, rots, trans, pix, r0: np.ndarray) -> np.ndarray:
    # forward differences, relative step 1e-6
    n = x.size
    jac = np.empty((r0.size, n))
    for k in range(n):
        h = 1e-6 * max(abs(x[k]), 1.0)
        xk = x.copy()
        xk[k] += h
        jac[:, k] = (_residual_vector(xk, rots, trans, pix) - r0) / h
    return jac


def _lm_minimize(x0: np.ndarray, rots, trans, pix, opts: SolverOptions, trace=None):
    """Levenberg-Marquardt with lambda x10 on rejection, /10 on acceptance.

    trace, when given, collects the objective after every accepted step.
    """
    x = x0.copy()
    r = _residual_vector(x, rots, trans, pix)
    obj = float(r @ r)
    if trace is not None:
        trace.append(obj)
    lam = opts.lambda0
    converged = False
    iterations = 0
    eye = np.eye(x.size)
    for iterations in range(1, opts.max_iterations + 1):
        jac = _jacobian(x, rots, trans, pix, r)
        grad = jac.T @ r
        if np.linalg.norm(grad) < opts.gtol:
            converged = True
            break
        jtj = jac.T @ jac
        accepted = False
        while lam < 1e14:
            try:
                step = np.linalg.solve(jtj + lam * eye, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = _residual_vector(x_new, rots, trans, pix)
            obj_new = float(r_new @ r_new)
            if obj_new < obj:
                rel_decrease = (obj - obj_new) / max(obj, np.finfo(float).tiny)
                x, r, obj = x_new, r_new, obj_new
                if trace is not None:
                    trace.append(obj)
                lam /= 10.0
                accepted = True
                if rel_decrease < opts.ftol:
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            break
    return x, obj, iterations, converged


def _canonicalize(x: np.ndarray) -> np.ndarray:
    # (-sx, -sy, R) and (sx, sy, R Rz(pi)) produce identical residuals; pick
    # the positive-scale representative.
    if x[6] < 0 and x[7] < 0:
        x = x.copy()
        x[6], x[7] = -x[6], -x[7]
        rot = mat_from_pose6(Pose6(0, 0, 0, x[3], x[4], x[5])).rotation
        flipped = rot @ np.diag([-1.0, -1.0, 1.0])
        pose = pose6_from_mat(RigidTransform(flipped, x[:3]))
        x[3], x[4], x[5] = pose.rx, pose.ry, pose.rz
    return x


def _condition_check(x: np.ndarray, rots, trans, pix) -> None:
    r = _residual_vector(x, rots, trans, pix)
    jac = _jacobian(x, rots, trans, pix, r)
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals[-1] <= 0 or svals[0] / svals[-1] > 1e12:
        _, _, vt = np.linalg.svd(jac)
        null = vt[-1]
        order = np.argsort(-np.abs(null))
        named = ", ".join(f"{PARAM_NAMES[k]}={null[k]:+.3f}" for k in order[:3])
        raise DegenerateGeometryError(
            f"observation geometry leaves a near-null parameter direction ({named})"
        )


def solve_spatial(
    obs: "list[PinheadObservation]", opts: SolverOptions | None = None
) -> CalibrationSolution:
    """Jointly fit scales, rigid image->tool transform and pin position.

    Initialization: unit-scale guess sx = sy = 0.2 mm/px, identity rigid
    transform, pin at the mean of the initially mapped pixel points. If the
    first start fails to converge, up to opts.multistarts random-rotation
    restarts run and the lowest-objective result wins (ties by start index).
    """
    opts = opts or SolverOptions()
    if len(obs) < MIN_OBSERVATIONS:
        raise InsufficientDataError(
            f"need at least {MIN_OBSERVATIONS} observations, got {len(obs)}"
        )
    rots, trans, pix = _prepare(obs)

    s0 = 0.2
    p_img0 = np.column_stack([s0 * pix[:, 0], s0 * pix[:, 1], np.zeros(len(pix))])
    pin0 = (np.einsum("nij,nj->ni", rots, p_img0) + trans).mean(axis=0)

    def start_vector(rot_pose: Pose6) -> np.ndarray:
        return np.concatenate([
            [0.0, 0.0, 0.0, rot_pose.rx, rot_pose.ry, rot_pose.rz],
            [s0, s0],
            pin0,
        ])

    runs = []
    x, obj, iters, conv = _lm_minimize(start_vector(Pose6()), rots, trans, pix, opts)
    x = _canonicalize(x)
    if conv and x[6] > 0 and x[7] > 0:
        runs.append((obj, 0, x, iters, conv))
    else:
        runs.append((obj, 0, x, iters, conv and x[6] > 0 and x[7] > 0))
        rng = np.random.default_rng(opts.seed)
        for start in range(1, opts.multistarts + 1):
            angles = rng.uniform(-np.pi, np.pi, size=3)
            pose = Pose6(0, 0, 0, angles[0], angles[1] / 2.0, angles[2])
            x_s, obj_s, it_s, conv_s = _lm_minimize(start_vector(pose), rots, trans, pix, opts)
            x_s = _canonicalize(x_s)
            runs.append((obj_s, start, x_s, it_s, conv_s and x_s[6] > 0 and x_s[7] > 0))

    valid = [r for r in runs if r[2][6] > 0 and r[2][7] > 0]
    if not valid:
        raise DegenerateGeometryError("no start converged to positive scale factors")
    obj, _, x, iters, conv = min(valid, key=lambda r: (r[0], r[1]))

    if opts.check_conditioning:
        _condition_check(x, rots, trans, pix)

    params = CalibParams.from_vector(x)
    return CalibrationSolution(
        t_rigid=params.t_rigid,
        sx=params.sx,
        sy=params.sy,
        pin_world=params.pin_world,
        rms_residual=math.sqrt(obj / len(obs)),
        iterations=iters,
        converged=conv,
    )


def _overlap_correlation(ta, va, tb, vb, lag, grid):
    lo = max(ta[0], tb[0] - lag)
    hi = min(ta[-1], tb[-1] - lag)
    if hi <= lo:
        return None, 0.0
    n = int(math.floor((hi - lo) / grid)) + 1
    ts = lo + grid * np.arange(n)
    xa = np.interp(ts, ta, va)
    xb = np.interp(ts + lag, tb, vb)
    da = xa - xa.mean()
    db = xb - xb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom < 1e-12:
        return None, hi - lo
    return float(da @ db) / denom, hi - lo


def temporal_offset(
    tracker: MotionSignal,
    image: MotionSignal,
    lag_range: float,
    grid: float = 0.005,
) -> float:
    """Lag (s) maximizing normalized cross-correlation of the two channels.

    Returns the lag tau in [-lag_range, lag_range] maximizing the correlation
    of tracker(t) with image(t + tau), i.e. positive tau means image events
    occur tau seconds later than matching tracker events. Ties break toward
    the smallest |lag|.
    """
    if lag_range < 0 or grid <= 0:
        raise InvalidInputError("lag_range must be >= 0 and grid > 0")
    for name, sig in (("tracker", tracker), ("image", image)):
        if float(np.var(sig.values)) < 1e-12:
            raise DegenerateSignalError(f"{name} signal is constant")

    min_overlap = 0.5 * min(tracker.duration, image.duration)
    k = int(math.floor(lag_range / grid + 1e-9))
    lags = grid * np.arange(-k, k + 1)
    best_corr = -np.inf
    best_lag = None
    # smallest |lag| first so exact ties resolve toward zero
    for lag in sorted(lags, key=lambda l: (abs(l), l)):
        corr, overlap = _overlap_correlation(
            tracker.timestamps, tracker.values, image.timestamps, image.values, lag, grid
        )
        if overlap < min_overlap:
            raise InsufficientDataError(
                f"signals overlap {overlap:.3f}s at lag {lag:+.3f}s, "
                f"need >= {min_overlap:.3f}s"
            )
        if corr is not None and corr > best_corr + 1e-12:
            best_corr = corr
            best_lag = lag
    if best_lag is None:
        raise DegenerateSignalError("no candidate lag produced a finite correlation")
    return float(best_lag)
