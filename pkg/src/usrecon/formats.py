"""Bit-exact file formats: DDF binaries, pose/calibration/landmark text,
metric reports and leaderboards. Byte layouts are documented in FORMATS.md.

Binary payloads are IEEE-754 32-bit little-endian; text numerics use %.17g
(17 significant digits, round-trip exact for doubles).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .calib import CalibrationSolution
from .ddf import ArrayDenseField, DdfSet, DenseField, LandmarkSet, ScanPoses
from .errors import FormatError, SchemaError, ValidationError
from .metrics import STATUS_FAILED, ScanMetricReport
from .ranking import LeaderboardEntry
from .se3 import ORTHO_TOL, RigidTransform, _reorthonormalize

MAGIC = b"TUSDDF01"
HEADER_SIZE = len(MAGIC) + 4 * 4  # magic + 4 x u32 LE

POSE_ROTATION_TOL = 1e-6

LEADERBOARD_HEADER = (
    "rank,team,overall,global_score,local_score,pixel_score,landmark_score,mean_runtime_s"
)


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


# --- DDF binary -------------------------------------------------------------

def write_ddf(path, ddf: DdfSet) -> None:
    """Header then GP, GL, LP, LL as little-endian float32, streamed."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(
            struct.pack(
                "<IIII", ddf.frame_count, ddf.width, ddf.height, ddf.landmark_count
            )
        )
        for dense, landmarks in ((ddf.gp, ddf.gl), (ddf.lp, ddf.ll)):
            buf = np.empty((ddf.height, ddf.width, 3), dtype="<f4")
            for i in range(len(dense)):
                dense.frame_into(i, buf)
                f.write(buf.tobytes())
            f.write(np.ascontiguousarray(landmarks, dtype="<f4").tobytes())


def read_ddf(path) -> DdfSet:
    """Exact inverse of write_ddf; dense payloads are memory-mapped."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE or head[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC.decode()}")
    frame_count, width, height, landmark_count = struct.unpack("<IIII", head[len(MAGIC):])
    if frame_count < 2 or width < 1 or height < 1:
        raise FormatError(
            f"{path}: invalid header (frames={frame_count}, {width}x{height})"
        )
    dense_values = (frame_count - 1) * height * width * 3
    lm_values = landmark_count * 3
    expected = HEADER_SIZE + 4 * (2 * dense_values + 2 * lm_values)
    if size != expected:
        raise FormatError(f"{path}: size mismatch, expected {expected} bytes, got {size}")

    dense_shape = (frame_count - 1, height, width, 3)
    offset = HEADER_SIZE
    gp = np.memmap(path, dtype="<f4", mode="r", offset=offset, shape=dense_shape)
    offset += 4 * dense_values
    gl = np.fromfile(path, dtype="<f4", count=lm_values, offset=offset).reshape(-1, 3)
    offset += 4 * lm_values
    lp = np.memmap(path, dtype="<f4", mode="r", offset=offset, shape=dense_shape)
    offset += 4 * dense_values
    ll = np.fromfile(path, dtype="<f4", count=lm_values, offset=offset).reshape(-1, 3)
    return DdfSet(
        gp=ArrayDenseField(gp),
        gl=gl.astype(np.float64),
        lp=ArrayDenseField(lp),
        ll=ll.astype(np.float64),
        width=width,
        height=height,
        frame_count=frame_count,
        landmark_count=landmark_count,
    )


# --- poses (delimited text) -------------------------------------------------

def write_poses(path, poses: ScanPoses) -> None:
    """One line per frame: index, timestamp, 16 matrix entries row-major."""
    with open(path, "w") as f:
        for i, t in enumerate(poses.transforms):
            cells = [str(i), _fmt(poses.timestamps[i])]
            cells.extend(_fmt(x) for x in t.as_matrix().ravel())
            f.write(",".join(cells) + "\n")


def read_poses(path) -> ScanPoses:
    transforms = []
    timestamps = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 18:
                raise ValidationError(f"{path}:{lineno}: expected 18 fields, got {len(cells)}")
            try:
                timestamps.append(float(cells[1]))
                m = np.array([float(c) for c in cells[2:]]).reshape(4, 4)
            except ValueError as e:
                raise ValidationError(f"{path}:{lineno}: {e}") from None
            if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
                raise ValidationError(f"{path}:{lineno}: bottom row must be 0,0,0,1")
            r = m[:3, :3]
            drift = np.linalg.norm(r.T @ r - np.eye(3))
            if drift >= POSE_ROTATION_TOL or np.linalg.det(r) < 0:
                raise ValidationError(
                    f"{path}:{lineno}: frame {cells[0]} rotation is not rigid "
                    f"(drift {drift:.2e}, det {np.linalg.det(r):+.3f})"
                )
            if drift >= ORTHO_TOL:
                r = _reorthonormalize(r)
            transforms.append(RigidTransform(r, m[:3, 3]))
    if len(transforms) < 2:
        raise ValidationError(f"{path}: a pose file needs at least 2 frames")
    return ScanPoses(transforms=tuple(transforms), timestamps=np.array(timestamps))


# --- calibration (structured text) ------------------------------------------

def write_calibration(path, calib: CalibrationSolution) -> None:
    with open(path, "w") as f:
        f.write(f"sx: {_fmt(calib.sx)}\n")
        f.write(f"sy: {_fmt(calib.sy)}\n")
        f.write("rotation: " + " ".join(_fmt(x) for x in calib.t_rigid.rotation.ravel()) + "\n")
        f.write("translation: " + " ".join(_fmt(x) for x in calib.t_rigid.translation) + "\n")
        if calib.pin_world is not None:
            f.write("pin_world: " + " ".join(_fmt(x) for x in calib.pin_world) + "\n")
        if calib.rms_residual is not None:
            f.write(f"rms_residual: {_fmt(calib.rms_residual)}\n")


def _parse_keyed(path):
    fields = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'key: value'")
            key, _, value = line.partition(":")
            fields[key.strip()] = (value.strip(), lineno)
    return fields


def read_calibration(path) -> CalibrationSolution:
    fields = _parse_keyed(path)
    for key in ("sx", "sy", "rotation", "translation"):
        if key not in fields:
            raise SchemaError(f"{path}: missing required field {key!r}")

    def floats(key, n):
        raw, lineno = fields[key]
        vals = raw.split()
        if len(vals) != n:
            raise ValidationError(f"{path}:{lineno}: {key} needs {n} numbers, got {len(vals)}")
        try:
            return [float(v) for v in vals]
        except ValueError as e:
            raise ValidationError(f"{path}:{lineno}: {e}") from None

    sx = floats("sx", 1)[0]
    sy = floats("sy", 1)[0]
    if sx <= 0 or sy <= 0:
        raise ValidationError(f"{path}: scale factors must be positive")
    rot = np.array(floats("rotation", 9)).reshape(3, 3)
    trans = np.array(floats("translation", 3))
    drift = np.linalg.norm(rot.T @ rot - np.eye(3))
    if drift >= POSE_ROTATION_TOL or np.linalg.det(rot) < 0:
        raise ValidationError(f"{path}: rotation is not rigid (drift {drift:.2e})")
    if drift >= ORTHO_TOL:
        rot = _reorthonormalize(rot)
    pin = np.array(floats("pin_world", 3)) if "pin_world" in fields else None
    rms = floats("rms_residual", 1)[0] if "rms_residual" in fields else None
    return CalibrationSolution(
        t_rigid=RigidTransform(rot, trans), sx=sx, sy=sy, pin_world=pin, rms_residual=rms
    )


# --- landmarks (delimited text) ----------------------------------------------

def write_landmarks(path, landmarks: LandmarkSet) -> None:
    with open(path, "w") as f:
        for fi, u, v in landmarks.entries:
            f.write(f"{fi},{u},{v}\n")


def read_landmarks(path) -> LandmarkSet:
    """Rows of frame_index,u,v; bounds are checked later against scan dims."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 3:
                raise FormatError(f"{path}:{lineno}: expected frame,u,v")
            try:
                rows.append([int(c) for c in cells])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    if not rows:
        return LandmarkSet.empty()
    return LandmarkSet(np.array(rows, dtype=np.int64))


# --- metric reports and leaderboards -----------------------------------------

def write_report(path, report: ScanMetricReport, team: str, scan: str) -> None:
    """Raw (unnormalised) metrics with runtime and status, diffable key order."""
    with open(path, "w") as f:
        f.write(f"team: {team}\n")
        f.write(f"scan: {scan}\n")
        f.write(f"status: {report.status}\n")
        f.write(f"runtime_s: {_fmt(report.runtime)}\n")
        if report.status != STATUS_FAILED:
            f.write(f"gpe_mm: {_fmt(report.gpe)}\n")
            f.write(f"gle_mm: {_fmt(report.gle)}\n")
            f.write(f"lpe_mm: {_fmt(report.lpe)}\n")
            f.write(f"lle_mm: {_fmt(report.lle)}\n")


def read_report(path):
    fields = _parse_keyed(path)
    for key in ("team", "scan", "status", "runtime_s"):
        if key not in fields:
            raise SchemaError(f"{path}: missing required field {key!r}")
    status = fields["status"][0]
    runtime = float(fields["runtime_s"][0])
    if status == STATUS_FAILED:
        report = ScanMetricReport(None, None, None, None, runtime, status)
    else:
        try:
            vals = {k: float(fields[f"{k}_mm"][0]) for k in ("gpe", "gle", "lpe", "lle")}
        except KeyError as e:
            raise SchemaError(f"{path}: missing metric field {e}") from None
        report = ScanMetricReport(
            vals["gpe"], vals["gle"], vals["lpe"], vals["lle"], runtime, status
        )
    return fields["team"][0], fields["scan"][0], report


def write_leaderboard(path, entries: "list[LeaderboardEntry]") -> None:
    """Scores to three decimals, one row per team in rank order."""
    with open(path, "w") as f:
        f.write(LEADERBOARD_HEADER + "\n")
        for e in sorted(entries, key=lambda e: e.rank):
            f.write(
                f"{e.rank},{e.team},{e.overall:.3f},{e.mean_gs:.3f},{e.mean_ls:.3f},"
                f"{e.mean_ps:.3f},{e.mean_lms:.3f},{e.mean_runtime:.3f}\n"
            )
