"""Reconstruction error metrics for one scan: GPE, GLE, LPE, LLE, runtime.

Dense errors stream frame by frame (never holding a full displacement volume)
and accumulate per-frame sums in frame order with exact summation, so serial
and thread-parallel evaluation agree bitwise.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .ddf import ArrayDenseField, DdfSet, DenseField, TransformDenseField
from .errors import InvalidInputError

DEFAULT_RUNTIME_LIMIT_S = 120.0

STATUS_OK = "ok"
STATUS_FAILED = "failed"
STATUS_OVERTIME = "overtime"


@dataclass(frozen=True)
class ScanMetricReport:
    """Per-scan metric values (mm) plus runtime (s) and evaluation status."""

    gpe: float | None
    gle: float | None
    lpe: float | None
    lle: float | None
    runtime: float
    status: str = STATUS_OK

    def __post_init__(self):
        if self.status not in (STATUS_OK, STATUS_FAILED, STATUS_OVERTIME):
            raise InvalidInputError(f"unknown status {self.status!r}")
        metrics = (self.gpe, self.gle, self.lpe, self.lle)
        if self.status == STATUS_FAILED:
            if any(m is not None for m in metrics):
                raise InvalidInputError("failed reports carry no metric values")
        else:
            if any(m is None or m < 0 for m in metrics):
                raise InvalidInputError("metric values must be present and >= 0")


def failed_report(runtime: float = 0.0) -> ScanMetricReport:
    """Report for a scan whose prediction could not be read or evaluated."""
    return ScanMetricReport(None, None, None, None, runtime, STATUS_FAILED)


@njit(nogil=True, cache=True)
def _norm_sum(d):
    # d: (N, 3); sequential accumulation keeps the reduction deterministic
    s = 0.0
    for i in range(d.shape[0]):
        x = np.float64(d[i, 0])
        y = np.float64(d[i, 1])
        z = np.float64(d[i, 2])
        s += np.sqrt(x * x + y * y + z * z)
    return s


@njit(nogil=True, cache=True)
def _norm_sum_diff(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        x = np.float64(a[i, 0]) - np.float64(b[i, 0])
        y = np.float64(a[i, 1]) - np.float64(b[i, 1])
        z = np.float64(a[i, 2]) - np.float64(b[i, 2])
        s += np.sqrt(x * x + y * y + z * z)
    return s


def mean_point_error(pred, gt, scale=None, width=None, height=None) -> float:
    """Mean Euclidean distance between predicted and reference displacements.

    The reconstructed positions share the scaled base pixel, so it cancels:
    mean ||(S p + pred) - (S p + gt)|| = mean ||pred - gt||. The scale and
    frame dimensions only cross-check shapes when provided.
    """
    pred = np.ascontiguousarray(pred, dtype=np.result_type(pred, np.float32))
    gt = np.ascontiguousarray(gt, dtype=np.result_type(gt, np.float32))
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.ndim < 2 or pred.shape[-1] != 3:
        raise InvalidInputError("displacement arrays must have a trailing xyz axis")
    if width is not None and pred.ndim == 4 and pred.shape[1:3] != (height, width):
        raise InvalidInputError(
            f"array frames are {pred.shape[1:3]}, expected {(height, width)}"
        )
    if pred.size == 0:
        return 0.0
    if pred.ndim == 4:
        sums = [
            _norm_sum_diff(pred[i].reshape(-1, 3), gt[i].reshape(-1, 3))
            for i in range(pred.shape[0])
        ]
        return math.fsum(sums) / (pred.size // 3)
    return _norm_sum_diff(pred.reshape(-1, 3), gt.reshape(-1, 3)) / (pred.size // 3)


def _fused_pair(a: DenseField, b: DenseField) -> bool:
    return (
        isinstance(a, TransformDenseField)
        and isinstance(b, TransformDenseField)
        and a.base is b.base
    )


def _dense_mean_error(a: DenseField, b: DenseField, threads: int | None) -> float:
    count = len(a)
    if count == 0:
        return 0.0
    if (a.width, a.height, len(a)) != (b.width, b.height, len(b)):
        raise InvalidInputError("dense field dimensions do not match")
    pixels = a.height * a.width
    fused = _fused_pair(a, b)
    scratch = threading.local()

    def frame_sum(i: int) -> float:
        if fused:
            if not hasattr(scratch, "diff"):
                scratch.diff = np.empty((pixels, 3), dtype=a.dtype)
            dm = a.displacement_matrix(i) - b.displacement_matrix(i)
            np.dot(a.base, dm, out=scratch.diff)
            return _norm_sum(scratch.diff)
        if isinstance(a, ArrayDenseField) and isinstance(b, ArrayDenseField):
            # zero-copy views (np.asarray strips memmap for the jit kernel)
            return _norm_sum_diff(
                np.asarray(a.to_array()[i]).reshape(-1, 3),
                np.asarray(b.to_array()[i]).reshape(-1, 3),
            )
        if not hasattr(scratch, "fa"):
            scratch.fa = np.empty((a.height, a.width, 3), dtype=a.dtype)
            scratch.fb = np.empty((b.height, b.width, 3), dtype=b.dtype)
        fa = a.frame_into(i, scratch.fa).reshape(-1, 3)
        fb = b.frame_into(i, scratch.fb).reshape(-1, 3)
        return _norm_sum_diff(fa, fb)

    if threads is None or threads <= 1:
        sums = [frame_sum(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sums = list(pool.map(frame_sum, range(count)))
    return math.fsum(sums) / (count * pixels)


def evaluate_scan(
    pred: DdfSet,
    gt: DdfSet,
    runtime: float,
    limit: float = DEFAULT_RUNTIME_LIMIT_S,
    threads: int | None = None,
) -> ScanMetricReport:
    """All four errors for one scan, plus the runtime/limit status.

    Metrics are still reported when the runtime exceeds the limit; the
    ranking stage decides what an overtime scan is worth. A `failed` status
    is never produced here, only by callers via `failed_report`.
    """
    if pred.dims() != gt.dims():
        raise InvalidInputError(
            f"prediction dims {pred.dims()} do not match ground truth {gt.dims()}"
        )
    gpe = _dense_mean_error(pred.gp, gt.gp, threads)
    lpe = _dense_mean_error(pred.lp, gt.lp, threads)
    gle = mean_point_error(pred.gl, gt.gl)
    lle = mean_point_error(pred.ll, gt.ll)
    status = STATUS_OVERTIME if runtime > limit else STATUS_OK
    return ScanMetricReport(gpe, gle, lpe, lle, runtime, status)
