"""Command-line front end: simulate, calibrate, ddf-gt, evaluate, rank,
stats, traj.

Exit codes: 0 success, 2 usage/input error, 3 calibration non-convergence,
4 unreadable prediction (a status=failed report is still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import calib as calib_mod
from . import ddf as ddf_mod
from . import formats, metrics, ranking, sim
from .errors import FormatError, UsreconError, ValidationError
from .se3 import RigidTransform, accumulate_chain, frame_corners

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_BAD_PREDICTION = 4


def _cmd_simulate(args) -> int:
    spec = sim.TrajectorySpec(
        shape=args.shape,
        direction=args.direction,
        orientation=args.orientation,
        length_mm=args.length_mm,
        frame_count=args.frames,
        curvature=args.curvature,
        jitter_trans=args.jitter_trans,
        jitter_rot=args.jitter_rot,
        seed=args.seed,
    )
    poses = sim.gen_trajectory(spec)
    formats.write_poses(args.out, poses)
    if args.calib_out:
        formats.write_calibration(args.calib_out, sim.default_calibration())
    print(f"wrote {len(poses)} poses to {args.out}")
    return EXIT_OK


def _read_observation_file(path):
    """Rows of u,v then the 16 row-major pose entries (18 fields)."""
    obs = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 18:
                raise ValidationError(f"{path}:{lineno}: expected u,v plus 16 matrix entries")
            vals = [float(c) for c in cells]
            m = np.array(vals[2:]).reshape(4, 4)
            obs.append(
                calib_mod.PinheadObservation(
                    t_cam_tool=RigidTransform(m[:3, :3], m[:3, 3]),
                    pin_pixel=(vals[0], vals[1]),
                )
            )
    return obs


def _cmd_calibrate(args) -> int:
    obs = _read_observation_file(args.observations)
    opts = calib_mod.SolverOptions(max_iterations=args.max_iter)
    solution = calib_mod.solve_spatial(obs, opts)
    formats.write_calibration(args.out, solution)
    print(f"rms residual: {solution.rms_residual:.6g} mm ({solution.iterations} iterations)")
    if not solution.converged:
        print("calibration did not converge", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _load_landmarks(path):
    if path is None:
        return ddf_mod.LandmarkSet.empty()
    return formats.read_landmarks(path)


def _cmd_ddf_gt(args) -> int:
    poses = formats.read_poses(args.poses)
    calibration = formats.read_calibration(args.calib)
    landmarks = _load_landmarks(args.landmarks)
    ddf = ddf_mod.gt_ddf_from_scan(
        poses, calibration, landmarks, args.width, args.height, dtype=np.float32
    )
    formats.write_ddf(args.out, ddf)
    print(f"wrote ground-truth DDFs for {len(poses)} frames to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    gt = formats.read_ddf(args.gt)
    try:
        pred = formats.read_ddf(args.pred)
        report = metrics.evaluate_scan(
            pred, gt, runtime=args.runtime_s, limit=args.limit_s, threads=args.threads
        )
    except (formats.FormatError, OSError) as e:
        print(f"prediction unreadable: {e}", file=sys.stderr)
        formats.write_report(args.out, metrics.failed_report(args.runtime_s), args.team, args.scan)
        return EXIT_BAD_PREDICTION
    formats.write_report(args.out, report, args.team, args.scan)
    print(
        f"gpe={report.gpe:.6g} gle={report.gle:.6g} lpe={report.lpe:.6g} "
        f"lle={report.lle:.6g} status={report.status}"
    )
    return EXIT_OK


def _cmd_rank(args) -> int:
    reports_dir = Path(args.reports_dir)
    by_scan: dict = {}
    runtimes: dict = {}
    files = sorted(p for p in reports_dir.iterdir() if p.is_file())
    if not files:
        formats.write_leaderboard(args.out, [])
        print(f"no reports in {reports_dir}; wrote empty leaderboard")
        return EXIT_OK
    for path in files:
        team, scan, report = formats.read_report(path)
        by_scan.setdefault(scan, {})[team] = report
        runtimes.setdefault(team, []).append(report.runtime)
    scores_by_scan = {
        scan: ranking.scan_scores(reports, overtime_policy=args.overtime_policy)
        for scan, reports in by_scan.items()
    }
    mean_runtimes = {team: float(np.mean(r)) for team, r in runtimes.items()}
    entries = ranking.rank_teams(scores_by_scan, mean_runtimes)
    formats.write_leaderboard(args.out, entries)
    for e in entries:
        print(f"{e.rank}. {e.team} overall={e.overall:.3f} runtime={e.mean_runtime:.3f}s")
    return EXIT_OK


def _read_scores_file(path):
    """Rows of team,scan,final_score[,runtime_s]; header optional."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.lower().startswith("team,"):
                continue
            cells = line.split(",")
            if len(cells) not in (3, 4):
                raise FormatError(f"{path}:{lineno}: expected team,scan,fs[,runtime]")
            rows.append(
                (
                    cells[0],
                    cells[1],
                    float(cells[2]),
                    float(cells[3]) if len(cells) == 4 else 0.0,
                )
            )
    if not rows:
        raise FormatError(f"{path}: no score rows")
    return rows


def _read_xy_file(path):
    """Rows of x,y numeric pairs; header optional."""
    xs, ys = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.lower().startswith("x,"):
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise FormatError(f"{path}:{lineno}: expected x,y")
            try:
                xs.append(float(cells[0]))
                ys.append(float(cells[1]))
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    if not xs:
        raise FormatError(f"{path}: no data rows")
    return np.array(xs), np.array(ys)


def _scores_matrix(rows):
    teams = sorted({r[0] for r in rows})
    scans = sorted({r[1] for r in rows})
    fs = np.full((len(teams), len(scans)), np.nan)
    rt = {t: [] for t in teams}
    for team, scan, score, runtime in rows:
        fs[teams.index(team), scans.index(scan)] = score
        rt[team].append(runtime)
    if np.any(np.isnan(fs)):
        raise FormatError("every team needs a score for every scan")
    runtimes = np.array([float(np.mean(rt[t])) for t in teams])
    return teams, fs, runtimes


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    sys.stdout.write(text)


def _cmd_stats(args) -> int:
    if args.mode == "power":
        n = ranking.paired_t_sample_size(
            args.effect_size, alpha=args.alpha, power=args.power, tail=args.tail
        )
        _emit(f"required_sample_size: {n}\n", args.out)
        return EXIT_OK

    if args.mode == "pearson":
        x, y = _read_xy_file(args.scores)
        r_val = ranking.pearson_r(x, y)
        _emit(f"pearson_r: {r_val:.6f}\n", args.out)
        return EXIT_OK
    rows = _read_scores_file(args.scores)
    if args.mode == "clt":
        teams, fs, _ = _scores_matrix(rows)
        report = ranking.clt_distribution({t: fs[i] for i, t in enumerate(teams)})
        lines = [
            f"{e.team}: mean={e.mean:.6f} stderr={e.stderr:.6f}" for e in report.entries
        ]
        _emit("\n".join(lines) + "\n", args.out)
        return EXIT_OK
    # bootstrap
    if args.seed is None:
        raise ValidationError("bootstrap mode requires --seed")
    teams, fs, runtimes = _scores_matrix(rows)
    report = ranking.bootstrap_ranks(
        fs, teams, resamples=args.resamples, seed=args.seed, runtimes=runtimes
    )
    lines = [f"resamples: {report.resamples}", f"seed: {report.seed}"]
    for i, team in enumerate(report.teams):
        freqs = " ".join(
            f"{rank + 1}:{f:.4f}" for rank, f in enumerate(report.rank_frequency[i]) if f > 0
        )
        lines.append(f"{team}: median_rank={report.median_rank[i]:g} {freqs}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_traj(args) -> int:
    poses = formats.read_poses(args.poses)
    calibration = formats.read_calibration(args.calib)
    locals_ = ddf_mod.locals_from_poses(poses, calibration)
    globals_ = accumulate_chain(locals_)
    corners_mm = calibration.scale.apply(frame_corners(args.width, args.height).coords)
    with open(args.out, "w") as f:
        for i in range(len(poses)):
            pts = corners_mm if i == 0 else globals_[i - 1].apply(corners_mm)
            cells = [str(i), "%.17g" % poses.timestamps[i]]
            cells.extend("%.17g" % x for x in pts.ravel())
            f.write(",".join(cells) + "\n")
    print(f"wrote corner trajectories for {len(poses)} frames to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usrecon",
        description="Freehand ultrasound reconstruction evaluation toolkit",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count(),
        help="cap internal parallelism (default: machine parallelism)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic tracked scan")
    p.add_argument("--shape", choices=sim.SHAPES, default="straight")
    p.add_argument("--direction", choices=sim.DIRECTIONS, default="forward")
    p.add_argument("--orientation", choices=sim.ORIENTATIONS, default="perpendicular")
    p.add_argument("--length-mm", type=float, default=100.0)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--curvature", type=float, default=0.0)
    p.add_argument("--jitter-trans", type=float, default=0.0)
    p.add_argument("--jitter-rot", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--calib-out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="solve the pinhead spatial calibration")
    p.add_argument("--observations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("ddf-gt", help="ground-truth DDFs from tracked poses")
    p.add_argument("--poses", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--landmarks")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ddf_gt)

    p = sub.add_parser("evaluate", help="score a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--runtime-s", type=float, required=True)
    p.add_argument("--limit-s", type=float, default=metrics.DEFAULT_RUNTIME_LIMIT_S)
    p.add_argument("--team", default="team")
    p.add_argument("--scan", default="scan")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("rank", help="build the leaderboard from metric reports")
    p.add_argument("--reports-dir", required=True)
    p.add_argument(
        "--overtime-policy",
        choices=(ranking.OVERTIME_KEEP, ranking.OVERTIME_FAIL),
        default=ranking.OVERTIME_KEEP,
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("stats", help="bootstrap / clt / pearson / power analysis")
    p.add_argument("--mode", choices=("bootstrap", "clt", "pearson", "power"), required=True)
    p.add_argument("--scores", help="team,scan,fs[,runtime] rows (x,y rows for pearson)")
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("--effect-size", type=float)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.9)
    p.add_argument("--tail", choices=("one", "two"), default="one")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("traj", help="export corner-point trajectories as text")
    p.add_argument("--poses", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_traj)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsreconError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
