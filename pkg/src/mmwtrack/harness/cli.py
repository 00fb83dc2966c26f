"""Command-line entry point: simulate, detect, track, eval, crb.

Exit codes: 0 success, 2 usage or configuration error, 3 input/output error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Sequence

import numpy as np

from ..crb import SignalPoint, crb_pxpy, crb_rvtheta, velocity_bound
from ..detector import fft_cfar_detect, mnomp_detect, to_pseudo_measurement
from ..metrics import LabeledSet, ospa
from ..signal import RadarParams, amplitude_for_snr, compute_limits, state_to_freq
from . import io
from .config import ConfigError, RunConfig, load_config
from .experiments import NOISE_VAR, make_pipeline, run_tracking, simulate_trial

log = logging.getLogger("mmwtrack")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _check_header(cfg: RunConfig, params: RadarParams) -> None:
    ours = cfg.radar
    if params.shape != ours.shape:
        raise ConfigError(f"cube dimensions {params.shape} differ from config {ours.shape}")
    for name in ("f_c", "mu", "T_s", "T_r", "T_frame"):
        a, b = getattr(params, name), getattr(ours, name)
        if not math.isclose(a, b, rel_tol=1e-9):
            raise ConfigError(f"cube header {name}={a!r} differs from config {b!r}")


def _read_cubes(cfg: RunConfig, path: str):
    params, cubes = io.read_cube_file(path)
    _check_header(cfg, params)
    for c in cubes:
        c.params = cfg.radar
    return cubes


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    rng = np.random.default_rng(cfg.seed)
    trial = simulate_trial(cfg, rng)
    io.write_cube_file(args.out, trial.cubes, cfg.radar)
    io.write_truth(args.truth, trial.scenario.truth)
    if args.clutter:
        io.write_measurements(args.clutter, trial.clutter)
    log.info("simulated %d frames", len(trial.cubes))
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    cubes = _read_cubes(cfg, args.inp)
    fn = mnomp_detect if (args.detector or cfg.detector) == "mnomp" else fft_cfar_detect
    frames = []
    for t, cube in enumerate(cubes):
        dets, s2 = fn(cube, cfg.cfar, cfg.radar)
        frames.append([to_pseudo_measurement(d, cfg.radar, s2, cfg.kappa, t) for d in dets])
    io.write_measurements(args.out, frames)
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    if args.inp.lower().endswith(".csv"):
        frames = io.read_measurements(args.inp)
    else:
        frames = _read_cubes(cfg, args.inp)
    extra = None
    if args.clutter:
        extra = io.read_measurements(args.clutter)
        extra += [[] for _ in range(len(frames) - len(extra))]
    pipe = make_pipeline(cfg, detector=args.detector, gate_mode=args.gate)
    results = run_tracking(pipe, frames, extra)
    io.write_tracks(args.out, [s for r in results for s in r.tracks])
    return EXIT_OK


def cmd_eval(args) -> int:
    p, c = args.p, args.c
    include = args.include_tentative
    if args.config:
        cfg = load_config(args.config)
        p, c = cfg.metric
        include = include or cfg.include_tentative
    truth = io.read_truth(args.truth)
    tracks = io.read_tracks(args.tracks)
    by_frame: dict[int, list] = {}
    for rec in tracks:
        if include or rec["status"] != "tentative":
            x = np.array([rec["px"], rec["vx"], rec["py"], rec["vy"]])
            by_frame.setdefault(rec["frame"], []).append((rec["track_id"], x))
    frames = sorted(set(truth) | set(by_frame))
    rows = []
    for t in frames:
        X, Y = LabeledSet(truth.get(t, [])), LabeledSet(by_frame.get(t, []))
        rows.append((t, ospa(X, Y, p, c), len(X), len(Y)))
    io.write_report(args.out, rows)
    if rows:
        log.info("MOSPA %.4f over %d frames", np.mean([r[1] for r in rows]), len(rows))
    return EXIT_OK


def cmd_crb(args) -> int:
    cfg = load_config(args.config)
    params, sweep = cfg.radar, cfg.crb
    limits = compute_limits(params)
    if abs(sweep.theta) >= math.pi / 2:
        raise ConfigError("crb.theta must satisfy |theta| < pi/2")
    omega = state_to_freq(sweep.r, 0.0, sweep.theta, limits)
    header = ["snr_db", "r", "theta", "var_r", "var_v", "var_theta",
              "var_px", "var_py", "cov_pxpy"]
    rows = []
    for snr in sweep.snr_db:
        g = amplitude_for_snr(snr, NOISE_VAR, params.N, params.M)
        sp = SignalPoint(omega=omega, g=g, phi=0.0, sigma2=NOISE_VAR,
                         N=params.N, M=params.M, L=params.L)
        rvt = crb_rvtheta(sp, limits, sweep.theta)
        P = crb_pxpy(sp, limits, sweep.r, sweep.theta)
        vals = (snr, sweep.r, sweep.theta, rvt[0, 0], velocity_bound(sp, limits), rvt[2, 2],
                P[0, 0], P[1, 1], P[0, 1])
        rows.append([io.fmt(v) for v in vals])
    io.write_table(args.out, header, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mmwtrack", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a scenario to a cube file and truth CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--clutter", help="also write measurement-level clutter CSV")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("detect", help="detect targets in every frame of a cube file")
    s.add_argument("--config", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--detector", choices=["mnomp", "fftcfar"])
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("track", help="track from a cube file or measurement CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--gate", choices=["2d", "3d"])
    s.add_argument("--detector", choices=["mnomp", "fftcfar"])
    s.add_argument("--clutter", help="measurement CSV merged into every frame")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", help="per-frame OSPA of tracks against truth")
    s.add_argument("--truth", required=True)
    s.add_argument("--tracks", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="take metric (p, c) from a config")
    s.add_argument("--p", type=float, default=1.0)
    s.add_argument("--c", type=float, default=10.0)
    s.add_argument("--include-tentative", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("crb", help="table of bounds against SNR")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_crb)
    return ap


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, io.CubeFormatError, io.TableFormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
