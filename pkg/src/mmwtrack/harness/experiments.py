"""Scenario simulation at baseband or measurement level, tracking runs and scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..crb import SignalPoint, crb_freq, crb_pxpy, velocity_bound
from ..detector import Measurement
from ..detector.measurement import freq_to_state
from ..metrics import LabeledSet, ospa
from ..signal import (
    BasebandCube,
    RadarParams,
    Scenario,
    TruthTarget,
    amplitude_for_snr,
    compute_limits,
    generate_scenario,
    state_to_freq,
    state_to_polar,
    synthesize_frame,
)
from ..tracker import FrameResult, Pipeline, TrackSnapshot
from .config import RunConfig

NOISE_VAR = 1.0


def target_amplitudes(cfg: RunConfig) -> np.ndarray:
    sc, p = cfg.scenario, cfg.radar
    return np.array(
        [amplitude_for_snr(sc.target_snr_db(k), NOISE_VAR, p.N, p.M) for k in range(sc.n_targets)]
    )


def simulate_scenario(cfg: RunConfig, rng: np.random.Generator) -> Scenario:
    limits = compute_limits(cfg.radar)
    return generate_scenario(cfg.scenario, rng, v_max=limits.v_max, amplitude=target_amplitudes(cfg))


def synthesize_cubes(
    params: RadarParams, scenario: Scenario, rng: np.random.Generator
) -> list[BasebandCube]:
    cubes = []
    for targets in scenario.truth:
        tg = [(*state_to_polar(t.x), t.gamma) for t in targets]
        cubes.append(synthesize_frame(params, tg, NOISE_VAR, rng))
    return cubes


def _signal_point(params: RadarParams, amp: float, omega=(0.0, 0.0, 0.0)) -> SignalPoint:
    return SignalPoint(omega=omega, g=amp, phi=0.0, sigma2=NOISE_VAR, N=params.N, M=params.M, L=params.L)


def clutter_measurements(
    rows: np.ndarray, params: RadarParams, amp: float, kappa: float, frame: int = 0
) -> list[Measurement]:
    """Measurement-level clutter ``(px, py, v_r)`` with the covariance a detection there would get."""
    limits = compute_limits(params)
    sp = _signal_point(params, amp)
    var_v = kappa * velocity_bound(sp, limits)
    out = []
    for px, py, vr in np.asarray(rows, dtype=float).reshape(-1, 3):
        r, th = math.hypot(px, py), math.atan2(px, py)
        th_b = max(-math.pi / 2 + 1e-6, min(math.pi / 2 - 1e-6, th))
        R = kappa * crb_pxpy(sp, limits, r, th_b)
        out.append(
            Measurement(z=[px, py], R=R, v_r=vr, var_v=var_v, theta=th, r=r, frame=frame,
                        snr_db=10 * math.log10(params.N * params.M * amp * amp / NOISE_VAR))
        )
    return out


def simulate_measurements(
    targets: Sequence[TruthTarget],
    params: RadarParams,
    amps: Sequence[float],
    p_d: float,
    kappa: float,
    rng: np.random.Generator,
    frame: int = 0,
) -> list[Measurement]:
    """Measurement-level detections: a P_D coin flip per target, frequency noise at the bound."""
    limits = compute_limits(params)
    out = []
    for tgt, amp in zip(targets, amps):
        if rng.random() >= p_d:
            continue
        r, v, th = state_to_polar(tgt.x)
        sp = _signal_point(params, amp)
        w = np.array(state_to_freq(r, v, th, limits))
        w = w + rng.standard_normal(3) * np.sqrt(np.diag(crb_freq(sp)))
        w[2] = max(-math.pi, min(math.pi, w[2]))
        r_h, v_h, th_h = freq_to_state(w, limits)
        th_b = max(-math.pi / 2 + 1e-6, min(math.pi / 2 - 1e-6, th_h))
        out.append(
            Measurement(
                z=[r_h * math.sin(th_h), r_h * math.cos(th_h)],
                R=kappa * crb_pxpy(sp, limits, r_h, th_b),
                v_r=v_h, var_v=kappa * velocity_bound(sp, limits),
                theta=th_h, r=r_h, frame=frame,
                snr_db=10 * math.log10(params.N * params.M * amp * amp / NOISE_VAR),
            )
        )
    return out


def make_pipeline(cfg: RunConfig, detector: str | None = None, gate_mode: str | None = None) -> Pipeline:
    assoc = cfg.assoc if gate_mode is None else replace(cfg.assoc, gate_mode=gate_mode)
    return Pipeline(
        params=cfg.radar,
        cfar=cfg.cfar,
        assoc=assoc,
        tracker=cfg.tracker,
        detector=detector or cfg.detector,
        kappa=cfg.kappa,
        cluster_gate=cfg.cluster,
    )


def run_tracking(
    pipeline: Pipeline,
    frames: Sequence[BasebandCube | Sequence[Measurement]],
    extra: Sequence[Sequence[Measurement]] | None = None,
) -> list[FrameResult]:
    out = []
    for t, data in enumerate(frames):
        out.append(pipeline.process_frame(data, extra[t] if extra is not None else ()))
    return out


def track_sets(
    snapshots: Sequence[TrackSnapshot], include_tentative: bool = False
) -> LabeledSet:
    return LabeledSet(
        [(s.label, s.x) for s in snapshots if include_tentative or s.status != "tentative"]
    )


def truth_set(targets: Sequence[TruthTarget]) -> LabeledSet:
    return LabeledSet([(t.label, t.x) for t in targets])


def ospa_series(
    truth: Sequence[Sequence[TruthTarget]],
    results: Sequence[FrameResult],
    p: float = 1.0,
    c: float = 10.0,
    include_tentative: bool = False,
) -> np.ndarray:
    return np.array(
        [
            ospa(truth_set(tt), track_sets(res.tracks, include_tentative), p, c)
            for tt, res in zip(truth, results)
        ]
    )


@dataclass
class TrialFrames:
    """One simulated trial with everything a tracking run needs."""

    scenario: Scenario
    cubes: list[BasebandCube]
    clutter: list[list[Measurement]]


def simulate_trial(cfg: RunConfig, rng: np.random.Generator, with_cubes: bool = True) -> TrialFrames:
    """Truth, cubes and clutter of one trial.

    Clutter covariances use the weakest target's SNR, so clutter is never
    more precisely located than a real detection.
    """
    scenario = simulate_scenario(cfg, rng)
    cubes = synthesize_cubes(cfg.radar, scenario, rng) if with_cubes else []
    amp = float(np.min(target_amplitudes(cfg))) if cfg.scenario.n_targets else amplitude_for_snr(
        cfg.scenario.target_snr_db(0), NOISE_VAR, cfg.radar.N, cfg.radar.M
    )
    clutter = [
        clutter_measurements(rows, cfg.radar, amp, cfg.kappa, t) if cfg.clutter else []
        for t, rows in enumerate(scenario.clutter)
    ]
    return TrialFrames(scenario, cubes, clutter)
