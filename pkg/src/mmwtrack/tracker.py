"""PDA-weighted Kalman tracking with birth, extrapolation and death.

State order is ``[px, vx, py, vy]``.  Each frame runs

    detect -> pseudo-measurements -> (cluster) -> gate -> SPA -> PDA update -> lifecycle

through :class:`Pipeline`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .assoc import H_POS, AssocConfig, AssocResult, associate
from .detector import (
    CfarConfig,
    Detection,
    Measurement,
    cluster_measurements,
    fft_cfar_detect,
    mnomp_detect,
    to_pseudo_measurement,
)
from .signal import BasebandCube, RadarParams, compute_limits, cv_matrices

EIG_FLOOR = 1e-12


@dataclass
class Track:
    label: int
    x_hat: np.ndarray
    sigma: np.ndarray
    miss_count: int = 0
    status: str = "tentative"
    theta_last: float = 0.0
    born: int = 0

    def __post_init__(self):
        self.x_hat = np.asarray(self.x_hat, dtype=float).reshape(4)
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(4, 4)

    @property
    def alive(self) -> bool:
        return self.status != "dead"


@dataclass
class TrackerConfig:
    """Motion model and track-management settings."""

    T: float = 0.1
    q: tuple[float, float] = (1e-6, 1e-6)
    n_ext: int = 2
    birth_threshold: float = 0.5
    # standard deviation of each velocity component of a new track;
    # None means v_max / 3 of the radar in use
    birth_vel_std: float | None = None

    def __post_init__(self):
        if self.n_ext < 1:
            raise ValueError("n_ext must be >= 1")
        if not self.T > 0:
            raise ValueError("frame interval must be positive")
        if min(self.q) < 0:
            raise ValueError("process noise must be nonnegative")
        if not 0 < self.birth_threshold < 1:
            raise ValueError("birth_threshold must lie in (0, 1)")
        if self.birth_vel_std is not None and not self.birth_vel_std > 0:
            raise ValueError("birth_vel_std must be positive")

    @property
    def A(self) -> np.ndarray:
        return cv_matrices(self.T)[0]

    @property
    def Gamma(self) -> np.ndarray:
        return cv_matrices(self.T)[1]

    @property
    def Q(self) -> np.ndarray:
        return np.diag(np.asarray(self.q, dtype=float))

    @property
    def H(self) -> np.ndarray:
        return H_POS.copy()


def _condition(P: np.ndarray) -> np.ndarray:
    """Symmetrize, flooring eigenvalues only when one falls below the floor."""
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    if w.min() >= EIG_FLOOR:
        return P
    return (V * np.maximum(w, EIG_FLOOR)) @ V.T


def predict(track: Track, cfg: TrackerConfig) -> tuple[np.ndarray, np.ndarray]:
    A, G = cv_matrices(cfg.T)
    x = A @ track.x_hat
    P = A @ track.sigma @ A.T + G @ cfg.Q @ G.T
    return x, 0.5 * (P + P.T)


def update_pda(
    pred: tuple[np.ndarray, np.ndarray],
    measurements: Sequence[Measurement],
    beta_row: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Probabilistic data association correction.

    Parameters
    ----------
    pred : (x, P)
        Predicted mean and covariance.
    measurements : sequence of Measurement
        All measurements of the frame.
    beta_row : (H+1,) array
        Association probabilities of this track, miss first.  Entries of
        out-of-gate measurements must be zero.

    Returns
    -------
    x, P : posterior mean and covariance
    """
    x_p, P_p = pred
    beta_row = np.asarray(beta_row, dtype=float)
    if beta_row.shape != (len(measurements) + 1,):
        raise ValueError("beta row must have one entry per measurement plus the miss")
    b0, b = beta_row[0], beta_row[1:]
    used = np.nonzero(b > 0)[0]
    if used.size == 0:
        return x_p.copy(), P_p.copy()
    w = b[used]
    R_bar = np.einsum("h,hij->ij", w / w.sum(), np.array([measurements[h].R for h in used]))
    S = H_POS @ P_p @ H_POS.T + R_bar
    try:
        K = np.linalg.solve(S, H_POS @ P_p).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is singular") from exc
    E = np.array([measurements[h].z for h in used]) - H_POS @ x_p  # (n, 2)
    d_bar = w @ E
    x = x_p + K @ d_bar
    spread = K @ (np.einsum("h,hi,hj->ij", w, E, E) - np.outer(d_bar, d_bar)) @ K.T
    P = P_p - (1 - b0) * K @ H_POS @ P_p + spread
    return x, _condition(P)


def spawn_track(
    meas: Measurement, label: int, cfg: TrackerConfig, frame: int = 0
) -> Track:
    """New tentative track from a measurement's range, radial velocity and azimuth."""
    if cfg.birth_vel_std is None:
        raise ValueError("birth_vel_std is unset; resolve it from the radar limits first")
    s, c = math.sin(meas.theta), math.cos(meas.theta)
    x = np.array([meas.r * s, meas.v_r * s, meas.r * c, meas.v_r * c])
    P = np.zeros((4, 4))
    P[np.ix_([0, 2], [0, 2])] = meas.R
    P[1, 1] = P[3, 3] = cfg.birth_vel_std**2
    return Track(label=label, x_hat=x, sigma=P, theta_last=meas.theta, born=frame)


@dataclass
class Event:
    frame: int
    kind: str  # birth | death | extrapolate
    label: int


def lifecycle_step(
    tracks: Sequence[Track],
    preds: Sequence[tuple[np.ndarray, np.ndarray]],
    assoc: AssocResult,
    measurements: Sequence[Measurement],
    cfg: TrackerConfig,
    next_label: int,
    frame: int = 0,
) -> tuple[list[Track], list[Event], int]:
    """Update, extrapolate or kill every track, then spawn new ones.

    ``tracks[k]`` corresponds to row ``k`` of ``assoc.beta``.  Returns the
    surviving tracks (including newborns), the event log and the next free
    label.
    """
    out, events = [], []
    for k, (trk, pred) in enumerate(zip(tracks, preds)):
        beta = assoc.beta[k]
        if beta[0] > cfg.birth_threshold:
            miss = trk.miss_count + 1
            if miss >= cfg.n_ext:
                events.append(Event(frame, "death", trk.label))
                continue
            events.append(Event(frame, "extrapolate", trk.label))
            out.append(
                Track(trk.label, pred[0].copy(), pred[1].copy(), miss, trk.status,
                      trk.theta_last, trk.born)
            )
            continue
        x, P = update_pda(pred, measurements, beta)
        out.append(
            Track(trk.label, x, P, 0, "active", math.atan2(x[0], x[2]), trk.born)
        )
    for h, meas in enumerate(measurements):
        if assoc.xi[h, 0] > cfg.birth_threshold:
            out.append(spawn_track(meas, next_label, cfg, frame))
            events.append(Event(frame, "birth", next_label))
            next_label += 1
    return out, events, next_label


@dataclass
class TrackSnapshot:
    frame: int
    label: int
    status: str
    x: np.ndarray
    sigma: np.ndarray


@dataclass
class FrameResult:
    frame: int
    tracks: list[TrackSnapshot]
    detections: list[Detection]
    measurements: list[Measurement]
    assoc: AssocResult | None
    events: list[Event]


@dataclass
class Pipeline:
    """Stateful detect-associate-track loop.

    ``cluster_gate`` of ``None`` disables clustering.  Extra measurements
    (for example simulated clutter) may be passed per frame.
    """

    params: RadarParams
    cfar: CfarConfig = field(default_factory=CfarConfig)
    assoc: AssocConfig = field(default_factory=AssocConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    detector: str = "mnomp"
    kappa: float = 1.2
    cluster_gate: tuple[float, float] | None = None
    tracks: list[Track] = field(default_factory=list)
    next_label: int = 1
    frame: int = 0

    def __post_init__(self):
        if self.detector not in ("mnomp", "fftcfar"):
            raise ValueError("detector must be 'mnomp' or 'fftcfar'")
        if self.tracker.birth_vel_std is None:
            self.tracker = replace(self.tracker, birth_vel_std=default_birth_vel_std(self.params))

    def detect(self, cube: BasebandCube) -> tuple[list[Detection], list[Measurement]]:
        fn = mnomp_detect if self.detector == "mnomp" else fft_cfar_detect
        dets, sigma2 = fn(cube, self.cfar, self.params)
        meas = [to_pseudo_measurement(d, self.params, sigma2, self.kappa, self.frame) for d in dets]
        return dets, meas

    def process_frame(
        self,
        data: BasebandCube | Sequence[Measurement],
        extra: Sequence[Measurement] = (),
    ) -> FrameResult:
        if isinstance(data, BasebandCube):
            dets, meas = self.detect(data)
        else:
            dets, meas = [], list(data)
        if self.cluster_gate is not None:
            meas = cluster_measurements(meas, self.cluster_gate)
        meas = meas + list(extra)

        live = [t for t in self.tracks if t.alive]
        preds = [predict(t, self.tracker) for t in live]
        thetas = [t.theta_last for t in live]
        result = associate(preds, meas, self.assoc, thetas)
        self.tracks, events, self.next_label = lifecycle_step(
            live, preds, result, meas, self.tracker, self.next_label, self.frame
        )
        snap = [
            TrackSnapshot(self.frame, t.label, t.status, t.x_hat.copy(), t.sigma.copy())
            for t in sorted(self.tracks, key=lambda t: t.label)
        ]
        out = FrameResult(self.frame, snap, dets, meas, result, events)
        self.frame += 1
        return out


def default_birth_vel_std(params: RadarParams) -> float:
    return compute_limits(params).v_max / 3
