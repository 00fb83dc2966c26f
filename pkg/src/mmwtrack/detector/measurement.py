"""Detections, Cartesian pseudo-measurements and measurement clustering."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from ..crb import SignalPoint, crb_pxpy
from ..signal import RadarLimits, RadarParams, compute_limits


@dataclass
class Detection:
    """One extracted sinusoid.

    ``omega`` is ``(wx in [0, 2pi), wy in (-pi, pi], wz in (-pi, pi])``.
    """

    omega: tuple[float, float, float]
    gains: np.ndarray
    gamma: complex
    state: tuple[float, float, float]
    snr_db: float
    passed_threshold: bool = True


@dataclass
class Measurement:
    z: np.ndarray
    R: np.ndarray
    v_r: float
    var_v: float
    theta: float
    r: float
    frame: int = 0
    snr_db: float = float("nan")
    # set when the azimuth had to be pulled off +-pi/2 for the bound
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(2)
        self.R = np.asarray(self.R, dtype=float).reshape(2, 2)

    @property
    def R3(self) -> np.ndarray:
        """Covariance of ``[px, py, v_r]``."""
        out = np.zeros((3, 3))
        out[:2, :2] = self.R
        out[2, 2] = self.var_v
        return out


def wrap_half_open(w: float) -> float:
    """Map an angle into (-pi, pi]."""
    return float(np.pi - (np.pi - w) % (2 * np.pi))


def freq_to_state(omega, limits: RadarLimits) -> tuple[float, float, float]:
    wx, wy, wz = omega
    if abs(wz) > np.pi * (1 + 1e-12):
        raise ValueError(f"spatial frequency {wz} outside [-pi, pi]")
    r = (wx % (2 * np.pi)) * limits.r_max / (2 * np.pi)
    v = wrap_half_open(wy) * limits.v_max / np.pi
    s = wz / (2 * np.pi * limits.d_over_lambda)
    theta = math.asin(max(-1.0, min(1.0, s)))
    return r, v, theta


def to_pseudo_measurement(
    det: Detection,
    params: RadarParams,
    sigma2_hat: float,
    kappa: float = 1.2,
    frame: int = 0,
) -> Measurement:
    """Cartesian position with covariance ``kappa * CRB`` at the estimate."""
    limits = compute_limits(params)
    r, v, theta = det.state
    clamped = False
    edge = np.pi / 2 - 1e-6
    if abs(theta) > edge:
        warnings.warn("azimuth clamped away from +-pi/2 for the covariance", stacklevel=2)
        theta_b = math.copysign(edge, theta)
        clamped = True
    else:
        theta_b = theta
    g = max(abs(det.gamma), 1e-300)
    # a noiseless cube gives sigma2_hat == 0; keep R positive definite
    sigma2_hat = max(sigma2_hat, 1e-12 * g * g)
    sp = SignalPoint(
        omega=det.omega, g=g, phi=float(np.angle(det.gamma)), sigma2=sigma2_hat,
        N=params.N, M=params.M, L=params.L,
    )
    R = kappa * crb_pxpy(sp, limits, r, theta_b)
    NML = params.N * params.M * params.L
    var_v = kappa * (limits.v_max / np.pi) ** 2 * 6 * sigma2_hat / (NML * g * g * (params.M**2 - 1))
    return Measurement(
        z=np.array([r * math.sin(theta), r * math.cos(theta)]),
        R=R, v_r=v, var_v=var_v, theta=theta, r=r, frame=frame,
        snr_db=det.snr_db, clamped=clamped,
    )


def cluster_measurements(
    meas: list[Measurement], gate: tuple[float, float] = (1.0, 0.5)
) -> list[Measurement]:
    """Single-linkage merge of measurements close in position and radial velocity.

    Each cluster becomes one measurement at the mean position and mean radial
    velocity, carrying the mean covariance of its members.
    """
    d_pos, d_vel = gate
    n = len(meas)
    if n < 2:
        return list(meas)
    Z = np.array([m.z for m in meas])
    V = np.array([m.v_r for m in meas])
    dist = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    link = (dist <= d_pos) & (np.abs(V[:, None] - V[None, :]) <= d_vel)
    ds = DisjointSet(range(n))
    for i, j in zip(*np.nonzero(np.triu(link, 1))):
        ds.merge(int(i), int(j))
    out = []
    for members in sorted(ds.subsets(), key=min):
        idx = sorted(members)
        if len(idx) == 1:
            out.append(meas[idx[0]])
            continue
        z = Z[idx].mean(axis=0)
        out.append(
            Measurement(
                z=z,
                R=np.mean([meas[i].R for i in idx], axis=0),
                v_r=float(V[idx].mean()),
                var_v=float(np.mean([meas[i].var_v for i in idx])),
                theta=math.atan2(z[0], z[1]),
                r=float(np.hypot(*z)),
                frame=meas[idx[0]].frame,
                snr_db=max(meas[i].snr_db for i in idx),
            )
        )
    return out
