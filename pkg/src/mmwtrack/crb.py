"""Closed-form Cramer-Rao bounds for a single 3D complex sinusoid in white noise.

Parameter order of the Fisher matrix is ``[wx, wy, wz, phase, g, sigma2]``.
Downstream code only consumes the frequency block and its images under the
maps (w -> r, v, theta) and (r, theta -> px, py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal import RadarLimits


@dataclass(frozen=True)
class SignalPoint:
    omega: tuple[float, float, float]
    g: float
    phi: float
    sigma2: float
    N: int
    M: int
    L: int

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("amplitude modulus g must be positive")
        if not self.sigma2 > 0:
            raise ValueError("noise variance must be positive")

    @property
    def size(self) -> int:
        return self.N * self.M * self.L


def phi_matrix(N: int, M: int, L: int) -> np.ndarray:
    """Normalized 4x4 frequency/phase block of the Fisher matrix."""
    dims = (N - 1, M - 1, L - 1)
    P = np.empty((4, 4))
    for i, a in enumerate(dims):
        for j, b in enumerate(dims):
            P[i, j] = a * (2 * a + 1) / 6 if i == j else a * b / 4
        P[i, 3] = P[3, i] = a / 2
    P[3, 3] = 1.0
    return P


def fisher_matrix(p: SignalPoint) -> np.ndarray:
    scale = 2 * p.size * p.g**2 / p.sigma2
    F = np.zeros((6, 6))
    F[:4, :4] = scale * phi_matrix(p.N, p.M, p.L)
    # the amplitude derivative carries no g factor
    F[4, 4] = 2 * p.size / p.sigma2
    F[5, 5] = p.size / p.sigma2**2
    return F


def crb_freq(p: SignalPoint) -> np.ndarray:
    if min(p.N, p.M, p.L) < 2:
        raise ValueError("every dimension needs at least 2 samples to identify a frequency")
    base = 6 * p.sigma2 / (p.size * p.g**2)
    return base * np.diag([1 / (n * n - 1) for n in (p.N, p.M, p.L)])


def _cos_theta(theta: float) -> float:
    c = math.cos(theta)
    if abs(theta) >= math.pi / 2 or c <= 0:
        raise ValueError("azimuth bound is undefined at |theta| >= pi/2")
    return c


def crb_rvtheta(p: SignalPoint, limits: RadarLimits, theta: float | None = None) -> np.ndarray:
    """Bound on ``(r, v, theta)``.

    ``theta`` defaults to the azimuth implied by ``p.omega[2]``.
    """
    if theta is None:
        theta = math.asin(p.omega[2] / (2 * math.pi * limits.d_over_lambda))
    c = _cos_theta(theta)
    jac = np.array(
        [
            limits.r_max / (2 * math.pi),
            limits.v_max / math.pi,
            1 / (2 * math.pi * limits.d_over_lambda * c),
        ]
    )
    return crb_freq(p) * np.outer(jac, jac)


def crb_pxpy(p: SignalPoint, limits: RadarLimits, r: float, theta: float) -> np.ndarray:
    """Cartesian position bound, written out in closed form."""
    c = _cos_theta(theta)
    s = math.sin(theta)
    N, L = p.N, p.L
    if min(N, p.M, L) < 2:
        raise ValueError("every dimension needs at least 2 samples to identify a frequency")
    # general element spacing enters only through the angle term
    ang = 1 / ((2 * limits.d_over_lambda) ** 2 * (L * L - 1))
    rng_term = limits.r_max**2 / (4 * (N * N - 1))
    k = 6 * p.sigma2 / (math.pi**2 * p.size * p.g**2)
    xx = rng_term * s * s + r * r * ang
    yy = rng_term * c * c + r * r * (s / c) ** 2 * ang
    xy = (rng_term - r * r * ang / (c * c)) * s * c
    return k * np.array([[xx, xy], [xy, yy]])


def velocity_bound(p: SignalPoint, limits: RadarLimits) -> float:
    return (limits.v_max / math.pi) ** 2 * 6 * p.sigma2 / (p.size * p.g**2 * (p.M**2 - 1))


def crb_pxpyv(p: SignalPoint, limits: RadarLimits, r: float, theta: float) -> np.ndarray:
    out = np.zeros((3, 3))
    out[:2, :2] = crb_pxpy(p, limits, r, theta)
    out[2, 2] = velocity_bound(p, limits)
    return out
