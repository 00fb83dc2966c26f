"""Range-Doppler FFT with 2D cell-averaging CFAR (on-grid baseline)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..signal import BasebandCube, RadarParams, compute_limits
from .cfar import CfarConfig, training_mean_map
from .mnomp import _make_detection, cube_snapshots
from .measurement import Detection


def fft_cfar_detect(
    cube: BasebandCube, cfg: CfarConfig, params: RadarParams | None = None
) -> tuple[list[Detection], float]:
    """Detect local maxima of the antenna-averaged periodogram above the CFAR threshold.

    Frequencies are the bin centres of the critically sampled grid.  The
    noise variance is estimated from the cells outside every detection's
    guard window.
    """
    params = params or cube.params
    if params is None:
        raise ValueError("radar parameters are required (pass params or attach them to the cube)")
    Y = cube_snapshots(cube)
    L, N, M = Y.shape
    if (N, M, L) != params.shape:
        raise ValueError(f"cube shape {(N, M, L)} does not match radar {params.shape}")
    F = np.fft.fft2(Y, axes=(1, 2))
    power = np.einsum("lxy,lxy->xy", F, F.conj()).real / (N * M)
    alpha = cfg.multiplier(L, N * M)
    hits = power > alpha * training_mean_map(power, cfg)
    peaks = power == ndimage.maximum_filter(power, size=3, mode="wrap")
    cells = np.argwhere(hits & peaks)
    order = np.argsort(-power[cells[:, 0], cells[:, 1]], kind="stable")
    cells = cells[order][: cfg.k_max]

    gx, gy = cfg.guard_band
    quiet = np.ones_like(hits)
    for kx, ky in cells:
        quiet[np.ix_(np.arange(kx - gx, kx + gx + 1) % N, np.arange(ky - gy, ky + gy + 1) % M)] = False
    sigma2 = float(power[quiet].mean() / L) if quiet.any() else float(power.mean() / L)

    limits = compute_limits(params)
    out = []
    for kx, ky in cells:
        omega = (2 * np.pi * kx / N, 2 * np.pi * ky / M)
        out.append(_make_detection(omega, F[:, kx, ky] / (N * M), sigma2, N, M, limits, True))
    return out, sigma2
