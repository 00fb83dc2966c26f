"""Cell-averaging CFAR geometry and threshold multiplier for multi-snapshot spectra."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, stats


@dataclass
class CfarConfig:
    """CFAR and greedy-loop settings.

    ``train_band`` is the half-width of the outer training window per axis
    (guard cells included) and ``guard_band`` the half-width of the guard
    window, so the ring holds
    ``(2*tx+1)*(2*ty+1) - (2*gx+1)*(2*gy+1)`` cells; ``[5, 4]`` with
    ``[3, 3]`` gives 50.  ``p_fa`` is the design false-alarm probability of a
    whole frame; it is spread evenly over the ``N*M`` coarse cells.
    """

    p_fa: float = 0.01
    train_band: tuple[int, int] = (5, 4)
    guard_band: tuple[int, int] = (3, 3)
    alpha: float | None = None
    k_max: int = 30
    k_invalid: int = 3
    oversample: int = 4

    def __post_init__(self):
        self.train_band = tuple(int(b) for b in self.train_band)
        self.guard_band = tuple(int(b) for b in self.guard_band)
        if not 0 < self.p_fa < 1:
            raise ValueError("p_fa must lie in (0, 1)")
        if min(self.train_band + self.guard_band) < 0:
            raise ValueError("bands must be nonnegative")
        if any(t < g for t, g in zip(self.train_band, self.guard_band)):
            raise ValueError("training window must enclose the guard window")
        if self.n_train < 1:
            raise ValueError("CFAR ring has no training cells")
        if self.k_invalid < 1 or self.k_max < 1:
            raise ValueError("k_invalid and k_max must be >= 1")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha override must be positive")

    @property
    def n_train(self) -> int:
        (tx, ty), (gx, gy) = self.train_band, self.guard_band
        return (2 * tx + 1) * (2 * ty + 1) - (2 * gx + 1) * (2 * gy + 1)

    def multiplier(self, L: int, n_cells: int) -> float:
        """Threshold multiplier for ``L`` snapshots on a grid of ``n_cells`` cells."""
        if self.alpha is not None:
            return float(self.alpha)
        return cfar_threshold_multiplier(self.p_fa / n_cells, self.n_train, L)


@lru_cache(maxsize=64)
def cfar_threshold_multiplier(p_fa: float, n_train: int, L: int) -> float:
    """Multiplier ``alpha`` on the training-cell mean.

    Under noise only, the cell statistic ``sum_l |F_l|^2 / (N M)`` is
    ``sigma^2/2 * chi2(2L)``, so (CUT / training mean) is F-distributed with
    ``(2L, 2 L n_train)`` degrees of freedom.  ``alpha`` solves
    ``P(F > alpha) = p_fa``.
    """
    if n_train < 1 or L < 1:
        raise ValueError("n_train and L must be >= 1")
    if not 0 < p_fa < 1:
        raise ValueError("p_fa must lie in (0, 1)")
    dist = stats.f(2 * L, 2 * L * n_train)
    # log-space keeps the bracket well conditioned for p_fa ~ 1e-7
    target = np.log(p_fa)

    def gap(a):
        return dist.logsf(a) - target

    hi = 2.0
    while gap(hi) > 0:
        hi *= 2
        if hi > 1e12:
            raise RuntimeError("could not bracket the CFAR multiplier")
    root, info = optimize.brentq(gap, 1e-12, hi, xtol=1e-14, rtol=1e-13, full_output=True)
    if not info.converged:
        raise RuntimeError(f"CFAR multiplier root finder did not converge: {info.flag}")
    return float(root)


@lru_cache(maxsize=64)
def ring_offsets(train_band: tuple[int, int], guard_band: tuple[int, int]) -> np.ndarray:
    """Integer (dx, dy) offsets of the training ring around a cell."""
    (tx, ty), (gx, gy) = train_band, guard_band
    dx, dy = np.meshgrid(np.arange(-tx, tx + 1), np.arange(-ty, ty + 1), indexing="ij")
    keep = (np.abs(dx) > gx) | (np.abs(dy) > gy)
    return np.column_stack([dx[keep], dy[keep]])


def training_mean(power: np.ndarray, cell: tuple[int, int], cfg: CfarConfig) -> float:
    """Mean of the ring around ``cell`` on a circular 2D grid."""
    off = ring_offsets(cfg.train_band, cfg.guard_band)
    nx, ny = power.shape
    ix = (cell[0] + off[:, 0]) % nx
    iy = (cell[1] + off[:, 1]) % ny
    return float(power[ix, iy].mean())


def training_mean_map(power: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Ring mean at every cell (circular convolution)."""
    off = ring_offsets(cfg.train_band, cfg.guard_band)
    kernel = np.zeros(power.shape)
    kernel[(-off[:, 0]) % power.shape[0], (-off[:, 1]) % power.shape[1]] = 1.0 / len(off)
    return np.real(np.fft.ifft2(np.fft.fft2(power) * np.fft.fft2(kernel)))
