"""Streamlined 2D multi-snapshot NOMP with CFAR stopping.

The cube is treated as L snapshots of a 2D (fast time x slow time) line
spectrum.  Components are added greedily from the argmax of the residue
periodogram, refined off-grid by Newton steps, and tested against a
cell-averaging threshold on the critically sampled residue spectrum.  There
is no backward (pruning) pass: candidates that fail the test are kept
provisionally, and the loop stops after ``k_invalid`` consecutive failures,
dropping exactly those trailing failures.  A pass after a failure therefore
keeps the earlier (possibly masked) candidate.

The raw spectrum is computed by a single zero-padded FFT; every residue
spectrum afterwards comes from :func:`residue_spectrum`.
"""

from __future__ import annotations

import logging

import numpy as np

from ..signal import BasebandCube, RadarParams, compute_limits
from .cfar import CfarConfig, training_mean
from .measurement import Detection, freq_to_state, wrap_half_open
from .spectral import (
    TWO_PI,
    azimuth_ls,
    newton_refine_2d,
    objective,
    oversampled_spectrum,
    remove_components,
    residue_spectrum,
    snapshot_power,
    spectrum_grid,
)

log = logging.getLogger(__name__)

SINGLE_STEPS = 3
# cyclic passes stop once no frequency moves by more than CYCLIC_TOL rad
CYCLIC_ROUNDS = 10
CYCLIC_STEPS = 1
CYCLIC_TOL = 1e-7
FINAL_ROUNDS = 2
# residual energy (relative to the input) below which nothing is left to fit
EXHAUSTED = 1e-20


def cube_snapshots(cube: BasebandCube) -> np.ndarray:
    """(N, M, L) cube data as (L, N, M) snapshots."""
    return np.ascontiguousarray(np.moveaxis(np.asarray(cube.data, dtype=complex), 2, 0))


class _Greedy:
    def __init__(self, Y: np.ndarray, cfg: CfarConfig):
        self.Y = Y
        self.L, self.N, self.M = Y.shape
        self.cfg = cfg
        self.os = cfg.oversample
        self.spec = oversampled_spectrum(Y, self.os)
        self.grid = spectrum_grid(self.N, self.M, self.os)
        self.omegas = np.zeros((0, 2))
        self.gains = np.zeros((0, self.L), dtype=complex)

    @property
    def K(self) -> int:
        return len(self.omegas)

    def atoms(self) -> np.ndarray:
        n, m = np.arange(self.N), np.arange(self.M)
        ax = np.exp(1j * np.outer(self.omegas[:, 0], n))
        ay = np.exp(1j * np.outer(self.omegas[:, 1], m))
        return np.einsum("kn,km->knm", ax, ay).reshape(self.K, -1)

    def atom(self, k: int) -> np.ndarray:
        wx, wy = self.omegas[k]
        return np.outer(np.exp(1j * wx * np.arange(self.N)), np.exp(1j * wy * np.arange(self.M)))

    def residue(self) -> np.ndarray:
        return remove_components(self.Y, self.gains, self.omegas)

    def residue_spectrum(self) -> np.ndarray:
        dets = [(self.gains[k], *self.omegas[k]) for k in range(self.K)]
        return residue_spectrum(self.spec, dets, self.grid, self.N, self.M)

    def solve_gains(self) -> None:
        if self.K == 0:
            return
        A = self.atoms().T  # (NM, K)
        B = self.Y.reshape(self.L, -1).T  # (NM, L)
        G, *_ = np.linalg.lstsq(A, B, rcond=None)
        self.gains = G

    def refine(self, k: int, Yr: np.ndarray, steps: int) -> np.ndarray:
        """Newton-refine component ``k`` against the residue; returns new residue."""
        Yc = Yr + self.gains[k][:, None, None] * self.atom(k)
        for _ in range(steps):
            wx, wy, g = newton_refine_2d(Yc, self.omegas[k])
            self.omegas[k] = (wx, wy)
            self.gains[k] = g
        return Yc - self.gains[k][:, None, None] * self.atom(k)

    def cyclic(self, Yr: np.ndarray, rounds: int, steps: int = 1, tol: float = 0.0) -> np.ndarray:
        for _ in range(rounds):
            before = self.omegas.copy()
            for k in range(self.K):
                Yr = self.refine(k, Yr, steps)
            moved = np.abs((self.omegas - before + np.pi) % TWO_PI - np.pi)
            if self.K and moved.max() <= tol:
                break
        return Yr

    def add_from_spectrum(self, spec_r: np.ndarray, Yr: np.ndarray) -> np.ndarray:
        power = snapshot_power(spec_r, self.N, self.M)
        ix, iy = np.unravel_index(int(np.argmax(power)), power.shape)
        w = (self.grid[0][ix], self.grid[1][iy])
        g = spec_r[:, ix, iy] / (self.N * self.M)
        self.omegas = np.vstack([self.omegas, w])
        self.gains = np.vstack([self.gains, g])
        return Yr - g[:, None, None] * self.atom(self.K - 1)

    def coarse_cell(self, k: int) -> tuple[int, int]:
        wx, wy = self.omegas[k]
        return (
            int(np.rint(wx * self.N / TWO_PI)) % self.N,
            int(np.rint(wy * self.M / TWO_PI)) % self.M,
        )

    def statistic(self, k: int, Yr: np.ndarray) -> float:
        """Cell statistic of component ``k`` (added back) at its nearest coarse bin."""
        cx, cy = self.coarse_cell(k)
        Yc = Yr + self.gains[k][:, None, None] * self.atom(k)
        return objective(Yc, (TWO_PI * cx / self.N, TWO_PI * cy / self.M), derivatives=False)[0]

    def cfar_pass(self, k: int, Yr: np.ndarray, crit_power: np.ndarray, alpha: float) -> bool:
        mean = training_mean(crit_power, self.coarse_cell(k), self.cfg)
        return self.statistic(k, Yr) > alpha * mean

    def crit_power(self, spec_r: np.ndarray) -> np.ndarray:
        return snapshot_power(spec_r[:, :: self.os, :: self.os], self.N, self.M)

    def drop(self, keep: int) -> None:
        self.omegas = self.omegas[:keep]
        self.gains = self.gains[:keep]


def _energy(Y: np.ndarray) -> float:
    return float(np.vdot(Y, Y).real)


def mnomp_detect(
    cube: BasebandCube,
    cfg: CfarConfig,
    params: RadarParams | None = None,
    *,
    history: list | None = None,
) -> tuple[list[Detection], float]:
    """Detect and super-resolve targets in one cube.

    Returns the kept detections (strongest first in order of extraction) and
    the residual noise variance estimate.  If ``history`` is a list, the
    residual energy after each greedy iteration is appended to it.
    """
    params = params or cube.params
    if params is None:
        raise ValueError("radar parameters are required (pass params or attach them to the cube)")
    Y = cube_snapshots(cube)
    L, N, M = Y.shape
    if (N, M, L) != params.shape:
        raise ValueError(f"cube shape {(N, M, L)} does not match radar {params.shape}")
    alpha = cfg.multiplier(L, N * M)
    state = _Greedy(Y, cfg)
    E0 = _energy(Y)
    Yr = Y.copy()
    spec_r = state.spec
    passed: list[bool] = []
    fails = 0
    while state.K < cfg.k_max:
        if _energy(Yr) <= EXHAUSTED * E0 or E0 == 0:
            break
        Yr = state.add_from_spectrum(spec_r, Yr)
        k = state.K - 1
        Yr = state.refine(k, Yr, SINGLE_STEPS)
        Yr = state.cyclic(Yr, CYCLIC_ROUNDS, CYCLIC_STEPS, CYCLIC_TOL)
        state.solve_gains()
        Yr = state.residue()
        spec_r = state.residue_spectrum()
        ok = state.cfar_pass(k, Yr, state.crit_power(spec_r), alpha)
        passed.append(ok)
        if history is not None:
            history.append(_energy(Yr))
        if ok:
            fails = 0
        else:
            fails += 1
            if fails >= cfg.k_invalid:
                break

    keep = len(passed)
    while keep and not passed[keep - 1]:
        keep -= 1
    if keep < state.K:
        state.drop(keep)
        state.solve_gains()
        Yr = state.residue()
    if state.K:
        Yr = state.cyclic(Yr, FINAL_ROUNDS)
        state.solve_gains()
        Yr = state.residue()
    sigma2 = _energy(Yr) / Yr.size

    crit = state.crit_power(state.residue_spectrum()) if state.K else None
    limits = compute_limits(params)
    detections = []
    for k in range(state.K):
        ok = state.cfar_pass(k, Yr, crit, alpha)
        detections.append(_make_detection(state.omegas[k], state.gains[k], sigma2, N, M, limits, ok))
    log.debug("mnomp: %d candidates tried, %d kept", len(passed), len(detections))
    return detections, sigma2


def _make_detection(omega, gains, sigma2, N, M, limits, passed) -> Detection:
    wz, gamma = azimuth_ls(gains)
    wx = float(omega[0]) % TWO_PI
    wy = wrap_half_open(float(omega[1]))
    if gamma == 0:
        snr = -np.inf
    else:
        snr = 10 * np.log10(N * M * abs(gamma) ** 2 / sigma2) if sigma2 > 0 else np.inf
    return Detection(
        omega=(wx, wy, wz),
        gains=np.array(gains, dtype=complex),
        gamma=gamma,
        state=freq_to_state((wx, wy, wz), limits),
        snr_db=float(snr),
        passed_threshold=bool(passed),
    )
