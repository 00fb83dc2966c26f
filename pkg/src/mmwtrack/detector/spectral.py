"""Spectral primitives for multi-snapshot line spectral estimation.

Snapshots are stored as an array ``Y`` of shape ``(L, N, M)``.  The
"spectrum" of a snapshot at ``(wx, wy)`` is the correlation
``sum_{n,m} Y[n, m] exp(-j (n wx + m wy))``, which on the grid
``2 pi k / (os N)`` is exactly ``numpy.fft.fft2`` with zero padding.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

TWO_PI = 2 * np.pi


def dirichlet(delta: np.ndarray, n: int) -> np.ndarray:
    """``sum_{k<n} exp(-j k delta)`` in closed form.

    Equals ``(1 - e^{-j n delta}) / (1 - e^{-j delta})`` away from multiples
    of 2 pi and ``n`` on them.
    """
    d = (np.asarray(delta, dtype=float) + np.pi) % TWO_PI - np.pi
    half = np.sin(d / 2)
    zero = half == 0
    ratio = np.sin(n * d / 2) / np.where(zero, 1.0, half)
    ratio = np.where(zero, float(n), ratio)
    return np.exp(-0.5j * (n - 1) * d) * ratio


def spectrum_grid(N: int, M: int, oversample: int) -> tuple[np.ndarray, np.ndarray]:
    return (
        TWO_PI * np.arange(oversample * N) / (oversample * N),
        TWO_PI * np.arange(oversample * M) / (oversample * M),
    )


def oversampled_spectrum(Y: np.ndarray, oversample: int) -> np.ndarray:
    _, N, M = Y.shape
    return np.fft.fft2(Y, s=(oversample * N, oversample * M), axes=(1, 2))


def atom(wx: float, wy: float, N: int, M: int) -> np.ndarray:
    """``a_N(wx) a_M(wy)^T`` as an (N, M) array."""
    return np.outer(np.exp(1j * wx * np.arange(N)), np.exp(1j * wy * np.arange(M)))


def remove_components(
    Y: np.ndarray, gains: np.ndarray, omegas: np.ndarray
) -> np.ndarray:
    """Time-domain residue ``Y_l - sum_k g_{k,l} a_N(wx_k) a_M(wy_k)^T``."""
    _, N, M = Y.shape
    if len(omegas) == 0:
        return Y.copy()
    omegas = np.asarray(omegas, dtype=float).reshape(-1, 2)
    ax = np.exp(1j * np.outer(omegas[:, 0], np.arange(N)))
    ay = np.exp(1j * np.outer(omegas[:, 1], np.arange(M)))
    G = np.asarray(gains).reshape(len(omegas), -1)  # (K, L)
    # (L, N, K) @ (K, M): one matmul per snapshot
    return Y - (ax.T[None, :, :] * G.T[:, None, :]) @ ay


def residue_spectrum(
    spectra: np.ndarray,
    detections: Sequence[tuple[np.ndarray, float, float]],
    grid: tuple[np.ndarray, np.ndarray],
    N: int,
    M: int,
) -> np.ndarray:
    """Spectrum of the residue, updated from the raw spectrum without an FFT.

    Parameters
    ----------
    spectra : (L, Gx, Gy) complex
        Spectrum of each raw snapshot evaluated on ``grid``.
    detections : sequence of (gains, wx, wy)
        ``gains`` is the length-L complex gain vector of each component.
    grid : (wx_grid, wy_grid)
        Frequencies of the spectrum axes.
    """
    out = np.array(spectra, dtype=complex, copy=True)
    if len(detections) == 0:
        return out
    wx_grid, wy_grid = grid
    G = np.array([np.asarray(d[0]) for d in detections])  # (K, L)
    wx = np.array([d[1] for d in detections])
    wy = np.array([d[2] for d in detections])
    Dx = dirichlet(wx_grid[None, :] - wx[:, None], N)  # (K, Gx)
    Dy = dirichlet(wy_grid[None, :] - wy[:, None], M)  # (K, Gy)
    for l in range(out.shape[0]):
        out[l] -= (Dx.T * G[:, l]) @ Dy
    return out


def snapshot_power(spectra: np.ndarray, N: int, M: int) -> np.ndarray:
    """``sum_l |F_l|^2 / (N M)`` over snapshots."""
    return (spectra.real**2 + spectra.imag**2).sum(axis=0) / (N * M)


def objective(Yc: np.ndarray, omega: Sequence[float], derivatives: bool = True):
    """Multi-snapshot objective ``S(w) = sum_l |a(w)^H Y_l|^2 / (N M)``.

    Returns ``(S, grad, hess, c)`` where ``c[l] = a(w)^H Y_l``; ``grad`` and
    ``hess`` are ``None`` when ``derivatives`` is false.
    """
    _, N, M = Yc.shape
    wx, wy = omega
    n = np.arange(N)
    m = np.arange(M)
    ex = np.exp(-1j * wx * n)
    ey = np.exp(-1j * wy * m)
    if not derivatives:
        c = (Yc @ ey) @ ex
        return float(np.sum(np.abs(c) ** 2) / (N * M)), None, None, c
    Bx = np.stack([ex, -1j * n * ex, -(n**2) * ex])
    By = np.stack([ey, -1j * m * ey, -(m**2) * ey])
    T = Bx @ (Yc @ By.T)  # (L, 3, 3)
    c = T[:, 0, 0]
    d1 = (T[:, 1, 0], T[:, 0, 1])
    d2 = ((T[:, 2, 0], T[:, 1, 1]), (T[:, 1, 1], T[:, 0, 2]))
    scale = 2.0 / (N * M)
    grad = np.array([scale * np.real(np.vdot(c, d1[i])) for i in range(2)])
    hess = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            hess[i, j] = scale * np.real(np.vdot(d1[i], d1[j]) + np.vdot(c, d2[i][j]))
    return float(np.sum(np.abs(c) ** 2) / (N * M)), grad, hess, c


def newton_refine_2d(
    Yc: np.ndarray, omega: Sequence[float], max_halvings: int = 10
) -> tuple[float, float, np.ndarray]:
    """One damped Newton step on ``S`` for a single component.

    ``Yc`` is the residue with this component added back.  The step is taken
    only where ``S`` is locally concave, and is halved until ``S``
    increases (at most ``max_halvings`` times); otherwise ``omega`` is kept.
    Gains are re-solved by least squares at the returned frequency.
    """
    _, N, M = Yc.shape
    w = np.array(omega, dtype=float)
    S0, grad, hess, c = objective(Yc, w)
    det = np.linalg.det(hess)
    scale = max(np.max(np.abs(hess)), 1e-300)
    concave = hess[0, 0] < 0 and det > 0
    if abs(det) <= 1e-14 * scale * scale or not concave:
        return float(w[0]) % TWO_PI, float(w[1]) % TWO_PI, c / (N * M)
    step = -np.linalg.solve(hess, grad)
    for _ in range(max_halvings + 1):
        trial = w + step
        S1, _, _, c1 = objective(Yc, trial, derivatives=False)
        if S1 > S0:
            return float(trial[0]) % TWO_PI, float(trial[1]) % TWO_PI, c1 / (N * M)
        step = step / 2
    return float(w[0]) % TWO_PI, float(w[1]) % TWO_PI, c / (N * M)


def azimuth_ls(gains: np.ndarray, grid_factor: int = 32, newton_steps: int = 5) -> tuple[float, complex]:
    """Fit ``gamma * a_L(wz)`` to a gain vector by least squares.

    A zero-padded periodogram gives the starting point, then Newton steps
    on ``|a_L(w)^H g|^2`` polish it.  Returns ``(wz in (-pi, pi], gamma)``.
    """
    g = np.asarray(gains, dtype=complex).ravel()
    L = g.size
    if L < 2:
        raise ValueError("azimuth needs at least two antennas")
    size = max(grid_factor * L, 64)
    spec = np.fft.fft(g, size)
    w = TWO_PI * int(np.argmax(np.abs(spec))) / size
    l = np.arange(L)

    def parts(w):
        e = np.exp(-1j * w * l)
        c0 = np.dot(e, g)
        c1 = np.dot(-1j * l * e, g)
        c2 = np.dot(-(l**2) * e, g)
        P = abs(c0) ** 2
        dP = 2 * np.real(np.conj(c0) * c1)
        d2P = 2 * np.real(np.conj(c1) * c1 + np.conj(c0) * c2)
        return P, dP, d2P, c0

    P, dP, d2P, c0 = parts(w)
    for _ in range(newton_steps):
        if d2P >= 0:
            break
        step = -dP / d2P
        for _ in range(11):
            P1, dP1, d2P1, c01 = parts(w + step)
            if P1 >= P:
                break
            step /= 2
        else:
            break
        w, P, dP, d2P, c0 = w + step, P1, dP1, d2P1, c01
        if abs(step) < 1e-15:
            break
    wz = float(np.pi - (np.pi - w) % TWO_PI)
    return wz, complex(np.vdot(np.exp(1j * wz * l), g) / L)
