"""Measurement gating and sum-product data association.

Tracks are indexed ``k = 1..K`` and measurements ``h = 1..H``; column 0 of
``beta`` is the missed-detection hypothesis and column 0 of ``xi`` the clutter
(or new target) hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .detector.measurement import Measurement

H_POS = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])


@dataclass
class AssocConfig:
    p_d: float = 0.9
    mu_c: float = 4.0
    # clutter spatial density, 1 / ROI area
    f_c: float = 1.0 / 3600.0
    p_g: float = 0.95
    n_iter: int = 10
    gate_mode: str = "3d"
    # stop early once no message moves by more than this (None: run n_iter)
    tol: float | None = None

    def __post_init__(self):
        if not 0 < self.p_d < 1:
            raise ValueError("p_d must lie in (0, 1)")
        if not 0 < self.p_g < 1:
            raise ValueError("p_g must lie in (0, 1)")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        # a zero clutter hypothesis forces every measurement onto some track
        # and leaves no way to start a new one
        if not (self.mu_c > 0 and self.f_c > 0):
            raise ValueError("clutter rate and density must be positive")
        self.gate_mode = str(self.gate_mode).lower()
        if self.gate_mode not in ("2d", "3d"):
            raise ValueError("gate_mode must be '2d' or '3d'")


@dataclass
class AssocResult:
    beta: np.ndarray  # (K, H+1)
    xi: np.ndarray  # (H, K+1)
    gates: np.ndarray  # (K, H) bool
    iterations: int = 0


def gate_threshold(p_g: float, dof: int) -> float:
    return float(stats.chi2.ppf(p_g, dof))


def _mahalanobis(e: np.ndarray, S: np.ndarray) -> float:
    try:
        c = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is not positive definite") from exc
    u = np.linalg.solve(c, e)
    return float(u @ u)


def radial_row(theta: float) -> np.ndarray:
    """Row mapping the state to the radial velocity seen at azimuth ``theta``."""
    return np.array([0.0, np.sin(theta), 0.0, np.cos(theta)])


def distance_2d(meas: Measurement, pred: tuple[np.ndarray, np.ndarray]) -> float:
    x, P = pred
    S = H_POS @ P @ H_POS.T + meas.R
    return _mahalanobis(meas.z - H_POS @ x, S)


def distance_3d(meas: Measurement, pred: tuple[np.ndarray, np.ndarray], theta: float) -> float:
    x, P = pred
    H = np.vstack([H_POS, radial_row(theta)])
    S = H @ P @ H.T + meas.R3
    e = np.append(meas.z, meas.v_r) - H @ x
    return _mahalanobis(e, S)


def gate_2d(meas: Measurement, pred: tuple[np.ndarray, np.ndarray], p_g: float) -> bool:
    return distance_2d(meas, pred) <= gate_threshold(p_g, 2)


def gate_3d(
    meas: Measurement, pred: tuple[np.ndarray, np.ndarray], theta: float, p_g: float
) -> bool:
    """Position plus radial-velocity gate; ``theta`` is the track's azimuth estimate."""
    return distance_3d(meas, pred, theta) <= gate_threshold(p_g, 3)


def position_likelihood(meas: Measurement, pred: tuple[np.ndarray, np.ndarray]) -> float:
    x, P = pred
    S = H_POS @ P @ H_POS.T + meas.R
    return float(stats.multivariate_normal.pdf(meas.z, mean=H_POS @ x, cov=S))


def compute_gates(
    preds: Sequence[tuple[np.ndarray, np.ndarray]],
    measurements: Sequence[Measurement],
    cfg: AssocConfig,
    thetas: Sequence[float] | None = None,
) -> np.ndarray:
    gates = np.zeros((len(preds), len(measurements)), dtype=bool)
    for k, pred in enumerate(preds):
        for h, meas in enumerate(measurements):
            if cfg.gate_mode == "3d":
                if thetas is None:
                    raise ValueError("3d gating needs a per-track azimuth")
                gates[k, h] = gate_3d(meas, pred, thetas[k], cfg.p_g)
            else:
                gates[k, h] = gate_2d(meas, pred, cfg.p_g)
    return gates


def init_messages(
    preds: Sequence[tuple[np.ndarray, np.ndarray]],
    measurements: Sequence[Measurement],
    cfg: AssocConfig,
    thetas: Sequence[float] | None = None,
    gates: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Initial association weights ``(beta0, xi0, gates)``.

    ``beta0[k, h]`` is ``p_d`` times the predicted position likelihood of
    measurement ``h`` for in-gate pairs and zero otherwise;
    ``beta0[k, 0] = 1 - p_d``.  ``xi0`` is the in-gate indicator with the
    clutter intensity ``mu_c * f_c`` in column 0.
    """
    K, H = len(preds), len(measurements)
    if gates is None:
        gates = compute_gates(preds, measurements, cfg, thetas)
    beta0 = np.zeros((K, H + 1))
    beta0[:, 0] = 1 - cfg.p_d
    xi0 = np.zeros((H, K + 1))
    xi0[:, 0] = cfg.mu_c * cfg.f_c
    for k, h in zip(*np.nonzero(gates)):
        beta0[k, h + 1] = cfg.p_d * position_likelihood(measurements[h], preds[k])
        xi0[h, k + 1] = 1.0
    return beta0, xi0, gates


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _normalize_rows(W: np.ndarray) -> np.ndarray:
    W = W.copy()
    s = W.sum(axis=1)
    # a row with no mass anywhere can only be the null hypothesis
    empty = s <= 0
    W[empty, 0] = 1.0
    s[empty] = 1.0
    return W / s[:, None]


def spa_iterate(
    beta0: np.ndarray,
    xi0: np.ndarray,
    n_iter: int = 10,
    tol: float | None = None,
    gates: np.ndarray | None = None,
) -> AssocResult:
    """Loopy belief propagation on the bipartite association graph.

    Returns normalized marginals ``beta`` (per track, over measurements and
    miss) and ``xi`` (per measurement, over tracks and clutter).
    """
    beta0 = np.asarray(beta0, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    K, H = beta0.shape[0], xi0.shape[0]
    if beta0.shape != (K, H + 1) or xi0.shape != (H, K + 1):
        raise ValueError("beta0 must be K x (H+1) and xi0 H x (K+1)")
    if np.any(beta0 < 0) or np.any(xi0 < 0):
        raise ValueError("association weights must be nonnegative")
    if np.any(beta0[:, 0] <= 0):
        raise ValueError("every track needs positive missed-detection weight")
    if np.any(xi0[:, 0] <= 0):
        raise ValueError("every measurement needs positive clutter weight")
    if gates is None:
        gates = beta0[:, 1:] > 0
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")

    B = beta0[:, 1:]  # (K, H)
    X = xi0[:, 1:].T  # (K, H), measurement-side weights laid out like B
    delta = B / beta0[:, :1]
    v = np.zeros((K, H))
    done = 0
    for done in range(1, n_iter + 1):
        # measurement -> track: exclude the receiving track from the sum
        tot = (X * delta).sum(axis=0)  # (H,)
        v = _safe_div(X, xi0[:, 0][None, :] + tot[None, :] - X * delta)
        # track -> measurement: exclude the receiving measurement
        tot_b = (B * v).sum(axis=1)  # (K,)
        new_delta = B / (beta0[:, :1] + tot_b[:, None] - B * v)
        change = np.max(np.abs(new_delta - delta)) if delta.size else 0.0
        delta = new_delta
        if tol is not None and change < tol:
            break

    beta = _normalize_rows(np.hstack([beta0[:, :1], B * v]))
    xi = _normalize_rows(np.hstack([xi0[:, :1], (X * delta).T]))
    return AssocResult(beta=beta, xi=xi, gates=np.asarray(gates, dtype=bool), iterations=done)


def associate(
    preds: Sequence[tuple[np.ndarray, np.ndarray]],
    measurements: Sequence[Measurement],
    cfg: AssocConfig,
    thetas: Sequence[float] | None = None,
) -> AssocResult:
    beta0, xi0, gates = init_messages(preds, measurements, cfg, thetas)
    return spa_iterate(beta0, xi0, cfg.n_iter, cfg.tol, gates)
