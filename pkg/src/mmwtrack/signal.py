"""Radar parameterization, truth simulation and baseband cube synthesis.

The baseband model is a sum of 3D complex sinusoids over fast time (n),
slow time (m) and antenna (l), plus circular white Gaussian noise.  Target
states map to angular frequencies through

    omega_x = 2*pi*r / r_max
    omega_y = pi*v / v_max          (wrapped into [-pi, pi))
    omega_z = 2*pi*(d/lambda)*sin(theta)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class RadarParams:
    """Waveform and array constants of an LFMCW radar.

    ``T_ramp`` defaults to ``N * T_s`` and ``T_idle`` to ``T_r - T_ramp``;
    ``d`` defaults to half a wavelength.
    """

    f_c: float
    mu: float
    T_s: float
    T_r: float
    N: int
    M: int
    L: int
    T_frame: float = 0.1
    T_ramp: float | None = None
    T_idle: float | None = None
    d: float | None = None

    def __post_init__(self):
        if self.T_ramp is None:
            object.__setattr__(self, "T_ramp", self.N * self.T_s)
        if self.T_idle is None:
            object.__setattr__(self, "T_idle", max(self.T_r - self.T_ramp, 0.0))
        if self.d is None:
            object.__setattr__(self, "d", self.wavelength / 2)
        for name in ("f_c", "mu", "T_s", "T_r", "T_frame", "T_ramp", "d"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        for name in ("N", "M", "L"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.T_r < self.T_ramp * (1 - 1e-12):
            raise ValueError("chirp interval T_r must not be shorter than T_ramp")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.M, self.L)

    @classmethod
    def simulation(cls, **overrides) -> "RadarParams":
        """Desk-simulation radar: 128x64x8 cube, r_max = 100 m, T_r = 160 us.

        The chirp slope is back-derived from r_max and the sample interval
        (T_s = T_ramp / N), since only the limits are published.
        """
        N, T_ramp, r_max = 128, 60e-6, 100.0
        T_s = T_ramp / N
        kw = dict(
            f_c=77e9,
            mu=SPEED_OF_LIGHT / (2 * r_max * T_s),
            T_s=T_s,
            T_r=160e-6,
            N=N,
            M=64,
            L=8,
            T_frame=0.1,
            T_ramp=T_ramp,
            T_idle=100e-6,
        )
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def awr1642(cls, **overrides) -> "RadarParams":
        """Parameters of the AWR1642 capture setup (4 receivers)."""
        kw = dict(
            f_c=77e9,
            mu=8.012e12,
            T_s=1 / 5e6,
            T_r=59e-6,
            N=128,
            M=64,
            L=4,
            T_frame=0.1,
            T_ramp=56e-6,
            T_idle=3e-6,
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class RadarLimits:
    r_max: float
    r_res: float
    v_max: float
    v_res: float
    theta_max: float
    theta_res: float
    # element spacing in wavelengths; 0.5 for a half-wavelength array
    d_over_lambda: float = 0.5


def compute_limits(params: RadarParams) -> RadarLimits:
    """Unambiguous limits and resolutions of range, radial velocity and azimuth."""
    lam = params.wavelength
    return RadarLimits(
        r_max=SPEED_OF_LIGHT / (2 * params.mu * params.T_s),
        r_res=SPEED_OF_LIGHT / (2 * params.mu * params.T_ramp),
        v_max=lam / (4 * params.T_r),
        v_res=lam / (2 * params.M * params.T_r),
        theta_max=math.asin(min(1.0, lam / (2 * params.d))),
        theta_res=lam / (params.L * params.d),
        d_over_lambda=params.d / lam,
    )


@dataclass
class TruthTarget:
    label: int
    x: np.ndarray  # [px, vx, py, vy]
    gamma: complex = 1.0 + 0j

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(4)


@dataclass
class BasebandCube:
    """One frame of baseband samples, shape (N, M, L)."""

    data: np.ndarray
    noise_var: float | None = None
    params: RadarParams | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("cube data must be 3-dimensional (N, M, L)")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("cube data contains non-finite samples")
        if self.params is not None and self.data.shape != self.params.shape:
            raise ValueError(
                f"cube shape {self.data.shape} does not match radar {self.params.shape}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class ScenarioConfig:
    roi: tuple[float, float, float, float] = (-30.0, 30.0, 0.0, 60.0)
    n_targets: int = 6
    init_pos: tuple[float, float, float, float] = (-10.0, 10.0, 6.0, 24.0)
    init_vel: tuple[float, float, float, float] = (-3.0, 3.0, -1.0, 5.0)
    T_frame: float = 0.1
    n_frames: int = 60
    q: tuple[float, float] = (1e-6, 1e-6)
    mu_c: float = 4.0
    # one value for all targets, or one per target
    snr_db: float | list[float] = 19.0
    seed: int = 0

    def __post_init__(self):
        x0, x1, y0, y1 = self.roi
        if not (x1 > x0 and y1 > y0):
            raise ValueError("roi must be a nonempty rectangle")
        for name in ("init_pos", "init_vel"):
            a0, a1, b0, b1 = getattr(self, name)
            if a1 < a0 or b1 < b0:
                raise ValueError(f"{name} ranges must be nonempty")
        if self.mu_c < 0:
            raise ValueError("mu_c must be nonnegative")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.n_targets < 0:
            raise ValueError("n_targets must be nonnegative")
        if min(self.q) < 0:
            raise ValueError("process noise must be nonnegative")
        if not np.isscalar(self.snr_db) and len(self.snr_db) != self.n_targets:
            raise ValueError("snr_db list must have one entry per target")

    def target_snr_db(self, k: int) -> float:
        if np.isscalar(self.snr_db):
            return float(self.snr_db)
        return float(self.snr_db[k])

    @property
    def roi_area(self) -> float:
        x0, x1, y0, y1 = self.roi
        return (x1 - x0) * (y1 - y0)


@dataclass
class Scenario:
    """Output of :func:`generate_scenario`.

    ``clutter[t]`` is an array of rows ``(px, py, v_r)``.
    """

    truth: list[list[TruthTarget]]
    clutter: list[np.ndarray] = field(default_factory=list)


def cv_matrices(T: float) -> tuple[np.ndarray, np.ndarray]:
    """Constant-velocity transition ``A`` and white-acceleration gain ``Gamma``."""
    A = np.array(
        [[1.0, T, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, T], [0.0, 0.0, 0.0, 1.0]]
    )
    Gamma = np.array([[T * T / 2, 0.0], [T, 0.0], [0.0, T * T / 2], [0.0, T]])
    return A, Gamma


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(Q)
    return V * np.sqrt(np.clip(w, 0.0, None))


def propagate_targets(
    targets: Sequence[TruthTarget],
    A: np.ndarray,
    Gamma: np.ndarray,
    Q: np.ndarray,
    rng: np.random.Generator,
) -> list[TruthTarget]:
    """Advance every target one frame: ``x <- A x + Gamma w``, ``w ~ N(0, Q)``."""
    root = _psd_sqrt(np.asarray(Q, dtype=float))
    out = []
    for tgt in targets:
        w = root @ rng.standard_normal(root.shape[1])
        out.append(replace(tgt, x=A @ tgt.x + Gamma @ w))
    return out


def state_to_polar(x: np.ndarray) -> tuple[float, float, float]:
    """Range, radial velocity and azimuth (measured from boresight +y) of a state."""
    px, vx, py, vy = x
    r = math.hypot(px, py)
    theta = math.atan2(px, py)
    v = vx * math.sin(theta) + vy * math.cos(theta)
    return r, v, theta


def wrap_pi(w):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(w) + np.pi) % (2 * np.pi) - np.pi


def state_to_freq(
    r: float, v: float, theta: float, limits: RadarLimits
) -> tuple[float, float, float]:
    """Angular frequencies (per sample) of a target at ``(r, v, theta)``."""
    wx = 2 * np.pi * r / limits.r_max
    wy = float(wrap_pi(np.pi * v / limits.v_max))
    wz = 2 * np.pi * limits.d_over_lambda * math.sin(theta)
    return wx, wy, wz


def steering(w: float, n: int) -> np.ndarray:
    """Array manifold ``[1, e^{jw}, ..., e^{j(n-1)w}]``."""
    return np.exp(1j * w * np.arange(n))


def synthesize_frame(
    params: RadarParams,
    targets: Sequence[tuple[float, float, float, complex]],
    sigma2: float,
    rng: np.random.Generator | None = None,
) -> BasebandCube:
    """Synthesize one baseband cube from ``(r, v, theta, gamma)`` tuples."""
    if not (np.isfinite(sigma2) and sigma2 >= 0):
        raise ValueError("noise variance must be finite and nonnegative")
    limits = compute_limits(params)
    N, M, L = params.shape
    data = np.zeros((N, M, L), dtype=complex)
    for r, v, theta, gamma in targets:
        if not np.isfinite(gamma):
            raise ValueError("target amplitude must be finite")
        if abs(v) > limits.v_max:
            warnings.warn(
                f"radial velocity {v:.3f} m/s exceeds v_max={limits.v_max:.3f}; "
                "it will alias",
                stacklevel=2,
            )
        wx, wy, wz = state_to_freq(r, v, theta, limits)
        data += gamma * np.einsum(
            "n,m,l->nml", steering(wx, N), steering(wy, M), steering(wz, L)
        )
    if sigma2 > 0:
        if rng is None:
            raise ValueError("an rng is required when sigma2 > 0")
        noise = rng.standard_normal((N, M, L, 2)) @ np.array([1.0, 1j])
        data += np.sqrt(sigma2 / 2) * noise
    return BasebandCube(data=data, noise_var=float(sigma2), params=params)


def amplitude_for_snr(snr_db: float, sigma2: float, N: int, M: int) -> float:
    """Per-sample amplitude |gamma| giving integrated SNR ``N*M*|gamma|^2/sigma2``."""
    return math.sqrt(sigma2 * 10 ** (snr_db / 10) / (N * M))


def generate_scenario(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    v_max: float | None = None,
    amplitude: Sequence[float] | float = 1.0,
) -> Scenario:
    """Draw initial states and per-frame clutter, then propagate the truth.

    Each target gets a fresh uniform phase every frame; its modulus is taken
    from ``amplitude`` (scalar or per target).  Clutter radial velocities are
    uniform on ``[-v_max, v_max]`` when ``v_max`` is given, else zero.
    """
    A, Gamma = cv_matrices(cfg.T_frame)
    Q = np.diag(cfg.q)
    amps = np.broadcast_to(np.asarray(amplitude, dtype=float), (cfg.n_targets,))
    x0, x1, y0, y1 = cfg.init_pos
    vx0, vx1, vy0, vy1 = cfg.init_vel
    targets = []
    for k in range(cfg.n_targets):
        px, py = rng.uniform(x0, x1), rng.uniform(y0, y1)
        vx, vy = rng.uniform(vx0, vx1), rng.uniform(vy0, vy1)
        targets.append(TruthTarget(label=k + 1, x=np.array([px, vx, py, vy])))

    rx0, rx1, ry0, ry1 = cfg.roi
    truth, clutter = [], []
    for t in range(cfg.n_frames):
        if t > 0:
            targets = propagate_targets(targets, A, Gamma, Q, rng)
        phases = rng.uniform(0, 2 * np.pi, cfg.n_targets)
        targets = [
            replace(tgt, gamma=complex(amps[k] * np.exp(1j * phases[k])))
            for k, tgt in enumerate(targets)
        ]
        truth.append(targets)
        n_c = rng.poisson(cfg.mu_c) if cfg.mu_c > 0 else 0
        pos = np.column_stack([rng.uniform(rx0, rx1, n_c), rng.uniform(ry0, ry1, n_c)])
        vr = rng.uniform(-v_max, v_max, n_c) if v_max else np.zeros(n_c)
        clutter.append(np.column_stack([pos, vr]).reshape(n_c, 3))
    return Scenario(truth=truth, clutter=clutter)
