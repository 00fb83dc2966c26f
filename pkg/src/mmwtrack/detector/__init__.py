"""Target detection and parameter estimation on baseband cubes."""

from .cfar import CfarConfig, cfar_threshold_multiplier, training_mean, training_mean_map
from .fftcfar import fft_cfar_detect
from .measurement import (
    Detection,
    Measurement,
    cluster_measurements,
    freq_to_state,
    to_pseudo_measurement,
)
from .mnomp import mnomp_detect
from .spectral import azimuth_ls, newton_refine_2d, objective, residue_spectrum

__all__ = [
    "CfarConfig",
    "Detection",
    "Measurement",
    "azimuth_ls",
    "cfar_threshold_multiplier",
    "cluster_measurements",
    "fft_cfar_detect",
    "freq_to_state",
    "mnomp_detect",
    "newton_refine_2d",
    "objective",
    "residue_spectrum",
    "to_pseudo_measurement",
    "training_mean",
    "training_mean_map",
]
