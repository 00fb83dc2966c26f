"""Strict JSON run configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..assoc import AssocConfig
from ..detector import CfarConfig
from ..signal import RadarParams, ScenarioConfig
from ..tracker import TrackerConfig


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


RADAR_PRESETS = {"simulation": RadarParams.simulation, "awr1642": RadarParams.awr1642}


@dataclass
class CrbSweep:
    r: float = 10.0
    theta: float = 0.0
    snr_db: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0, 25.0, 30.0])


@dataclass
class RunConfig:
    radar: RadarParams
    scenario: ScenarioConfig
    cfar: CfarConfig
    assoc: AssocConfig
    tracker: TrackerConfig
    metric: tuple[float, float] = (1.0, 10.0)
    seed: int = 0
    detector: str = "mnomp"
    kappa: float = 1.2
    # None disables clustering; otherwise (position m, radial velocity m/s)
    cluster: tuple[float, float] | None = None
    # add the scenario's measurement-level clutter to every frame
    clutter: bool = False
    # tracks with status "tentative" are written but skipped by eval
    include_tentative: bool = False
    crb: CrbSweep = field(default_factory=CrbSweep)
    outputs: dict[str, str] = field(default_factory=dict)


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) and k != "snr_db" else v for k, v in data.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _radar(data: Any) -> RadarParams:
    if not isinstance(data, dict):
        raise ConfigError("radar: expected an object")
    data = dict(data)
    preset = data.pop("preset", None)
    if preset is None:
        return _build(RadarParams, data, "radar")
    if preset not in RADAR_PRESETS:
        raise ConfigError(f"radar: unknown preset {preset!r}")
    names = {f.name for f in dataclasses.fields(RadarParams)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"radar: unknown key(s) {', '.join(unknown)}")
    try:
        return RADAR_PRESETS[preset](**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"radar: {exc}") from exc


def parse_config(data: Any) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}")
    radar = _radar(data.get("radar", {"preset": "simulation"}))
    scenario = _build(ScenarioConfig, data.get("scenario", {}), "scenario")

    assoc_raw = dict(data.get("assoc", {}))
    if isinstance(assoc_raw, dict):
        # clutter model of the associator follows the scenario unless overridden
        assoc_raw.setdefault("mu_c", scenario.mu_c)
        assoc_raw.setdefault("f_c", 1.0 / scenario.roi_area)
    assoc = _build(AssocConfig, assoc_raw, "assoc")

    tracker_raw = dict(data.get("tracker", {}))
    tracker_raw.setdefault("T", scenario.T_frame)
    tracker_raw.setdefault("q", list(scenario.q))
    tracker = _build(TrackerConfig, tracker_raw, "tracker")
    cfar = _build(CfarConfig, data.get("cfar", {}), "cfar")

    metric = data.get("metric", {"p": 1.0, "c": 10.0})
    if not isinstance(metric, dict) or set(metric) - {"p", "c"}:
        raise ConfigError("metric: expected an object with keys p and c")
    p, c = float(metric.get("p", 1.0)), float(metric.get("c", 10.0))
    if p < 1 or c <= 0:
        raise ConfigError("metric: need p >= 1 and c > 0")

    cluster = data.get("cluster")
    if cluster is not None:
        if not (isinstance(cluster, list) and len(cluster) == 2):
            raise ConfigError("cluster: expected [d_pos, d_vel] or null")
        cluster = (float(cluster[0]), float(cluster[1]))

    detector = data.get("detector", "mnomp")
    if detector not in ("mnomp", "fftcfar"):
        raise ConfigError("detector must be 'mnomp' or 'fftcfar'")
    kappa = data.get("kappa", 1.2)
    if not isinstance(kappa, (int, float)) or kappa <= 0:
        raise ConfigError("kappa must be a positive number")
    seed = data.get("seed", scenario.seed)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    outputs = data.get("outputs", {})
    if not isinstance(outputs, dict) or not all(isinstance(v, str) for v in outputs.values()):
        raise ConfigError("outputs: expected an object of path strings")
    for flag in ("clutter", "include_tentative"):
        if not isinstance(data.get(flag, False), bool):
            raise ConfigError(f"{flag} must be true or false")

    return RunConfig(
        radar=radar,
        scenario=scenario,
        cfar=cfar,
        assoc=assoc,
        tracker=tracker,
        metric=(p, c),
        seed=seed,
        detector=detector,
        kappa=float(kappa),
        cluster=cluster,
        clutter=data.get("clutter", False),
        include_tentative=data.get("include_tentative", False),
        crb=_build(CrbSweep, data.get("crb", {}), "crb"),
        outputs=dict(outputs),
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)
