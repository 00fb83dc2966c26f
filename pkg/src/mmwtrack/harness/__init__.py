"""Configuration, file formats, experiment runners and the command-line interface."""

from .cli import run_cli
from .config import ConfigError, RunConfig, load_config, parse_config
from .io import CubeFormatError, read_cube_file, write_cube_file, write_tracks

__all__ = [
    "ConfigError",
    "CubeFormatError",
    "RunConfig",
    "load_config",
    "parse_config",
    "read_cube_file",
    "run_cli",
    "write_cube_file",
    "write_tracks",
]
