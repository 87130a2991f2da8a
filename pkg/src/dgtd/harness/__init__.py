"""Configuration, presets, exports, reference oracles and the CLI."""

from .config import Problem, RunConfig, build_problem
from .export import export_metrics, read_metrics
from .presets import get_preset, preset_example1, preset_example2, random_instance
from .cli import cli_main

__all__ = [
    "Problem",
    "RunConfig",
    "build_problem",
    "cli_main",
    "export_metrics",
    "get_preset",
    "preset_example1",
    "preset_example2",
    "random_instance",
    "read_metrics",
]
