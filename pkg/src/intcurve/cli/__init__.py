"""Command-line front end: scenario files, field expressions, report emission."""

from .config import ScenarioConfig, load_config, parse_config
from .expr import parse_field_expr
from .main import main, run

__all__ = ["ScenarioConfig", "load_config", "parse_config", "parse_field_expr", "main", "run"]
