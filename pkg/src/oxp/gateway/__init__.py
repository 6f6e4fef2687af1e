"""Operator surface: HTTP/JSON API, CLI and the scenario runner."""

from .config import GatewayConfig, load_config
from .scenario import ScenarioReport, ScenarioRunner, run_scenario

__all__ = ["GatewayConfig", "load_config", "ScenarioReport", "ScenarioRunner", "run_scenario"]
