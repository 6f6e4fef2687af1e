"""Gateway configuration and packaged data resolution."""

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional

from ..controller import Controller
from ..errors import ValidationError

CONFIG_ENV = "OXP_CONFIG"
DEFAULT_LISTEN = "127.0.0.1:8181"

_BUILTIN_TOPOLOGIES = {"gts7"}
_BUILTIN_SCENARIOS = {"demo-ons2016"}


@dataclass
class GatewayConfig:
    listen: str = DEFAULT_LISTEN
    topology: Optional[str] = "gts7"
    instances: List[str] = field(default_factory=list)
    scenario: Optional[str] = None

    @property
    def host(self):
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self):
        try:
            return int(self.listen.rsplit(":", 1)[1])
        except (IndexError, ValueError):
            raise ValidationError(f"bad listen address '{self.listen}'", subject=self.listen)


def builtin_data(name) -> dict:
    with resources.files("oxp.data").joinpath(f"{name}.json").open() as fh:
        return json.load(fh)


def read_topology_document(ref) -> dict:
    """Resolve a topology reference: builtin name or a file path."""
    if ref in _BUILTIN_TOPOLOGIES:
        return builtin_data(ref)
    if not os.path.exists(ref):
        raise ValidationError(f"topology file not found: '{ref}'", subject=str(ref))
    with open(ref) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"malformed topology '{ref}' line {exc.lineno}: {exc.msg}", subject=str(ref)
            )


def read_scenario_steps(ref) -> list:
    """Resolve a scenario reference: builtin name or a file path."""
    if ref in _BUILTIN_SCENARIOS:
        return builtin_data(ref)
    if not os.path.exists(ref):
        raise ValidationError(f"scenario file not found: '{ref}'", subject=str(ref))
    with open(ref) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"scenario parse error '{ref}' line {exc.lineno}: {exc.msg}", subject=str(ref)
            )


def load_config(path=None) -> GatewayConfig:
    """Load gateway config from ``path``, $OXP_CONFIG or defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if path is None:
        return GatewayConfig()
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: '{path}'", subject=str(path))
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"malformed config '{path}' line {exc.lineno}: {exc.msg}", subject=str(path)
            )
    unknown = set(raw) - {"listen", "topology", "instances", "scenario"}
    if unknown:
        raise ValidationError(
            f"unknown config fields: {sorted(unknown)}", subject=sorted(unknown)[0]
        )
    return GatewayConfig(
        listen=raw.get("listen", DEFAULT_LISTEN),
        topology=raw.get("topology", "gts7"),
        instances=raw.get("instances", []),
        scenario=raw.get("scenario"),
    )


def build_controller(config: GatewayConfig) -> Controller:
    """Fresh controller initialized from the config (no scenario autorun)."""
    controller = Controller()
    if config.topology:
        controller.load_topology(read_topology_document(config.topology))
    if config.instances:
        controller.init_cluster(config.instances)
    return controller
