"""Logical multi-instance controller model with device mastership.

N instance records share one process and one state store; what is
modeled is the behavioral contract of a controller cluster: every device
has exactly one ALIVE master whenever any instance is alive, failover
promotes the first ALIVE backup, and mastership changes never touch
controller state (intents, RIB, circuits, flow tables).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import ConflictError, NotFoundError, ValidationError

log = logging.getLogger(__name__)

ALIVE = "ALIVE"
DEAD = "DEAD"


@dataclass
class Instance:
    name: str
    state: str = ALIVE

    def to_dict(self):
        return {"name": self.name, "state": self.state}


@dataclass
class FailoverResult:
    """Reassignment delta; new master is None only when no instance is ALIVE."""

    reassignments: List[Tuple[str, Optional[str]]]
    all_dead: bool = False

    def to_dict(self):
        return {
            "reassignments": [
                {"device": d, "master": m} for d, m in self.reassignments
            ],
            "all_dead": self.all_dead,
        }


class Cluster:
    """Mastership map: per-device instance preference lists."""

    def __init__(self):
        self.instances: Dict[str, Instance] = {}
        self.preferences: Dict[str, List[str]] = {}
        self.events: List[str] = []

    @property
    def initialized(self):
        return bool(self.instances)

    # -- setup ------------------------------------------------------------

    def init_cluster(self, instance_names: List[str], devices: List[str]) -> Dict[str, List[str]]:
        """Deal sorted devices round-robin onto sorted instances.

        The head of each device's preference list is its master; the rest
        are backups in name order.
        """
        if not instance_names:
            raise ValidationError("cluster needs at least one instance")
        if len(set(instance_names)) != len(instance_names):
            raise ValidationError("instance names must be unique")
        names = sorted(instance_names)
        self.instances = {name: Instance(name) for name in names}
        self.preferences = {}
        for i, device in enumerate(sorted(devices)):
            master = names[i % len(names)]
            backups = [n for n in names if n != master]
            self.preferences[device] = [master] + backups
        self.events.append(f"cluster initialized: {', '.join(names)}")
        return {d: list(p) for d, p in self.preferences.items()}

    # -- mastership ----------------------------------------------------------

    def master_of(self, device) -> str:
        """Current master: the first ALIVE instance in the preference list."""
        prefs = self.preferences.get(device)
        if prefs is None:
            raise NotFoundError(f"unknown device '{device}'", subject=device)
        master = self._first_alive(prefs)
        if master is None:
            raise ConflictError("no ALIVE instance in the cluster", subject=device)
        return master

    def _first_alive(self, prefs) -> Optional[str]:
        for name in prefs:
            if self.instances[name].state == ALIVE:
                return name
        return None

    def _assignment(self) -> Dict[str, Optional[str]]:
        return {d: self._first_alive(p) for d, p in self.preferences.items()}

    def fail_instance(self, name) -> FailoverResult:
        """Kill an instance; backups gain mastership, shared state stays."""
        instance = self._instance(name)
        if instance.state == DEAD:
            raise ConflictError(f"instance '{name}' already DEAD", subject=name)
        before = self._assignment()
        instance.state = DEAD
        result = self._delta(before)
        self.events.append(
            f"instance {name} failed; reassigned "
            + (", ".join(f"{d}->{m}" for d, m in result.reassignments) or "nothing")
        )
        return result

    def recover_instance(self, name) -> FailoverResult:
        """Revive an instance; devices preferring it revert to it."""
        instance = self._instance(name)
        if instance.state == ALIVE:
            raise ConflictError(f"instance '{name}' already ALIVE", subject=name)
        before = self._assignment()
        instance.state = ALIVE
        result = self._delta(before)
        self.events.append(
            f"instance {name} recovered; reassigned "
            + (", ".join(f"{d}->{m}" for d, m in result.reassignments) or "nothing")
        )
        return result

    def _delta(self, before) -> FailoverResult:
        after = self._assignment()
        moved = [
            (device, after[device])
            for device in sorted(after)
            if after[device] != before[device]
        ]
        all_dead = all(i.state == DEAD for i in self.instances.values())
        return FailoverResult(moved, all_dead)

    def _instance(self, name) -> Instance:
        instance = self.instances.get(name)
        if instance is None:
            raise NotFoundError(f"unknown instance '{name}'", subject=name)
        return instance

    def to_dict(self):
        return {
            "instances": [
                self.instances[n].to_dict() for n in sorted(self.instances)
            ],
            "mastership": {
                device: {
                    "master": self._first_alive(prefs),
                    "preference": list(prefs),
                }
                for device, prefs in sorted(self.preferences.items())
            },
            "events": list(self.events),
        }
