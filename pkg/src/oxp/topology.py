"""Authoritative model of devices, ports and links.

Holds the device/link/host inventory, applies state transitions, emits
ordered topology events and answers minimum-hop path queries over the
elements that are currently UP.  All mutation goes through the owning
controller's single-writer stream; readers only see committed state.
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import NotFoundError, ValidationError

log = logging.getLogger(__name__)

UP = "UP"
DOWN = "DOWN"

LINK_UP = "LINK_UP"
LINK_DOWN = "LINK_DOWN"
DEVICE_UP = "DEVICE_UP"
DEVICE_DOWN = "DEVICE_DOWN"


@dataclass(frozen=True, order=True)
class ConnectPoint:
    """A (device, port) attachment location, rendered as ``DEVICE/PORT``."""

    device: str
    port: int

    def __str__(self):
        return f"{self.device}/{self.port}"

    @classmethod
    def parse(cls, text):
        """Parse ``DEVICE/PORT`` (also accepts ``DEVICE:PORT`` for URL use)."""
        raw = text.replace(":", "/")
        head, sep, tail = raw.rpartition("/")
        if not sep or not head:
            raise ValidationError(f"malformed connect point '{text}'", subject=text)
        try:
            port = int(tail)
        except ValueError:
            raise ValidationError(f"malformed connect point '{text}'", subject=text)
        if port <= 0:
            raise ValidationError(f"port must be positive in '{text}'", subject=text)
        return cls(head, port)


@dataclass
class Link:
    """Bidirectional link between two connect points with a single state."""

    a: ConnectPoint
    b: ConnectPoint
    state: str = UP

    def key(self):
        return frozenset((self.a, self.b))

    def endpoints(self):
        return (self.a, self.b)

    def other(self, cp):
        if cp == self.a:
            return self.b
        if cp == self.b:
            return self.a
        raise ValueError(f"{cp} is not an endpoint of {self}")

    def __str__(self):
        return f"{self.a}-{self.b}"


@dataclass
class Host:
    """Descriptor attached to an edge port (BGP speaker VM, peer VM, ...)."""

    cp: ConnectPoint
    name: str
    mac: Optional[str] = None
    ip: Optional[str] = None


@dataclass
class TopologyEvent:
    """Single transition on the event stream; seq strictly increases."""

    kind: str
    subject: str
    seq: int


@dataclass
class Device:
    name: str
    ports: int
    state: str = UP


class Topology:
    """Inventory of devices, links and hosts plus the path engine."""

    def __init__(self):
        self.devices: Dict[str, Device] = {}
        self.links: Dict[frozenset, Link] = {}
        self.hosts: List[Host] = []
        self._seq = 0

    # -- construction ------------------------------------------------

    def add_device(self, name, ports):
        if not name:
            raise ValidationError("device id must be non-empty", subject=name)
        if name in self.devices:
            raise ValidationError(f"duplicate device '{name}'", subject=name)
        if ports <= 0:
            raise ValidationError(f"device '{name}' needs a positive port count", subject=name)
        self.devices[name] = Device(name, ports)

    def add_link(self, a: ConnectPoint, b: ConnectPoint):
        if a == b:
            raise ValidationError(f"link endpoints must differ: {a}", subject=str(a))
        for cp in (a, b):
            self._require_port(cp)
            if self.link_at(cp) is not None:
                raise ValidationError(f"port {cp} already carries a link", subject=str(cp))
            if self.host_at(cp) is not None:
                raise ValidationError(f"port {cp} is a host port", subject=str(cp))
        key = frozenset((a, b))
        if key in self.links:
            raise ValidationError(f"duplicate link {a}-{b}", subject=f"{a}-{b}")
        self.links[key] = Link(a, b)

    def add_host(self, cp: ConnectPoint, name, mac=None, ip=None):
        self._require_port(cp)
        if self.link_at(cp) is not None:
            raise ValidationError(f"host port {cp} already carries a link", subject=str(cp))
        self.hosts.append(Host(cp, name, mac, ip))

    def _require_port(self, cp: ConnectPoint):
        device = self.devices.get(cp.device)
        if device is None:
            raise ValidationError(f"unknown device '{cp.device}'", subject=cp.device)
        if not 1 <= cp.port <= device.ports:
            raise ValidationError(
                f"port {cp} does not exist ('{cp.device}' has {device.ports} ports)",
                subject=str(cp),
            )

    # -- lookups -----------------------------------------------------

    def device(self, name) -> Device:
        dev = self.devices.get(name)
        if dev is None:
            raise NotFoundError(f"unknown device '{name}'", subject=name)
        return dev

    def has_port(self, cp: ConnectPoint):
        dev = self.devices.get(cp.device)
        return dev is not None and 1 <= cp.port <= dev.ports

    def link_at(self, cp: ConnectPoint) -> Optional[Link]:
        """Link occupying this port, if any (one link per port)."""
        for link in self.links.values():
            if cp in link.endpoints():
                return link
        return None

    def host_at(self, cp: ConnectPoint) -> Optional[Host]:
        for host in self.hosts:
            if host.cp == cp:
                return host
        return None

    def is_edge_port(self, cp: ConnectPoint):
        """A port is an edge port iff it exists and carries no link."""
        return self.has_port(cp) and self.link_at(cp) is None

    def find_link(self, a, b) -> Link:
        """Resolve a link by connect points or by device names (unique pair)."""
        if isinstance(a, ConnectPoint) and isinstance(b, ConnectPoint):
            link = self.links.get(frozenset((a, b)))
            if link is None:
                raise NotFoundError(f"unknown link {a}-{b}", subject=f"{a}-{b}")
            return link
        matches = [
            link
            for link in self.links.values()
            if {link.a.device, link.b.device} == {a, b}
        ]
        if not matches:
            raise NotFoundError(f"no link between '{a}' and '{b}'", subject=f"{a}-{b}")
        if len(matches) > 1:
            raise ValidationError(
                f"multiple links between '{a}' and '{b}', name the ports", subject=f"{a}-{b}"
            )
        return matches[0]

    def link_usable(self, link: Link):
        """UP link between UP devices; DOWN devices drag their links down."""
        return (
            link.state == UP
            and self.devices[link.a.device].state == UP
            and self.devices[link.b.device].state == UP
        )

    # -- state transitions -------------------------------------------

    def _emit(self, kind, subject):
        self._seq += 1
        return TopologyEvent(kind, subject, self._seq)

    def set_link_state(self, a, b, state) -> List[TopologyEvent]:
        """Set a link UP/DOWN; emits one event iff the state changed."""
        if state not in (UP, DOWN):
            raise ValidationError(f"bad link state '{state}'", subject=state)
        link = self.find_link(a, b)
        if link.state == state:
            return []
        link.state = state
        kind = LINK_UP if state == UP else LINK_DOWN
        log.info("link %s -> %s", link, state)
        return [self._emit(kind, str(link))]

    def set_device_state(self, name, state) -> List[TopologyEvent]:
        """Set a device UP/DOWN; its links count as DOWN while it is DOWN."""
        if state not in (UP, DOWN):
            raise ValidationError(f"bad device state '{state}'", subject=state)
        dev = self.device(name)
        if dev.state == state:
            return []
        dev.state = state
        kind = DEVICE_UP if state == UP else DEVICE_DOWN
        log.info("device %s -> %s", name, state)
        return [self._emit(kind, name)]

    # -- paths ---------------------------------------------------------

    def neighbors(self, device) -> Dict[str, Link]:
        """Usable adjacent devices reachable from ``device`` (one link each)."""
        out = {}
        for link in self.links.values():
            if not self.link_usable(link):
                continue
            if link.a.device == device:
                out[link.b.device] = link
            elif link.b.device == device:
                out[link.a.device] = link
        return out

    def shortest_path(self, src, dst) -> Optional[List[Tuple[ConnectPoint, ConnectPoint]]]:
        """Minimum-hop path over UP elements as (egress cp, ingress cp) hops.

        Among equal-hop paths the one whose device-name sequence is
        lexicographically smallest is returned, so repeated calls on the
        same state agree.  Returns [] for src == dst (an UP device), None
        when disconnected or when either endpoint device is DOWN.
        """
        self.device(src)
        self.device(dst)
        if self.devices[src].state != UP or self.devices[dst].state != UP:
            return None
        if src == dst:
            return []

        dist = self._bfs_distances(dst)
        if src not in dist:
            return None

        # Greedy descent on distance-to-dst: picking the smallest-named
        # next device at every step yields the lexicographically smallest
        # device sequence among all minimum-hop paths.
        hops = []
        here = src
        while here != dst:
            candidates = [
                (other, link)
                for other, link in self.neighbors(here).items()
                if dist.get(other) == dist[here] - 1
            ]
            other, link = min(candidates, key=lambda item: item[0])
            if link.a.device == here:
                hops.append((link.a, link.b))
            else:
                hops.append((link.b, link.a))
            here = other
        return hops

    def _bfs_distances(self, root) -> Dict[str, int]:
        dist = {root: 0}
        frontier = [root]
        while frontier:
            nxt = []
            for device in frontier:
                for other in self.neighbors(device):
                    if other not in dist:
                        dist[other] = dist[device] + 1
                        nxt.append(other)
            frontier = nxt
        return dist

    # -- serialization -------------------------------------------------

    def to_dict(self):
        return {
            "devices": [
                {"id": d.name, "ports": d.ports, "state": d.state}
                for d in sorted(self.devices.values(), key=lambda d: d.name)
            ],
            "links": [
                {"a": str(link.a), "b": str(link.b), "state": link.state}
                for link in sorted(self.links.values(), key=lambda l: (str(l.a), str(l.b)))
            ],
            "hosts": [
                {"cp": str(h.cp), "name": h.name, "mac": h.mac, "ip": h.ip}
                for h in self.hosts
            ],
        }


def load_topology(document) -> Topology:
    """Build a validated :class:`Topology` from a topology document.

    ``document`` is a dict of the external JSON schema: ``devices`` with
    ``id``/``ports``, ``links`` with ``a``/``b`` connect-point strings and
    ``hosts`` with ``cp``/``name``/``mac``/``ip``.  Unknown fields are
    rejected; every validation error names the offending element.
    """
    if not isinstance(document, dict):
        raise ValidationError("topology document must be an object")
    unknown = set(document) - {"devices", "links", "hosts"}
    if unknown:
        raise ValidationError(
            f"unknown topology fields: {sorted(unknown)}", subject=sorted(unknown)[0]
        )

    topo = Topology()
    for entry in document.get("devices", []):
        _check_fields(entry, {"id", "ports"}, {"id"}, "device")
        ports = entry.get("ports", 8)
        if not isinstance(ports, int):
            raise ValidationError(
                f"device '{entry['id']}' ports must be an integer", subject=entry["id"]
            )
        topo.add_device(entry["id"], ports)
    for entry in document.get("links", []):
        _check_fields(entry, {"a", "b"}, {"a", "b"}, "link")
        topo.add_link(ConnectPoint.parse(entry["a"]), ConnectPoint.parse(entry["b"]))
    for entry in document.get("hosts", []):
        _check_fields(entry, {"cp", "name", "mac", "ip"}, {"cp", "name"}, "host")
        topo.add_host(
            ConnectPoint.parse(entry["cp"]), entry["name"], entry.get("mac"), entry.get("ip")
        )
    return topo


def load_topology_file(path) -> Topology:
    try:
        with open(path) as fh:
            document = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read topology file '{path}': {exc}", subject=str(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed topology file '{path}': {exc}", subject=str(path))
    return load_topology(document)


def _check_fields(entry, allowed, required, what):
    if not isinstance(entry, dict):
        raise ValidationError(f"{what} entry must be an object", subject=str(entry))
    unknown = set(entry) - allowed
    if unknown:
        raise ValidationError(
            f"unknown {what} fields: {sorted(unknown)}", subject=sorted(unknown)[0]
        )
    missing = required - set(entry)
    if missing:
        raise ValidationError(
            f"{what} entry missing {sorted(missing)}", subject=sorted(missing)[0]
        )
