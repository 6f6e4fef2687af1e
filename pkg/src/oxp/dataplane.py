"""Simulated OpenFlow-style data plane.

Per-device priority-ordered flow tables with match/action semantics and a
packet-traversal engine.  Traversal is instantaneous and deterministic:
it exists to verify connectivity (BGP session reachability, pings), not
to model timing or queues.
"""

import ipaddress
import itertools
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

from .errors import ConflictError, NotFoundError, ValidationError
from .topology import ConnectPoint, Topology, UP

log = logging.getLogger(__name__)

IPV4 = "IPV4"
OTHER = "OTHER"

BGP_CTRL = "BGP_CTRL"
ICMP = "ICMP"
DATA = "DATA"

SET_VLAN = "SET_VLAN"
POP_VLAN = "POP_VLAN"
OUTPUT = "OUTPUT"

DELIVERED = "DELIVERED"
DROPPED = "DROPPED"
LOOP = "LOOP"

# Owning applications for flow rules.
OWNER_SDNIP = "SDNIP"
OWNER_L2SDX = "L2SDX"
OWNER_SYSTEM = "SYSTEM"

MAX_DEVICE_VISITS = 32


def _check_vlan(vlan, what):
    if vlan is not None and not 1 <= vlan <= 4094:
        raise ValidationError(f"{what} vlan {vlan} outside 1-4094", subject=str(vlan))


@lru_cache(maxsize=4096)
def _parse_prefix(prefix) -> Tuple[int, int]:
    try:
        net = ipaddress.IPv4Network(prefix, strict=False)
    except ValueError as exc:
        raise ValidationError(f"bad IPv4 prefix '{prefix}': {exc}", subject=str(prefix))
    return int(net.network_address), net.prefixlen


def _ip_to_int(address) -> int:
    try:
        return int(ipaddress.IPv4Address(address))
    except ValueError as exc:
        raise ValidationError(f"bad IPv4 address '{address}': {exc}", subject=str(address))


def ip_in_prefix(address, prefix) -> bool:
    net, plen = _parse_prefix(prefix)
    if plen == 0:
        return True
    return (_ip_to_int(address) ^ net) >> (32 - plen) == 0


@dataclass
class PacketHeader:
    """The unit of traffic pushed through the simulated fabric."""

    eth_src: str
    eth_dst: str
    vlan: Optional[int] = None
    eth_type: str = OTHER
    ip_src: Optional[str] = None
    ip_dst: Optional[str] = None
    l4_kind: Optional[str] = None

    def __post_init__(self):
        _check_vlan(self.vlan, "packet")
        if self.eth_type not in (IPV4, OTHER):
            raise ValidationError(f"bad eth_type '{self.eth_type}'", subject=self.eth_type)
        has_ips = self.ip_src is not None and self.ip_dst is not None
        if self.eth_type == IPV4 and not has_ips:
            raise ValidationError("IPV4 packet needs ip_src and ip_dst")
        if self.eth_type != IPV4 and (self.ip_src or self.ip_dst):
            raise ValidationError("ip fields require eth_type IPV4")
        if self.l4_kind not in (None, BGP_CTRL, ICMP, DATA):
            raise ValidationError(f"bad l4_kind '{self.l4_kind}'", subject=self.l4_kind)

    def to_dict(self):
        return {
            "eth_src": self.eth_src,
            "eth_dst": self.eth_dst,
            "vlan": self.vlan,
            "eth_type": self.eth_type,
            "ip_src": self.ip_src,
            "ip_dst": self.ip_dst,
            "l4_kind": self.l4_kind,
        }


@dataclass(frozen=True)
class Match:
    """Match fields; unspecified fields are wildcards, prefixes contain."""

    in_port: Optional[int] = None
    vlan: Optional[int] = None
    eth_type: Optional[str] = None
    eth_dst: Optional[str] = None
    ip_src_prefix: Optional[str] = None
    ip_dst_prefix: Optional[str] = None

    def __post_init__(self):
        _check_vlan(self.vlan, "match")
        has_prefix = self.ip_src_prefix is not None or self.ip_dst_prefix is not None
        if has_prefix and self.eth_type != IPV4:
            raise ValidationError("ip prefix matches require eth_type IPV4")
        for prefix in (self.ip_src_prefix, self.ip_dst_prefix):
            if prefix is not None:
                _parse_prefix(prefix)

    def matches(self, in_port, header: PacketHeader) -> bool:
        if self.in_port is not None and self.in_port != in_port:
            return False
        if self.vlan is not None and self.vlan != header.vlan:
            return False
        if self.eth_type is not None and self.eth_type != header.eth_type:
            return False
        if self.eth_dst is not None and self.eth_dst != header.eth_dst:
            return False
        if self.ip_src_prefix is not None:
            if header.ip_src is None or not ip_in_prefix(header.ip_src, self.ip_src_prefix):
                return False
        if self.ip_dst_prefix is not None:
            if header.ip_dst is None or not ip_in_prefix(header.ip_dst, self.ip_dst_prefix):
                return False
        return True

    def to_dict(self):
        out = {}
        for key in ("in_port", "vlan", "eth_type", "eth_dst", "ip_src_prefix", "ip_dst_prefix"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class Action:
    """SET_VLAN(vlan) | POP_VLAN | OUTPUT(port).

    SET_VLAN writes the tag whether or not one is present (push+set).
    """

    kind: str
    value: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (SET_VLAN, POP_VLAN, OUTPUT):
            raise ValidationError(f"unknown action '{self.kind}'", subject=self.kind)
        if self.kind == SET_VLAN:
            if self.value is None:
                raise ValidationError("SET_VLAN needs a vlan id")
            _check_vlan(self.value, "action")
        if self.kind == OUTPUT and (self.value is None or self.value <= 0):
            raise ValidationError("OUTPUT needs a positive port")
        if self.kind == POP_VLAN and self.value is not None:
            raise ValidationError("POP_VLAN takes no argument")

    def to_dict(self):
        if self.kind == SET_VLAN:
            return {"type": SET_VLAN, "vlan": self.value}
        if self.kind == OUTPUT:
            return {"type": OUTPUT, "port": self.value}
        return {"type": POP_VLAN}


def set_vlan(vlan) -> Action:
    return Action(SET_VLAN, vlan)


def pop_vlan() -> Action:
    return Action(POP_VLAN)


def output(port) -> Action:
    return Action(OUTPUT, port)


@dataclass
class FlowRule:
    """Priority-ordered match/action entry on one device."""

    device: str
    priority: int
    match: Match
    actions: Tuple[Action, ...]
    owner: str
    intent: Optional[int] = None
    id: Optional[int] = None

    def __post_init__(self):
        self.actions = tuple(self.actions)
        if not 0 <= self.priority <= 65535:
            raise ValidationError(f"priority {self.priority} outside 0-65535")
        outputs = [i for i, a in enumerate(self.actions) if a.kind == OUTPUT]
        if len(outputs) > 1:
            raise ValidationError("at most one OUTPUT action per rule")
        if outputs and outputs[0] != len(self.actions) - 1:
            raise ValidationError("OUTPUT must be the last action")

    def output_port(self) -> Optional[int]:
        for action in self.actions:
            if action.kind == OUTPUT:
                return action.value
        return None

    def key(self):
        """Identity ignoring allocation artifacts (the rule id)."""
        return (self.device, self.priority, self.match, self.actions)

    def to_dict(self):
        return {
            "id": self.id,
            "device": self.device,
            "priority": self.priority,
            "match": self.match.to_dict(),
            "actions": [a.to_dict() for a in self.actions],
            "owner": self.owner,
            "intent": self.intent,
        }


@dataclass
class TraversalResult:
    """Outcome of pushing one packet through the fabric."""

    status: str
    hops: List[ConnectPoint]
    egress: Optional[ConnectPoint] = None
    header: Optional[PacketHeader] = None
    device: Optional[str] = None
    reason: Optional[str] = None

    @property
    def delivered(self):
        return self.status == DELIVERED

    def to_dict(self):
        return {
            "status": self.status,
            "hops": [str(cp) for cp in self.hops],
            "egress": str(self.egress) if self.egress else None,
            "header": self.header.to_dict() if self.header else None,
            "device": self.device,
            "reason": self.reason,
        }


class FlowTables:
    """All device flow tables plus the traversal engine."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self._tables: Dict[str, List[FlowRule]] = {}
        self._ids = itertools.count(1)

    def table(self, device) -> List[FlowRule]:
        self.topology.device(device)
        return list(self._tables.get(device, []))

    def all_rules(self) -> List[FlowRule]:
        return [rule for table in self._tables.values() for rule in table]

    def install_flow(self, rule: FlowRule) -> int:
        """Insert a rule; duplicates of (device, priority, match) conflict."""
        self.topology.device(rule.device)
        port = rule.output_port()
        if port is not None and not self.topology.has_port(ConnectPoint(rule.device, port)):
            raise ValidationError(
                f"invalid port {port} on device '{rule.device}'", subject=f"{rule.device}/{port}"
            )
        table = self._tables.setdefault(rule.device, [])
        for existing in table:
            if existing.priority == rule.priority and existing.match == rule.match:
                raise ConflictError(
                    f"rule {existing.id} already matches (priority {rule.priority}) "
                    f"on '{rule.device}'",
                    subject=str(existing.id),
                )
        rule.id = next(self._ids)
        table.append(rule)
        # Scan order below == match precedence: priority desc, id asc.
        table.sort(key=lambda r: (-r.priority, r.id))
        return rule.id

    def remove_flows_by_owner(self, owner, intent=None) -> int:
        """Drop every rule of ``owner`` (optionally one intent); returns count."""
        removed = 0
        for device, table in self._tables.items():
            keep = []
            for rule in table:
                if rule.owner == owner and (intent is None or rule.intent == intent):
                    removed += 1
                else:
                    keep.append(rule)
            self._tables[device] = keep
        return removed

    def match_packet(self, device, in_port, header: PacketHeader) -> Optional[FlowRule]:
        """Highest-priority matching rule, ties to the lowest rule id."""
        self.topology.device(device)
        for rule in self._tables.get(device, []):
            if rule.match.matches(in_port, header):
                return rule
        return None

    def traverse(self, header: PacketHeader, ingress: ConnectPoint) -> TraversalResult:
        """Push a packet in at ``ingress`` and follow it to its fate.

        Header rewrites are visible to every subsequent match.  OUTPUT to
        a link port crosses the link when usable; OUTPUT to an edge port
        delivers.  More than 32 device visits reports LOOP.
        """
        if not self.topology.has_port(ingress):
            raise NotFoundError(f"unknown ingress {ingress}", subject=str(ingress))
        header = replace(header)
        hops = [ingress]
        device, in_port = ingress.device, ingress.port
        visits = 0
        while True:
            visits += 1
            if visits > MAX_DEVICE_VISITS:
                return TraversalResult(LOOP, hops, device=device, reason="visit budget exhausted")
            if self.topology.devices[device].state != UP:
                return TraversalResult(DROPPED, hops, device=device, reason="device down")
            rule = self.match_packet(device, in_port, header)
            if rule is None:
                return TraversalResult(DROPPED, hops, device=device, reason="no match")
            out_port = None
            for action in rule.actions:
                if action.kind == SET_VLAN:
                    header.vlan = action.value
                elif action.kind == POP_VLAN:
                    header.vlan = None
                elif action.kind == OUTPUT:
                    out_port = action.value
            if out_port is None:
                return TraversalResult(DROPPED, hops, device=device, reason="no output action")
            out_cp = ConnectPoint(device, out_port)
            hops.append(out_cp)
            link = self.topology.link_at(out_cp)
            if link is None:
                return TraversalResult(DELIVERED, hops, egress=out_cp, header=header)
            if not self.topology.link_usable(link):
                return TraversalResult(
                    DROPPED, hops, device=device, reason=f"link {link} down"
                )
            nxt = link.other(out_cp)
            hops.append(nxt)
            device, in_port = nxt.device, nxt.port
