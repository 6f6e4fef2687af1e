"""SDN-IP application: BGP session plumbing and route-to-flow translation.

Installs the duplex point-to-point intents that let external peers reach
the internal BGP speaker, keeps a RIB of announced prefixes, and turns
the best route per prefix into a multipoint-to-single-point transit
intent toward the announcing peer.  BGP itself is modeled, not spoken on
the wire: announcements and withdrawals arrive through the gateway API
or scenario scripts and are only accepted over ESTABLISHED sessions.
"""

import ipaddress
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .dataplane import BGP_CTRL, FlowTables, IPV4, OWNER_SDNIP, PacketHeader
from .errors import ConflictError, NotFoundError, ValidationError
from .intent import (
    IntentManager,
    Selector,
    Treatment,
    WITHDRAWN,
    mp2sp_intent,
    p2p_intent,
)
from .topology import ConnectPoint, Topology

log = logging.getLogger(__name__)

EXTERNAL = "EXTERNAL"
INTERNAL_SPEAKER = "INTERNAL_SPEAKER"

IDLE = "IDLE"
ESTABLISHED = "ESTABLISHED"

# One VLAN tag per client interface is reserved for the BGP speakers;
# overridable per peer.
DEFAULT_BGP_VLAN = 10


@dataclass
class Peer:
    """A BGP peering endpoint on an edge port."""

    name: str
    cp: ConnectPoint
    ip: str
    asn: int
    vlan: int = DEFAULT_BGP_VLAN
    kind: str = EXTERNAL

    def __post_init__(self):
        if not self.name:
            raise ValidationError("peer name must be non-empty")
        if self.kind not in (EXTERNAL, INTERNAL_SPEAKER):
            raise ValidationError(f"bad peer kind '{self.kind}'", subject=self.kind)
        try:
            ipaddress.IPv4Address(self.ip)
        except ValueError as exc:
            raise ValidationError(f"peer '{self.name}' ip: {exc}", subject=self.name)

    def to_dict(self):
        return {
            "name": self.name,
            "cp": str(self.cp),
            "ip": self.ip,
            "asn": self.asn,
            "vlan": self.vlan,
            "kind": self.kind,
        }


@dataclass(frozen=True)
class Route:
    """An announced prefix as heard from one peer."""

    prefix: str
    origin_peer: str
    as_path_len: int

    def __post_init__(self):
        try:
            ipaddress.IPv4Network(self.prefix, strict=False)
        except ValueError as exc:
            raise ValidationError(f"bad prefix '{self.prefix}': {exc}", subject=self.prefix)
        if self.as_path_len < 0:
            raise ValidationError("as_path_len must be non-negative")

    def to_dict(self):
        return {"prefix": self.prefix, "peer": self.origin_peer, "as_path_len": self.as_path_len}


@dataclass
class SessionState:
    peer: str
    state: str

    def to_dict(self):
        return {"peer": self.peer, "state": self.state}


def _mac_for(ip) -> str:
    """Deterministic locally-administered MAC for a modeled host."""
    octets = int(ipaddress.IPv4Address(ip)).to_bytes(4, "big")
    return "02:00:" + ":".join(f"{b:02x}" for b in octets)


class Rib:
    """Learned routes per prefix plus the chosen best route."""

    def __init__(self):
        self.routes: Dict[str, Dict[str, Route]] = {}
        self.best: Dict[str, Route] = {}

    def prefixes(self) -> List[str]:
        return sorted(self.routes)

    def size(self) -> int:
        return len(self.routes)

    def to_dict(self):
        return {
            prefix: {
                "routes": [r.to_dict() for _, r in sorted(self.routes[prefix].items())],
                "best": self.best[prefix].origin_peer,
            }
            for prefix in self.prefixes()
        }


class SdnIp:
    """Route server half of the exchange: sessions, RIB, transit intents."""

    def __init__(self, topology: Topology, flows: FlowTables, intents: IntentManager):
        self.topology = topology
        self.flows = flows
        self.intents = intents
        self.speaker: Optional[Peer] = None
        self.peers: Dict[str, Peer] = {}
        self.rib = Rib()
        self.sessions: Dict[str, str] = {}
        self._session_intents: Dict[str, Tuple[int, int]] = {}
        self._transit_intents: Dict[str, int] = {}

    @property
    def activated(self):
        return self.speaker is not None

    # -- configuration ---------------------------------------------------

    def activate(self, peers: List[Peer], speaker: Peer) -> List[int]:
        """Install BGP session flows for every external peer, all-or-nothing
        on validation."""
        if self.activated:
            raise ConflictError("SDN-IP already activated", subject=self.speaker.name)
        if speaker.kind != INTERNAL_SPEAKER:
            raise ValidationError(
                f"speaker '{speaker.name}' must be INTERNAL_SPEAKER", subject=speaker.name
            )
        seen_names = {speaker.name}
        seen_ips = {speaker.ip}
        for peer in peers:
            if peer.kind != EXTERNAL:
                raise ValidationError(
                    f"peer '{peer.name}' must be EXTERNAL", subject=peer.name
                )
            if peer.name in seen_names:
                raise ValidationError(f"duplicate peer '{peer.name}'", subject=peer.name)
            if peer.ip in seen_ips:
                raise ValidationError(
                    f"duplicate peer ip {peer.ip} ('{peer.name}')", subject=peer.name
                )
            seen_names.add(peer.name)
            seen_ips.add(peer.ip)
        for endpoint in [speaker] + list(peers):
            if not self.topology.is_edge_port(endpoint.cp):
                raise ValidationError(
                    f"peer '{endpoint.name}' needs an edge port, {endpoint.cp} is not",
                    subject=endpoint.name,
                )

        self.speaker = speaker
        ids = []
        for peer in peers:
            self.peers[peer.name] = peer
            ids.extend(self._submit_session_intents(peer))
        self.refresh_sessions()
        return ids

    def add_peer(self, peer: Peer) -> List[int]:
        """Dynamically add one external peer; preexisting flows stay put."""
        if not self.activated:
            raise ValidationError("SDN-IP not activated")
        if peer.kind != EXTERNAL:
            raise ValidationError(f"peer '{peer.name}' must be EXTERNAL", subject=peer.name)
        if peer.name in self.peers or peer.name == self.speaker.name:
            raise ConflictError(f"duplicate peer name '{peer.name}'", subject=peer.name)
        taken = {p.ip for p in self.peers.values()} | {self.speaker.ip}
        if peer.ip in taken:
            raise ConflictError(f"duplicate peer ip {peer.ip}", subject=peer.name)
        if not self.topology.is_edge_port(peer.cp):
            raise ValidationError(
                f"peer '{peer.name}' needs an edge port, {peer.cp} is not", subject=peer.name
            )
        self.peers[peer.name] = peer
        ids = self._submit_session_intents(peer)
        self.refresh_sessions()
        return ids

    def remove_peer(self, name):
        """Drop a peer: session intents, its routes, dependent transit intents."""
        self._peer(name)
        for intent_id in self._session_intents.pop(name, ()):
            if self.intents.get(intent_id).state != WITHDRAWN:
                self.intents.withdraw(intent_id)
        del self.peers[name]
        self.sessions.pop(name, None)
        announced = [p for p, routes in self.rib.routes.items() if name in routes]
        for prefix in announced:
            self._drop_route(prefix, name)
        # Remaining transit intents must stop treating the peer as an ingress.
        for prefix in self.rib.prefixes():
            self._sync_prefix(prefix)

    def _submit_session_intents(self, peer: Peer) -> List[int]:
        """Duplex P2P intents carrying the BGP control traffic of one peer."""
        speaker = self.speaker
        forward = p2p_intent(
            ingress=peer.cp,
            egress=speaker.cp,
            selector=Selector(
                vlan=peer.vlan,
                eth_type=IPV4,
                ip_src_prefix=f"{peer.ip}/32",
                ip_dst_prefix=f"{speaker.ip}/32",
            ),
            treatment=Treatment(set_vlan=speaker.vlan),
            owner=OWNER_SDNIP,
        )
        reverse = p2p_intent(
            ingress=speaker.cp,
            egress=peer.cp,
            selector=Selector(
                vlan=speaker.vlan,
                eth_type=IPV4,
                ip_src_prefix=f"{speaker.ip}/32",
                ip_dst_prefix=f"{peer.ip}/32",
            ),
            treatment=Treatment(set_vlan=peer.vlan),
            owner=OWNER_SDNIP,
        )
        ids = (self.intents.submit(forward), self.intents.submit(reverse))
        self._session_intents[peer.name] = ids
        return list(ids)

    # -- sessions -----------------------------------------------------------

    def refresh_sessions(self) -> List[SessionState]:
        """Probe BGP control reachability both ways for every peer."""
        states = []
        for name in sorted(self.peers):
            peer = self.peers[name]
            up = self._probe(peer, self.speaker) and self._probe(self.speaker, peer)
            self.sessions[name] = ESTABLISHED if up else IDLE
            states.append(SessionState(name, self.sessions[name]))
        return states

    def _probe(self, src: Peer, dst: Peer) -> bool:
        header = PacketHeader(
            eth_src=_mac_for(src.ip),
            eth_dst=_mac_for(dst.ip),
            vlan=src.vlan,
            eth_type=IPV4,
            ip_src=src.ip,
            ip_dst=dst.ip,
            l4_kind=BGP_CTRL,
        )
        result = self.flows.traverse(header, src.cp)
        return result.delivered and result.egress == dst.cp

    def session_established(self, name) -> bool:
        peer = self._peer(name)
        up = self._probe(peer, self.speaker) and self._probe(self.speaker, peer)
        self.sessions[name] = ESTABLISHED if up else IDLE
        return up

    # -- routes -------------------------------------------------------------

    def process_announcement(self, peer_name, route: Route) -> Dict:
        """Accept a route over an ESTABLISHED session and sync transit flows."""
        self._peer(peer_name)
        if not self.session_established(peer_name):
            raise ValidationError(
                f"session with '{peer_name}' not ESTABLISHED", subject=peer_name
            )
        prefix = str(ipaddress.IPv4Network(route.prefix, strict=False))
        if route.origin_peer != peer_name or route.prefix != prefix:
            route = Route(prefix, peer_name, route.as_path_len)

        existing = self.rib.routes.get(prefix, {}).get(peer_name)
        if existing == route:
            return {"prefix": prefix, "changed": False}
        self.rib.routes.setdefault(prefix, {})[peer_name] = route
        return self._reselect(prefix)

    def process_withdrawal(self, peer_name, prefix) -> Dict:
        """Retract one peer's route and re-point or remove transit flows."""
        self._peer(peer_name)
        prefix = str(ipaddress.IPv4Network(prefix, strict=False))
        if peer_name not in self.rib.routes.get(prefix, {}):
            raise NotFoundError(
                f"'{peer_name}' has not announced {prefix}", subject=prefix
            )
        return self._drop_route(prefix, peer_name)

    def _drop_route(self, prefix, peer_name) -> Dict:
        del self.rib.routes[prefix][peer_name]
        if not self.rib.routes[prefix]:
            del self.rib.routes[prefix]
            self.rib.best.pop(prefix, None)
            self._withdraw_transit(prefix)
            return {"prefix": prefix, "changed": True, "best": None}
        return self._reselect(prefix)

    def _reselect(self, prefix) -> Dict:
        """Recompute the best route; on change re-point the transit intent."""
        routes = self.rib.routes[prefix]
        best = min(
            routes.values(),
            key=lambda r: (r.as_path_len, int(ipaddress.IPv4Address(self.peers[r.origin_peer].ip))),
        )
        changed = self.rib.best.get(prefix) != best
        self.rib.best[prefix] = best
        if changed:
            self._sync_prefix(prefix)
        return {
            "prefix": prefix,
            "changed": changed,
            "best": best.origin_peer,
            "intent": self._transit_intents.get(prefix),
        }

    def _sync_prefix(self, prefix):
        """Rebuild the MP2SP transit intent for a prefix from the RIB."""
        self._withdraw_transit(prefix)
        best = self.rib.best.get(prefix)
        if best is None:
            return
        egress_peer = self.peers[best.origin_peer]
        ingresses = [
            peer.cp for name, peer in sorted(self.peers.items()) if name != best.origin_peer
        ]
        if not ingresses:
            log.info("prefix %s has no transit ingresses, skipping intent", prefix)
            return
        intent = mp2sp_intent(
            ingresses=ingresses,
            egress=egress_peer.cp,
            selector=Selector(eth_type=IPV4, ip_dst_prefix=prefix),
            treatment=Treatment(set_vlan=egress_peer.vlan),
            owner=OWNER_SDNIP,
        )
        self._transit_intents[prefix] = self.intents.submit(intent)

    def _withdraw_transit(self, prefix):
        intent_id = self._transit_intents.pop(prefix, None)
        if intent_id is not None and self.intents.get(intent_id).state != WITHDRAWN:
            self.intents.withdraw(intent_id)

    # -- lookups ------------------------------------------------------------

    def _peer(self, name) -> Peer:
        peer = self.peers.get(name)
        if peer is None:
            raise NotFoundError(f"unknown peer '{name}'", subject=name)
        return peer

    def bgp_vlan_at(self, cp: ConnectPoint) -> Optional[int]:
        """Reserved BGP VLAN at a client interface, if any."""
        endpoints = list(self.peers.values())
        if self.speaker is not None:
            endpoints.append(self.speaker)
        for endpoint in endpoints:
            if endpoint.cp == cp:
                return endpoint.vlan
        return None

    def session_intent_ids(self, name) -> Tuple[int, ...]:
        return tuple(self._session_intents.get(name, ()))

    def transit_intent_id(self, prefix) -> Optional[int]:
        return self._transit_intents.get(prefix)
