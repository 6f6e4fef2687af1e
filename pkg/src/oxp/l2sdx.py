"""L2-SDX application: virtual exchange points, edge connectors, circuits.

Customers attach as edge connectors, a (port, client VLAN) pair on an
edge switch port, grouped into virtual eXchange Points.  Circuits join
two connectors of one VXP through duplex VLAN-translated point-to-point
intents.  Isolation is enforced up front: a (port, VLAN) pair is never
reused, a connector sits in at most one live circuit, and circuits never
cross VXP boundaries.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .dataplane import FlowTables, OWNER_L2SDX, PacketHeader
from .errors import ConflictError, IsolationError, NotFoundError, ValidationError
from .intent import INSTALLED, IntentManager, Selector, Treatment, WITHDRAWN, p2p_intent
from .topology import ConnectPoint, Topology, UP as STATE_UP

log = logging.getLogger(__name__)

REQUESTED = "REQUESTED"
ACTIVE = "ACTIVE"
REMOVED = "REMOVED"

UP = "UP"
DEGRADED = "DEGRADED"
DOWN = "DOWN"


@dataclass
class Vxp:
    """Operator-facing partition of edge connectors."""

    name: str
    connectors: List[str] = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "connectors": list(self.connectors)}


@dataclass
class EdgeConnector:
    """Customer service end-point: an edge port plus a local client VLAN."""

    name: str
    vxp: str
    cp: ConnectPoint
    vlan: int

    def to_dict(self):
        return {"name": self.name, "vxp": self.vxp, "cp": str(self.cp), "vlan": self.vlan}


@dataclass
class Circuit:
    """Layer 2 circuit between two connectors, realized as two intents."""

    id: int
    a: str
    b: str
    intents: Tuple[int, int]
    admin_state: str = REQUESTED

    def to_dict(self):
        return {
            "id": self.id,
            "a": self.a,
            "b": self.b,
            "intents": list(self.intents),
            "admin_state": self.admin_state,
        }


@dataclass
class OperationalStatus:
    status: str
    detail: str

    def to_dict(self):
        return {"status": self.status, "detail": self.detail}


class L2Sdx:
    """Provisioning and monitoring of VXPs, connectors and circuits."""

    def __init__(
        self,
        topology: Topology,
        flows: FlowTables,
        intents: IntentManager,
        bgp_vlan_at: Optional[Callable[[ConnectPoint], Optional[int]]] = None,
    ):
        self.topology = topology
        self.flows = flows
        self.intents = intents
        self._bgp_vlan_at = bgp_vlan_at or (lambda cp: None)
        self.vxps: Dict[str, Vxp] = {}
        self.connectors: Dict[str, EdgeConnector] = {}
        self.circuits: Dict[int, Circuit] = {}
        self._next_circuit = 1

    # -- provisioning ------------------------------------------------------

    def create_vxp(self, name) -> Vxp:
        if not name:
            raise ValidationError("vxp name must be non-empty")
        if name in self.vxps:
            raise ConflictError(f"vxp '{name}' already exists", subject=name)
        vxp = Vxp(name)
        self.vxps[name] = vxp
        return vxp

    def add_connector(self, vxp_name, name, cp: ConnectPoint, vlan) -> EdgeConnector:
        """Register a connector; the (port, VLAN) resources must be free."""
        vxp = self.vxps.get(vxp_name)
        if vxp is None:
            raise NotFoundError(f"unknown vxp '{vxp_name}'", subject=vxp_name)
        if not name:
            raise ValidationError("connector name must be non-empty")
        if name in self.connectors:
            raise ConflictError(f"connector '{name}' already exists", subject=name)
        if not 1 <= vlan <= 4094:
            raise ValidationError(f"vlan {vlan} outside 1-4094", subject=str(vlan))
        if not self.topology.has_port(cp):
            raise ValidationError(f"unknown connect point {cp}", subject=str(cp))
        if not self.topology.is_edge_port(cp):
            raise ValidationError(f"{cp} is an infrastructure port", subject=str(cp))
        for other in self.connectors.values():
            if other.cp == cp and other.vlan == vlan:
                raise ConflictError(
                    f"({cp}, vlan {vlan}) already used by connector '{other.name}'",
                    subject=other.name,
                )
        reserved = self._bgp_vlan_at(cp)
        if reserved is not None and reserved == vlan:
            raise ConflictError(
                f"vlan {vlan} at {cp} is reserved for BGP speakers (SDN-IP)",
                subject=f"{cp}:{vlan}",
            )
        connector = EdgeConnector(name, vxp_name, cp, vlan)
        self.connectors[name] = connector
        vxp.connectors.append(name)
        return connector

    def remove_connector(self, name):
        """Deletion only while the connector is in no live circuit."""
        connector = self._connector(name)
        busy = self._circuit_using(name)
        if busy is not None:
            raise ConflictError(
                f"connector '{name}' is used by circuit {busy.id}", subject=str(busy.id)
            )
        self.vxps[connector.vxp].connectors.remove(name)
        del self.connectors[name]

    def request_circuit(self, a_name, b_name) -> Circuit:
        """Provision a duplex VLAN-translated circuit between two connectors."""
        a = self._connector(a_name)
        b = self._connector(b_name)
        if a_name == b_name:
            raise ValidationError("circuit endpoints must differ", subject=a_name)
        if a.vxp != b.vxp:
            raise IsolationError(
                f"connector '{a_name}' ({a.vxp}) cannot be interconnected with a "
                f"connector in another virtual eXchange Point ('{b_name}' in {b.vxp})",
                subject=b.vxp,
            )
        for name in (a_name, b_name):
            busy = self._circuit_using(name)
            if busy is not None:
                raise ConflictError(
                    f"connector '{name}' already used by circuit {busy.id}",
                    subject=str(busy.id),
                )

        forward = p2p_intent(
            ingress=a.cp,
            egress=b.cp,
            selector=Selector(vlan=a.vlan),
            treatment=Treatment(set_vlan=b.vlan),
            owner=OWNER_L2SDX,
        )
        reverse = p2p_intent(
            ingress=b.cp,
            egress=a.cp,
            selector=Selector(vlan=b.vlan),
            treatment=Treatment(set_vlan=a.vlan),
            owner=OWNER_L2SDX,
        )
        ids = (self.intents.submit(forward), self.intents.submit(reverse))
        circuit = Circuit(self._next_circuit, a_name, b_name, ids)
        self._next_circuit += 1
        if all(self.intents.get(i).state == INSTALLED for i in ids):
            circuit.admin_state = ACTIVE
        self.circuits[circuit.id] = circuit
        log.info("circuit %d %s<->%s is %s", circuit.id, a_name, b_name, circuit.admin_state)
        return circuit

    def remove_circuit(self, circuit_id):
        circuit = self.circuits.get(circuit_id)
        if circuit is None or circuit.admin_state == REMOVED:
            raise NotFoundError(
                f"circuit {circuit_id} unknown or already removed", subject=str(circuit_id)
            )
        for intent_id in circuit.intents:
            if self.intents.get(intent_id).state != WITHDRAWN:
                self.intents.withdraw(intent_id)
        circuit.admin_state = REMOVED

    # -- monitoring ----------------------------------------------------------

    def status(self, subject) -> OperationalStatus:
        """Operational status of a connector (by name) or circuit (by id)."""
        if isinstance(subject, int) or (isinstance(subject, str) and subject.isdigit()):
            return self.circuit_status(int(subject))
        return self.connector_status(subject)

    def connector_status(self, name) -> OperationalStatus:
        connector = self._connector(name)
        device = self.topology.device(connector.cp.device)
        if device.state != STATE_UP:
            return OperationalStatus(DOWN, f"device {device.name} is DOWN")
        return OperationalStatus(UP, f"{connector.cp} vlan {connector.vlan}")

    def circuit_status(self, circuit_id) -> OperationalStatus:
        circuit = self.circuits.get(circuit_id)
        if circuit is None:
            raise NotFoundError(f"unknown circuit {circuit_id}", subject=str(circuit_id))
        if circuit.admin_state == REMOVED:
            return OperationalStatus(DOWN, "circuit removed")
        states = {i: self.intents.get(i).state for i in circuit.intents}
        failed = [i for i, s in states.items() if s != INSTALLED]
        if failed:
            return OperationalStatus(
                DOWN, "intent(s) not installed: " + ", ".join(str(i) for i in failed)
            )
        a = self.connectors[circuit.a]
        b = self.connectors[circuit.b]
        if self._probe(a, b) and self._probe(b, a):
            return OperationalStatus(UP, "both directions verified")
        # Rules are in place but delivery currently fails; a recompilation
        # has not converged yet.
        return OperationalStatus(DEGRADED, "installed but traversal incomplete")

    def _probe(self, src: EdgeConnector, dst: EdgeConnector) -> bool:
        header = PacketHeader(
            eth_src="02:00:00:00:00:01",
            eth_dst="02:00:00:00:00:02",
            vlan=src.vlan,
        )
        result = self.flows.traverse(header, src.cp)
        return result.delivered and result.egress == dst.cp and result.header.vlan == dst.vlan

    # -- lookups ---------------------------------------------------------------

    def _connector(self, name) -> EdgeConnector:
        connector = self.connectors.get(name)
        if connector is None:
            raise NotFoundError(f"unknown connector '{name}'", subject=name)
        return connector

    def _circuit_using(self, connector_name) -> Optional[Circuit]:
        for circuit in self.circuits.values():
            if circuit.admin_state != REMOVED and connector_name in (circuit.a, circuit.b):
                return circuit
        return None

    def live_circuits(self) -> List[Circuit]:
        return [c for c in self.circuits.values() if c.admin_state != REMOVED]
