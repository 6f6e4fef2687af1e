"""Controller assembly: one state store, one writer, wired event flow.

Owns the topology, flow tables, intent manager, SDN-IP, L2-SDX and the
cluster model.  Every mutation runs under one re-entrant lock (the
single-writer stream); topology transitions are pushed through the
intent manager so affected intents recompile before the call returns.
"""

import logging
import threading
from typing import Dict, List, Optional

from .cluster import Cluster, FailoverResult
from .dataplane import FlowTables, PacketHeader, TraversalResult
from .intent import IntentManager
from .l2sdx import L2Sdx
from .sdnip import SdnIp
from .topology import ConnectPoint, Topology, TopologyEvent, load_topology

log = logging.getLogger(__name__)


class Controller:
    """A software-defined exchange point controller instance."""

    def __init__(self, topology: Optional[Topology] = None):
        self.lock = threading.RLock()
        self._wire(topology or Topology())
        self.cluster = Cluster()

    def _wire(self, topology: Topology):
        self.topology = topology
        self.flows = FlowTables(topology)
        self.intents = IntentManager(topology, self.flows)
        self.sdnip = SdnIp(topology, self.flows, self.intents)
        self.l2sdx = L2Sdx(topology, self.flows, self.intents, self.sdnip.bgp_vlan_at)

    def load_topology(self, document) -> Topology:
        """Replace the topology; dependent state starts from scratch."""
        with self.lock:
            topology = load_topology(document)
            self._wire(topology)
            self.cluster = Cluster()
            return topology

    # -- topology transitions ------------------------------------------------

    def set_link_state(self, a, b, state) -> Dict:
        with self.lock:
            events = self.topology.set_link_state(a, b, state)
            recompiled = self._dispatch(events)
            return {
                "events": [e.kind + " " + e.subject for e in events],
                "recompiled": recompiled,
            }

    def set_device_state(self, device, state) -> Dict:
        with self.lock:
            events = self.topology.set_device_state(device, state)
            recompiled = self._dispatch(events)
            return {
                "events": [e.kind + " " + e.subject for e in events],
                "recompiled": recompiled,
            }

    def _dispatch(self, events: List[TopologyEvent]) -> List[int]:
        recompiled = []
        for event in events:
            recompiled.extend(self.intents.handle_topology_event(event))
        return recompiled

    # -- data plane ------------------------------------------------------------

    def traverse(self, header: PacketHeader, ingress: ConnectPoint) -> TraversalResult:
        with self.lock:
            return self.flows.traverse(header, ingress)

    # -- cluster ------------------------------------------------------------

    def init_cluster(self, instances: List[str]) -> Dict:
        with self.lock:
            return self.cluster.init_cluster(instances, list(self.topology.devices))

    def fail_instance(self, name) -> FailoverResult:
        with self.lock:
            return self.cluster.fail_instance(name)

    def recover_instance(self, name) -> FailoverResult:
        with self.lock:
            return self.cluster.recover_instance(name)

    # -- inspection ------------------------------------------------------------

    def summary(self) -> Dict:
        """Coarse digest: intent states, RIB size, circuit statuses."""
        with self.lock:
            intents: Dict[str, int] = {}
            for intent in self.intents.list():
                intents[intent.state] = intents.get(intent.state, 0) + 1
            circuits: Dict[str, int] = {}
            for circuit in self.l2sdx.circuits.values():
                circuits[circuit.admin_state] = circuits.get(circuit.admin_state, 0) + 1
            return {
                "intents": intents,
                "rib_size": self.sdnip.rib.size(),
                "circuits": circuits,
                "flow_rules": len(self.flows.all_rules()),
            }

    def state_digest(self) -> Dict:
        """Deep, deterministic view of all controller state.

        Used to prove that mastership events leave intents, RIB, circuits
        and flow tables untouched.
        """
        with self.lock:
            return {
                "topology": self.topology.to_dict(),
                "flows": sorted(
                    (rule.to_dict() for rule in self.flows.all_rules()),
                    key=lambda r: r["id"],
                ),
                "intents": [i.to_dict() for i in self.intents.list()],
                "rib": self.sdnip.rib.to_dict(),
                "sessions": dict(sorted(self.sdnip.sessions.items())),
                "peers": [
                    self.sdnip.peers[n].to_dict() for n in sorted(self.sdnip.peers)
                ],
                "vxps": [
                    self.l2sdx.vxps[n].to_dict() for n in sorted(self.l2sdx.vxps)
                ],
                "connectors": [
                    self.l2sdx.connectors[n].to_dict()
                    for n in sorted(self.l2sdx.connectors)
                ],
                "circuits": [
                    self.l2sdx.circuits[i].to_dict()
                    for i in sorted(self.l2sdx.circuits)
                ],
            }
