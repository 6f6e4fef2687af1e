"""Intent framework: declarative connectivity compiled to flow rules.

Point-to-point intents ride a per-intent core VLAN along the shortest
path; multipoint-to-single-point intents translate an IP destination
prefix into shareable hop-by-hop rules toward one egress.  Topology
events trigger recompilation of the affected intents, which is what
reroutes traffic around failures.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .dataplane import Action, FlowRule, FlowTables, Match, output, set_vlan
from .errors import ConflictError, NoPathError, NotFoundError, ValidationError
from .topology import (
    ConnectPoint,
    DEVICE_DOWN,
    DEVICE_UP,
    LINK_DOWN,
    LINK_UP,
    Topology,
    TopologyEvent,
)

log = logging.getLogger(__name__)

P2P = "P2P"
MP2SP = "MP2SP"

SUBMITTED = "SUBMITTED"
INSTALLED = "INSTALLED"
FAILED = "FAILED"
WITHDRAWN = "WITHDRAWN"

# Transit rules sit at BASE + prefix length (0-32); point-to-point rules
# outrank them so session/circuit traffic never leaks into transit.
MP2SP_BASE_PRIORITY = 1000
P2P_PRIORITY = 2000

CORE_VLAN_FIRST = 3000
CORE_VLAN_LAST = 3999


@dataclass(frozen=True)
class Selector:
    """Traffic class an intent carries: Match minus the ingress port."""

    vlan: Optional[int] = None
    eth_type: Optional[str] = None
    eth_dst: Optional[str] = None
    ip_src_prefix: Optional[str] = None
    ip_dst_prefix: Optional[str] = None

    def __post_init__(self):
        # Delegate range/prefix validation to Match.
        self.to_match()

    def to_match(self, in_port=None) -> Match:
        return Match(
            in_port=in_port,
            vlan=self.vlan,
            eth_type=self.eth_type,
            eth_dst=self.eth_dst,
            ip_src_prefix=self.ip_src_prefix,
            ip_dst_prefix=self.ip_dst_prefix,
        )

    def to_dict(self):
        return self.to_match().to_dict()


@dataclass(frozen=True)
class Treatment:
    """Egress rewrite: at most one VLAN operation."""

    set_vlan: Optional[int] = None
    pop_vlan: bool = False

    def __post_init__(self):
        if self.set_vlan is not None and self.pop_vlan:
            raise ValidationError("treatment allows at most one VLAN operation")
        if self.set_vlan is not None:
            Action("SET_VLAN", self.set_vlan)

    def actions(self) -> Tuple[Action, ...]:
        if self.set_vlan is not None:
            return (set_vlan(self.set_vlan),)
        if self.pop_vlan:
            return (Action("POP_VLAN"),)
        return ()

    def to_dict(self):
        out = {}
        if self.set_vlan is not None:
            out["set_vlan"] = self.set_vlan
        if self.pop_vlan:
            out["pop_vlan"] = True
        return out


@dataclass
class Intent:
    """Declarative connectivity request with lifecycle state."""

    kind: str
    ingresses: Tuple[ConnectPoint, ...]
    egress: ConnectPoint
    selector: Selector
    treatment: Treatment
    owner: str
    id: Optional[int] = None
    state: str = SUBMITTED

    def __post_init__(self):
        self.ingresses = tuple(self.ingresses)
        if self.kind not in (P2P, MP2SP):
            raise ValidationError(f"unknown intent kind '{self.kind}'", subject=self.kind)
        if not self.ingresses:
            raise ValidationError("intent needs at least one ingress")
        if self.kind == P2P and len(self.ingresses) != 1:
            raise ValidationError("P2P intent takes exactly one ingress")
        if self.egress in self.ingresses:
            raise ValidationError(
                f"egress {self.egress} duplicates an ingress", subject=str(self.egress)
            )

    @property
    def ingress(self) -> ConnectPoint:
        return self.ingresses[0]

    def to_dict(self):
        body = {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "owner": self.owner,
            "egress": str(self.egress),
            "selector": self.selector.to_dict(),
            "treatment": self.treatment.to_dict(),
        }
        if self.kind == P2P:
            body["ingress"] = str(self.ingress)
        else:
            body["ingresses"] = [str(cp) for cp in self.ingresses]
        return body


def p2p_intent(ingress, egress, selector, treatment, owner) -> Intent:
    return Intent(P2P, (ingress,), egress, selector, treatment, owner)


def mp2sp_intent(ingresses, egress, selector, treatment, owner) -> Intent:
    return Intent(MP2SP, tuple(ingresses), egress, selector, treatment, owner)


class CoreVlanPool:
    """Reserved VLAN range for core encapsulation, one id per intent."""

    def __init__(self, first=CORE_VLAN_FIRST, last=CORE_VLAN_LAST):
        self.first = first
        self.last = last
        self.allocations: Dict[int, int] = {}

    def allocate(self, intent_id) -> int:
        if intent_id in self.allocations:
            return self.allocations[intent_id]
        in_use = set(self.allocations.values())
        for vlan in range(self.first, self.last + 1):
            if vlan not in in_use:
                self.allocations[intent_id] = vlan
                return vlan
        raise ConflictError("core VLAN pool exhausted", subject=f"{self.first}-{self.last}")

    def release(self, intent_id):
        self.allocations.pop(intent_id, None)

    def vlan_of(self, intent_id) -> Optional[int]:
        return self.allocations.get(intent_id)


class IntentManager:
    """Stores intents, compiles them and keeps them installed."""

    def __init__(self, topology: Topology, flows: FlowTables):
        self.topology = topology
        self.flows = flows
        self.core_pool = CoreVlanPool()
        self._intents: Dict[int, Intent] = {}
        self._next_id = 1

    # -- store ---------------------------------------------------------

    def get(self, intent_id) -> Intent:
        intent = self._intents.get(intent_id)
        if intent is None:
            raise NotFoundError(f"unknown intent {intent_id}", subject=str(intent_id))
        return intent

    def list(self) -> List[Intent]:
        return [self._intents[i] for i in sorted(self._intents)]

    def by_state(self, state) -> List[Intent]:
        return [i for i in self.list() if i.state == state]

    # -- lifecycle -------------------------------------------------------

    def submit(self, intent: Intent) -> int:
        """Validate, store and atomically install an intent.

        A missing path is not an exception: the intent lands in FAILED
        with no residual rules and its id is still returned.
        """
        for cp in intent.ingresses + (intent.egress,):
            if not self.topology.has_port(cp):
                raise ValidationError(f"unknown connect point {cp}", subject=str(cp))
            if not self.topology.is_edge_port(cp):
                raise ValidationError(
                    f"{cp} is an infrastructure port, intents need edge ports",
                    subject=str(cp),
                )
        intent.id = self._next_id
        self._next_id += 1
        intent.state = SUBMITTED
        self._intents[intent.id] = intent
        self._install(intent)
        return intent.id

    def withdraw(self, intent_id):
        """Remove the intent's rules and release its core VLAN."""
        intent = self._intents.get(intent_id)
        if intent is None or intent.state == WITHDRAWN:
            raise NotFoundError(
                f"intent {intent_id} unknown or already withdrawn", subject=str(intent_id)
            )
        self.flows.remove_flows_by_owner(intent.owner, intent.id)
        self.core_pool.release(intent.id)
        intent.state = WITHDRAWN

    def _install(self, intent: Intent):
        """Compile + install all-or-nothing; FAILED leaves zero rules."""
        try:
            rules = self.compile(intent)
        except NoPathError as exc:
            log.info("intent %s has no path: %s", intent.id, exc)
            self._fail(intent)
            return
        try:
            for rule in rules:
                self.flows.install_flow(rule)
        except Exception:
            self.flows.remove_flows_by_owner(intent.owner, intent.id)
            self._fail(intent)
            raise
        intent.state = INSTALLED

    def _fail(self, intent: Intent):
        self.core_pool.release(intent.id)
        intent.state = FAILED

    # -- compilation -----------------------------------------------------

    def compile(self, intent: Intent) -> List[FlowRule]:
        if intent.kind == P2P:
            return self.compile_p2p(intent, self.topology)
        return self.compile_mp2sp(intent, self.topology)

    def compile_p2p(self, intent: Intent, topo: Topology) -> List[FlowRule]:
        """One direction of connectivity riding a per-intent core VLAN.

        Ingress device classifies (in_port + selector) and rewrites to the
        core VLAN; transit devices switch on (in_port, core VLAN); the
        egress device applies the treatment and outputs the client port.
        A single-device path needs no core VLAN at all.
        """
        ingress, egress = intent.ingress, intent.egress
        path = topo.shortest_path(ingress.device, egress.device)
        if path is None:
            raise NoPathError(
                f"no path {ingress.device} -> {egress.device}",
                subject=f"{ingress.device}->{egress.device}",
            )

        def rule(device, match, actions):
            return FlowRule(
                device=device,
                priority=P2P_PRIORITY,
                match=match,
                actions=tuple(actions),
                owner=intent.owner,
                intent=intent.id,
            )

        if not path:
            return [
                rule(
                    ingress.device,
                    intent.selector.to_match(in_port=ingress.port),
                    intent.treatment.actions() + (output(egress.port),),
                )
            ]

        core = self.core_pool.allocate(intent.id)
        rules = [
            rule(
                ingress.device,
                intent.selector.to_match(in_port=ingress.port),
                (set_vlan(core), output(path[0][0].port)),
            )
        ]
        for (out_cp, in_cp), (next_out, _) in zip(path, path[1:]):
            rules.append(
                rule(
                    in_cp.device,
                    Match(in_port=in_cp.port, vlan=core),
                    (output(next_out.port),),
                )
            )
        last_in = path[-1][1]
        rules.append(
            rule(
                egress.device,
                Match(in_port=last_in.port, vlan=core),
                intent.treatment.actions() + (output(egress.port),),
            )
        )
        return rules

    def compile_mp2sp(self, intent: Intent, topo: Topology) -> List[FlowRule]:
        """Destination-prefix rules along a shortest-path tree to the egress.

        Rules match the selector only (no in_port) at priority
        BASE + prefix length, so covering prefixes lose to longer ones and
        identical (device, match) rules from different ingresses collapse
        into one.  Unreachable ingresses are skipped; only all of them
        unreachable fails the compile.
        """
        if intent.selector.ip_dst_prefix is None:
            raise ValidationError("MP2SP intent needs an ip_dst_prefix selector")
        prefix_len = int(intent.selector.ip_dst_prefix.split("/")[1])
        priority = MP2SP_BASE_PRIORITY + prefix_len
        match = intent.selector.to_match()

        def rule(device, actions):
            return FlowRule(
                device=device,
                priority=priority,
                match=match,
                actions=tuple(actions),
                owner=intent.owner,
                intent=intent.id,
            )

        by_device: Dict[str, FlowRule] = {}
        unreachable = []
        for ingress in sorted(intent.ingresses):
            path = topo.shortest_path(ingress.device, intent.egress.device)
            if path is None:
                unreachable.append(ingress)
                continue
            # The deterministic path engine routes by destination, so the
            # union of these paths is a tree: shared devices always agree
            # on the next hop and dedup by device is conflict-free.
            for out_cp, _ in path:
                candidate = rule(out_cp.device, (output(out_cp.port),))
                existing = by_device.get(out_cp.device)
                if existing is None:
                    by_device[out_cp.device] = candidate
                elif existing.actions != candidate.actions:
                    raise ConflictError(
                        f"diverging next hop on '{out_cp.device}' for {match.to_dict()}",
                        subject=out_cp.device,
                    )
        if unreachable:
            log.warning(
                "intent %s: no path from %s",
                intent.id,
                ", ".join(str(cp) for cp in unreachable),
            )
        if len(unreachable) == len(intent.ingresses):
            raise NoPathError(
                f"no ingress can reach {intent.egress}", subject=str(intent.egress)
            )
        by_device[intent.egress.device] = rule(
            intent.egress.device,
            intent.treatment.actions() + (output(intent.egress.port),),
        )
        return [by_device[device] for device in sorted(by_device)]

    # -- reroute -----------------------------------------------------------

    def handle_topology_event(self, event: TopologyEvent) -> List[int]:
        """Recompile intents hit by a failure; re-attempt FAILED on recovery.

        Returns the ids of intents whose installed rule set changed.
        """
        if event.kind in (LINK_DOWN, DEVICE_DOWN):
            affected = self._affected_intents(event)
        elif event.kind in (LINK_UP, DEVICE_UP):
            affected = self.by_state(FAILED)
        else:
            return []

        changed = []
        for intent in affected:
            before_state = intent.state
            before = {rule.key() for rule in self._rules_of(intent)}
            self.flows.remove_flows_by_owner(intent.owner, intent.id)
            self._install(intent)
            after = {rule.key() for rule in self._rules_of(intent)}
            if before != after or before_state != intent.state:
                changed.append(intent.id)
        return changed

    def _rules_of(self, intent: Intent) -> List[FlowRule]:
        return [r for r in self.flows.all_rules() if r.intent == intent.id and r.owner == intent.owner]

    def _affected_intents(self, event: TopologyEvent) -> List[Intent]:
        """INSTALLED intents owning a rule that references the failed element."""
        if event.kind == DEVICE_DOWN:
            device = event.subject
            dead_ports = {
                cp
                for link in self.topology.links.values()
                for cp in link.endpoints()
                if device in (link.a.device, link.b.device)
            }
        else:
            link = next(
                (l for l in self.topology.links.values() if str(l) == event.subject), None
            )
            if link is None:
                return []
            device = None
            dead_ports = set(link.endpoints())

        affected = []
        for intent in self.by_state(INSTALLED):
            for rule in self._rules_of(intent):
                if device is not None and rule.device == device:
                    affected.append(intent)
                    break
                in_port = rule.match.in_port
                out_port = rule.output_port()
                if in_port is not None and ConnectPoint(rule.device, in_port) in dead_ports:
                    affected.append(intent)
                    break
                if out_port is not None and ConnectPoint(rule.device, out_port) in dead_ports:
                    affected.append(intent)
                    break
        return affected
