"""Scenario runner: replays scripted event sequences with assertions.

A scenario is a JSON array of steps.  Steps mutate a fresh controller or
ASSERT a property of it; a failing step is reported and execution
continues, so one run always yields one outcome per step.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from ..controller import Controller
from ..dataplane import DATA, IPV4, OTHER, PacketHeader
from ..errors import OxpError, ValidationError
from ..sdnip import ESTABLISHED, Peer, Route
from ..topology import ConnectPoint

log = logging.getLogger(__name__)

OK = "OK"
FAILED = "FAILED"

MUTATIONS = (
    "LOAD_TOPOLOGY",
    "INIT_CLUSTER",
    "SDNIP_ACTIVATE",
    "ADD_PEER",
    "ANNOUNCE",
    "WITHDRAW",
    "CREATE_VXP",
    "ADD_CONNECTOR",
    "REQUEST_CIRCUIT",
    "REMOVE_CIRCUIT",
    "LINK_DOWN",
    "LINK_UP",
    "FAIL_INSTANCE",
    "RECOVER_INSTANCE",
)
CHECKS = (
    "SESSION_ESTABLISHED",
    "DELIVERED",
    "FLOWS_UNCHANGED_EXCEPT",
    "STATUS_IS",
    "MASTER_ALIVE",
)


@dataclass
class StepOutcome:
    index: int
    action: str
    outcome: str
    detail: str = ""

    def to_dict(self):
        return {
            "index": self.index,
            "action": self.action,
            "outcome": self.outcome,
            "detail": self.detail,
        }


@dataclass
class ScenarioReport:
    name: str
    steps: List[StepOutcome] = field(default_factory=list)
    digest: Dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    @property
    def ok(self):
        return all(s.outcome == OK for s in self.steps)

    def summary(self):
        failed = sum(1 for s in self.steps if s.outcome == FAILED)
        return {"steps": len(self.steps), "ok": len(self.steps) - failed, "failed": failed}

    def to_dict(self):
        return {
            "name": self.name,
            "steps": [s.to_dict() for s in self.steps],
            "summary": self.summary(),
            "digest": self.digest,
            "elapsed_s": round(self.elapsed_s, 3),
        }


def _endpoint(value):
    """Link endpoint from a step param: device name or connect point."""
    text = str(value)
    if "/" in text or ":" in text:
        return ConnectPoint.parse(text)
    return text


def _peer_from(params) -> Peer:
    if not isinstance(params, dict):
        raise ValidationError("peer must be an object")
    unknown = set(params) - {"name", "cp", "ip", "asn", "vlan", "kind"}
    if unknown:
        raise ValidationError(f"unknown peer fields: {sorted(unknown)}")
    return Peer(
        name=params.get("name", ""),
        cp=ConnectPoint.parse(params["cp"]),
        ip=params["ip"],
        asn=params.get("asn", 0),
        vlan=params.get("vlan", 10),
        kind=params.get("kind", "EXTERNAL"),
    )


def build_header(params) -> PacketHeader:
    """Packet header from assert params; IPs imply an IPv4 ethertype."""
    ip_src = params.get("ip_src")
    ip_dst = params.get("ip_dst")
    if ip_src or ip_dst:
        eth_type = IPV4
        ip_src = ip_src or "0.0.0.0"
        ip_dst = ip_dst or "0.0.0.0"
        l4 = params.get("l4", DATA)
    else:
        eth_type = OTHER
        l4 = params.get("l4")
    return PacketHeader(
        eth_src=params.get("eth_src", "02:00:00:00:00:aa"),
        eth_dst=params.get("eth_dst", "02:00:00:00:00:bb"),
        vlan=params.get("vlan"),
        eth_type=eth_type,
        ip_src=ip_src,
        ip_dst=ip_dst,
        l4_kind=l4,
    )


class ScenarioRunner:
    """Executes steps in order against one controller."""

    def __init__(self, controller: Controller):
        self.controller = controller
        # Baselines for FLOWS_UNCHANGED_EXCEPT: peer -> (rule keys, new intent ids)
        self._peer_baselines: Dict[str, Tuple[frozenset, frozenset]] = {}

    def run(self, steps: List[dict], name="scenario") -> ScenarioReport:
        if not isinstance(steps, list):
            raise ValidationError("scenario must be a JSON array of steps")
        report = ScenarioReport(name)
        started = time.monotonic()
        for index, step in enumerate(steps):
            action = step.get("action") if isinstance(step, dict) else None
            if action is None:
                report.steps.append(
                    StepOutcome(index, "?", FAILED, "step is missing an action")
                )
                continue
            try:
                detail = self._execute(step)
                report.steps.append(StepOutcome(index, action, OK, detail))
            except OxpError as exc:
                report.steps.append(StepOutcome(index, action, FAILED, exc.message))
            except AssertionFailed as exc:
                report.steps.append(StepOutcome(index, action, FAILED, str(exc)))
        report.elapsed_s = time.monotonic() - started
        report.digest = self.controller.summary()
        log.info("scenario '%s': %s", name, report.summary())
        return report

    # -- step execution ------------------------------------------------------

    def _execute(self, step) -> str:
        action = step["action"]
        if action == "ASSERT":
            return self._assert(step)
        handler = getattr(self, "_do_" + action.lower(), None)
        if handler is None or action not in MUTATIONS:
            raise ValidationError(f"unknown action '{action}'", subject=action)
        return handler(step)

    def _do_load_topology(self, step):
        from .config import read_topology_document

        if "document" in step:
            document = step["document"]
        elif "topology" in step:
            document = read_topology_document(step["topology"])
        elif "path" in step:
            document = read_topology_document(step["path"])
        else:
            raise ValidationError("LOAD_TOPOLOGY needs 'topology', 'path' or 'document'")
        topo = self.controller.load_topology(document)
        return f"{len(topo.devices)} devices, {len(topo.links)} links"

    def _do_init_cluster(self, step):
        mastership = self.controller.init_cluster(step.get("instances", []))
        return f"{len(mastership)} devices assigned"

    def _do_sdnip_activate(self, step):
        speaker = _peer_from({**step.get("speaker", {}), "kind": "INTERNAL_SPEAKER"})
        peers = [_peer_from(p) for p in step.get("peers", [])]
        ids = self.controller.sdnip.activate(peers, speaker)
        return f"{len(ids)} session intents"

    def _do_add_peer(self, step):
        peer = _peer_from(step.get("peer", {}))
        baseline = frozenset(r.key() for r in self.controller.flows.all_rules())
        ids = self.controller.sdnip.add_peer(peer)
        self._peer_baselines[peer.name] = (baseline, frozenset(ids))
        return f"intents {ids}"

    def _do_announce(self, step):
        route = Route(step["prefix"], step["peer"], step.get("as_path_len", 1))
        delta = self.controller.sdnip.process_announcement(step["peer"], route)
        return str(delta)

    def _do_withdraw(self, step):
        delta = self.controller.sdnip.process_withdrawal(step["peer"], step["prefix"])
        return str(delta)

    def _do_create_vxp(self, step):
        vxp = self.controller.l2sdx.create_vxp(step.get("name", ""))
        return f"vxp '{vxp.name}'"

    def _do_add_connector(self, step):
        connector = self.controller.l2sdx.add_connector(
            step.get("vxp", ""),
            step.get("name", ""),
            ConnectPoint.parse(step["cp"]),
            step["vlan"],
        )
        return f"connector '{connector.name}' at {connector.cp} vlan {connector.vlan}"

    def _do_request_circuit(self, step):
        circuit = self.controller.l2sdx.request_circuit(step["a"], step["b"])
        return f"circuit {circuit.id} is {circuit.admin_state}"

    def _do_remove_circuit(self, step):
        self.controller.l2sdx.remove_circuit(int(step["id"]))
        return f"circuit {step['id']} removed"

    def _do_link_down(self, step):
        result = self.controller.set_link_state(_endpoint(step["a"]), _endpoint(step["b"]), "DOWN")
        return f"events {result['events']}, recompiled {result['recompiled']}"

    def _do_link_up(self, step):
        result = self.controller.set_link_state(_endpoint(step["a"]), _endpoint(step["b"]), "UP")
        return f"events {result['events']}, recompiled {result['recompiled']}"

    def _do_fail_instance(self, step):
        result = self.controller.fail_instance(step["instance"])
        return f"reassigned {result.reassignments}"

    def _do_recover_instance(self, step):
        result = self.controller.recover_instance(step["instance"])
        return f"reassigned {result.reassignments}"

    # -- assertions ------------------------------------------------------------

    def _assert(self, step) -> str:
        check = step.get("check")
        if check not in CHECKS:
            raise ValidationError(f"unknown check '{check}'", subject=str(check))
        handler = getattr(self, "_check_" + check.lower())
        ok, detail = handler(step)
        if not ok:
            raise AssertionFailed(f"{check}: {detail}")
        return f"{check}: {detail}"

    def _check_session_established(self, step):
        peer = step["peer"]
        expect = step.get("expect", ESTABLISHED)
        up = self.controller.sdnip.session_established(peer)
        state = ESTABLISHED if up else "IDLE"
        return state == expect, f"'{peer}' is {state}"

    def _check_delivered(self, step):
        header = build_header(step)
        ingress = ConnectPoint.parse(step["ingress"])
        result = self.controller.traverse(header, ingress)
        expect = ConnectPoint.parse(step["expect"])
        trace = " -> ".join(str(cp) for cp in result.hops)
        if not result.delivered:
            return False, f"{result.status} ({result.reason}); trace {trace}"
        if result.egress != expect:
            return False, f"delivered at {result.egress}, expected {expect}; trace {trace}"
        expect_vlan = step.get("expect_vlan")
        if expect_vlan is not None and result.header.vlan != expect_vlan:
            return False, f"delivered with vlan {result.header.vlan}, expected {expect_vlan}"
        return True, f"delivered at {result.egress} vlan {result.header.vlan}; trace {trace}"

    def _check_flows_unchanged_except(self, step):
        peer = step["peer"]
        baseline = self._peer_baselines.get(peer)
        if baseline is None:
            return False, f"no ADD_PEER baseline recorded for '{peer}'"
        before_keys, new_intents = baseline
        current = frozenset(
            r.key()
            for r in self.controller.flows.all_rules()
            if r.intent not in new_intents
        )
        if current == before_keys:
            return True, f"{len(before_keys)} preexisting rules untouched"
        gained = len(current - before_keys)
        lost = len(before_keys - current)
        return False, f"preexisting rule set changed (+{gained}/-{lost})"

    def _check_status_is(self, step):
        status = self.controller.l2sdx.status(step["subject"])
        expect = step.get("status", "UP")
        return (
            status.status == expect,
            f"'{step['subject']}' is {status.status} ({status.detail})",
        )

    def _check_master_alive(self, step):
        cluster = self.controller.cluster
        if not cluster.initialized:
            return False, "cluster not initialized"
        masters = []
        for device in sorted(self.controller.topology.devices):
            try:
                masters.append(f"{device}:{cluster.master_of(device)}")
            except OxpError as exc:
                return False, f"device '{device}': {exc.message}"
        return True, ", ".join(masters)


class AssertionFailed(Exception):
    """An ASSERT step did not hold; the run continues."""


def run_scenario(ref, config=None, name=None) -> ScenarioReport:
    """Replay a scenario file (or builtin name) on a fresh controller."""
    from .config import build_controller, read_scenario_steps

    steps = read_scenario_steps(ref)
    if config is not None:
        controller = build_controller(config)
    else:
        controller = Controller()
    runner = ScenarioRunner(controller)
    return runner.run(steps, name=name or str(ref))
