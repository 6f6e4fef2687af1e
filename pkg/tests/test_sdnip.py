import itertools
import random

import pytest

from oxp.controller import Controller
from oxp.dataplane import BGP_CTRL
from oxp.errors import ConflictError, NotFoundError, ValidationError
from oxp.intent import FAILED, INSTALLED, WITHDRAWN
from oxp.sdnip import ESTABLISHED, IDLE, Peer, Route
from oxp.topology import ConnectPoint

from conftest import ip_header, topo_doc_from_edges

CP = ConnectPoint

SPEAKER = dict(name="speaker", cp=CP("AMS", 5), ip="192.168.10.1", asn=65000,
               kind="INTERNAL_SPEAKER")
PEERS = {
    "LON": dict(name="LON", cp=CP("LON", 4), ip="192.168.10.2", asn=65001),
    "BRA": dict(name="BRA", cp=CP("BRA", 4), ip="192.168.10.3", asn=65002),
    "MIL": dict(name="MIL", cp=CP("MIL", 4), ip="192.168.10.4", asn=65003),
}
PRG = dict(name="PRG", cp=CP("PRG", 4), ip="192.168.10.5", asn=65004)


def activate_default(controller, names=("LON", "BRA", "MIL")):
    peers = [Peer(**PEERS[n]) for n in names]
    return controller.sdnip.activate(peers, Peer(**SPEAKER))


def rule_keys(controller):
    return {r.key() for r in controller.flows.all_rules()}


def expected_best(announcements, peers_by_name):
    """Independent selection oracle: min (as_path_len, origin peer IP)."""
    def ip_int(ip):
        a, b, c, d = (int(x) for x in ip.split("."))
        return (a << 24) | (b << 16) | (c << 8) | d

    return min(
        announcements,
        key=lambda r: (r.as_path_len, ip_int(peers_by_name[r.origin_peer].ip)),
    ).origin_peer


class TestActivate:
    def test_three_peers_six_installed_intents_duplex_reachability(self, gts7):
        ids = activate_default(gts7)
        assert len(ids) == 6
        assert all(gts7.intents.get(i).state == INSTALLED for i in ids)
        speaker = gts7.sdnip.speaker
        for peer in gts7.sdnip.peers.values():
            fwd = gts7.traverse(
                ip_header(speaker.ip, ip_src=peer.ip, vlan=peer.vlan, l4=BGP_CTRL),
                peer.cp,
            )
            assert fwd.delivered and fwd.egress == speaker.cp
            rev = gts7.traverse(
                ip_header(peer.ip, ip_src=speaker.ip, vlan=speaker.vlan, l4=BGP_CTRL),
                speaker.cp,
            )
            assert rev.delivered and rev.egress == peer.cp

    def test_zero_peers_is_fine(self, gts7):
        assert activate_default(gts7, names=()) == []

    def test_duplicate_ip_rejected_before_any_install(self, gts7):
        clash = dict(PEERS["BRA"], name="BRA2", ip=PEERS["LON"]["ip"])
        with pytest.raises(ValidationError):
            gts7.sdnip.activate(
                [Peer(**PEERS["LON"]), Peer(**clash)], Peer(**SPEAKER)
            )
        assert gts7.flows.all_rules() == []
        assert gts7.intents.list() == []

    def test_double_activation_rejected(self, gts7):
        activate_default(gts7)
        with pytest.raises(ConflictError):
            activate_default(gts7)


class TestAddRemovePeer:
    def test_add_prg_two_new_intents_preexisting_rules_untouched(self, gts7):
        activate_default(gts7)
        before = rule_keys(gts7)
        ids = gts7.sdnip.add_peer(Peer(**PRG))
        assert len(ids) == 2
        current_minus_new = {
            r.key() for r in gts7.flows.all_rules() if r.intent not in set(ids)
        }
        assert current_minus_new == before

    def test_add_then_remove_restores_rule_set(self, gts7):
        activate_default(gts7)
        before = rule_keys(gts7)
        gts7.sdnip.add_peer(Peer(**PRG))
        gts7.sdnip.remove_peer("PRG")
        assert rule_keys(gts7) == before

    def test_peer_on_disconnected_device_fails_in_isolation(self):
        controller = Controller()
        doc, _ = topo_doc_from_edges(["AMS", "LON", "ISLAND"], [("AMS", "LON")])
        controller.load_topology(doc)
        controller.sdnip.activate(
            [Peer(name="LON", cp=CP("LON", 2), ip="192.168.10.2", asn=65001)],
            Peer(name="speaker", cp=CP("AMS", 2), ip="192.168.10.1", asn=65000,
                 kind="INTERNAL_SPEAKER"),
        )
        ids = controller.sdnip.add_peer(
            Peer(name="ISL", cp=CP("ISLAND", 1), ip="192.168.10.9", asn=65009)
        )
        assert all(controller.intents.get(i).state == FAILED for i in ids)
        assert controller.sdnip.session_established("LON")
        assert not controller.sdnip.session_established("ISL")

    def test_duplicate_name_and_ip_rejected(self, gts7):
        activate_default(gts7)
        with pytest.raises(ConflictError):
            gts7.sdnip.add_peer(Peer(**dict(PRG, name="LON")))
        with pytest.raises(ConflictError):
            gts7.sdnip.add_peer(Peer(**dict(PRG, ip=PEERS["LON"]["ip"])))

    def test_remove_peer_cascades_routes(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        gts7.sdnip.process_announcement("LON", Route("10.3.0.0/16", "LON", 2))
        gts7.sdnip.process_announcement("BRA", Route("10.9.0.0/16", "BRA", 1))
        gts7.sdnip.remove_peer("BRA")
        rib = gts7.sdnip.rib
        assert "10.9.0.0/16" not in rib.routes
        assert rib.best["10.3.0.0/16"].origin_peer == "LON"
        probe = gts7.traverse(ip_header("10.3.1.1", ip_src="192.168.10.4"), CP("MIL", 4))
        assert probe.delivered and probe.egress == CP("LON", 4)

    def test_remove_peer_without_routes_withdraws_sessions_only(self, gts7):
        activate_default(gts7)
        session_ids = gts7.sdnip.session_intent_ids("MIL")
        gts7.sdnip.remove_peer("MIL")
        assert all(gts7.intents.get(i).state == WITHDRAWN for i in session_ids)
        assert "MIL" not in gts7.sdnip.peers

    def test_remove_unknown_errors(self, gts7):
        activate_default(gts7)
        with pytest.raises(NotFoundError):
            gts7.sdnip.remove_peer("NOPE")


class TestSessions:
    def test_all_established_after_activate(self, gts7):
        activate_default(gts7)
        states = gts7.sdnip.refresh_sessions()
        assert {s.peer: s.state for s in states} == {
            "LON": ESTABLISHED, "BRA": ESTABLISHED, "MIL": ESTABLISHED
        }

    def test_leaf_cut_idles_only_that_peer(self):
        controller = Controller()
        doc, _ = topo_doc_from_edges(
            ["CORE", "HUB", "LEAF"], [("CORE", "HUB"), ("HUB", "LEAF")]
        )
        controller.load_topology(doc)
        controller.sdnip.activate(
            [
                Peer(name="NEAR", cp=CP("HUB", 3), ip="192.168.10.2", asn=1),
                Peer(name="FAR", cp=CP("LEAF", 2), ip="192.168.10.3", asn=2),
            ],
            Peer(name="speaker", cp=CP("CORE", 2), ip="192.168.10.1", asn=0,
                 kind="INTERNAL_SPEAKER"),
        )
        assert all(s.state == ESTABLISHED for s in controller.sdnip.refresh_sessions())
        controller.set_link_state("HUB", "LEAF", "DOWN")
        states = {s.peer: s.state for s in controller.sdnip.refresh_sessions()}
        assert states == {"NEAR": ESTABLISHED, "FAR": IDLE}

    def test_refresh_before_activation_is_empty(self, gts7):
        assert gts7.sdnip.refresh_sessions() == []

    def test_failed_activation_leaves_sessions_idle(self):
        controller = Controller()
        doc, _ = topo_doc_from_edges(["AMS", "FARAWAY"], [])
        controller.load_topology(doc)
        controller.sdnip.activate(
            [Peer(name="X", cp=CP("FARAWAY", 1), ip="192.168.10.2", asn=1)],
            Peer(name="speaker", cp=CP("AMS", 1), ip="192.168.10.1", asn=0,
                 kind="INTERNAL_SPEAKER"),
        )
        assert {s.state for s in controller.sdnip.refresh_sessions()} == {IDLE}

    def test_announcement_gated_on_session(self):
        controller = Controller()
        doc, _ = topo_doc_from_edges(["AMS", "FARAWAY"], [])
        controller.load_topology(doc)
        controller.sdnip.activate(
            [Peer(name="X", cp=CP("FARAWAY", 1), ip="192.168.10.2", asn=1)],
            Peer(name="speaker", cp=CP("AMS", 1), ip="192.168.10.1", asn=0,
                 kind="INTERNAL_SPEAKER"),
        )
        with pytest.raises(ValidationError, match="ESTABLISHED"):
            controller.sdnip.process_announcement("X", Route("10.0.0.0/8", "X", 1))


class TestAnnouncements:
    def test_first_announcement_builds_transit(self, gts7):
        activate_default(gts7)
        delta = gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        assert delta["changed"] and delta["best"] == "BRA"
        intent = gts7.intents.get(gts7.sdnip.transit_intent_id("10.3.0.0/16"))
        assert intent.state == INSTALLED
        assert intent.egress == CP("BRA", 4)
        probe = gts7.traverse(ip_header("10.3.0.5", ip_src="192.168.10.2"), CP("LON", 4))
        assert probe.delivered and probe.egress == CP("BRA", 4)
        assert probe.header.vlan == 10

    def test_same_route_twice_is_idempotent(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        intent_id = gts7.sdnip.transit_intent_id("10.3.0.0/16")
        keys = rule_keys(gts7)
        delta = gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        assert delta["changed"] is False
        assert gts7.sdnip.transit_intent_id("10.3.0.0/16") == intent_id
        assert rule_keys(gts7) == keys

    def test_shorter_as_path_flips_best(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 3))
        gts7.sdnip.process_announcement("LON", Route("10.3.0.0/16", "LON", 1))
        peers = gts7.sdnip.peers
        announced = list(gts7.sdnip.rib.routes["10.3.0.0/16"].values())
        assert gts7.sdnip.rib.best["10.3.0.0/16"].origin_peer == expected_best(
            announced, peers
        )
        intent = gts7.intents.get(gts7.sdnip.transit_intent_id("10.3.0.0/16"))
        assert intent.egress == CP("LON", 4)

    def test_as_path_tie_breaks_on_lowest_peer_ip(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("MIL", Route("10.3.0.0/16", "MIL", 2))
        gts7.sdnip.process_announcement("LON", Route("10.3.0.0/16", "LON", 2))
        # LON has 192.168.10.2 < MIL 192.168.10.4.
        assert gts7.sdnip.rib.best["10.3.0.0/16"].origin_peer == "LON"

    def test_single_peer_announcement_builds_no_transit(self, gts7):
        activate_default(gts7, names=("BRA",))
        delta = gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        assert delta["changed"]
        assert gts7.sdnip.transit_intent_id("10.3.0.0/16") is None

    def test_unknown_peer_rejected(self, gts7):
        activate_default(gts7)
        with pytest.raises(NotFoundError):
            gts7.sdnip.process_announcement("NOPE", Route("10.0.0.0/8", "NOPE", 1))


class TestWithdrawals:
    def test_withdraw_only_route_removes_intent_and_rules(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        intent_id = gts7.sdnip.transit_intent_id("10.3.0.0/16")
        gts7.sdnip.process_withdrawal("BRA", "10.3.0.0/16")
        assert gts7.intents.get(intent_id).state == WITHDRAWN
        assert [r for r in gts7.flows.all_rules() if r.intent == intent_id] == []
        assert "10.3.0.0/16" not in gts7.sdnip.rib.routes

    def test_withdraw_non_best_changes_nothing(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        gts7.sdnip.process_announcement("LON", Route("10.3.0.0/16", "LON", 5))
        intent_id = gts7.sdnip.transit_intent_id("10.3.0.0/16")
        keys = rule_keys(gts7)
        delta = gts7.sdnip.process_withdrawal("LON", "10.3.0.0/16")
        assert delta["changed"] is False
        assert gts7.sdnip.transit_intent_id("10.3.0.0/16") == intent_id
        assert rule_keys(gts7) == keys

    def test_withdraw_best_flips_to_survivor(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        gts7.sdnip.process_announcement("LON", Route("10.3.0.0/16", "LON", 5))
        gts7.sdnip.process_withdrawal("BRA", "10.3.0.0/16")
        intent = gts7.intents.get(gts7.sdnip.transit_intent_id("10.3.0.0/16"))
        assert intent.egress == CP("LON", 4)
        probe = gts7.traverse(ip_header("10.3.7.7", ip_src="192.168.10.4"), CP("MIL", 4))
        assert probe.delivered and probe.egress == CP("LON", 4)

    def test_withdraw_unannounced_errors(self, gts7):
        activate_default(gts7)
        with pytest.raises(NotFoundError):
            gts7.sdnip.process_withdrawal("BRA", "10.3.0.0/16")


class TestRibProperties:
    def test_rib_to_flow_soundness(self, gts7):
        activate_default(gts7)
        gts7.sdnip.add_peer(Peer(**PRG))
        gts7.sdnip.process_announcement("BRA", Route("10.3.0.0/16", "BRA", 1))
        gts7.sdnip.process_announcement("LON", Route("10.1.0.0/16", "LON", 1))
        rng = random.Random(3)
        for prefix, best in gts7.sdnip.rib.best.items():
            best_peer = gts7.sdnip.peers[best.origin_peer]
            net = prefix.split("/")[0].split(".")
            for sender in gts7.sdnip.peers.values():
                if sender.name == best.origin_peer:
                    continue
                dst = f"{net[0]}.{net[1]}.{rng.randrange(256)}.{rng.randrange(256)}"
                probe = gts7.traverse(ip_header(dst, ip_src=sender.ip), sender.cp)
                assert probe.delivered, f"{sender.name} -> {prefix}"
                assert probe.egress == best_peer.cp
                assert probe.header.vlan == best_peer.vlan

    def test_longest_prefix_wins(self, gts7):
        activate_default(gts7)
        gts7.sdnip.process_announcement("BRA", Route("10.0.0.0/8", "BRA", 1))
        gts7.sdnip.process_announcement("LON", Route("10.3.0.0/16", "LON", 1))
        inner = gts7.traverse(ip_header("10.3.1.1", ip_src="192.168.10.4"), CP("MIL", 4))
        assert inner.egress == CP("LON", 4)
        outer = gts7.traverse(ip_header("10.4.1.1", ip_src="192.168.10.4"), CP("MIL", 4))
        assert outer.egress == CP("BRA", 4)

    def test_rib_independent_of_event_interleaving(self):
        # One event per peer; every interleaving preserves per-peer order.
        events = [
            ("LON", Route("10.3.0.0/16", "LON", 2)),
            ("MIL", Route("10.3.0.0/16", "MIL", 1)),
            ("BRA", Route("10.7.0.0/16", "BRA", 1)),
        ]
        outcomes = []
        for order in itertools.permutations(events):
            controller = Controller()
            from oxp.gateway.config import builtin_data

            controller.load_topology(builtin_data("gts7"))
            peers = [Peer(**PEERS[n]) for n in ("LON", "BRA", "MIL")]
            controller.sdnip.activate(peers, Peer(**SPEAKER))
            for peer, route in order:
                controller.sdnip.process_announcement(peer, route)
            outcomes.append(
                (controller.sdnip.rib.to_dict(), frozenset(rule_keys(controller)))
            )
        assert all(o == outcomes[0] for o in outcomes[1:])
