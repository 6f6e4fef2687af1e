"""Command-line interface; every verb calls the gateway HTTP API.

``serve`` starts the gateway, ``scenario run`` replays a script on a
fresh in-process controller (writing the report files next to the
delimited step log), and everything else is a thin client for a running
gateway selected by ``--server`` or $OXP_SERVER.
"""

import json
import sys

import click
import requests

from ..errors import OxpError
from .config import load_config

DEFAULT_SERVER = "http://127.0.0.1:8181"


class Client:
    def __init__(self, server, as_json):
        self.server = server.rstrip("/")
        self.as_json = as_json

    def call(self, method, path, body=None):
        try:
            response = requests.request(method, self.server + path, json=body, timeout=30)
        except requests.RequestException as exc:
            raise click.ClickException(f"cannot reach gateway at {self.server}: {exc}")
        if response.status_code >= 400:
            try:
                error = response.json()
            except ValueError:
                raise click.ClickException(f"HTTP {response.status_code}: {response.text}")
            if self.as_json:
                click.echo(json.dumps(error, indent=2), err=True)
                sys.exit(1)
            raise click.ClickException(
                f"{error.get('code', 'ERROR')}: {error.get('message', response.text)}"
            )
        return response.json()

    def get(self, path):
        return self.call("GET", path)

    def post(self, path, body=None):
        return self.call("POST", path, body or {})

    def delete(self, path, body=None):
        return self.call("DELETE", path, body)

    def emit(self, payload, human):
        """Print JSON in --json mode, else the human rendering."""
        if self.as_json:
            click.echo(json.dumps(payload, indent=2))
        else:
            human(payload)


def _table(rows, headers):
    if not rows:
        click.echo("(none)")
        return
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(h), *(len(row[i]) for row in cells)) for i, h in enumerate(headers)
    ]
    click.echo("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in cells:
        click.echo("  ".join(c.ljust(w) for c, w in zip(row, widths)))


@click.group()
@click.option("--server", "-s", envvar="OXP_SERVER", default=DEFAULT_SERVER, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx, server, as_json):
    """Operate a software-defined Open eXchange Point controller."""
    ctx.obj = Client(server, as_json)


# -- serve ------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", envvar="OXP_CONFIG", default=None,
              help="Gateway config file (JSON).")
@click.option("--listen", default=None, help="Override host:port.")
@click.option("--scenario", "scenario_ref", default=None,
              help="Scenario to replay into the live controller at startup.")
def serve(config_path, listen, scenario_ref):
    """Start the gateway HTTP service."""
    from .api import serve as run_server

    try:
        config = load_config(config_path)
        if listen:
            config.listen = listen
        run_server(config, scenario_ref=scenario_ref)
    except OxpError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}")


# -- topology ------------------------------------------------------------------


@main.group()
def topology():
    """Inspect and fail/restore topology elements."""


@topology.command("show")
@click.pass_obj
def topology_show(client):
    body = client.get("/topology")

    def human(body):
        _table(
            [(d["id"], d["ports"], d["state"]) for d in body["devices"]],
            ["device", "ports", "state"],
        )
        click.echo()
        _table(
            [(l["a"], l["b"], l["state"]) for l in body["links"]],
            ["a", "b", "state"],
        )

    client.emit(body, human)


def _link_state(client, a, b, state):
    body = client.post(f"/topology/links/{a.replace('/', ':')}/{b.replace('/', ':')}/state",
                       {"state": state})
    client.emit(body, lambda b: click.echo(
        f"events: {', '.join(b['events']) or '(none)'}; recompiled intents: "
        f"{b['recompiled'] or '(none)'}"
    ))


@topology.command("link-down")
@click.argument("a")
@click.argument("b")
@click.pass_obj
def topology_link_down(client, a, b):
    _link_state(client, a, b, "DOWN")


@topology.command("link-up")
@click.argument("a")
@click.argument("b")
@click.pass_obj
def topology_link_up(client, a, b):
    _link_state(client, a, b, "UP")


# -- intents and flows -----------------------------------------------------------


@main.group()
def intent():
    """Intent store inspection."""


@intent.command("list")
@click.pass_obj
def intent_list(client):
    body = client.get("/intents")
    client.emit(body, lambda intents: _table(
        [
            (
                i["id"],
                i["kind"],
                i["state"],
                i["owner"],
                i.get("ingress") or ",".join(i.get("ingresses", [])),
                i["egress"],
            )
            for i in intents
        ],
        ["id", "kind", "state", "owner", "ingress(es)", "egress"],
    ))


@main.group()
def flows():
    """Flow table inspection."""


@flows.command("dump")
@click.argument("device")
@click.pass_obj
def flows_dump(client, device):
    body = client.get(f"/flows/{device}")

    def human(rules):
        _table(
            [
                (
                    r["id"],
                    r["priority"],
                    json.dumps(r["match"], sort_keys=True),
                    " ".join(
                        a["type"]
                        + (f"({a.get('vlan', a.get('port'))})" if len(a) > 1 else "")
                        for a in r["actions"]
                    ),
                    r["owner"],
                    r["intent"],
                )
                for r in rules
            ],
            ["id", "prio", "match", "actions", "owner", "intent"],
        )

    client.emit(body, human)


# -- sdnip ------------------------------------------------------------------------


@main.group()
def sdnip():
    """BGP peering and route-to-flow translation."""


@sdnip.command("peers")
@click.pass_obj
def sdnip_peers(client):
    body = client.get("/sdnip/peers")

    def human(body):
        rows = []
        if body["speaker"]:
            s = body["speaker"]
            rows.append((s["name"], s["cp"], s["ip"], s["asn"], s["vlan"], s["kind"]))
        rows.extend(
            (p["name"], p["cp"], p["ip"], p["asn"], p["vlan"], p["kind"])
            for p in body["peers"]
        )
        _table(rows, ["name", "cp", "ip", "asn", "vlan", "kind"])

    client.emit(body, human)


@sdnip.command("rib")
@click.pass_obj
def sdnip_rib(client):
    body = client.get("/sdnip/rib")
    client.emit(body, lambda rib: _table(
        [
            (prefix, entry["best"],
             "; ".join(f"{r['peer']} len={r['as_path_len']}" for r in entry["routes"]))
            for prefix, entry in rib.items()
        ],
        ["prefix", "best", "routes"],
    ))


@sdnip.command("sessions")
@click.pass_obj
def sdnip_sessions(client):
    body = client.get("/sdnip/sessions")
    client.emit(body, lambda sessions: _table(
        [(s["peer"], s["state"]) for s in sessions], ["peer", "state"]
    ))


@sdnip.command("add-peer")
@click.option("--name", required=True)
@click.option("--cp", required=True, help="Edge connect point, e.g. PRG/4.")
@click.option("--ip", required=True)
@click.option("--asn", type=int, default=0)
@click.option("--vlan", type=int, default=10, show_default=True)
@click.pass_obj
def sdnip_add_peer(client, name, cp, ip, asn, vlan):
    body = client.post("/sdnip/peers", {"name": name, "cp": cp, "ip": ip, "asn": asn, "vlan": vlan})
    client.emit(body, lambda b: click.echo(f"peer '{name}' added; intents {b['intents']}"))


@sdnip.command("remove-peer")
@click.argument("name")
@click.pass_obj
def sdnip_remove_peer(client, name):
    body = client.delete(f"/sdnip/peers/{name}")
    client.emit(body, lambda b: click.echo(f"peer '{name}' removed"))


@sdnip.command("announce")
@click.option("--peer", required=True)
@click.option("--prefix", required=True)
@click.option("--as-path-len", type=int, default=1, show_default=True)
@click.pass_obj
def sdnip_announce(client, peer, prefix, as_path_len):
    body = client.post("/sdnip/routes", {"peer": peer, "prefix": prefix, "as_path_len": as_path_len})
    client.emit(body, lambda b: click.echo(
        f"{b['prefix']}: best={b.get('best')} changed={b['changed']}"
    ))


@sdnip.command("withdraw")
@click.option("--peer", required=True)
@click.option("--prefix", required=True)
@click.pass_obj
def sdnip_withdraw(client, peer, prefix):
    body = client.delete("/sdnip/routes", {"peer": peer, "prefix": prefix})
    client.emit(body, lambda b: click.echo(
        f"{b['prefix']}: best={b.get('best')} changed={b['changed']}"
    ))


# -- l2sdx ------------------------------------------------------------------------


@main.group()
def l2sdx():
    """Virtual eXchange Points, connectors and circuits."""


@l2sdx.command("vxp-create")
@click.argument("name")
@click.pass_obj
def l2sdx_vxp_create(client, name):
    body = client.post("/l2sdx/vxps", {"name": name})
    client.emit(body, lambda b: click.echo(f"vxp '{b['name']}' created"))


@l2sdx.command("connector-add")
@click.argument("vxp")
@click.argument("name")
@click.argument("cp")
@click.argument("vlan", type=int)
@click.pass_obj
def l2sdx_connector_add(client, vxp, name, cp, vlan):
    body = client.post("/l2sdx/connectors", {"vxp": vxp, "name": name, "cp": cp, "vlan": vlan})
    client.emit(body, lambda b: click.echo(
        f"connector '{b['name']}' at {b['cp']} vlan {b['vlan']} (vxp {b['vxp']})"
    ))


@l2sdx.command("circuit-request")
@click.argument("a")
@click.argument("b")
@click.pass_obj
def l2sdx_circuit_request(client, a, b):
    body = client.post("/l2sdx/circuits", {"a": a, "b": b})
    client.emit(body, lambda c: click.echo(
        f"circuit {c['id']} {c['a']}<->{c['b']}: {c['admin_state']} (intents {c['intents']})"
    ))


@l2sdx.command("circuit-remove")
@click.argument("circuit_id", type=int)
@click.pass_obj
def l2sdx_circuit_remove(client, circuit_id):
    body = client.delete(f"/l2sdx/circuits/{circuit_id}")
    client.emit(body, lambda b: click.echo(f"circuit {circuit_id} removed"))


@l2sdx.command("status")
@click.argument("subject")
@click.pass_obj
def l2sdx_status(client, subject):
    body = client.get(f"/l2sdx/status/{subject}")
    client.emit(body, lambda s: click.echo(f"{subject}: {s['status']} ({s['detail']})"))


# -- cluster ------------------------------------------------------------------------


@main.group()
def cluster():
    """Controller instances and device mastership."""


@cluster.command("show")
@click.pass_obj
def cluster_show(client):
    body = client.get("/cluster")

    def human(body):
        _table([(i["name"], i["state"]) for i in body["instances"]], ["instance", "state"])
        click.echo()
        _table(
            [
                (device, entry["master"] or "-", ",".join(entry["preference"]))
                for device, entry in body["mastership"].items()
            ],
            ["device", "master", "preference"],
        )

    client.emit(body, human)


@cluster.command("fail")
@click.argument("name")
@click.pass_obj
def cluster_fail(client, name):
    body = client.post(f"/cluster/fail/{name}")
    client.emit(body, lambda b: click.echo(
        "reassigned: "
        + (", ".join(f"{r['device']}->{r['master']}" for r in b["reassignments"]) or "(none)")
        + (" [ALL INSTANCES DEAD]" if b["all_dead"] else "")
    ))


@cluster.command("recover")
@click.argument("name")
@click.pass_obj
def cluster_recover(client, name):
    body = client.post(f"/cluster/recover/{name}")
    client.emit(body, lambda b: click.echo(
        "reassigned: "
        + (", ".join(f"{r['device']}->{r['master']}" for r in b["reassignments"]) or "(none)")
    ))


# -- scenario ------------------------------------------------------------------------


@main.group()
def scenario():
    """Scripted event sequences with verification."""


@scenario.command("run")
@click.argument("script")
@click.option("--report-dir", default=None, type=click.Path(),
              help="Write report.json, steps.csv and figures here.")
@click.option("--config", "config_path", envvar="OXP_CONFIG", default=None,
              help="Config providing the baseline controller.")
@click.pass_obj
def scenario_run(client, script, report_dir, config_path):
    """Replay SCRIPT (a file or builtin name) on a fresh controller."""
    from ..controller import Controller
    from .config import build_controller, read_scenario_steps
    from .scenario import ScenarioRunner

    try:
        steps = read_scenario_steps(script)
        base = build_controller(load_config(config_path)) if config_path else Controller()
        runner = ScenarioRunner(base)
        report = runner.run(steps, name=script)
    except OxpError as exc:
        raise click.ClickException(f"{exc.code}: {exc.message}")

    if client.as_json:
        click.echo(json.dumps(report.to_dict(), indent=2))
    else:
        for step in report.steps:
            marker = "ok " if step.outcome == "OK" else "FAIL"
            click.echo(f"[{marker}] {step.index:3d} {step.action:22s} {step.detail}")
        summary = report.summary()
        click.echo(f"{summary['ok']}/{summary['steps']} steps OK")
    if report_dir:
        from .report import write_report

        for path in write_report(report, runner.controller, report_dir):
            if not client.as_json:
                click.echo(f"wrote {path}")
    sys.exit(0 if report.ok else 1)


# -- ping ----------------------------------------------------------------------------


@main.command()
@click.argument("src_cp")
@click.argument("vlan", type=int)
@click.argument("dst_ip", required=False)
@click.pass_obj
def ping(client, src_cp, vlan, dst_ip):
    """Inject a traversal at SRC_CP (vlan 0 = untagged) and print the trace."""
    body = {"ingress": src_cp}
    if vlan:
        body["vlan"] = vlan
    if dst_ip:
        body["ip_dst"] = dst_ip
        body["l4"] = "ICMP"
    result = client.post("/traverse", body)

    def human(result):
        click.echo(" -> ".join(result["hops"]))
        if result["status"] == "DELIVERED":
            click.echo(
                f"DELIVERED at {result['egress']} vlan {result['header']['vlan']}"
            )
        else:
            click.echo(f"{result['status']}: {result['reason']} (at {result['device']})")

    client.emit(result, human)
    sys.exit(0 if result["status"] == "DELIVERED" else 1)


if __name__ == "__main__":
    main()
