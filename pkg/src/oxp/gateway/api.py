"""HTTP/JSON API over the controller.

Every mutation funnels through the controller's single-writer lock and
is answered after commit; reads serve the latest committed state.
Errors are uniform ``{code, message, subject}`` objects.
"""

import logging
import os

from fastapi import Body, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..controller import Controller
from ..errors import OxpError, ValidationError
from ..sdnip import Route
from ..topology import ConnectPoint
from .config import GatewayConfig, build_controller
from .scenario import ScenarioRunner, build_header, _endpoint, _peer_from

log = logging.getLogger(__name__)

_STATUS_BY_CODE = {
    "VALIDATION": 400,
    "NOT_FOUND": 404,
    "CONFLICT": 409,
    "ISOLATION": 409,
    "NO_PATH": 409,
}

UI_ENV = "OXP_UI"


def create_app(controller: Controller, config: GatewayConfig = None) -> FastAPI:
    app = FastAPI(title="oxp gateway", docs_url=None, redoc_url=None)
    app.state.controller = controller
    app.state.config = config or GatewayConfig()
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(OxpError)
    async def _oxp_error(request: Request, exc: OxpError):
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(exc.code, 400), content=exc.to_dict()
        )

    # -- topology ----------------------------------------------------------

    @app.get("/topology")
    def get_topology():
        with controller.lock:
            return controller.topology.to_dict()

    @app.post("/topology/links/{a}/{b}/state")
    def set_link_state(a: str, b: str, payload: dict = Body(...)):
        return controller.set_link_state(_endpoint(a), _endpoint(b), payload.get("state"))

    @app.post("/topology/devices/{device}/state")
    def set_device_state(device: str, payload: dict = Body(...)):
        return controller.set_device_state(device, payload.get("state"))

    # -- intents and flows -----------------------------------------------------

    @app.get("/intents")
    def get_intents():
        with controller.lock:
            return [intent.to_dict() for intent in controller.intents.list()]

    @app.get("/flows/{device}")
    def get_flows(device: str):
        with controller.lock:
            return [rule.to_dict() for rule in controller.flows.table(device)]

    @app.post("/traverse")
    def traverse(payload: dict = Body(...)):
        ingress = payload.get("ingress")
        if ingress is None:
            raise ValidationError("traverse needs an 'ingress' connect point")
        header = build_header(payload)
        with controller.lock:
            result = controller.traverse(header, ConnectPoint.parse(ingress))
        return result.to_dict()

    # -- sdnip ----------------------------------------------------------------

    @app.get("/sdnip/rib")
    def get_rib():
        with controller.lock:
            return controller.sdnip.rib.to_dict()

    @app.get("/sdnip/sessions")
    def get_sessions():
        with controller.lock:
            return [s.to_dict() for s in controller.sdnip.refresh_sessions()]

    @app.get("/sdnip/peers")
    def get_peers():
        with controller.lock:
            sdnip = controller.sdnip
            peers = [sdnip.peers[n].to_dict() for n in sorted(sdnip.peers)]
            speaker = sdnip.speaker.to_dict() if sdnip.speaker else None
            return {"speaker": speaker, "peers": peers}

    @app.post("/sdnip/activate")
    def activate(payload: dict = Body(...)):
        speaker = _peer_from({**payload.get("speaker", {}), "kind": "INTERNAL_SPEAKER"})
        peers = [_peer_from(p) for p in payload.get("peers", [])]
        with controller.lock:
            ids = controller.sdnip.activate(peers, speaker)
        return {"intents": ids}

    @app.post("/sdnip/peers")
    def add_peer(payload: dict = Body(...)):
        peer = _peer_from(payload)
        with controller.lock:
            ids = controller.sdnip.add_peer(peer)
        return {"intents": ids}

    @app.delete("/sdnip/peers/{name}")
    def remove_peer(name: str):
        with controller.lock:
            controller.sdnip.remove_peer(name)
        return {"removed": name}

    @app.post("/sdnip/routes")
    def announce(payload: dict = Body(...)):
        route = Route(payload["prefix"], payload["peer"], payload.get("as_path_len", 1))
        with controller.lock:
            return controller.sdnip.process_announcement(payload["peer"], route)

    @app.delete("/sdnip/routes")
    def withdraw(payload: dict = Body(...)):
        with controller.lock:
            return controller.sdnip.process_withdrawal(payload["peer"], payload["prefix"])

    # -- l2sdx -------------------------------------------------------------------

    @app.get("/l2sdx/vxps")
    def get_vxps():
        with controller.lock:
            l2 = controller.l2sdx
            return [l2.vxps[n].to_dict() for n in sorted(l2.vxps)]

    @app.post("/l2sdx/vxps")
    def create_vxp(payload: dict = Body(...)):
        with controller.lock:
            return controller.l2sdx.create_vxp(payload.get("name", "")).to_dict()

    @app.get("/l2sdx/connectors")
    def get_connectors():
        with controller.lock:
            l2 = controller.l2sdx
            return [l2.connectors[n].to_dict() for n in sorted(l2.connectors)]

    @app.post("/l2sdx/connectors")
    def add_connector(payload: dict = Body(...)):
        with controller.lock:
            connector = controller.l2sdx.add_connector(
                payload.get("vxp", ""),
                payload.get("name", ""),
                ConnectPoint.parse(payload["cp"]),
                payload["vlan"],
            )
        return connector.to_dict()

    @app.get("/l2sdx/circuits")
    def get_circuits():
        with controller.lock:
            l2 = controller.l2sdx
            return [l2.circuits[i].to_dict() for i in sorted(l2.circuits)]

    @app.post("/l2sdx/circuits")
    def request_circuit(payload: dict = Body(...)):
        with controller.lock:
            circuit = controller.l2sdx.request_circuit(payload.get("a"), payload.get("b"))
        return circuit.to_dict()

    @app.delete("/l2sdx/circuits/{circuit_id}")
    def remove_circuit(circuit_id: int):
        with controller.lock:
            controller.l2sdx.remove_circuit(circuit_id)
        return {"removed": circuit_id}

    @app.get("/l2sdx/status/{subject}")
    def status(subject: str):
        with controller.lock:
            return controller.l2sdx.status(subject).to_dict()

    # -- cluster -------------------------------------------------------------------

    @app.get("/cluster")
    def get_cluster():
        with controller.lock:
            return controller.cluster.to_dict()

    @app.post("/cluster/fail/{name}")
    def fail_instance(name: str):
        return controller.fail_instance(name).to_dict()

    @app.post("/cluster/recover/{name}")
    def recover_instance(name: str):
        return controller.recover_instance(name).to_dict()

    # -- scenario and summary ---------------------------------------------------------

    @app.post("/scenario")
    def run_scenario_endpoint(payload=Body(...)):
        steps = payload.get("steps") if isinstance(payload, dict) else payload
        name = payload.get("name", "scenario") if isinstance(payload, dict) else "scenario"
        fresh = build_controller(app.state.config)
        report = ScenarioRunner(fresh).run(steps or [], name=name)
        return report.to_dict()

    @app.get("/summary")
    def summary():
        return controller.summary()

    ui_dir = os.environ.get(UI_ENV, os.path.join(os.getcwd(), "frontend", "dist"))
    if os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(config: GatewayConfig, scenario_ref=None):
    """Build a controller from config, optionally autorun a scenario, serve."""
    import uvicorn

    controller = build_controller(config)
    ref = scenario_ref or config.scenario
    if ref:
        from .config import read_scenario_steps

        report = ScenarioRunner(controller).run(read_scenario_steps(ref), name=str(ref))
        log.info("autorun scenario '%s': %s", ref, report.summary())
    app = create_app(controller, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
