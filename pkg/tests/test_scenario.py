import csv
import json

import pytest

from oxp.controller import Controller
from oxp.errors import ValidationError
from oxp.gateway.config import builtin_data, read_scenario_steps
from oxp.gateway.report import write_report
from oxp.gateway.scenario import ScenarioRunner, run_scenario


def fresh_runner():
    return ScenarioRunner(Controller())


class TestRunner:
    def test_empty_scenario(self):
        report = fresh_runner().run([], name="empty")
        assert report.steps == []
        assert report.ok
        assert report.summary() == {"steps": 0, "ok": 0, "failed": 0}

    def test_failed_assert_continues_execution(self):
        steps = [
            {"action": "LOAD_TOPOLOGY", "topology": "gts7"},
            {"action": "ASSERT", "check": "DELIVERED",
             "ingress": "PRG/4", "vlan": 100, "expect": "BRA/4"},
            {"action": "CREATE_VXP", "name": "after-failure"},
        ]
        report = fresh_runner().run(steps)
        assert [s.outcome for s in report.steps] == ["OK", "FAILED", "OK"]
        assert "DROPPED" in report.steps[1].detail

    def test_report_step_count_matches_scenario(self):
        steps = builtin_data("demo-ons2016")
        report = fresh_runner().run(steps, name="demo")
        assert len(report.steps) == len(steps)

    def test_demo_scenario_all_ok(self):
        report = run_scenario("demo-ons2016")
        assert report.ok, [s.to_dict() for s in report.steps if s.outcome != "OK"]
        assert report.digest["circuits"] == {"ACTIVE": 2}
        assert report.digest["rib_size"] == 3

    def test_determinism_excluding_elapsed(self):
        first = run_scenario("demo-ons2016").to_dict()
        second = run_scenario("demo-ons2016").to_dict()
        first.pop("elapsed_s")
        second.pop("elapsed_s")
        assert first == second

    def test_unknown_action_fails_step(self):
        report = fresh_runner().run([{"action": "EXPLODE"}])
        assert report.steps[0].outcome == "FAILED"
        assert "EXPLODE" in report.steps[0].detail

    def test_step_without_action_fails(self):
        report = fresh_runner().run([{"check": "MASTER_ALIVE"}])
        assert report.steps[0].outcome == "FAILED"

    def test_scenario_must_be_array(self):
        with pytest.raises(ValidationError):
            fresh_runner().run({"action": "CREATE_VXP"})

    def test_parse_error_carries_line_number(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('[\n  {"action": "CREATE_VXP"\n]')
        with pytest.raises(ValidationError, match="line 3"):
            read_scenario_steps(str(bad))

    def test_missing_file_errors(self):
        with pytest.raises(ValidationError, match="no-such"):
            read_scenario_steps("no-such-scenario.json")

    def test_inline_topology_document(self):
        steps = [
            {"action": "LOAD_TOPOLOGY", "document": {
                "devices": [{"id": "A", "ports": 4}, {"id": "B", "ports": 4}],
                "links": [{"a": "A/1", "b": "B/1"}],
            }},
            {"action": "CREATE_VXP", "name": "v"},
            {"action": "ADD_CONNECTOR", "vxp": "v", "name": "c1", "cp": "A/2", "vlan": 5},
            {"action": "ADD_CONNECTOR", "vxp": "v", "name": "c2", "cp": "B/2", "vlan": 6},
            {"action": "REQUEST_CIRCUIT", "a": "c1", "b": "c2"},
            {"action": "ASSERT", "check": "DELIVERED",
             "ingress": "A/2", "vlan": 5, "expect": "B/2", "expect_vlan": 6},
            {"action": "LINK_DOWN", "a": "A", "b": "B"},
            {"action": "ASSERT", "check": "STATUS_IS", "subject": "1", "status": "DOWN"},
            {"action": "LINK_UP", "a": "A", "b": "B"},
            {"action": "ASSERT", "check": "STATUS_IS", "subject": "1", "status": "UP"},
        ]
        report = fresh_runner().run(steps)
        assert report.ok, [s.to_dict() for s in report.steps if s.outcome != "OK"]


class TestReportFiles:
    def test_write_report_artifacts(self, tmp_path):
        controller = Controller()
        runner = ScenarioRunner(controller)
        report = runner.run(builtin_data("demo-ons2016"), name="demo")
        written = write_report(report, controller, tmp_path)
        names = {p.split("/")[-1] for p in map(str, written)}
        assert names == {"report.json", "steps.csv", "topology.png", "steps.png"}

        with open(tmp_path / "report.json") as fh:
            body = json.load(fh)
        assert body["summary"]["failed"] == 0

        with open(tmp_path / "steps.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "action", "outcome", "detail"]
        assert len(rows) == len(report.steps) + 1

        for figure in ("topology.png", "steps.png"):
            data = (tmp_path / figure).read_bytes()
            assert data[:8] == b"\x89PNG\r\n\x1a\n"
            assert len(data) > 1000
