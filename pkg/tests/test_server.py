import json

import pytest
from fastapi.testclient import TestClient

from mapweld.cli import main
from mapweld.server import ServeState, create_app
from mapweld.updater import load_proposal


@pytest.fixture
def workspace(tmp_path):
    run = lambda argv: main([str(a) for a in argv])
    gt = tmp_path / "gt.json"
    frames = tmp_path / "frames.jsonl"
    grid_dir = tmp_path / "grid"
    new = tmp_path / "new.json"
    proposal = tmp_path / "proposal.json"
    run(["synth", "--scenario", "straight_road", "--out-gt", gt, "--out-frames", frames])
    run(["accumulate", "--frames", frames, "--out", grid_dir])
    run(["extract", "--grid", grid_dir, "--out", new])
    run(["flag", "--new", new, "--map", gt, "--threshold", 1.01, "--out", proposal])
    return {"gt": gt, "new": new, "proposal": proposal, "grid": grid_dir / "grid"}


@pytest.fixture
def client(workspace):
    state = ServeState(
        map_path=workspace["gt"],
        new_path=workspace["new"],
        proposal_path=workspace["proposal"],
        grid_stem=workspace["grid"],
    )
    return TestClient(create_app(state)), state, workspace


class TestReadEndpoints:
    def test_healthz(self, client):
        c, _, _ = client
        r = c.get("/healthz")
        assert r.status_code == 200
        assert r.text == "ok"

    def test_map_matches_file(self, client):
        c, _, ws = client
        r = c.get("/api/map")
        assert r.status_code == 200
        expected = json.loads(ws["gt"].read_text())
        assert r.json() == expected

    def test_new_matches_file(self, client):
        c, _, ws = client
        assert c.get("/api/new").json() == json.loads(ws["new"].read_text())

    def test_proposal_matches_file(self, client):
        c, _, ws = client
        assert c.get("/api/proposal").json() == json.loads(ws["proposal"].read_text())

    def test_heatmap_shape_and_downsample(self, client):
        c, _, _ = client
        r = c.get("/api/heatmap/divider")
        assert r.status_code == 200
        body = r.json()
        assert len(body["counts"]) == body["spec"]["width"] * body["spec"]["height"]
        r2 = c.get("/api/heatmap/divider", params={"downsample": 4})
        body2 = r2.json()
        assert body2["spec"]["width"] <= (body["spec"]["width"] + 3) // 4
        assert body2["spec"]["resolution"] == pytest.approx(4 * body["spec"]["resolution"])
        assert max(body2["counts"]) == max(body["counts"])  # block max pooling

    def test_heatmap_404_without_grid(self, workspace):
        state = ServeState(
            map_path=workspace["gt"],
            new_path=workspace["new"],
            proposal_path=workspace["proposal"],
            grid_stem=None,
        )
        c = TestClient(create_app(state))
        assert c.get("/api/heatmap/divider").status_code == 404

    def test_cors_headers(self, client):
        c, _, _ = client
        r = c.get("/api/map", headers={"Origin": "http://localhost:5173"})
        assert r.headers.get("access-control-allow-origin") == "*"


class TestDecisionFlow:
    def test_decision_persists_to_file(self, client):
        c, state, ws = client
        cells = c.get("/api/proposal").json()["cells"]
        assert cells
        cid = cells[0]["cell_id"]
        r = c.post("/api/decision", json={"cell_id": cid, "decision": "accepted"})
        assert r.status_code == 200
        assert r.json()["decision"] == "accepted"
        on_disk = load_proposal(ws["proposal"])
        assert on_disk.get(cid).decision.value == "accepted"
        # restart simulation: a fresh state sees the persisted decision
        state2 = ServeState(
            map_path=ws["gt"], new_path=ws["new"], proposal_path=ws["proposal"]
        )
        assert state2.proposal.get(cid).decision.value == "accepted"

    def test_unknown_cell_404(self, client):
        c, _, _ = client
        r = c.post("/api/decision", json={"cell_id": "99_99", "decision": "accepted"})
        assert r.status_code == 404

    def test_merge_conflict_while_pending(self, client):
        c, _, _ = client
        r = c.post("/api/merge")
        assert r.status_code == 409

    def test_merge_after_decisions(self, client):
        c, _, ws = client
        cells = c.get("/api/proposal").json()["cells"]
        for k, cell in enumerate(cells):
            decision = "accepted" if k % 2 == 0 else "rejected"
            assert c.post(
                "/api/decision", json={"cell_id": cell["cell_id"], "decision": decision}
            ).status_code == 200
        r = c.post("/api/merge")
        assert r.status_code == 200
        body = r.json()
        assert body["elements"]

    def test_reject_all_merge_returns_base_map(self, client):
        c, _, ws = client
        cells = c.get("/api/proposal").json()["cells"]
        for cell in cells:
            c.post("/api/decision", json={"cell_id": cell["cell_id"], "decision": "rejected"})
        r = c.post("/api/merge")
        assert r.status_code == 200
        assert r.json() == json.loads(ws["gt"].read_text())
