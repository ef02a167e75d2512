import base64

import pytest
from fastapi.testclient import TestClient

from nsdiag.errors import StateError
from nsdiag.evaluation import load_feedback_records
from nsdiag.explain import bundle, fixture_tree, write_bundle
from nsdiag.service import STAGES, create_app, load_bundles

STAGE_PAYLOADS = (
    {"stage": "await_diagnosis", "radiologist_dx": "COV+", "sure": "sure"},
    {"stage": "await_quality", "quality": "High"},
    {
        "stage": "await_visual",
        "vis_ind": "Useful",
        "vis_des": "SomewhatUseful",
        "cmp_visual": "first-better",
    },
    {
        "stage": "await_textual",
        "text_ind": "Useful",
        "text_des": "NotUseful",
        "cmp_textual": "same",
    },
    {"stage": "await_overall", "cmp_overall": "first-better"},
)


@pytest.fixture(scope="module")
def bundles_dir(tmp_path_factory, small_cases, trained_models):
    root = tmp_path_factory.mktemp("bundles")
    s_model, r_model, _ = trained_models
    tree = fixture_tree()
    for sc in small_cases[:4]:
        b = bundle(sc.case, (s_model, r_model), tree)
        write_bundle(root / sc.case.case_id, sc.case, b)
    return root


@pytest.fixture()
def client(bundles_dir, tmp_path):
    app = create_app(bundles_dir, tmp_path / "log.jsonl")
    with TestClient(app) as c:
        c.log_path = tmp_path / "log.jsonl"
        yield c


def walk_all_stages(client, case_id):
    for payload in STAGE_PAYLOADS:
        resp = client.post(f"/cases/{case_id}/stage", json=payload)
        assert resp.status_code == 200, resp.text
    return resp.json()


class TestListing:
    def test_cases_sorted_with_stage(self, client):
        cases = client.get("/cases").json()
        assert len(cases) == 4
        assert [c["case_id"] for c in cases] == sorted(c["case_id"] for c in cases)
        assert all(c["stage"] == "await_diagnosis" for c in cases)
        assert all(c["complete"] is False for c in cases)

    def test_unknown_case_404(self, client):
        assert client.get("/cases/nope").status_code == 404
        assert client.post("/cases/nope/stage", json=STAGE_PAYLOADS[0]).status_code == 404


class TestProgressiveReveal:
    def test_initial_view_hides_everything(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        view = client.get(f"/cases/{case_id}").json()
        assert set(view) == {"case_id", "stage", "image_pgm"}
        image = base64.b64decode(view["image_pgm"]).decode("ascii")
        assert image.startswith("P2\n")

    def test_model_dx_appears_after_diagnosis(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        view = client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[0]).json()
        assert view["stage"] == "await_quality"
        assert view["model_dx"] in ("COV+", "COV-")
        assert "saliency_pgm" not in view
        assert "inductive_text" not in view

    def test_visual_artifacts_appear_at_visual_stage(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[0])
        view = client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[1]).json()
        assert view["stage"] == "await_visual"
        assert "saliency_pgm" in view and "mask_pgm" in view
        assert "inductive_text" not in view

    def test_textual_artifacts_appear_at_textual_stage(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        for payload in STAGE_PAYLOADS[:3]:
            client.post(f"/cases/{case_id}/stage", json=payload)
        view = client.get(f"/cases/{case_id}").json()
        assert view["stage"] == "await_textual"
        assert "because" in view["inductive_text"] or "(no conditions)" in view["inductive_text"]
        assert view["descriptive_csv"].startswith("feature,bin\n")

    def test_truth_never_serialized(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        walk_all_stages(client, case_id)
        for path in ("/cases", f"/cases/{case_id}", "/report"):
            body = client.get(path).text
            assert '"truth"' not in body


class TestStageMachine:
    def test_out_of_order_409(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        resp = client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[2])
        assert resp.status_code == 409

    def test_repeat_stage_409(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[0])
        resp = client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[0])
        assert resp.status_code == 409

    def test_complete_session_409(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        walk_all_stages(client, case_id)
        resp = client.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[4])
        assert resp.status_code == 409

    def test_bad_field_values_422(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        bad = dict(STAGE_PAYLOADS[0], radiologist_dx="positive")
        assert client.post(f"/cases/{case_id}/stage", json=bad).status_code == 422
        missing = {"stage": "await_diagnosis", "radiologist_dx": "COV+"}
        assert client.post(f"/cases/{case_id}/stage", json=missing).status_code == 422
        assert (
            client.post(f"/cases/{case_id}/stage", json={"stage": "launch"}).status_code == 422
        )

    def test_stage_sequence(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        seen = [client.get(f"/cases/{case_id}").json()["stage"]]
        for payload in STAGE_PAYLOADS:
            seen.append(client.post(f"/cases/{case_id}/stage", json=payload).json()["stage"])
        assert seen == list(STAGES)


class TestLogging:
    def test_one_line_per_completed_session(self, client):
        cases = [c["case_id"] for c in client.get("/cases").json()]
        walk_all_stages(client, cases[0])
        walk_all_stages(client, cases[1])
        lines = client.log_path.read_text().splitlines()
        assert len(lines) == 2
        records = load_feedback_records(client.log_path)
        assert [r.case_id for r in records] == cases[:2]
        assert records[0].ratings == {
            "vis_ind": "Useful",
            "vis_des": "SomewhatUseful",
            "text_ind": "Useful",
            "text_des": "NotUseful",
        }

    def test_incomplete_session_not_logged(self, client):
        case_id = client.get("/cases").json()[0]["case_id"]
        for payload in STAGE_PAYLOADS[:3]:
            client.post(f"/cases/{case_id}/stage", json=payload)
        assert not client.log_path.exists()

    def test_replay_restores_completed_sessions(self, bundles_dir, tmp_path):
        log = tmp_path / "log.jsonl"
        app = create_app(bundles_dir, log)
        with TestClient(app) as c:
            case_id = c.get("/cases").json()[0]["case_id"]
            walk_all_stages(c, case_id)
        app2 = create_app(bundles_dir, log)
        with TestClient(app2) as c:
            listing = {e["case_id"]: e for e in c.get("/cases").json()}
            assert listing[case_id]["complete"] is True
            assert listing[case_id]["stage"] == "complete"
            others = [e for e in listing.values() if e["case_id"] != case_id]
            assert all(e["stage"] == "await_diagnosis" for e in others)
            assert c.post(f"/cases/{case_id}/stage", json=STAGE_PAYLOADS[0]).status_code == 409

    def test_report_aggregates_log(self, client):
        cases = [c["case_id"] for c in client.get("/cases").json()]
        walk_all_stages(client, cases[0])
        payload = client.get("/report").json()
        assert payload["record_count"] == 1
        assert payload["usefulness"]["vis_ind"] == [1, 0, 0]
        assert payload["agreement_sure"][0] + payload["agreement_sure"][1] == 1

    def test_report_empty_log(self, client):
        payload = client.get("/report").json()
        assert payload["record_count"] == 0


class TestBundleLoading:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(StateError):
            load_bundles(tmp_path / "absent")

    def test_incomplete_bundle(self, tmp_path):
        broken = tmp_path / "bundles" / "case-x"
        broken.mkdir(parents=True)
        (broken / "image.pgm").write_text("P2\n1 1\n255\n0\n")
        with pytest.raises(StateError):
            load_bundles(tmp_path / "bundles")
