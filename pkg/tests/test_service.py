import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from cellcast.service import ServiceConfig, create_app

from conftest import load_fixture_bytes

SMALL_SETTINGS = {"resolution": [320, 180], "fps": 4, "voice": "default",
                  "gap_ms": 100, "enter_ms": 200, "exit_ms": 200}


@pytest.fixture
def client(tmp_path):
    config = ServiceConfig(data_dir=tmp_path / "data", stub_llm=True, stub_tts=True)
    app = create_app(config)
    with TestClient(app) as test_client:
        yield test_client


def upload(client, name="covid_tutorial.ipynb"):
    response = client.post("/sessions", content=load_fixture_bytes(name))
    assert response.status_code == 200, response.text
    return response.json()


def shrink_settings(client, session):
    """PUT the script back with small render settings for fast jobs."""
    script = client.get(f"/sessions/{session['id']}/script").json()
    script["settings"] = SMALL_SETTINGS
    response = client.put(f"/sessions/{session['id']}/script",
                          params={"version": session["version"]},
                          content=json.dumps(script))
    assert response.status_code == 200, response.text
    return response.json()["version"]


def wait_for_job(client, job_id, timeout=90.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        payload = client.get(f"/jobs/{job_id}").json()
        if payload["state"] in ("done", "failed"):
            return payload
        time.sleep(0.1)
    raise AssertionError(f"job {job_id} did not finish")


def test_upload_builds_flow_one_node_per_code_cell(client):
    session = upload(client)
    flow = client.get(f"/sessions/{session['id']}/flow").json()
    assert [node["id"] for node in flow] == [1, 2, 3, 4]
    assert flow[1]["description"] == "Load dataset"
    assert session["script"]["scenes"][0]["id"] == "s1"


def test_upload_malformed_notebook_is_422(client):
    response = client.post("/sessions", content=b"{}")
    assert response.status_code == 422
    assert response.json()["error"] == "MalformedDocument"


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/flow").status_code == 404


def test_emphasis_roundtrip_and_overlap(client):
    session = upload(client)
    script = session["script"]
    scene = script["scenes"][2]
    start = scene["source"].index("Case_Type == 'Confirmed'")
    response = client.post(f"/scenes/{scene['id']}/emphasis", json={
        "session": session["id"], "version": session["version"],
        "span": [start, start + len("Case_Type == 'Confirmed'")],
        "annotation": "Filter out the confirmed cases",
    })
    assert response.status_code == 200
    version = response.json()["version"]

    overlap = client.post(f"/scenes/{scene['id']}/emphasis", json={
        "session": session["id"], "version": version,
        "span": [start + 2, start + 10], "annotation": "overlapping",
    })
    assert overlap.status_code == 422
    assert overlap.json()["error"] == "SpanOverlap"


def test_stale_version_conflict(client):
    session = upload(client)
    scene_id = session["script"]["scenes"][0]["id"]
    body = {"session": session["id"], "version": session["version"],
            "span": [0, 6], "annotation": "note"}
    first = client.post(f"/scenes/{scene_id}/emphasis", json=body)
    assert first.status_code == 200
    second = client.post(f"/scenes/{scene_id}/emphasis",
                         json={**body, "span": [8, 12]})  # same stale version
    assert second.status_code == 409


def test_exactly_one_409_under_concurrent_stale_writers(client):
    session = upload(client)
    scene_id = session["script"]["scenes"][0]["id"]
    version = session["version"]
    results = []

    def writer(span):
        response = client.post(f"/scenes/{scene_id}/emphasis", json={
            "session": session["id"], "version": version,
            "span": span, "annotation": "race entry",
        })
        results.append(response.status_code)

    threads = [threading.Thread(target=writer, args=(span,))
               for span in ([0, 6], [8, 12])]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert sorted(results) == [200, 409]
    script = client.get(f"/sessions/{session['id']}/script")
    assert script.status_code == 200
    emphases = json.loads(script.content)["scenes"][0]["emphases"]
    assert len(emphases) == 1  # winner applied exactly once, loser rejected


def test_narrate_fills_segments_and_links(client):
    session = upload(client)
    script = session["script"]
    scene = script["scenes"][2]
    start = scene["source"].index("Case_Type == 'Confirmed'")
    response = client.post(f"/scenes/{scene['id']}/emphasis", json={
        "session": session["id"], "version": session["version"],
        "span": [start, start + len("Case_Type == 'Confirmed'")],
        "annotation": "Filter out the confirmed cases",
    })
    emphasis_id = response.json()["emphasis"]["id"]
    narrated = client.post(f"/sessions/{session['id']}/narrate",
                           json={"version": response.json()["version"]})
    assert narrated.status_code == 200
    scenes = narrated.json()["script"]["scenes"]
    assert all(scene["segments"] for scene in scenes)
    target = scenes[2]
    linked = [seg for seg in target["segments"] if emphasis_id in seg["linked_emphasis"]]
    assert linked, "emphasis did not get auto-linked"


def test_question_endpoint_swaps_sentence(client):
    session = upload(client)
    narrated = client.post(f"/sessions/{session['id']}/narrate",
                           json={"version": session["version"]}).json()
    segment = narrated["script"]["scenes"][0]["segments"][-1]
    response = client.post(f"/segments/{segment['id']}/question",
                           json={"session": session["id"], "version": narrated["version"]})
    assert response.status_code == 200
    updated = next(seg for scene in response.json()["script"]["scenes"]
                   for seg in scene["segments"] if seg["id"] == segment["id"])
    assert updated["interactive"] is True
    assert updated["category"] == "question"
    assert "?" in updated["text"]
    again = client.post(f"/segments/{segment['id']}/question",
                        json={"session": session["id"], "version": response.json()["version"]})
    assert again.status_code == 422
    assert again.json()["error"] == "AlreadyInteractive"


def test_links_endpoint(client):
    session = upload(client)
    scene = session["script"]["scenes"][0]
    response = client.post(f"/scenes/{scene['id']}/emphasis", json={
        "session": session["id"], "version": session["version"],
        "span": [0, 6], "annotation": "the import",
    })
    emphasis_id = response.json()["emphasis"]["id"]
    narrated = client.post(f"/sessions/{session['id']}/narrate",
                           json={"version": response.json()["version"]}).json()
    segment_id = narrated["script"]["scenes"][0]["segments"][0]["id"]
    linked = client.post(f"/segments/{segment_id}/links", json={
        "session": session["id"], "version": narrated["version"],
        "emphasis_ids": [emphasis_id],
    })
    assert linked.status_code == 200
    too_many = client.post(f"/segments/{segment_id}/links", json={
        "session": session["id"], "version": linked.json()["version"],
        "emphasis_ids": [emphasis_id, emphasis_id, emphasis_id],
    })
    assert too_many.status_code == 422
    assert too_many.json()["error"] == "TooManyLinks"


def test_delete_emphasis(client):
    session = upload(client)
    scene = session["script"]["scenes"][0]
    created = client.post(f"/scenes/{scene['id']}/emphasis", json={
        "session": session["id"], "version": session["version"],
        "span": [0, 6], "annotation": "to be removed",
    }).json()
    response = client.delete(f"/emphasis/{created['emphasis']['id']}",
                             params={"session": session["id"], "version": created["version"]})
    assert response.status_code == 200
    script = json.loads(client.get(f"/sessions/{session['id']}/script").content)
    assert script["scenes"][0]["emphases"] == []


def test_hide_node_drops_scene_and_restores_it(client):
    session = upload(client)
    version = session["version"]
    hidden = client.patch("/flow/nodes/2", json={"session": session["id"],
                                                 "version": version, "hidden": True})
    assert hidden.status_code == 200
    assert [s["id"] for s in hidden.json()["script"]["scenes"]] == ["s1", "s3", "s4"]
    shown = client.patch("/flow/nodes/2", json={"session": session["id"],
                                                "version": hidden.json()["version"], "hidden": False})
    assert [s["id"] for s in shown.json()["script"]["scenes"]] == ["s1", "s2", "s3", "s4"]


def test_split_node_endpoint(client):
    session = upload(client)
    response = client.patch("/flow/nodes/3", json={
        "session": session["id"], "version": session["version"], "split_lines": [1]})
    assert response.status_code == 200
    node = next(n for n in response.json()["flow"] if n["id"] == 3)
    assert [child["line_range"] for child in node["children"]] == [[0, 1], [1, 3]]


def test_scene_preview_job(client):
    session = upload(client)
    version = shrink_settings(client, session)
    narrated = client.post(f"/sessions/{session['id']}/narrate", json={"version": version}).json()
    job = client.post("/render", json={"session": session["id"], "scope": "s1"}).json()
    payload = wait_for_job(client, job["job"])
    assert payload["state"] == "done", payload.get("error")
    manifest = client.get(f"/artifacts/{job['job']}/manifest").json()
    scene_duration = manifest["scenes"][0]["duration_ms"]
    assert payload["artifact"]["duration_ms"] == scene_duration == manifest["total_ms"]
    video = client.get(f"/artifacts/{job['job']}/video")
    assert video.status_code == 200
    assert len(video.content) > 0
    frame = client.get(f"/artifacts/{job['job']}/files/frame_000000.png")
    assert frame.status_code == 200


def test_failed_job_names_segment_and_leaves_state(tmp_path):
    config = ServiceConfig(data_dir=tmp_path / "data", stub_llm=True, stub_tts=False)
    app = create_app(config)
    with TestClient(app) as client:
        import os
        os.environ["CELLCAST_TTS_URL"] = "http://127.0.0.1:9/tts"
        try:
            session = upload(client)
            version = shrink_settings(client, session)
            narrated = client.post(f"/sessions/{session['id']}/narrate",
                                   json={"version": version}).json()
            before = client.get(f"/sessions/{session['id']}/script").content
            job = client.post("/render", json={"session": session["id"], "scope": "full"}).json()
            payload = wait_for_job(client, job["job"])
            assert payload["state"] == "failed"
            assert "segment g" in payload["error"]
            after = client.get(f"/sessions/{session['id']}/script").content
            assert after == before  # failed job left the session untouched
            assert client.get(f"/sessions/{session['id']}/flow").status_code == 200
        finally:
            os.environ.pop("CELLCAST_TTS_URL", None)


def test_concurrent_jobs_on_different_sessions(client):
    session_a = upload(client)
    session_b = upload(client)
    for session in (session_a, session_b):
        version = shrink_settings(client, session)
        client.post(f"/sessions/{session['id']}/narrate", json={"version": version})
    job_a = client.post("/render", json={"session": session_a["id"], "scope": "s1"}).json()
    job_b = client.post("/render", json={"session": session_b["id"], "scope": "s1"}).json()
    payload_a = wait_for_job(client, job_a["job"])
    payload_b = wait_for_job(client, job_b["job"])
    assert payload_a["state"] == payload_b["state"] == "done"


def test_put_script_with_mismatched_scenes_rejected(client):
    session = upload(client)
    script = json.loads(client.get(f"/sessions/{session['id']}/script").content)
    script["scenes"] = script["scenes"][:1]
    response = client.put(f"/sessions/{session['id']}/script",
                          params={"version": session["version"]},
                          content=json.dumps(script))
    assert response.status_code == 422


def test_put_script_schema_violation_reports_path(client):
    session = upload(client)
    script = json.loads(client.get(f"/sessions/{session['id']}/script").content)
    script["scenes"][0]["segments"] = [{"id": "g1.1", "text": "x.", "category": "background",
                                        "linked_emphasis": ["a", "b", "c"], "interactive": False}]
    response = client.put(f"/sessions/{session['id']}/script",
                          params={"version": session["version"]},
                          content=json.dumps(script))
    assert response.status_code == 422
    assert "linked_emphasis" in response.json()["detail"]


def test_persistence_writes_files(tmp_path):
    config = ServiceConfig(data_dir=tmp_path / "data", stub_llm=True, stub_tts=True)
    with TestClient(create_app(config)) as client:
        session = upload(client)
        session_dir = tmp_path / "data" / "sessions" / session["id"]
        assert (session_dir / "script.nps.json").exists()
        assert (session_dir / "flow.json").exists()
        assert (session_dir / "covid_tutorial.ipynb").exists() or (session_dir / "notebook.ipynb").exists()
