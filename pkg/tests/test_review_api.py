"""HTTP review-service tests: endpoint contracts, error mapping, blinding
over the wire, and NDJSON export."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient
from helpers import make_record, make_record_doc

from speechforge.review import ReviewQueue
from speechforge.review_api import create_app


@pytest.fixture()
def queue():
    q = ReviewQueue()
    for uid in ("utt-001", "utt-002"):
        q.enqueue(make_record(uid))
    return q


@pytest.fixture()
def client(queue):
    return TestClient(create_app(queue))


def review_body(reviewer, verdict, version, revision=None):
    return {
        "reviewer_id": reviewer,
        "verdict": verdict,
        "revision": revision,
        "expected_version": version,
    }


def test_queue_listing_and_single_item(client):
    listing = client.get("/api/queue", params={"reviewer": "r1"}).json()
    assert {i["item_id"] for i in listing["review"]} == {"utt-001", "utt-002"}
    assert listing["adjudicate"] == []

    doc = client.get("/api/items/utt-001", params={"reviewer": "r1"}).json()
    assert doc["state"] == "Pending"
    assert doc["version"] == 1
    assert doc["record"]["utterance_id"] == "utt-001"
    assert doc["audio_url"] == "/api/audio/utt-001"
    assert doc["audio_path"] == "/audio/utt-001.wav"


def test_unknown_item_is_404(client):
    response = client.get("/api/items/utt-404")
    assert response.status_code == 404
    assert response.json()["error"] == "NotFound"
    response = client.post("/api/items/utt-404/review",
                           json=review_body("r1", "AcceptUnmodified", 1))
    assert response.status_code == 404


def test_review_submission_advances_state(client):
    response = client.post("/api/items/utt-001/review",
                           json=review_body("r1", "AcceptUnmodified", 1))
    assert response.status_code == 200
    doc = response.json()
    assert doc["state"] == "OneReviewed"
    assert doc["version"] == 2

    response = client.post("/api/items/utt-001/review",
                           json=review_body("r2", "AcceptUnmodified", 2))
    assert response.json()["state"] == "Retained"


def test_stale_version_409_carries_current_version(client):
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "AcceptUnmodified", 1))
    response = client.post("/api/items/utt-001/review",
                           json=review_body("r2", "AcceptUnmodified", 1))
    assert response.status_code == 409
    body = response.json()
    assert body["error"] == "VersionConflict"
    assert body["current_version"] == 2
    # client refetches and retries at the advertised version
    retry = client.post("/api/items/utt-001/review",
                        json=review_body("r2", "AcceptUnmodified",
                                         body["current_version"]))
    assert retry.status_code == 200


def test_closed_item_is_409_invalid_state(client):
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "Discard", 1))
    client.post("/api/items/utt-001/review",
                json=review_body("r2", "Discard", 2))
    response = client.post("/api/items/utt-001/review",
                           json=review_body("r3", "AcceptUnmodified", 3))
    assert response.status_code == 409
    assert response.json()["error"] == "InvalidState"


def test_duplicate_reviewer_is_403(client):
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "AcceptUnmodified", 1))
    response = client.post("/api/items/utt-001/review",
                           json=review_body("r1", "Discard", 2))
    assert response.status_code == 403
    assert response.json()["error"] == "DuplicateReviewer"


def test_invalid_revision_is_422_with_issues(client):
    bad_revision = make_record_doc("utt-001", emotion="")
    response = client.post(
        "/api/items/utt-001/review",
        json=review_body("r1", "Modify", 1, revision=bad_revision),
    )
    assert response.status_code == 422
    body = response.json()
    assert body["error"] == "ValidationError"
    assert any(i["field"] == "emotion" for i in body["issues"])


def test_modify_without_revision_is_422(client):
    response = client.post("/api/items/utt-001/review",
                           json=review_body("r1", "Modify", 1))
    assert response.status_code == 422
    assert response.json()["error"] == "InvalidRequest"


def test_blinding_applies_over_the_wire(client):
    revision = make_record_doc("utt-001", emotion="Sad")
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "Modify", 1, revision=revision))

    as_r2 = client.get("/api/items/utt-001", params={"reviewer": "r2"}).json()
    assert as_r2["reviews"] == []
    assert as_r2["hidden_reviews"] == 1

    as_r1 = client.get("/api/items/utt-001", params={"reviewer": "r1"}).json()
    assert [r["reviewer_id"] for r in as_r1["reviews"]] == ["r1"]

    # the item also vanishes from r1's open-review queue
    listing = client.get("/api/queue", params={"reviewer": "r1"}).json()
    assert {i["item_id"] for i in listing["review"]} == {"utt-002"}


def test_adjudication_flow_over_http(client):
    rev1 = make_record_doc("utt-001", emotion="Sad")
    rev2 = make_record_doc("utt-001", emotion="Angry")
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "Modify", 1, revision=rev1))
    client.post("/api/items/utt-001/review",
                json=review_body("r2", "Modify", 2, revision=rev2))

    listing = client.get("/api/queue", params={"reviewer": "senior"}).json()
    assert {i["item_id"] for i in listing["adjudicate"]} == {"utt-001"}
    # an involved reviewer never sees it in their adjudication lane
    as_r1 = client.get("/api/queue", params={"reviewer": "r1"}).json()
    assert as_r1["adjudicate"] == []

    response = client.post("/api/items/utt-001/adjudicate", json={
        "adjudicator_id": "senior",
        "consistent": True,
        "final_revision": make_record_doc("utt-001", emotion="Angry"),
        "expected_version": 3,
    })
    assert response.status_code == 200
    assert response.json()["state"] == "Retained"

    insider = client.post("/api/items/utt-002/adjudicate", json={
        "adjudicator_id": "senior",
        "consistent": False,
        "final_revision": None,
        "expected_version": 1,
    })
    assert insider.status_code == 409   # utt-002 is still Pending
    assert insider.json()["error"] == "InvalidState"


def test_export_retained_is_ndjson(client):
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "AcceptUnmodified", 1))
    client.post("/api/items/utt-001/review",
                json=review_body("r2", "AcceptUnmodified", 2))

    response = client.get("/api/export/retained")
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("application/x-ndjson")
    lines = [l for l in response.text.splitlines() if l]
    assert len(lines) == 1
    doc = json.loads(lines[0])
    assert doc["utterance_id"] == "utt-001"
    assert response.text.endswith("\n")


def test_export_empty_when_nothing_retained(client):
    response = client.get("/api/export/retained")
    assert response.status_code == 200
    assert response.text == ""


def test_stats_endpoint(client):
    client.post("/api/items/utt-001/review",
                json=review_body("r1", "AcceptUnmodified", 1))
    stats = client.get("/api/stats").json()
    assert stats["Pending"] == 1
    assert stats["OneReviewed"] == 1
    assert stats["Retained"] == 0


def test_audio_endpoint_404_and_file_serving(tmp_path):
    audio = tmp_path / "utt-real.wav"
    audio.write_bytes(b"RIFF....WAVEfmt fake")
    queue = ReviewQueue()
    queue.enqueue(make_record("utt-real", audio_path=str(audio)))
    queue.enqueue(make_record("utt-missing"))
    client = TestClient(create_app(queue))

    ok = client.get("/api/audio/utt-real")
    assert ok.status_code == 200
    assert ok.content == b"RIFF....WAVEfmt fake"

    missing = client.get("/api/audio/utt-missing")
    assert missing.status_code == 404
    assert missing.json()["detail"].startswith("no audio file")
    assert client.get("/api/audio/utt-404").status_code == 404
