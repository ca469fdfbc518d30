"""HTTP service wrapping a ReviewQueue.

Endpoints:
    GET  /api/queue?reviewer=R          items R can review or adjudicate
    GET  /api/items/{id}?reviewer=R     one item (R's view), with audio URL
    GET  /api/audio/{id}                the item's audio file, when present
    POST /api/items/{id}/review         submit a ReviewDecision
    POST /api/items/{id}/adjudicate     submit an AdjudicationDecision
    GET  /api/export/retained           retained records as JSON lines
    GET  /api/stats                     per-state item counts

Error mapping: 404 unknown item, 409 VersionConflict (body carries
current_version so clients can refetch) or InvalidState, 403
DuplicateReviewer, 422 validation problems.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .review import (
    AdjudicationDecision,
    DuplicateReviewerError,
    InvalidStateError,
    ReviewDecision,
    ReviewQueue,
    VersionConflictError,
)
from .schema import ValidationErrorList, emit_record, validate_record


class ReviewPayload(BaseModel):
    reviewer_id: str
    verdict: str
    revision: dict | None = None
    expected_version: int
    timestamp: str | None = None


class AdjudicationPayload(BaseModel):
    adjudicator_id: str
    consistent: bool
    final_revision: dict | None = None
    expected_version: int
    timestamp: str | None = None


def _error(status: int, name: str, detail: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": name, "detail": detail, **extra})


def _item_payload(queue: ReviewQueue, item, viewer: str | None) -> dict:
    doc = item.to_dict(viewer=viewer)
    doc["audio_url"] = f"/api/audio/{item.item_id}"
    doc["audio_path"] = item.record.audio_path
    return doc


def create_app(queue: ReviewQueue) -> FastAPI:
    app = FastAPI(title="annotation review service", version="0.1.0")
    app.state.queue = queue

    @app.get("/api/queue")
    def get_queue(reviewer: str):
        return {
            "reviewer": reviewer,
            "review": [
                _item_payload(queue, item, reviewer)
                for item in queue.review_queue_for(reviewer)
            ],
            "adjudicate": [
                _item_payload(queue, item, reviewer)
                for item in queue.adjudication_queue_for(reviewer)
            ],
        }

    @app.get("/api/items/{item_id}")
    def get_item(item_id: str, reviewer: str | None = None):
        try:
            item = queue.items[item_id]
        except KeyError:
            return _error(404, "NotFound", f"unknown item {item_id!r}")
        return _item_payload(queue, item, reviewer)

    @app.get("/api/audio/{item_id}")
    def get_audio(item_id: str):
        try:
            item = queue.items[item_id]
        except KeyError:
            return _error(404, "NotFound", f"unknown item {item_id!r}")
        path = Path(item.record.audio_path)
        if not path.is_file():
            return _error(404, "NotFound", f"no audio file at {path}")
        return FileResponse(path)

    @app.post("/api/items/{item_id}/review")
    def post_review(item_id: str, payload: ReviewPayload):
        try:
            decision = ReviewDecision(
                reviewer_id=payload.reviewer_id,
                verdict=payload.verdict,
                revision=(
                    None if payload.revision is None
                    else validate_record(payload.revision, queue.vocabulary)
                ),
                **({"timestamp": payload.timestamp} if payload.timestamp else {}),
            )
            item = queue.submit_review(item_id, decision, payload.expected_version)
        except KeyError:
            return _error(404, "NotFound", f"unknown item {item_id!r}")
        except VersionConflictError as exc:
            return _error(409, "VersionConflict", str(exc),
                          current_version=queue.items[item_id].version)
        except InvalidStateError as exc:
            return _error(409, "InvalidState", str(exc))
        except DuplicateReviewerError as exc:
            return _error(403, "DuplicateReviewer", str(exc))
        except ValidationErrorList as exc:
            return _error(422, "ValidationError", str(exc),
                          issues=[i.__dict__ for i in exc.issues])
        except ValueError as exc:
            return _error(422, "InvalidRequest", str(exc))
        return _item_payload(queue, item, payload.reviewer_id)

    @app.post("/api/items/{item_id}/adjudicate")
    def post_adjudication(item_id: str, payload: AdjudicationPayload):
        try:
            decision = AdjudicationDecision(
                adjudicator_id=payload.adjudicator_id,
                consistent=payload.consistent,
                final_revision=(
                    None if payload.final_revision is None
                    else validate_record(payload.final_revision, queue.vocabulary)
                ),
                **({"timestamp": payload.timestamp} if payload.timestamp else {}),
            )
            item = queue.submit_adjudication(item_id, decision, payload.expected_version)
        except KeyError:
            return _error(404, "NotFound", f"unknown item {item_id!r}")
        except VersionConflictError as exc:
            return _error(409, "VersionConflict", str(exc),
                          current_version=queue.items[item_id].version)
        except InvalidStateError as exc:
            return _error(409, "InvalidState", str(exc))
        except DuplicateReviewerError as exc:
            return _error(403, "DuplicateReviewer", str(exc))
        except ValidationErrorList as exc:
            return _error(422, "ValidationError", str(exc),
                          issues=[i.__dict__ for i in exc.issues])
        except ValueError as exc:
            return _error(422, "InvalidRequest", str(exc))
        return _item_payload(queue, item, payload.adjudicator_id)

    @app.get("/api/export/retained")
    def export_retained():
        lines = [
            json.dumps(emit_record(entry.record), ensure_ascii=False, sort_keys=True)
            for entry in queue.export_retained()
        ]
        return PlainTextResponse(
            "\n".join(lines) + ("\n" if lines else ""),
            media_type="application/x-ndjson",
        )

    @app.get("/api/stats")
    def stats():
        return queue.stats()

    return app


def serve(queue: ReviewQueue, host: str = "127.0.0.1", port: int = 8787) -> None:
    import uvicorn

    uvicorn.run(create_app(queue), host=host, port=port, log_level="warning")
