"""Wire-contract HTTP clients for every pluggable neural backend.

Every model the pipeline depends on (annotator, expert validators, MCQ
generator, evaluated model, response-to-option aligner) sits behind a
single-exchange JSON-over-HTTP POST contract so the core stays free of any
model runtime.  Retries are the caller's job via call_with_retries so that
in-process mock backends get the identical policy.
"""

from __future__ import annotations

import hashlib
import json
import time
import logging

import requests

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3


class BackendUnavailableError(RuntimeError):
    """Backend still failing after the configured number of attempts."""


class UnparseableResponseError(ValueError):
    """Backend answered, but the body is not a usable structured document."""


def content_hash(payload: dict) -> str:
    """Stable content address of a request/work item (sha256 over canonical
    JSON) — retries and pipeline re-runs are idempotent by this key."""
    canon = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def call_with_retries(fn, *args, retries: int = DEFAULT_RETRIES, backoff_s: float = 0.05, **kwargs):
    """At most `retries` attempts with exponential backoff.

    Transport-level failures end in BackendUnavailableError; responses that
    arrived but never parsed end in UnparseableResponseError (each bad parse
    still consumes an attempt).
    """
    if retries < 1:
        raise ValueError("retries must be >= 1")
    last: Exception | None = None
    for attempt in range(retries):
        try:
            return fn(*args, **kwargs)
        except UnparseableResponseError as exc:
            last = exc
        except (requests.RequestException, ConnectionError, TimeoutError, OSError) as exc:
            last = exc
        if attempt + 1 < retries:
            time.sleep(backoff_s * (2 ** attempt))
    if isinstance(last, UnparseableResponseError):
        raise last
    raise BackendUnavailableError(f"backend failed after {retries} attempts: {last}") from last


class HttpJsonClient:
    """One POST exchange per call; JSON in, JSON out."""

    def __init__(self, base_url: str, timeout_s: float = 60.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        headers = {"X-Request-Id": content_hash(payload)}
        response = self.session.post(url, json=payload, timeout=self.timeout_s, headers=headers)
        response.raise_for_status()
        try:
            doc = response.json()
        except ValueError as exc:
            raise UnparseableResponseError(f"{url}: body is not JSON") from exc
        if not isinstance(doc, dict):
            raise UnparseableResponseError(f"{url}: expected a JSON object")
        return doc


# ── concrete backend roles ───────────────────────────────────────────────────

class AnnotatorClient(HttpJsonClient):
    """POST /v1/annotate — macro (stage 1), micro (stage 2), and ingest."""

    def annotate(self, stage: str, prompt_template_id: str, priors: dict, audio: str) -> dict:
        return self.post("/v1/annotate", {
            "stage": stage,
            "prompt_template_id": prompt_template_id,
            "priors": priors,
            "audio": audio,
        })


class ExpertClient(HttpJsonClient):
    """POST /v1/transcribe and /v1/classify — the cross-validation experts."""

    def transcribe(self, audio: str, language: str) -> str:
        doc = self.post("/v1/transcribe", {"audio": audio, "language": language})
        if "transcript" not in doc:
            raise UnparseableResponseError("transcription response lacks 'transcript'")
        return doc["transcript"]

    def classify(self, kind: str, payload: dict) -> dict:
        body = dict(payload)
        body["kind"] = kind
        return self.post("/v1/classify", body)


class McqClient(HttpJsonClient):
    """POST /v1/generate-mcq — question-stem/distractor synthesis."""

    def generate(self, record_doc: dict, dimension: str, n_options: int,
                 semantic_conflict: bool = False) -> dict:
        return self.post("/v1/generate-mcq", {
            "record": record_doc,
            "dimension": dimension,
            "n_options": n_options,
            "semantic_conflict": semantic_conflict,
        })


class ModelClient(HttpJsonClient):
    """POST /v1/choose and /v1/transcribe-tagged — the model under evaluation."""

    def choose(self, audio: str, stem: str, options: list[str], item_id: str = "") -> str:
        doc = self.post("/v1/choose", {
            "audio": audio, "stem": stem, "options": options, "item_id": item_id,
        })
        if "text" not in doc:
            raise UnparseableResponseError("choose response lacks 'text'")
        return str(doc["text"])

    def transcribe_tagged(self, audio: str, prompt: str, item_id: str = "") -> str:
        doc = self.post("/v1/transcribe-tagged", {
            "audio": audio, "prompt": prompt, "item_id": item_id,
        })
        if "text" not in doc:
            raise UnparseableResponseError("transcribe-tagged response lacks 'text'")
        return str(doc["text"])


class AlignerClient(HttpJsonClient):
    """POST /v1/align — maps a free-text response onto one of the options."""

    def align(self, response_text: str, options: list[str]) -> int | None:
        doc = self.post("/v1/align", {"response": response_text, "options": options})
        index = doc.get("index")
        return int(index) if index is not None else None
