"""Wire-protocol clients for external chat-completion model servers.

One protocol serves both roles the pipeline needs: an LLM for structured
recaption / criteria generation and a VLM judge for consistency scoring.
Requests follow the widely used chat-completions JSON schema (documented
field by field in the README).  Deterministic mock clients keyed by a
request digest make the whole test suite runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import requests

DEFAULT_TIMEOUT = 30.0
MAX_RETRIES = 2
MIN_TOP_K = 5

YES_FORMS = ("Yes", "yes", " Yes")
NO_FORMS = ("No", "no", " No")


class ClientError(RuntimeError):
    """Base class for chat-client failures."""


class TransientClientError(ClientError):
    """Retryable failure (timeout, 5xx)."""


class ClientConfigError(ClientError):
    """Permanent failure: bad endpoint, auth, or malformed request (4xx)."""


class CapabilityError(ClientError):
    """The server cannot provide a required capability (e.g. logprobs)."""


class ScoringError(ClientError):
    """A judge response could not be converted into a score."""


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    text: str
    images: tuple[str, ...] = ()  # base64-encoded attachments, user messages only


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    max_tokens: int = 256
    want_logprobs: bool = False
    top_k: int = MIN_TOP_K

    def validate(self) -> None:
        if len(self.messages) < 1:
            raise ClientConfigError("a chat request needs at least one message")
        for msg in self.messages:
            if msg.images and msg.role != "user":
                raise ClientConfigError(
                    f"image attachments are only allowed on user messages, found on {msg.role!r}"
                )
        if self.want_logprobs and self.top_k < MIN_TOP_K:
            raise CapabilityError(
                f"logprob scoring requires top_k >= {MIN_TOP_K}, got {self.top_k}"
            )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    # First-token top-k candidates as (surface form, logprob) pairs.
    top_candidates: tuple[tuple[str, float], ...] | None = None


def request_digest(request: ChatRequest) -> str:
    """Stable content hash used to key mock fixtures."""
    payload = {
        "model": request.model,
        "messages": [
            {"role": m.role, "text": m.text, "images": list(m.images)}
            for m in request.messages
        ],
        "max_tokens": request.max_tokens,
        "want_logprobs": request.want_logprobs,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _wire_body(request: ChatRequest) -> dict:
    messages = []
    for m in request.messages:
        if m.images:
            content = [{"type": "text", "text": m.text}]
            for img in m.images:
                content.append({
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{img}"},
                })
        else:
            content = m.text
        messages.append({"role": m.role, "content": content})
    body = {"model": request.model, "messages": messages, "max_tokens": request.max_tokens}
    if request.want_logprobs:
        body["logprobs"] = True
        body["top_logprobs"] = request.top_k
    return body


def _parse_wire_response(data: dict, want_logprobs: bool) -> ChatResponse:
    try:
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ClientError(f"malformed chat response: {exc}") from exc
    candidates = None
    if want_logprobs:
        try:
            top = choice["logprobs"]["content"][0]["top_logprobs"]
            candidates = tuple((c["token"], float(c["logprob"])) for c in top)
        except (KeyError, IndexError, TypeError):
            raise CapabilityError("server response carries no first-token logprobs")
        if not candidates:
            raise CapabilityError("empty logprob candidate list")
    return ChatResponse(text=text, top_candidates=candidates)


class HttpChatClient:
    """HTTP client with timeouts and bounded exponential-backoff retries."""

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        max_retries: int = MAX_RETRIES,
        backoff: float = 1.0,
    ):
        self.endpoint = endpoint or os.environ.get("IMGSET_ENDPOINT")
        self.api_key = api_key or os.environ.get("IMGSET_API_KEY")
        if not self.endpoint:
            raise ClientConfigError(
                "no endpoint configured (pass endpoint= or set IMGSET_ENDPOINT)"
            )
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def chat(self, request: ChatRequest) -> ChatResponse:
        request.validate()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = _wire_body(request)
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except requests.Timeout as exc:
                last_exc = TransientClientError(f"request timed out: {exc}")
                continue
            except requests.RequestException as exc:
                last_exc = TransientClientError(f"transport failure: {exc}")
                continue
            if 400 <= resp.status_code < 500:
                raise ClientConfigError(f"server rejected request: {resp.status_code} {resp.text[:200]}")
            if resp.status_code >= 500:
                last_exc = TransientClientError(f"server error {resp.status_code}")
                continue
            return _parse_wire_response(resp.json(), request.want_logprobs)
        raise last_exc if last_exc else ClientError("chat failed with no diagnostic")


class MockChatClient:
    """Offline client replaying recorded responses keyed by request digest.

    A fixture value is either a ChatResponse / response dict, or a list of
    transcript entries consumed in order; an entry ``{"error": "transient"}``
    simulates a retryable failure (consumed by the retry loop here, so a
    503-then-200 transcript succeeds after one retry).
    """

    def __init__(self, fixtures: dict, max_retries: int = MAX_RETRIES):
        self.fixtures = dict(fixtures)
        self.max_retries = max_retries
        self.calls: list[str] = []

    @staticmethod
    def _to_response(entry) -> ChatResponse:
        if isinstance(entry, ChatResponse):
            return entry
        cands = entry.get("top_candidates")
        return ChatResponse(
            text=entry["text"],
            top_candidates=tuple((t, float(lp)) for t, lp in cands) if cands else None,
        )

    def chat(self, request: ChatRequest) -> ChatResponse:
        request.validate()
        digest = request_digest(request)
        self.calls.append(digest)
        if digest not in self.fixtures:
            raise ClientConfigError(f"no fixture recorded for request digest {digest[:12]}")
        entry = self.fixtures[digest]
        if isinstance(entry, list):
            for _ in range(self.max_retries + 1):
                if not entry:
                    raise ClientError("fixture transcript exhausted")
                step = entry.pop(0)
                if isinstance(step, dict) and step.get("error") == "transient":
                    continue
                return self._to_response(step)
            raise TransientClientError("fixture transcript kept failing")
        return self._to_response(entry)


def load_fixture_file(path) -> dict:
    """JSON transcript file: {digest: response-or-transcript, ...}."""
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _best_logprob(candidates, forms):
    hits = [lp for token, lp in candidates if token in forms]
    return max(hits) if hits else None


def yes_probability(response: ChatResponse) -> float:
    """Softmax over exactly the matched Yes/No first-token logits.

    The surface-form table is frozen: {"Yes", "yes", " Yes"} versus
    {"No", "no", " No"}.  Missing either side is a scoring error, never a
    silent zero.
    """
    if not response.top_candidates:
        raise ScoringError("response carries no first-token candidates")
    yes_lp = _best_logprob(response.top_candidates, YES_FORMS)
    no_lp = _best_logprob(response.top_candidates, NO_FORMS)
    if yes_lp is None or no_lp is None:
        missing = "Yes" if yes_lp is None else "No"
        raise ScoringError(
            f"no {missing!r} surface form among top-{len(response.top_candidates)} candidates"
        )
    # Branch on the larger side so swapping the two logits yields p and
    # exactly 1 - p (the subtraction is exact for p in [0.5, 1]).
    d = no_lp - yes_lp
    if d <= 0:
        return 1.0 / (1.0 + math.exp(d))
    return 1.0 - 1.0 / (1.0 + math.exp(-d))
