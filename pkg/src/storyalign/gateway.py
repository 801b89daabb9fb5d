"""Chat-completion access: providers, deterministic decoding, structured parsing.

A provider turns a ChatRequest into raw text. The Gateway adds a bounded
in-flight limit, an append-only request log, and structured-output
parsing with bounded retries. Malformed model output is never an
exception at this layer; it comes back as a StructuredReply with
parse_ok=False so callers can decide on a fallback.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import requests

from .errors import ProviderUnavailable

JSON_OPEN = "<JSON>"
JSON_CLOSE = "</JSON>"

_DELIMITED = re.compile(re.escape(JSON_OPEN) + r"(.*?)" + re.escape(JSON_CLOSE), re.DOTALL | re.IGNORECASE)


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024
    tag: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")


@dataclass
class StructuredReply:
    raw_text: str
    extracted_payload: Any
    parse_ok: bool
    attempts: int


def request_hash(req: ChatRequest) -> str:
    blob = json.dumps(
        [req.system_prompt, req.user_prompt, req.temperature, req.max_tokens],
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def extract_json_payload(text: str) -> tuple[Any, bool]:
    """Pull a JSON value out of a model reply.

    The first delimited <JSON>...</JSON> span wins; anything around it is
    ignored. Without delimiters, try to decode a JSON value starting at
    each opening bracket in turn, trimming whatever trails it.
    """
    match = _DELIMITED.search(text)
    if match:
        try:
            return json.loads(match.group(1)), True
        except json.JSONDecodeError:
            return None, False
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(text):
        if ch not in "[{":
            continue
        try:
            value, _ = decoder.raw_decode(text[pos:])
            return value, True
        except json.JSONDecodeError:
            continue
    return None, False


class ChatProvider(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


class MockProvider:
    """Replayable provider: a reply per request tag.

    Fixtures come from an in-memory mapping or a directory of files named
    after the tag (an optional .txt suffix is tolerated). Lookup is a
    pure function of the fixture set and the tag, so identical requests
    always produce byte-identical replies.
    """

    def __init__(self, fixtures: Mapping[str, str] | Path | str):
        if isinstance(fixtures, (str, Path)):
            self._dir: Path | None = Path(fixtures)
            self._table: dict[str, str] = {}
        else:
            self._dir = None
            self._table = dict(fixtures)

    def complete(self, req: ChatRequest) -> str:
        if self._dir is None:
            if req.tag in self._table:
                return self._table[req.tag]
            raise ProviderUnavailable(f"no mock fixture for tag {req.tag!r}")
        for candidate in (self._dir / req.tag, self._dir / f"{req.tag}.txt"):
            if candidate.is_file():
                return candidate.read_text(encoding="utf-8")
        raise ProviderUnavailable(f"no mock fixture file for tag {req.tag!r} under {self._dir}")


class HttpChatProvider:
    """OpenAI-style chat endpoint client with retry and backoff."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def complete(self, req: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise requests.HTTPError(f"server error {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * (2**attempt))
        raise ProviderUnavailable(f"chat endpoint {self.endpoint} unreachable: {last_error}")


class Gateway:
    """Provider wrapper: bounded concurrency, request log, structured replies."""

    def __init__(
        self,
        provider: ChatProvider,
        max_in_flight: int = 4,
        run_log_path: Path | str | None = None,
        max_attempts: int = 3,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.provider = provider
        self.max_attempts = max_attempts
        self._slots = threading.Semaphore(max_in_flight)
        self._log_lock = threading.Lock()
        self._log_path = Path(run_log_path) if run_log_path else None
        self.calls = 0

    def complete(self, req: ChatRequest) -> str:
        with self._slots:
            reply = self.provider.complete(req)
            self.calls += 1
        self._log(req, reply)
        return reply

    def complete_structured(
        self,
        req: ChatRequest,
        schema: Callable[[Any], Any],
        max_attempts: int | None = None,
    ) -> StructuredReply:
        """Call complete and parse the reply, retrying the identical request.

        schema is a validator: it receives the decoded JSON value and
        returns the (possibly normalized) payload, raising ValueError or
        TypeError to reject it. Persistent malformed output yields
        parse_ok=False with the last raw text preserved; only transport
        failures raise.
        """
        attempts_allowed = self.max_attempts if max_attempts is None else max_attempts
        if attempts_allowed < 1:
            raise ValueError("max_attempts must be >= 1")
        raw = ""
        for attempt in range(1, attempts_allowed + 1):
            raw = self.complete(req)
            value, ok = extract_json_payload(raw)
            if ok:
                try:
                    payload = schema(value)
                except (ValueError, TypeError):
                    continue
                return StructuredReply(raw, payload, True, attempt)
        return StructuredReply(raw, None, False, attempts_allowed)

    def _log(self, req: ChatRequest, reply: str) -> None:
        if self._log_path is None:
            return
        record = {
            "ts": time.time(),
            "tag": req.tag,
            "request_hash": request_hash(req),
            "reply": reply,
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._log_lock:
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            with self._log_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
