"""Multimodal chat sessions with three interchangeable transports.

* live    — HTTPS chat-completions call, images embedded as base64.
* record  — live plus persistence of every exchange to a .jsonl transcript
            with content-addressed PNG sidecars.
* replay  — deterministic offline playback of a transcript; any divergence
            between the constructed prompt and the recorded one fails
            loudly instead of answering the wrong question.

Credentials come only from the environment (never CLI flags, never stored
in transcripts): MLLM_CVRP_API_KEY (fallback OPENAI_API_KEY) and
MLLM_CVRP_ENDPOINT for the URL.  MLLM_CVRP_RPM caps live request rate
process-wide.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field, replace

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
API_KEY_VARS = ("MLLM_CVRP_API_KEY", "OPENAI_API_KEY")
ENDPOINT_VAR = "MLLM_CVRP_ENDPOINT"
RPM_VAR = "MLLM_CVRP_RPM"

TRANSCRIPT_VERSION = 1


class TransportError(RuntimeError):
    """Network/HTTP failure that survived the retry budget."""


class RateLimited(TransportError):
    def __init__(self, message, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ReplayExhausted(RuntimeError):
    """More sends than the transcript has records."""


class ReplayMismatch(RuntimeError):
    """Constructed prompt hash differs from the recorded one."""


class SerializationError(RuntimeError): ...


class CorruptTranscript(RuntimeError):
    """Sidecar image bytes do not match their content hash."""


# ---------------------------------------------------------------- messages

@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    @property
    def sha(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if self.role == "assistant" and any(
                isinstance(p, ImagePart) for p in self.parts):
            raise ValueError("assistant messages are text-only")

    @classmethod
    def user(cls, *parts) -> "ChatMessage":
        norm = tuple(TextPart(p) if isinstance(p, str) else p for p in parts)
        return cls(role="user", parts=norm)

    @classmethod
    def assistant(cls, text: str) -> "ChatMessage":
        return cls(role="assistant", parts=(TextPart(text),))

    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    def image_parts(self) -> list[ImagePart]:
        return [p for p in self.parts if isinstance(p, ImagePart)]


def conversation_hash(messages) -> str:
    """Order-sensitive hash of roles, text, and image bytes."""
    h = hashlib.sha256()
    for m in messages:
        h.update(b"\x00" + m.role.encode())
        for p in m.parts:
            if isinstance(p, TextPart):
                h.update(b"\x01" + p.text.encode())
            else:
                h.update(b"\x02" + hashlib.sha256(p.data).digest())
    return h.hexdigest()


def _preview(messages, limit=400) -> str:
    last = messages[-1] if messages else None
    if last is None:
        return "<empty conversation>"
    text = last.text()
    images = len(last.image_parts())
    tail = f" [+{images} image(s)]" if images else ""
    return (text[:limit] + ("…" if len(text) > limit else "")) + tail


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class SessionConfig:
    model: str = "gpt-4-vision-preview"
    temperature: float = 1.0  # provider default; recorded for provenance
    max_tokens: int = 4096
    timeout: float = 120.0
    max_retries: int = 3
    transport: str = "replay"  # live | record | replay

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


# ---------------------------------------------------------------- transcript

@dataclass(frozen=True)
class TranscriptRecord:
    request_hash: str
    request_text: str  # textual parts of the final message, for diagnostics
    image_shas: tuple[str, ...]
    response_text: str
    usage: dict = field(default_factory=dict)
    timestamp: float = 0.0


@dataclass
class Transcript:
    fingerprint: str = ""
    mode: str = ""  # MLLM-T | MLLM-V
    model: str = ""
    temperature: float = 1.0
    records: list[TranscriptRecord] = field(default_factory=list)
    images: dict[str, bytes] = field(default_factory=dict)

    def add_images(self, message: ChatMessage):
        for part in message.image_parts():
            self.images[part.sha] = part.data


def persist_transcript(transcript: Transcript, path) -> None:
    """Write .jsonl records plus content-addressed image sidecars."""
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w") as fh:
            header = {
                "kind": "header",
                "version": TRANSCRIPT_VERSION,
                "fingerprint": transcript.fingerprint,
                "mode": transcript.mode,
                "model": transcript.model,
                "temperature": transcript.temperature,
            }
            fh.write(json.dumps(header) + "\n")
            for rec in transcript.records:
                fh.write(json.dumps({
                    "kind": "record",
                    "request_hash": rec.request_hash,
                    "request_text": rec.request_text,
                    "images": list(rec.image_shas),
                    "response_text": rec.response_text,
                    "usage": rec.usage,
                    "timestamp": rec.timestamp,
                }) + "\n")
    except (OSError, TypeError, ValueError) as exc:
        raise SerializationError(f"cannot write transcript {path}: {exc}") from exc
    if transcript.images:
        img_dir = path.parent / "images"
        img_dir.mkdir(exist_ok=True)
        for sha, data in transcript.images.items():
            (img_dir / f"{sha}.png").write_bytes(data)


def load_transcript(path) -> Transcript:
    from pathlib import Path

    path = Path(path)
    transcript = Transcript()
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise SerializationError(f"cannot read transcript {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SerializationError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        if obj.get("kind") == "header":
            transcript.fingerprint = obj.get("fingerprint", "")
            transcript.mode = obj.get("mode", "")
            transcript.model = obj.get("model", "")
            transcript.temperature = obj.get("temperature", 1.0)
        elif obj.get("kind") == "record":
            transcript.records.append(TranscriptRecord(
                request_hash=obj["request_hash"],
                request_text=obj.get("request_text", ""),
                image_shas=tuple(obj.get("images", [])),
                response_text=obj["response_text"],
                usage=obj.get("usage", {}),
                timestamp=obj.get("timestamp", 0.0),
            ))
        else:
            raise SerializationError(f"{path}:{lineno}: unknown record kind")
    img_dir = path.parent / "images"
    for rec in transcript.records:
        for sha in rec.image_shas:
            img_path = img_dir / f"{sha}.png"
            if not img_path.exists():
                raise CorruptTranscript(f"missing image sidecar {sha}")
            data = img_path.read_bytes()
            if hashlib.sha256(data).hexdigest() != sha:
                raise CorruptTranscript(f"image sidecar {sha} fails its hash")
            transcript.images[sha] = data
    return transcript


# ---------------------------------------------------------------- rate limit

class RateLimiter:
    """Process-wide requests-per-minute gate for live transports."""

    def __init__(self, rpm: float):
        self.interval = 60.0 / rpm if rpm > 0 else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self, sleep=time.sleep, now=time.monotonic):
        with self._lock:
            wait = self._next_at - now()
            if wait > 0:
                sleep(wait)
            self._next_at = max(self._next_at, now()) + self.interval


_GLOBAL_LIMITER: RateLimiter | None = None
_LIMITER_LOCK = threading.Lock()


def global_rate_limiter() -> RateLimiter:
    global _GLOBAL_LIMITER
    with _LIMITER_LOCK:
        if _GLOBAL_LIMITER is None:
            _GLOBAL_LIMITER = RateLimiter(float(os.environ.get(RPM_VAR, "60")))
        return _GLOBAL_LIMITER


# ---------------------------------------------------------------- transports

def with_retries(attempt_fn, max_retries: int, sleep=time.sleep):
    """Run attempt_fn with exponential backoff; RateLimited honors retry-after."""
    last: Exception | None = None
    for attempt in range(max_retries + 1):
        try:
            return attempt_fn()
        except RateLimited as exc:
            last = exc
            if attempt < max_retries:
                sleep(exc.retry_after if exc.retry_after else 2.0 ** attempt)
        except TransportError as exc:
            last = exc
            if attempt < max_retries:
                sleep(2.0 ** attempt)
    raise last


class LiveTransport:
    """Plain chat-completions HTTP client (OpenAI-style payload)."""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 limiter: RateLimiter | None = None, sleep=time.sleep):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_VAR, DEFAULT_ENDPOINT)
        self.api_key = api_key or next(
            (os.environ[v] for v in API_KEY_VARS if os.environ.get(v)), None)
        if not self.api_key:
            raise TransportError(
                f"no API key; set {API_KEY_VARS[0]} (or {API_KEY_VARS[1]})")
        self.limiter = limiter or global_rate_limiter()
        self.sleep = sleep

    @staticmethod
    def _wire_messages(messages):
        wire = []
        for m in messages:
            content = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    content.append({"type": "text", "text": p.text})
                else:
                    b64 = base64.b64encode(p.data).decode()
                    content.append({"type": "image_url", "image_url": {
                        "url": f"data:{p.media_type};base64,{b64}"}})
            wire.append({"role": m.role, "content": content})
        return wire

    def complete(self, config: SessionConfig, messages) -> tuple[str, dict]:
        import requests

        body = {
            "model": config.model,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "messages": self._wire_messages(messages),
        }

        def attempt():
            self.limiter.acquire(sleep=self.sleep)
            try:
                resp = requests.post(
                    self.endpoint,
                    json=body,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=config.timeout,
                )
            except requests.RequestException as exc:
                raise TransportError(f"request failed: {exc}") from exc
            if resp.status_code == 429:
                retry_after = resp.headers.get("Retry-After")
                raise RateLimited(
                    "rate limited by provider",
                    retry_after=float(retry_after) if retry_after else None)
            if resp.status_code >= 400:
                raise TransportError(
                    f"HTTP {resp.status_code}: {resp.text[:300]}")
            data = resp.json()
            try:
                text = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion payload: {exc}") from exc
            return text, data.get("usage", {}) or {}

        return with_retries(attempt, config.max_retries, sleep=self.sleep)


class ReplayTransport:
    """Deterministic playback; every send must match the next record."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.cursor = 0

    def complete(self, config: SessionConfig, messages) -> tuple[str, dict]:
        if self.cursor >= len(self.transcript.records):
            raise ReplayExhausted(
                f"transcript has {len(self.transcript.records)} records; "
                f"send #{self.cursor + 1} has nothing to replay")
        record = self.transcript.records[self.cursor]
        got = conversation_hash(messages)
        if got != record.request_hash:
            raise ReplayMismatch(
                f"record {self.cursor}: constructed prompt hash {got[:12]} != "
                f"recorded {record.request_hash[:12]}\n"
                f"constructed tail: {_preview(messages)}\n"
                f"recorded tail:    {record.request_text[:400]}")
        self.cursor += 1
        return record.response_text, dict(record.usage)


class ChatSession:
    """Single-owner conversation: full history resent on every call, the
    response appended — the model's 'memory' is exactly this history."""

    def __init__(self, config: SessionConfig, transport,
                 fingerprint: str = "", mode: str = ""):
        self.config = config
        self.transport = transport
        self.history: list[ChatMessage] = []
        self.transcript = Transcript(
            fingerprint=fingerprint, mode=mode,
            model=config.model, temperature=config.temperature)

    def send(self, message: ChatMessage) -> ChatMessage:
        messages = self.history + [message]
        text, usage = self.transport.complete(self.config, messages)
        reply = ChatMessage.assistant(text)
        self.transcript.add_images(message)
        self.transcript.records.append(TranscriptRecord(
            request_hash=conversation_hash(messages),
            request_text=message.text(),
            image_shas=tuple(p.sha for p in message.image_parts()),
            response_text=text,
            usage=usage,
            timestamp=0.0 if isinstance(self.transport, ReplayTransport)
            else time.time(),
        ))
        self.history = messages + [reply]
        return reply


def open_session(config: SessionConfig, fingerprint: str = "", mode: str = "",
                 transcript_path=None) -> ChatSession:
    """Build a session for the configured transport.

    replay needs transcript_path to load; record remembers the path so the
    caller can persist_transcript() when the run completes.
    """
    if config.transport == "replay":
        if transcript_path is None:
            raise ValueError("replay transport requires a transcript path")
        transport = ReplayTransport(load_transcript(transcript_path))
    elif config.transport in ("live", "record"):
        transport = LiveTransport()
    else:
        raise ValueError(f"unknown transport {config.transport!r}")
    return ChatSession(config, transport, fingerprint=fingerprint, mode=mode)
