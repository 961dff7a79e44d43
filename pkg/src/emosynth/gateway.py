"""Chat-completion / embedding gateway.

Two backends share one wire contract:

* :class:`HttpBackend` speaks the common ``/v1/chat/completions`` and
  ``/v1/embeddings`` JSON shape (bearer token from an environment variable).
* :class:`MockBackend` is offline and deterministic. Replies come from a
  fixture directory of ``<sha256(prompt)>.txt`` files; prompts without a
  fixture get a synthetic stage-shaped reply derived from the prompt hash.

:class:`Gateway` wraps a backend with a global concurrency bound, retries with
exponential backoff and an in-flight gauge tests can sample.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import GatewayError, InvalidArgument, ProtocolError

log = logging.getLogger(__name__)

STAGES = ("actors", "utterances", "soft_labels", "context", "cleaning", "rewriting")
DEFAULT_MAX_NEW_TOKENS = {
    "actors": 300,
    "utterances": 500,
    "soft_labels": 100,
    "context": 300,
    "cleaning": 300,
    "rewriting": 300,
}


@dataclass(frozen=True)
class GenerationParams:
    stage: str
    repetition_penalty: float = 1.03
    max_new_tokens: int | None = None
    decoding: str = "greedy"

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise InvalidArgument(f"unknown stage {self.stage!r}")
        if self.max_new_tokens is None:
            object.__setattr__(self, "max_new_tokens", DEFAULT_MAX_NEW_TOKENS[self.stage])
        if self.repetition_penalty <= 0 or self.max_new_tokens <= 0:
            raise InvalidArgument("repetition_penalty and max_new_tokens must be positive")
        if self.decoding != "greedy":
            raise InvalidArgument("only greedy decoding is supported")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    params: GenerationParams

    def __post_init__(self) -> None:
        users = [m for m in self.messages if m.get("role") == "user"]
        if len(users) != 1:
            raise InvalidArgument("a request carries exactly one user turn")

    @classmethod
    def single(cls, prompt: str, params: GenerationParams) -> "ChatRequest":
        return cls(({"role": "user", "content": prompt},), params)

    @property
    def prompt(self) -> str:
        return next(m["content"] for m in self.messages if m["role"] == "user")


@dataclass
class ChatReply:
    text: str
    usage: dict = field(default_factory=dict)
    latency: float = 0.0


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def chat(self, request: ChatRequest, timeout: float) -> ChatReply: ...

    def embed(self, texts: Sequence[str], timeout: float) -> list[list[float]]: ...


class TransientError(Exception):
    """Raised by backends for failures worth retrying."""


# ---------------------------------------------------------------------------
# HTTP backend


class HttpBackend:
    def __init__(
        self,
        base_url: str,
        model: str = "default",
        embedding_model: str | None = None,
        token_env: str = "EMOSYNTH_API_TOKEN",
        supports_repetition_penalty: bool = False,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.embedding_model = embedding_model or model
        self.token_env = token_env
        self.supports_repetition_penalty = supports_repetition_penalty
        self._client = client or httpx.Client()
        self._warned = False

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def chat_body(self, request: ChatRequest) -> dict:
        body = {
            "model": self.model,
            "messages": list(request.messages),
            "temperature": 0,
            "max_tokens": request.params.max_new_tokens,
        }
        if self.supports_repetition_penalty:
            body["repetition_penalty"] = request.params.repetition_penalty
        elif not self._warned:
            log.warning("endpoint does not advertise repetition_penalty; omitting it")
            self._warned = True
        return body

    def _post(self, path: str, body: dict, timeout: float) -> dict:
        try:
            resp = self._client.post(
                self.base_url + path, json=body, headers=self._headers(), timeout=timeout
            )
        except httpx.TransportError as exc:
            raise TransientError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProtocolError(f"HTTP {resp.status_code}", resp.text)
        try:
            return resp.json()
        except ValueError:
            raise ProtocolError("response is not JSON", resp.text) from None

    def chat(self, request: ChatRequest, timeout: float) -> ChatReply:
        payload = self._post("/v1/chat/completions", self.chat_body(request), timeout)
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError("missing choices[0].message.content", payload) from None
        if not isinstance(text, str):
            raise ProtocolError("message content is not text", payload)
        return ChatReply(text=text, usage=dict(payload.get("usage") or {}))

    def embed(self, texts: Sequence[str], timeout: float) -> list[list[float]]:
        payload = self._post(
            "/v1/embeddings", {"model": self.embedding_model, "input": list(texts)}, timeout
        )
        try:
            rows = sorted(payload["data"], key=lambda d: d.get("index", 0))
            return [list(map(float, d["embedding"])) for d in rows]
        except (KeyError, TypeError, ValueError):
            raise ProtocolError("malformed embeddings payload", payload) from None


# ---------------------------------------------------------------------------
# Mock backend

_WORD = re.compile(r"[^\W_]+", re.UNICODE)
_NAME = re.compile(r"\b[A-Z][a-z]+(?:\s+[A-Z][a-z]+)?\b")
_STOP_NAMES = {
    "The", "A", "An", "He", "She", "They", "It", "His", "Her", "Their", "When", "After",
    "Before", "While", "In", "On", "At", "As", "But", "And", "However", "Then", "This",
    "That", "There", "One", "Later", "During", "With", "Meanwhile", "Plot", "Who", "Try",
}


def hashing_embedding(text: str, dim: int = 256) -> np.ndarray:
    """Signed feature hashing over lowercased word tokens, L2-normalised."""
    vec = np.zeros(dim)
    tokens = _WORD.findall(text.lower()) or [text]
    for tok in tokens:
        h = hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest()
        idx = int.from_bytes(h[:4], "little") % dim
        vec[idx] += 1.0 if h[4] & 1 else -1.0
    norm = np.linalg.norm(vec)
    if norm == 0:
        vec[hash_index(text, dim)] = 1.0
        norm = 1.0
    return vec / norm


def hash_index(text: str, dim: int) -> int:
    return int(prompt_hash(text)[:8], 16) % dim


class MockBackend:
    """Deterministic offline backend: a pure function of (prompt, fixtures)."""

    def __init__(self, fixtures_dir: Path | str | None = None, dim: int = 256, delay: float = 0.0):
        self.fixtures: dict[str, str] = {}
        self.dim = dim
        self.delay = delay
        if fixtures_dir is not None:
            self.load_fixtures(fixtures_dir)

    def load_fixtures(self, directory: Path | str) -> None:
        for p in sorted(Path(directory).glob("*.txt")):
            self.fixtures[p.stem] = p.read_text(encoding="utf-8")

    def chat(self, request: ChatRequest, timeout: float) -> ChatReply:
        if self.delay:
            time.sleep(self.delay)
        prompt = request.prompt
        text = self.fixtures.get(prompt_hash(prompt))
        if text is None:
            text = synthetic_reply(request.params.stage, prompt)
        return ChatReply(text=text, usage={"completion_tokens": len(text.split())})

    def embed(self, texts: Sequence[str], timeout: float) -> list[list[float]]:
        return [hashing_embedding(t, self.dim).tolist() for t in texts]


def _field(prompt: str, label: str) -> str:
    m = re.search(rf"^{re.escape(label)}:\s*(.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else ""


def synthetic_reply(stage: str, prompt: str) -> str:
    """Stage-shaped placeholder reply seeded by the prompt hash."""
    rng = random.Random(prompt_hash(prompt))
    if stage == "actors":
        plot = prompt.split("\n\nWho are the characters", 1)[0]
        names: list[str] = []
        for m in _NAME.finditer(plot):
            name = m.group(0)
            first = name.split()[0]
            if first in _STOP_NAMES or name in names:
                continue
            names.append(name)
        names = names[:6] or ["Narrator"]
        return "\n".join(f"{i}. {n}" for i, n in enumerate(names, 1))
    if stage == "utterances":
        from .taxonomy import default_taxonomy

        actor = _field(prompt, "Actor") or "someone"
        emotions = rng.sample(default_taxonomy().emotional_names, 8)
        lines = [
            f'{i}. ({e.capitalize()}) "As {actor}, I think about {rng.choice(_TOPICS)} and feel {e} about it."'
            for i, e in enumerate(emotions, 1)
        ]
        lines.append("Neutral:")
        lines += [
            f'{i}. "I need to check the {rng.choice(_TOPICS)} before {rng.choice(_TIMES)}."' for i in (1, 2)
        ]
        return "\n".join(lines)
    if stage == "soft_labels":
        from .taxonomy import default_taxonomy

        primary = prompt.rstrip().rsplit("1. ", 1)[-1].strip()
        others = [n for n in default_taxonomy().names if n != primary]
        picks = rng.sample(others, 4)
        lines = [f"1. {primary} (1.0) - The speaker clearly conveys {primary}."]
        for i, e in enumerate(picks, 2):
            lines.append(f"{i}. {e} ({rng.randint(0, 9) / 10:.1f}) - Traces of {e} are present.")
        return "\n".join(lines)
    if stage == "context":
        actor = _field(prompt, "Actor") or "The character"
        return (
            f"{actor} had been dealing with the {rng.choice(_TOPICS)} for weeks. "
            f"Events around the {rng.choice(_TOPICS)} forced a decision {rng.choice(_TIMES)}. "
            f"{actor} felt strongly about what had happened."
        )
    if stage == "cleaning":
        context = _field(prompt, "Context")
        sentences = [s for s in re.split(r"(?<=[.!?])\s+", context) if s]
        if len(sentences) > 1:
            sentences = sentences[:-1]
        return " ".join(sentences)
    if stage == "rewriting":
        utterance = _field(prompt, "Character's utterance").strip('"')
        first = re.split(r"(?<=[.!?])\s+", utterance)[0]
        words = first.split()
        return " ".join(words[: max(3, len(words) * 3 // 4)])
    raise InvalidArgument(f"unknown stage {stage!r}")


_TOPICS = (
    "letter", "harbour", "trial", "old house", "expedition", "wedding", "ship", "council",
    "debt", "orchard", "storm", "election", "laboratory", "festival", "border", "garden",
)
_TIMES = ("dawn", "the meeting", "nightfall", "the train leaves", "the ceremony", "winter")


# ---------------------------------------------------------------------------
# Gateway


class Gateway:
    """Shareable, thread-safe front for a backend."""

    def __init__(
        self,
        backend: Backend,
        concurrency: int = 4,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
        max_backoff: float = 30.0,
    ):
        if concurrency < 1:
            raise InvalidArgument("concurrency must be >= 1")
        if retries < 0:
            raise InvalidArgument("retries must be >= 0")
        self.backend = backend
        self.concurrency = concurrency
        self.retries = retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self._sem = threading.BoundedSemaphore(concurrency)
        self._lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.calls = 0

    def _enter(self) -> None:
        with self._lock:
            self.in_flight += 1
            self.calls += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)

    def _exit(self) -> None:
        with self._lock:
            self.in_flight -= 1

    def _with_retries(self, what: str, fn):
        attempts = 0
        while True:
            attempts += 1
            with self._sem:
                self._enter()
                try:
                    return fn()
                except TransientError as exc:
                    err = exc
                finally:
                    self._exit()
            if attempts > self.retries:
                raise GatewayError(f"{what} failed: {err}", attempts)
            delay = min(self.max_backoff, self.backoff * 2 ** (attempts - 1))
            log.warning("%s attempt=%d error=%s retry_in=%.2fs", what, attempts, err, delay)
            if delay > 0:
                time.sleep(delay)

    def complete(self, request: ChatRequest) -> ChatReply:
        start = time.perf_counter()
        reply = self._with_retries("chat", lambda: self.backend.chat(request, self.timeout))
        reply.latency = time.perf_counter() - start
        return reply

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, 0))
        for t in texts:
            if not t or not t.strip():
                raise InvalidArgument("cannot embed empty text")
        rows = self._with_retries("embed", lambda: self.backend.embed(list(texts), self.timeout))
        if len(rows) != len(texts):
            raise ProtocolError(f"expected {len(texts)} vectors, got {len(rows)}", rows)
        dims = {len(r) for r in rows}
        if len(dims) != 1 or 0 in dims:
            raise ProtocolError(f"inconsistent embedding dimensions {sorted(dims)}", rows)
        mat = np.asarray(rows, dtype=float)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ProtocolError("zero-length embedding vector", rows)
        return mat / norms

    __call__ = embed
