"""OpenAI-compatible chat-completion backend.

The HTTP layer is a plain ``httpx.Client``; tests and offline runs inject an
``httpx.MockTransport`` built by :func:`fixture_transport`.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import httpx

from .policy import BackendError, Decision
from .prompt import PromptDocument, parse_reply

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LlmBackendConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "llama3-8b-instruct"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 2
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def request_body(config: LlmBackendConfig, prompt_text: str) -> dict:
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": config.temperature,
    }


def chat(client: httpx.Client, config: LlmBackendConfig, prompt_text: str) -> str:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    resp = client.post(config.endpoint_url, json=request_body(config, prompt_text),
                       headers=headers, timeout=config.timeout)
    resp.raise_for_status()
    return resp.json()["choices"][0]["message"]["content"]


def llm_decide(config: LlmBackendConfig, prompt: PromptDocument | str, num_levels: int = 4,
               client: httpx.Client | None = None) -> Decision:
    """Ask the model once, retrying transport errors and unparseable replies.

    Raises :class:`BackendError` once ``max_retries`` retries are used up.
    """
    text = prompt.text if isinstance(prompt, PromptDocument) else prompt
    own_client = client is None
    client = client or httpx.Client()
    last_reply, last_error = "", None
    try:
        for attempt in range(config.max_retries + 1):
            try:
                reply = chat(client, config, text)
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                log.warning("LLM request failed (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                continue
            last_reply = reply
            parsed = parse_reply(reply, num_levels)
            if parsed.action is not None:
                return Decision(level=parsed.action, retry_count=attempt,
                                confidence=parsed.confidence, reply_text=reply)
            log.warning("unparseable LLM reply (attempt %d)", attempt + 1)
            last_error = None
    finally:
        if own_client:
            client.close()
    reason = f"transport error: {last_error}" if last_error else "no power level in reply"
    raise BackendError(f"LLM backend gave up after {config.max_retries} retries ({reason})",
                       retry_count=config.max_retries, reply_text=last_reply)


class LlmBackend:
    name = "llm"

    def __init__(self, config: LlmBackendConfig, num_levels: int = 4,
                 transport: httpx.BaseTransport | None = None):
        self.config = config
        self.num_levels = num_levels
        self.client = httpx.Client(transport=transport)

    def decide(self, state, selection, prompt: PromptDocument) -> Decision:
        return llm_decide(self.config, prompt, self.num_levels, client=self.client)

    def close(self) -> None:
        self.client.close()


def completion_payload(content: str) -> dict:
    return {
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content},
                     "finish_reason": "stop"}],
    }


def fixture_transport(replies: Sequence[str | Exception], requests: list | None = None
                      ) -> httpx.MockTransport:
    """Mock transport answering requests with canned replies, in order.

    An ``Exception`` entry is raised instead of answering (e.g.
    ``httpx.ReadTimeout``).  After the list runs out the last entry repeats.
    Request bodies are appended to ``requests`` when given.
    """
    if not replies:
        raise ValueError("at least one reply is required")
    queue = list(replies)
    count = 0

    def handler(request: httpx.Request) -> httpx.Response:
        nonlocal count
        item = queue[min(count, len(queue) - 1)]
        count += 1
        if requests is not None:
            requests.append(json.loads(request.content))
        if isinstance(item, Exception):
            raise item
        return httpx.Response(200, json=completion_payload(item))

    return httpx.MockTransport(handler)


def file_fixture_transport(paths: Sequence[str | Path]) -> httpx.MockTransport:
    return fixture_transport([Path(p).read_text() for p in paths])
