"""Chat-completions transport and the retrying oracle calls built on it."""

from __future__ import annotations

import base64
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from ..env import ActionCommand
from ..errors import AuthError, RetryableParseError, RetryExhaustedError, TransportError
from .parsing import parse_expand_response, parse_simulate_response
from .prompts import PromptBundle

log = logging.getLogger(__name__)

API_KEY_ENV = "REPRO_MCTS_API_KEY"
DEFAULT_TEMPERATURE = 0.2

EXPAND_REPAIR = (
    'Your previous reply could not be parsed. Reply again with only a JSON array formatted as '
    '[{"action": "x1", "feature": "y1"}, ...] using the kinds click, long_click, set_text, '
    "multiple_select, rotate, back."
)
SIMULATE_REPAIR = "Your previous reply could not be parsed. Reply again and include exactly 'Score: N' with N from 0 to 10."


class ChatClient(Protocol):
    def complete(self, bundle: PromptBundle, repairs: tuple[str, ...] = ()) -> str: ...


def build_payload(bundle: PromptBundle, model: str, temperature: float, repairs=()) -> dict:
    if bundle.attachments:
        content = [{"type": "text", "text": bundle.user_text}]
        for blob in bundle.attachments:
            url = "data:image/png;base64," + base64.b64encode(blob).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": url}})
    else:
        content = bundle.user_text
    messages = [
        {"role": "system", "content": bundle.system_message()},
        {"role": "user", "content": content},
    ]
    messages.extend({"role": "user", "content": r} for r in repairs)
    return {"model": model, "temperature": temperature, "messages": messages}


@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    requests: int = 0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass
class RemoteChatClient:
    """POSTs chat payloads to an OpenAI-compatible ``/chat/completions`` URL.

    The bearer token comes from ``REPRO_MCTS_API_KEY`` unless given explicitly.
    Rate-limit and 5xx responses are retried with exponential backoff before
    surfacing as :class:`TransportError`.
    """

    endpoint: str
    model: str = "gpt-4o"
    temperature: float = DEFAULT_TEMPERATURE
    api_key: str | None = None
    timeout: float = 60.0
    transport_retries: int = 2
    backoff: float = 1.0
    transport: httpx.BaseTransport | None = None
    usage: Usage = field(default_factory=Usage)

    def __post_init__(self):
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV, "")
        if not self.api_key:
            raise AuthError(f"missing API key; set {API_KEY_ENV}")
        self._http = httpx.Client(timeout=self.timeout, transport=self.transport)

    def complete(self, bundle: PromptBundle, repairs: tuple[str, ...] = ()) -> str:
        payload = build_payload(bundle, self.model, self.temperature, repairs)
        headers = {"Authorization": f"Bearer {self.api_key}"}
        for attempt in range(self.transport_retries + 1):
            try:
                resp = self._http.post(self.endpoint, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                err = TransportError(f"request to {self.endpoint} failed: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    err = TransportError(f"HTTP {resp.status_code} from {self.endpoint}")
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return self._extract(resp)
            if attempt < self.transport_retries:
                time.sleep(self.backoff * 2**attempt)
        raise err

    def _extract(self, resp: httpx.Response) -> str:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc
        usage = data.get("usage") or {}
        self.usage.requests += 1
        self.usage.prompt_tokens += int(usage.get("prompt_tokens", 0))
        self.usage.completion_tokens += int(usage.get("completion_tokens", 0))
        if usage:
            log.info("tokens so far: %d over %d requests", self.usage.total_tokens, self.usage.requests)
        return text if isinstance(text, str) else str(text)

    def close(self):
        self._http.close()


def _call_with_repair(client: ChatClient, bundle: PromptBundle, parse, repair: str, retries: int, role: str):
    repairs: tuple[str, ...] = ()
    last = None
    for attempt in range(retries + 1):
        text = client.complete(bundle, repairs)
        try:
            return parse(text)
        except RetryableParseError as exc:
            last = exc
            log.debug("%s reply unparsable (attempt %d): %s", role, attempt + 1, exc)
            repairs = repairs + (repair,)
    raise RetryExhaustedError(f"{role} output unparsable after {retries + 1} requests: {last}", retries + 1)


def expander_call(client: ChatClient, bundle: PromptBundle, k: int | None, retries: int = 3) -> list[ActionCommand]:
    return _call_with_repair(
        client, bundle, lambda t: parse_expand_response(t, k), EXPAND_REPAIR, retries, "expander"
    )


def simulator_call(client: ChatClient, bundle: PromptBundle, retries: int = 3) -> int:
    return _call_with_repair(client, bundle, parse_simulate_response, SIMULATE_REPAIR, retries, "simulator")
