"""Minimal client for chat-completions compatible HTTP endpoints.

Nothing is sent unless the endpoint config has ``online=True``.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import httpx

from .config import tomllib
from .errors import AuthMissing, HttpStatus, InputError, MalformedResponse, OfflineMode, Timeout

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: Optional[str] = None
    timeout: float = 60.0
    max_retries: int = 3
    temperature: Optional[float] = None  # None: 0 for judging, 0.7 for refinement
    max_tokens: int = 512
    # wrap turns into one "[INST] ... [/INST]" user message for Mistral/LLaMA style servers
    inst_format: bool = False
    max_in_flight: int = 4
    backoff_base: float = 0.5
    online: bool = False

    def __post_init__(self):
        if not self.timeout > 0:
            raise InputError(f"timeout must be positive, got {self.timeout}")
        if self.max_retries < 0:
            raise InputError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_in_flight < 1:
            raise InputError("max_in_flight must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "EndpointConfig":
        if "api_key" in doc:
            raise InputError("put the API key in an environment variable and name it in api_key_env")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown endpoint keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InputError(str(exc)) from exc

    def for_judge(self) -> "EndpointConfig":
        return self if self.temperature is not None else replace(self, temperature=0.0)

    def for_refinement(self) -> "EndpointConfig":
        return self if self.temperature is not None else replace(self, temperature=0.7)


def load_endpoint(path: Union[str, Path], online: bool = False) -> EndpointConfig:
    path = Path(path)
    text = path.read_text("utf-8")
    doc = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
    doc.pop("online", None)
    return replace(EndpointConfig.from_dict(doc), online=online)


@dataclass
class ChatExchange:
    messages: list
    response_text: str = ""
    latency_ms: float = 0.0
    attempts: int = 0
    status_codes: list = field(default_factory=list)


def check_messages(messages: Sequence[dict]) -> list[dict]:
    msgs = [{"role": m["role"], "content": m["content"]} for m in messages]
    if not msgs:
        raise InputError("messages must not be empty")
    for m in msgs:
        if m["role"] not in ROLES:
            raise InputError(f"unknown role {m['role']!r}")
    if msgs[-1]["role"] != "user":
        raise InputError("the last message must come from the user")
    return msgs


def inst_prompt(messages: Sequence[dict]) -> str:
    """Flatten role turns into the ``<s>[INST] ... [/INST] ... </s>`` template."""
    out = []
    pending_system = ""
    for m in messages:
        if m["role"] == "system":
            pending_system += m["content"].strip() + "\n\n"
        elif m["role"] == "user":
            out.append(f"<s>[INST] {pending_system}{m['content'].strip()} [/INST]")
            pending_system = ""
        elif out:
            out[-1] += f" {m['content'].strip()} </s>"
    return "".join(out)


def request_body(config: EndpointConfig, messages: Sequence[dict]) -> bytes:
    """Serialized request; identical inputs give identical bytes."""
    msgs = check_messages(messages)
    if config.inst_format:
        msgs = [{"role": "user", "content": inst_prompt(msgs)}]
    body = {
        "model": config.model,
        "messages": msgs,
        "temperature": 0.0 if config.temperature is None else config.temperature,
        "max_tokens": config.max_tokens,
    }
    return json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _headers(config: EndpointConfig) -> dict:
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env, "").strip()
        if not key:
            raise AuthMissing(f"environment variable {config.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _parse_completion(resp: httpx.Response) -> str:
    try:
        doc = resp.json()
        text = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"cannot read choices[0].message.content: {exc}") from exc
    if not isinstance(text, str) or not text.strip():
        raise MalformedResponse("empty completion")
    return text


def exchange(
    config: EndpointConfig,
    messages: Sequence[dict],
    client: Optional[httpx.Client] = None,
) -> ChatExchange:
    """POST one chat request, retrying transient failures with exponential backoff."""
    if not config.online:
        raise OfflineMode("endpoint use requires the online opt-in")
    body = request_body(config, messages)
    headers = _headers(config)
    url = config.base_url.rstrip("/") + "/chat/completions"
    result = ChatExchange(messages=check_messages(messages))
    own = client is None
    client = client or httpx.Client(timeout=config.timeout)
    t0 = time.perf_counter()
    last_error: Exception = Timeout(url)
    try:
        for attempt in range(config.max_retries + 1):
            result.attempts = attempt + 1
            if attempt:
                time.sleep(config.backoff_base * 2 ** (attempt - 1))
            try:
                resp = client.post(url, content=body, headers=headers, timeout=config.timeout)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                log.warning("attempt %d to %s failed: %s", attempt + 1, url, exc)
                last_error = Timeout(f"{url}: {exc}")
                continue
            result.status_codes.append(resp.status_code)
            if resp.status_code in RETRY_STATUS:
                log.warning("attempt %d to %s: HTTP %d", attempt + 1, url, resp.status_code)
                last_error = HttpStatus(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                raise HttpStatus(resp.status_code, resp.text)
            result.response_text = _parse_completion(resp)
            result.latency_ms = (time.perf_counter() - t0) * 1000.0
            return result
        raise last_error
    finally:
        if own:
            client.close()


def complete(config: EndpointConfig, messages: Sequence[dict], client: Optional[httpx.Client] = None) -> str:
    """Assistant text of the first choice."""
    return exchange(config, messages, client).response_text


def complete_many(config: EndpointConfig, batches: Sequence[Sequence[dict]]) -> list[str]:
    """Run several independent chats, at most ``max_in_flight`` at a time; results keep input order."""
    if not config.online:
        raise OfflineMode("endpoint use requires the online opt-in")
    with httpx.Client(timeout=config.timeout) as client:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            return list(pool.map(lambda m: complete(config, m, client), batches))


def refine_explanation(config: EndpointConfig, prompt) -> str:
    """Send an instruction/input prompt as one user turn and return the model text unmodified."""
    if hasattr(prompt, "to_dict"):
        prompt = prompt.to_dict()
    content = prompt["instruction"] + "\n" + prompt["input"]
    return complete(config.for_refinement(), [{"role": "user", "content": content}])
