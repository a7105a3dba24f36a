"""Chat-completion backend for the analysis and rewrite stages.

The client speaks the common OpenAI-style /chat/completions JSON shape over
plain urllib, configured from explicit settings or environment variables.
Everything network-facing raises ClientError so callers can fall back to the
deterministic paths.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field

DEFAULT_TEMPERATURE = 0.8
DEFAULT_TOP_P = 0.95
DEFAULT_N_SAMPLES = 10

ENV_BASE_URL = "FTP_LLM_BASE_URL"
ENV_MODEL = "FTP_LLM_MODEL"
ENV_API_KEY = "FTP_LLM_API_KEY"


class ClientError(Exception):
    pass


@dataclass
class LlmSettings:
    base_url: str | None = None
    model: str | None = None
    api_key: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    n_samples: int = DEFAULT_N_SAMPLES
    timeout_s: float = 120.0

    def with_env(self) -> "LlmSettings":
        """Environment variables override whatever was configured."""
        return LlmSettings(
            base_url=os.environ.get(ENV_BASE_URL, self.base_url),
            model=os.environ.get(ENV_MODEL, self.model),
            api_key=os.environ.get(ENV_API_KEY, self.api_key),
            temperature=self.temperature,
            top_p=self.top_p,
            n_samples=self.n_samples,
            timeout_s=self.timeout_s,
        )


class ChatClient:
    """Minimal chat backend; complete() returns one reply per sample."""

    def __init__(self, settings: LlmSettings):
        if not settings.base_url or not settings.model:
            raise ClientError(
                f"chat backend needs a base URL and model; set {ENV_BASE_URL} "
                f"and {ENV_MODEL} or configure them explicitly"
            )
        self.settings = settings

    def complete(self, prompt: str, n: int = 1) -> list[str]:
        s = self.settings
        payload = {
            "model": s.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": s.temperature,
            "top_p": s.top_p,
            "n": n,
        }
        url = s.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if s.api_key:
            headers["Authorization"] = f"Bearer {s.api_key}"
        request = urllib.request.Request(
            url, data=json.dumps(payload).encode("utf-8"), headers=headers
        )
        try:
            with urllib.request.urlopen(request, timeout=s.timeout_s) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError, ValueError) as exc:
            raise ClientError(f"chat request failed: {exc}") from exc
        try:
            return [choice["message"]["content"] for choice in body["choices"]]
        except (KeyError, TypeError) as exc:
            raise ClientError(f"malformed chat response: {exc}") from exc
