"""HTTP clients for the remote reasoner and embedding providers.

Both speak a small JSON protocol over HTTPS with a bearer token taken from
an environment variable (tokens never live in config files). Requests are
rate-capped and retried with exponential backoff; the attempt count of the
last call is kept for run manifests.
"""

import base64
import os
import time
from typing import Callable, Optional, Union

import httpx


class RemoteError(RuntimeError):
    """A remote call failed after all retries."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (attempts: {attempts})")
        self.attempts = attempts


class MissingTokenError(RuntimeError):
    """The configured token environment variable is not set."""


class _RateLimiter:
    """Spaces requests at least min_interval seconds apart."""

    def __init__(self, requests_per_minute: float, sleep: Callable[[float], None], clock=time.monotonic):
        self.min_interval = 60.0 / requests_per_minute if requests_per_minute > 0 else 0.0
        self._sleep = sleep
        self._clock = clock
        self._last = None

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self.min_interval - (now - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


class _JsonHttpClient:
    def __init__(
        self,
        endpoint: str,
        model_id: str,
        token_env: str,
        timeout_s: float = 30.0,
        retries: int = 3,
        requests_per_minute: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        token = os.environ.get(token_env)
        if not token:
            raise MissingTokenError(
                f"environment variable {token_env} is not set; remote calls need a bearer token"
            )
        self.endpoint = endpoint
        self.model_id = model_id
        self.retries = retries
        self.last_attempts = 0
        self._sleep = sleep
        self._limiter = _RateLimiter(requests_per_minute, sleep)
        self._client = httpx.Client(
            timeout=timeout_s,
            headers={"Authorization": f"Bearer {token}"},
            transport=transport,
        )

    def _post(self, payload: dict) -> dict:
        attempts = 0
        backoff = 1.0
        last_error: Optional[str] = None
        while attempts <= self.retries:
            attempts += 1
            self.last_attempts = attempts
            self._limiter.wait()
            try:
                response = self._client.post(self.endpoint, json=payload)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
            else:
                if response.status_code in (401, 403):
                    raise RemoteError(f"authorization rejected ({response.status_code})", attempts)
                if response.status_code == 200:
                    return response.json()
                last_error = f"HTTP {response.status_code}"
            if attempts <= self.retries:
                self._sleep(backoff)
                backoff = min(backoff * 2.0, 30.0)
        raise RemoteError(last_error or "remote call failed", attempts)

    def close(self) -> None:
        self._client.close()


class HttpReasonerClient(_JsonHttpClient):
    """Remote reasoning-LLM client for narrative generation.

    Request: {"model_id", "system_text", "user_text"}; response:
    {"completion": str}.
    """

    def complete(self, system_text: str, user_text: str) -> str:
        doc = self._post(
            {"model_id": self.model_id, "system_text": system_text, "user_text": user_text}
        )
        if "completion" not in doc:
            raise RemoteError("response missing 'completion' field", self.last_attempts)
        return doc["completion"]


class HttpEmbedClient(_JsonHttpClient):
    """Remote multimodal embedding client.

    Request: {"model_id", "modality", "payload"} where image payloads are
    base64-encoded bytes and text payloads are plain UTF-8 strings;
    response: {"vector": [...], "dimension": int}.
    """

    def __init__(self, *args, dim: int = 256, max_payload_bytes: int = 4 * 1024 * 1024, **kwargs):
        super().__init__(*args, **kwargs)
        self.dim = dim
        self.max_payload_bytes = max_payload_bytes

    def embed(self, modality: str, payload: Union[bytes, str]) -> list[float]:
        raw = payload.encode("utf-8") if isinstance(payload, str) else payload
        if len(raw) > self.max_payload_bytes:
            raise ValueError(
                f"payload of {len(raw)} bytes exceeds the endpoint cap of "
                f"{self.max_payload_bytes} bytes"
            )
        body = {
            "model_id": self.model_id,
            "modality": modality,
            "payload": base64.b64encode(raw).decode("ascii") if isinstance(payload, bytes) else payload,
        }
        doc = self._post(body)
        if "vector" not in doc:
            raise RemoteError("response missing 'vector' field", self.last_attempts)
        return [float(v) for v in doc["vector"]]
