"""Minimal JSON-over-POST client shared by the remote policy, reranker and rewriter."""

from __future__ import annotations

import json
import os
import threading
import time
from typing import Any, Optional

import httpx

from .errors import ProtocolError, TransportError

TOKEN_ENV = "JUDGELOOP_API_TOKEN"


def encode(payload: dict) -> bytes:
    # stable key order so identical requests give identical bytes
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class JsonEndpoint:
    def __init__(
        self,
        base_url: str,
        *,
        token_env: str = TOKEN_ENV,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_concurrency: int = 8,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self.retries = max(1, retries)
        self.backoff = backoff
        self._sem = threading.BoundedSemaphore(max_concurrency)
        self._client = httpx.Client(base_url=base_url, headers=headers, timeout=timeout, transport=transport)

    def close(self):
        self._client.close()

    def post(self, path: str, payload: dict) -> Any:
        body = encode(payload)
        last_exc: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                with self._sem:
                    resp = self._client.post(path, content=body)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                if resp.status_code >= 400:
                    raise ProtocolError(f"POST {path} rejected with status {resp.status_code}")
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_exc = exc
                if attempt < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
        else:
            raise TransportError(f"POST {path} failed: {last_exc}", attempts=self.retries)
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"POST {path} returned non-JSON body") from exc
