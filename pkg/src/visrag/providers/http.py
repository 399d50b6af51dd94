"""JSON-over-HTTP adapter for real model backends.

Wire protocol (all POST, JSON bodies)::

    {endpoint}/v1/embed    {"kind": "text"|"image", "text"?: str, "image_b64"?: str,
                            "model_id": str, "dim": int}        -> {"values": [float, ...]}
    {endpoint}/v1/caption  {"image_b64": str, "prompt": str, "model_id": str} -> {"caption": str}
    {endpoint}/v1/ocr      {"image_b64": str, "prompt": str, "model_id": str} -> {"text": str}

Any transport failure, timeout, non-2xx status or malformed body surfaces as
``ProviderUnavailableError``.
"""

from __future__ import annotations

import base64
import logging
import math
import threading
from pathlib import Path
from typing import Any

import httpx

from visrag.errors import DimensionMismatchError, EmptyPayloadError, ProviderUnavailableError
from visrag.providers.base import (
    CaptionResult,
    EmbeddingVector,
    OcrResult,
    ProviderConfig,
    prompt_id_for,
)

log = logging.getLogger(__name__)


class HttpProvider:
    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        if config.kind != "http" or not config.endpoint:
            raise ValueError("HttpProvider needs an http config with an endpoint")
        self.config = config
        self.dim = config.dim
        self.model_id = config.model_id or "default"
        self.provider_id = f"http:{self.model_id}"
        self._endpoint = config.endpoint.rstrip("/")
        self._slots = threading.BoundedSemaphore(config.max_inflight)
        self._client = httpx.Client(timeout=config.timeout_ms / 1000.0, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> HttpProvider:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, route: str, body: dict[str, Any]) -> dict[str, Any]:
        url = f"{self._endpoint}{route}"
        attempts = 1 + self.config.retries
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                with self._slots:
                    resp = self._client.post(url, json=body)
            except httpx.HTTPError as exc:
                last = exc
                log.debug("POST %s failed (attempt %d/%d): %s", url, attempt + 1, attempts, exc)
                continue
            if resp.status_code >= 500:
                last = ProviderUnavailableError(f"{url}: HTTP {resp.status_code}")
                continue
            if not resp.is_success:
                raise ProviderUnavailableError(f"{url}: HTTP {resp.status_code}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise ProviderUnavailableError(f"{url}: response is not JSON") from exc
            if not isinstance(payload, dict):
                raise ProviderUnavailableError(f"{url}: response is not a JSON object")
            return payload
        raise ProviderUnavailableError(f"{url}: unavailable after {attempts} attempt(s): {last}") from last

    def _vector(self, payload: dict[str, Any]) -> EmbeddingVector:
        values = payload.get("values")
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in values
        ):
            raise ProviderUnavailableError("embed response lacks a finite numeric 'values' list")
        if len(values) != self.dim:
            raise DimensionMismatchError(f"backend returned dim {len(values)}, expected {self.dim}")
        return EmbeddingVector.normalize(values)

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            return EmbeddingVector.zeros(self.dim)
        body = {"kind": "text", "text": text, "model_id": self.model_id, "dim": self.dim}
        return self._vector(self._post("/v1/embed", body))

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        if not image_bytes:
            raise EmptyPayloadError("image payload is empty")
        body = {
            "kind": "image",
            "image_b64": base64.b64encode(image_bytes).decode("ascii"),
            "model_id": self.model_id,
            "dim": self.dim,
        }
        return self._vector(self._post("/v1/embed", body))

    def _text_call(self, route: str, field: str, image_bytes: bytes, prompt_template: str) -> str:
        if not image_bytes:
            raise EmptyPayloadError("image payload is empty")
        if not prompt_template:
            raise ValueError("prompt_template must be non-empty")
        body = {
            "image_b64": base64.b64encode(image_bytes).decode("ascii"),
            "prompt": prompt_template,
            "model_id": self.model_id,
        }
        payload = self._post(route, body)
        text = payload.get(field)
        if not isinstance(text, str):
            raise ProviderUnavailableError(f"{route} response lacks string field {field!r}")
        return text

    def generate_caption(
        self, image_bytes: bytes, prompt_template: str, *, image_id: str = "", sidecar_dir: Path | None = None
    ) -> CaptionResult:
        text = self._text_call("/v1/caption", "caption", image_bytes, prompt_template)
        return CaptionResult(image_id, text, self.provider_id, prompt_id_for(prompt_template))

    def extract_ocr(
        self, image_bytes: bytes, prompt_template: str, *, image_id: str = "", sidecar_dir: Path | None = None
    ) -> OcrResult:
        text = self._text_call("/v1/ocr", "text", image_bytes, prompt_template)
        return OcrResult(image_id, text, self.provider_id, prompt_id_for(prompt_template))
