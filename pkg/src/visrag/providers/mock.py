"""Deterministic in-process provider used for tests and desk-scale runs.

Text: hashed bag-of-words. Each lowercase alphanumeric token ``t`` is hashed with
SHA-256; bytes 0-7 (big-endian u64) mod ``dim`` pick the slot, the low bit of
byte 8 picks the sign (0 -> +1, 1 -> -1). Counts are accumulated as integers and
L2-normalized at the end, so texts sharing tokens have high cosine.

Image: SplitMix64 seeded with the first 8 bytes (big-endian) of SHA-256(payload)
emits ``dim`` values in [-1, 1), then L2-normalized. Distinct payloads map to
nearly orthogonal vectors.

Caption / OCR: echo the sidecar file ``<image_id>.caption.txt`` /
``<image_id>.ocr.txt`` from ``sidecar_dir`` when present, otherwise a
``mock-caption:<hash12>`` / ``mock-ocr:<hash12>`` placeholder.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from collections import Counter
from pathlib import Path

import numpy as np

from visrag.errors import DimensionMismatchError, EmptyPayloadError
from visrag.providers.base import (
    CaptionResult,
    EmbeddingVector,
    OcrResult,
    ProviderConfig,
    prompt_id_for,
)

_MASK64 = (1 << 64) - 1
_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def hash_projection(text: str, dim: int) -> list[int]:
    """Signed token counts per slot (pre-normalization)."""
    acc = [0] * dim
    for token in tokenize(text):
        h = hashlib.sha256(token.encode("utf-8")).digest()
        slot = int.from_bytes(h[:8], "big") % dim
        acc[slot] += -1 if h[8] & 1 else 1
    return acc


def splitmix64(seed: int, n: int) -> list[int]:
    state = seed & _MASK64
    out = []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        out.append(z ^ (z >> 31))
    return out


def image_projection(image_bytes: bytes, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(image_bytes).digest()[:8], "big")
    # top 53 bits -> exact float in [-1, 1)
    ints = [(2 * (z >> 11)) - (1 << 53) for z in splitmix64(seed, dim)]
    return np.array(ints, dtype=np.float64) / float(1 << 53)


def _load_calibration(path: str | None, dim: int) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    if not path:
        return {}, {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("dim", dim) != dim:
        raise DimensionMismatchError(f"calibration table is for dim {data['dim']}, provider dim is {dim}")

    def dense(pairs) -> np.ndarray:
        arr = np.zeros(dim)
        for idx, value in pairs:
            arr[int(idx)] = float(value)
        return arr

    texts = {k: dense(v) for k, v in data.get("text", {}).items()}
    images = {k: dense(v) for k, v in data.get("image", {}).items()}
    return texts, images


class MockProvider:
    """Serves every role. Pure function of its inputs and config.

    An optional calibration table (``ProviderConfig.calibration``) pins exact
    vectors for chosen texts (keyed by the exact string) and images (keyed by
    SHA-256 hex). It is JSON of the form
    ``{"dim": 512, "text": {"<text>": [[slot, value], ...]}, "image": {"<sha256>": [...]}}``;
    listed vectors are L2-normalized on use.
    """

    def __init__(self, config: ProviderConfig | None = None):
        self.config = config or ProviderConfig()
        self.dim = self.config.dim
        self.provider_id = f"mock:{self.config.model_id}" if self.config.model_id else "mock"
        self._cal_text, self._cal_image = _load_calibration(self.config.calibration, self.dim)
        self._lock = threading.Lock()
        self.calls: Counter[str] = Counter()

    def _count(self, op: str) -> None:
        with self._lock:
            self.calls[op] += 1

    def embed_text(self, text: str) -> EmbeddingVector:
        self._count("embed_text")
        if not text:
            return EmbeddingVector.zeros(self.dim)
        if text in self._cal_text:
            return EmbeddingVector.normalize(self._cal_text[text])
        return EmbeddingVector.normalize(hash_projection(text, self.dim))

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector:
        self._count("embed_image")
        if not image_bytes:
            raise EmptyPayloadError("image payload is empty")
        digest = hashlib.sha256(image_bytes).hexdigest()
        if digest in self._cal_image:
            return EmbeddingVector.normalize(self._cal_image[digest])
        return EmbeddingVector.normalize(image_projection(image_bytes, self.dim))

    def _sidecar(self, kind: str, image_bytes: bytes, image_id: str, sidecar_dir: Path | None) -> str:
        if not image_bytes:
            raise EmptyPayloadError("image payload is empty")
        if image_id and sidecar_dir is not None:
            path = Path(sidecar_dir) / f"{image_id}.{kind}.txt"
            if path.is_file():
                return path.read_text(encoding="utf-8").rstrip("\r\n")
        return f"mock-{kind}:{hashlib.sha256(image_bytes).hexdigest()[:12]}"

    def generate_caption(
        self, image_bytes: bytes, prompt_template: str, *, image_id: str = "", sidecar_dir: Path | None = None
    ) -> CaptionResult:
        self._count("generate_caption")
        if not prompt_template:
            raise ValueError("prompt_template must be non-empty")
        text = self._sidecar("caption", image_bytes, image_id, sidecar_dir)
        return CaptionResult(image_id, text, self.provider_id, prompt_id_for(prompt_template))

    def extract_ocr(
        self, image_bytes: bytes, prompt_template: str, *, image_id: str = "", sidecar_dir: Path | None = None
    ) -> OcrResult:
        self._count("extract_ocr")
        if not prompt_template:
            raise ValueError("prompt_template must be non-empty")
        text = self._sidecar("ocr", image_bytes, image_id, sidecar_dir)
        return OcrResult(image_id, text, self.provider_id, prompt_id_for(prompt_template))
