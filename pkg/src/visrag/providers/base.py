"""Provider-facing types: embedding vectors, caption/OCR results, configuration."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Protocol, Sequence, runtime_checkable

import numpy as np

from visrag.errors import DimensionMismatchError

DEFAULT_DIM = 512
DEFAULT_SENTENCE_MODEL = "multi-qa-mpnet-base-dot-v1"
NORM_TOLERANCE = 1e-9

ROLES = ("text_embed", "image_embed", "caption", "ocr", "sentence_sim")


class EmbeddingVector:
    """Fixed-dimension float64 vector with a normalization flag.

    The underlying array is read-only; treat instances as values.
    """

    __slots__ = ("values", "normalized")

    def __init__(self, values: Sequence[float] | np.ndarray, normalized: bool = False):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ValueError("embedding must have dim >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains NaN or Inf")
        if normalized and abs(float(np.linalg.norm(arr)) - 1.0) > NORM_TOLERANCE:
            raise ValueError("vector flagged normalized but its L2 norm is not 1")
        arr.flags.writeable = False
        self.values = arr
        self.normalized = normalized

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @classmethod
    def zeros(cls, dim: int) -> EmbeddingVector:
        return cls(np.zeros(dim), normalized=False)

    @classmethod
    def normalize(cls, values: Sequence[float] | np.ndarray) -> EmbeddingVector:
        """L2-normalize; the all-zero vector is returned as-is with ``normalized=False``."""
        arr = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            return cls(arr, normalized=False)
        return cls(arr / norm, normalized=True)

    def to_json(self) -> dict[str, Any]:
        return {"dim": self.dim, "normalized": self.normalized, "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> EmbeddingVector:
        vec = cls(obj["values"], normalized=bool(obj["normalized"]))
        if vec.dim != obj.get("dim", vec.dim):
            raise DimensionMismatchError(f"declared dim {obj['dim']} but got {vec.dim} values")
        return vec

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.normalized == other.normalized and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.normalized))

    def __repr__(self) -> str:
        head = ", ".join(f"{v:.4f}" for v in self.values[:4])
        more = ", ..." if self.dim > 4 else ""
        return f"EmbeddingVector(dim={self.dim}, normalized={self.normalized}, [{head}{more}])"


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity; 0.0 when either side is the zero vector."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dims differ: {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values)) / (na * nb)


@dataclass(frozen=True)
class CaptionResult:
    image_id: str
    caption: str
    provider_id: str
    prompt_id: str


@dataclass(frozen=True)
class OcrResult:
    image_id: str
    ocr_text: str
    provider_id: str
    prompt_id: str


@dataclass(frozen=True)
class ProviderConfig:
    """Settings for one provider role.

    ``calibration`` names a JSON lookup table the mock provider consults before
    falling back to its hash-based formulas (see ``MockProvider``).
    """

    kind: str = "mock"
    endpoint: str | None = None
    model_id: str | None = None
    dim: int = DEFAULT_DIM
    timeout_ms: int = 30_000
    max_inflight: int = 4
    retries: int = 0
    calibration: str | None = None

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http providers need an endpoint")
        for name in ("dim", "timeout_ms", "max_inflight"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @classmethod
    def from_dict(cls, obj: dict[str, Any], base_dir: Path | None = None) -> ProviderConfig:
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        cal = known.get("calibration")
        if cal and base_dir is not None and not Path(cal).is_absolute():
            known["calibration"] = str((base_dir / cal).resolve())
        return cls(**known)

    def describe(self) -> dict[str, Any]:
        """Provenance fields that affect provider outputs."""
        out: dict[str, Any] = {"kind": self.kind, "dim": self.dim, "model_id": self.model_id}
        if self.kind == "http":
            out["endpoint"] = self.endpoint
        if self.calibration:
            digest = hashlib.sha256(Path(self.calibration).read_bytes()).hexdigest()
            out["calibration_sha256"] = digest
        return out


@runtime_checkable
class TextEmbedder(Protocol):
    provider_id: str
    dim: int

    def embed_text(self, text: str) -> EmbeddingVector: ...


@runtime_checkable
class ImageEmbedder(Protocol):
    provider_id: str
    dim: int

    def embed_image(self, image_bytes: bytes) -> EmbeddingVector: ...


@runtime_checkable
class Captioner(Protocol):
    provider_id: str

    def generate_caption(
        self, image_bytes: bytes, prompt_template: str, *, image_id: str = "", sidecar_dir: Path | None = None
    ) -> CaptionResult: ...


@runtime_checkable
class OcrEngine(Protocol):
    provider_id: str

    def extract_ocr(
        self, image_bytes: bytes, prompt_template: str, *, image_id: str = "", sidecar_dir: Path | None = None
    ) -> OcrResult: ...


# ---------------------------------------------------------------------------
# prompt resources


@dataclass(frozen=True)
class PromptTemplate:
    prompt_id: str
    text: str


@lru_cache(maxsize=None)
def load_prompt(name: str, version: int = 1) -> PromptTemplate:
    """Load a packaged prompt template, e.g. ``load_prompt("caption")``."""
    filename = f"{name}.v{version}.txt"
    text = resources.files("visrag").joinpath(f"prompts/{filename}").read_text(encoding="utf-8")
    return PromptTemplate(prompt_id=f"{name}.v{version}", text=text)


def prompt_id_for(template: str) -> str:
    """Identify a template string: packaged ones by file version, anything else as custom."""
    for name in ("caption", "ocr"):
        packaged = load_prompt(name)
        if template == packaged.text:
            return packaged.prompt_id
    return "custom"


@dataclass
class ProviderSet:
    """The five model roles used by indexing and scoring."""

    text_embed: TextEmbedder
    image_embed: ImageEmbedder
    caption: Captioner
    ocr: OcrEngine
    sentence_sim: TextEmbedder
    caption_prompt: PromptTemplate = field(default_factory=lambda: load_prompt("caption"))
    ocr_prompt: PromptTemplate = field(default_factory=lambda: load_prompt("ocr"))

    def check_dims(self) -> int:
        """Index embedders must agree on dimension; returns it."""
        if self.text_embed.dim != self.image_embed.dim:
            raise DimensionMismatchError(
                f"text embedder dim {self.text_embed.dim} != image embedder dim {self.image_embed.dim}"
            )
        return self.text_embed.dim


def is_unit(vec: EmbeddingVector) -> bool:
    return math.isclose(float(np.linalg.norm(vec.values)), 1.0, rel_tol=0, abs_tol=NORM_TOLERANCE)
