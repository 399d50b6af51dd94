"""Vector index: build from bundles, exact cosine search, dedup/diversify, persistence.

Index file format (JSON lines, UTF-8):

* line 1 - header ``{"version": 1, "dim": int, "scheme": str, "build_config": {...}, "count": int}``
* one line per record, embeddings as plain JSON number arrays (repr-exact floats)
* last line - ``{"checksum_sha256": hex}`` over the bytes of every preceding line
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from visrag.documents import (
    DEFAULT_WINDOW_CHARS,
    DocumentBundle,
    ImageAsset,
    SurroundingContext,
    bundle_to_manifest,
    enumerate_images,
)
from visrag.errors import (
    ChecksumMismatchError,
    DimensionMismatchError,
    FormatVersionMismatchError,
    IndexFormatError,
    IndexIOError,
)
from visrag.fusion import WeightScheme, combine_embeddings
from visrag.providers import ProviderSet, describe_provider_set
from visrag.providers.base import EmbeddingVector, cosine

FORMAT_VERSION = 1
DEFAULT_K = 10
DEFAULT_SIM_THRESHOLD = 0.95
DEFAULT_MAX_PER_DOC = 2


@dataclass(frozen=True)
class IndexRecord:
    record_id: str
    doc_id: str
    image_id: str
    combined: EmbeddingVector
    per_modality: dict[str, EmbeddingVector]
    context_text: str
    caption: str
    ocr_text: str
    content_hash: str
    scheme_name: str

    def to_json(self) -> dict[str, Any]:
        return {
            "record_id": self.record_id,
            "doc_id": self.doc_id,
            "image_id": self.image_id,
            "content_hash": self.content_hash,
            "scheme_name": self.scheme_name,
            "context_text": self.context_text,
            "caption": self.caption,
            "ocr_text": self.ocr_text,
            "combined": self.combined.to_json(),
            "per_modality": {m: v.to_json() for m, v in self.per_modality.items()},
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> IndexRecord:
        return cls(
            record_id=obj["record_id"],
            doc_id=obj["doc_id"],
            image_id=obj["image_id"],
            combined=EmbeddingVector.from_json(obj["combined"]),
            per_modality={m: EmbeddingVector.from_json(v) for m, v in obj["per_modality"].items()},
            context_text=obj["context_text"],
            caption=obj["caption"],
            ocr_text=obj["ocr_text"],
            content_hash=obj["content_hash"],
            scheme_name=obj["scheme_name"],
        )


@dataclass
class VectorIndex:
    records: list[IndexRecord]
    dim: int
    scheme_name: str
    build_config: dict[str, Any] = field(default_factory=dict)
    _matrix: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _id_rank: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.combined.dim != self.dim or any(v.dim != self.dim for v in rec.per_modality.values()):
                raise DimensionMismatchError(f"record {rec.record_id} does not match index dim {self.dim}")
            if rec.record_id in seen:
                raise ValueError(f"duplicate record_id {rec.record_id}")
            seen.add(rec.record_id)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def scheme(self) -> WeightScheme | None:
        raw = self.build_config.get("scheme")
        return WeightScheme.from_json(raw) if raw else None

    def _prepare(self) -> tuple[np.ndarray, np.ndarray]:
        if self._matrix is None:
            if self.records:
                mat = np.vstack([r.combined.values for r in self.records])
                norms = np.linalg.norm(mat, axis=1)
                nz = norms > 0
                mat[nz] /= norms[nz, None]
            else:
                mat = np.zeros((0, self.dim))
            ids = [r.record_id for r in self.records]
            rank = np.empty(len(ids), dtype=np.int64)
            rank[np.argsort(np.array(ids, dtype=object), kind="stable")] = np.arange(len(ids))
            self._matrix, self._id_rank = mat, rank
        return self._matrix, self._id_rank

    def corpus_fingerprint(self) -> list[tuple[str, str]]:
        return sorted((r.record_id, r.content_hash) for r in self.records)


@dataclass(frozen=True)
class Candidate:
    record: IndexRecord
    score: float

    @property
    def record_id(self) -> str:
        return self.record.record_id


# ---------------------------------------------------------------------------
# build


def corpus_digest(bundles: Iterable[DocumentBundle]) -> str:
    manifests = sorted((b.doc_id, json.dumps(bundle_to_manifest(b), sort_keys=True)) for b in bundles)
    return hashlib.sha256(json.dumps(manifests).encode("utf-8")).hexdigest()


def describe_build(
    bundles: Sequence[DocumentBundle], scheme: WeightScheme, providers: ProviderSet, window_chars: int
) -> dict[str, Any]:
    """Provenance recorded in the index header; two builds with equal configs produce equal indexes."""
    active = set(scheme.active)
    prompts = {}
    if "caption" in active:
        prompts["caption"] = providers.caption_prompt.prompt_id
    if "ocr" in active:
        prompts["ocr"] = providers.ocr_prompt.prompt_id
    return {
        "scheme": scheme.to_json(),
        "window_chars": window_chars,
        "providers": describe_provider_set(providers),
        "prompts": prompts,
        "corpus_sha256": corpus_digest(bundles),
        "documents": len(bundles),
    }


def _build_record(
    bundle: DocumentBundle,
    image: ImageAsset,
    context: SurroundingContext,
    scheme: WeightScheme,
    providers: ProviderSet,
) -> IndexRecord:
    active = set(scheme.active)
    payload = bundle.read_payload(image)
    sidecar_dir = bundle.payload_file(image).parent
    mods: dict[str, EmbeddingVector] = {}
    caption = ocr_text = ""

    if "text" in active:
        mods["text"] = providers.text_embed.embed_text(context.context_text)
    if "image" in active:
        mods["image"] = providers.image_embed.embed_image(payload)
    if "caption" in active:
        caption = providers.caption.generate_caption(
            payload, providers.caption_prompt.text, image_id=image.image_id, sidecar_dir=sidecar_dir
        ).caption
        mods["caption"] = providers.text_embed.embed_text(caption)
    if "ocr" in active:
        ocr_text = providers.ocr.extract_ocr(
            payload, providers.ocr_prompt.text, image_id=image.image_id, sidecar_dir=sidecar_dir
        ).ocr_text
        mods["ocr"] = providers.text_embed.embed_text(ocr_text)

    return IndexRecord(
        record_id=f"{bundle.doc_id}/{image.image_id}",
        doc_id=bundle.doc_id,
        image_id=image.image_id,
        combined=combine_embeddings(mods, scheme, strict=True),
        per_modality=mods,
        context_text=context.context_text,
        caption=caption,
        ocr_text=ocr_text,
        content_hash=image.content_hash,
        scheme_name=scheme.name,
    )


def build_index(
    bundles: Sequence[DocumentBundle],
    scheme: WeightScheme,
    providers: ProviderSet,
    window_chars: int = DEFAULT_WINDOW_CHARS,
    workers: int = 1,
) -> VectorIndex:
    """One record per image. Modalities weighted 0 by ``scheme`` are never computed.

    Any provider or bundle error aborts the whole build. Records come back sorted
    by record_id regardless of ``workers``.
    """
    if not bundles:
        raise ValueError("build_index needs at least one bundle")
    doc_ids = [b.doc_id for b in bundles]
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("doc_id values must be unique within a corpus")
    dim = providers.check_dims()

    jobs = [(b, img, ctx) for b in bundles for img, ctx in enumerate_images(b, window_chars)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda job: _build_record(*job, scheme, providers), jobs))
    else:
        records = [_build_record(*job, scheme, providers) for job in jobs]
    records.sort(key=lambda r: r.record_id)
    return VectorIndex(records, dim, scheme.name, describe_build(bundles, scheme, providers, window_chars))


# ---------------------------------------------------------------------------
# search


def search(index: VectorIndex, query: EmbeddingVector, k: int = DEFAULT_K) -> list[Candidate]:
    """Exact top-k by cosine against the combined embeddings; ties go to the smaller record_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.dim != index.dim:
        raise DimensionMismatchError(f"query dim {query.dim} != index dim {index.dim}")
    if not index.records:
        return []
    mat, id_rank = index._prepare()
    qnorm = float(np.linalg.norm(query.values))
    scores = mat @ query.values / qnorm if qnorm > 0 else np.zeros(len(index.records))
    order = np.lexsort((id_rank, -scores))[:k]
    return [Candidate(index.records[i], float(scores[i])) for i in order]


def deduplicate_diversify(
    candidates: Sequence[Candidate],
    sim_threshold: float = DEFAULT_SIM_THRESHOLD,
    max_per_doc: int = DEFAULT_MAX_PER_DOC,
) -> list[Candidate]:
    """Greedy filter in rank order.

    A candidate is dropped if it repeats a kept content hash, if its combined
    embedding has cosine > ``sim_threshold`` with any kept one, or if its
    document already has ``max_per_doc`` kept results.
    """
    if not (0.0 < sim_threshold <= 1.0):
        raise ValueError("sim_threshold must be in (0, 1]")
    if max_per_doc < 1:
        raise ValueError("max_per_doc must be >= 1")
    kept: list[Candidate] = []
    hashes: set[str] = set()
    per_doc: dict[str, int] = {}
    for cand in candidates:
        rec = cand.record
        if rec.content_hash in hashes:
            continue
        if per_doc.get(rec.doc_id, 0) >= max_per_doc:
            continue
        if any(cosine(rec.combined, k.record.combined) > sim_threshold for k in kept):
            continue
        kept.append(cand)
        hashes.add(rec.content_hash)
        per_doc[rec.doc_id] = per_doc.get(rec.doc_id, 0) + 1
    return kept


# ---------------------------------------------------------------------------
# persistence


def _line(obj: Any) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def persist_index(index: VectorIndex, path: str | Path) -> Path:
    """Write atomically: temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    header = {
        "version": FORMAT_VERSION,
        "dim": index.dim,
        "scheme": index.scheme_name,
        "build_config": index.build_config,
        "count": len(index.records),
    }
    body = [_line(header)] + [_line(r.to_json()) for r in sorted(index.records, key=lambda r: r.record_id)]
    digest = hashlib.sha256(b"".join(body)).hexdigest()
    body.append(_line({"checksum_sha256": digest}))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.writelines(body)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise IndexIOError(f"cannot write index {path}: {exc}") from exc
    return path


def load_index(path: str | Path) -> VectorIndex:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IndexIOError(f"cannot read index {path}: {exc}") from exc
    lines = raw.splitlines(keepends=True)
    if len(lines) < 2:
        raise IndexFormatError(f"{path}: truncated index file")

    try:
        header = json.loads(lines[0])
    except ValueError as exc:
        raise IndexFormatError(f"{path}: header is not JSON") from exc
    if not isinstance(header, dict) or "version" not in header:
        raise IndexFormatError(f"{path}: header lacks a version")
    if header["version"] != FORMAT_VERSION:
        raise FormatVersionMismatchError(
            f"{path}: format version {header['version']} (this reader handles {FORMAT_VERSION})"
        )

    try:
        trailer = json.loads(lines[-1])
        expected = trailer["checksum_sha256"]
    except (ValueError, TypeError, KeyError) as exc:
        raise ChecksumMismatchError(f"{path}: missing or corrupt checksum line") from exc
    actual = hashlib.sha256(b"".join(lines[:-1])).hexdigest()
    if actual != expected:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")

    try:
        records = [IndexRecord.from_json(json.loads(line)) for line in lines[1:-1]]
        if len(records) != header["count"]:
            raise IndexFormatError(f"{path}: header says {header['count']} records, found {len(records)}")
        return VectorIndex(records, int(header["dim"]), header["scheme"], header.get("build_config", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"{path}: malformed record ({exc})") from exc
