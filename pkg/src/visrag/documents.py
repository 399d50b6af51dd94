"""Document bundles: the ingestion unit of the engine.

A bundle is a directory holding ``manifest.json`` plus the image payload files it
references. PDF (or HTML) extraction happens upstream; this module only parses,
validates and navigates already-extracted bundles.

Manifest layout::

    {"doc_id": str, "source_uri": str,
     "pages": [{"page_number": int,
                "text_blocks": [{"order_index": int, "text": str, "bbox": [x0, y0, x1, y1] | null}],
                "images": [{"image_id": str, "payload_path": str,
                            "content_hash": str, "anchor": [x0, y0, x1, y1] | null}]}]}
"""

from __future__ import annotations

import hashlib
import json
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from visrag.errors import HashMismatchError, MissingFileError, SchemaError, UnknownImageError

MANIFEST_NAME = "manifest.json"
DEFAULT_WINDOW_CHARS = 512

_HEX64 = re.compile(r"^[0-9a-f]{64}$")

BBox = tuple[float, float, float, float]


@dataclass(frozen=True)
class TextBlock:
    order_index: int
    text: str
    bbox: BBox | None = None

    @property
    def center_y(self) -> float | None:
        if self.bbox is None:
            return None
        return (self.bbox[1] + self.bbox[3]) / 2.0


@dataclass(frozen=True)
class ImageAsset:
    image_id: str
    page_number: int
    payload_path: str
    content_hash: str
    anchor: BBox | None = None


@dataclass(frozen=True)
class Page:
    page_number: int
    text_blocks: tuple[TextBlock, ...] = ()
    images: tuple[ImageAsset, ...] = ()


@dataclass(frozen=True)
class SurroundingContext:
    image_id: str
    context_text: str
    window_chars: int


@dataclass(frozen=True)
class DocumentBundle:
    doc_id: str
    source_uri: str
    pages: tuple[Page, ...]
    root: Path = field(default=Path("."), compare=False)

    @property
    def images(self) -> list[ImageAsset]:
        return [img for page in self.pages for img in page.images]

    def page(self, page_number: int) -> Page:
        for page in self.pages:
            if page.page_number == page_number:
                return page
        raise KeyError(page_number)

    def find_image(self, image_id: str) -> ImageAsset:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise UnknownImageError(f"{self.doc_id}: no image {image_id!r}")

    def payload_file(self, image: ImageAsset) -> Path:
        return self.root / image.payload_path

    def read_payload(self, image: ImageAsset) -> bytes:
        return self.payload_file(image).read_bytes()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# parsing


def _bbox(value: Any, where: str) -> BBox | None:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise SchemaError(f"{where}: bbox must be a list of 4 numbers or null")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise SchemaError(f"{where}: bbox entries must be numbers")
    x0, y0, x1, y1 = (float(v) for v in value)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise SchemaError(f"{where}: bbox {list(value)} outside the unit square or degenerate")
    return (x0, y0, x1, y1)


def _require(obj: dict, key: str, kind: type | tuple[type, ...], where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} has the wrong type")
    return value


def _resolve_payload(root: Path, rel: str, where: str) -> Path:
    if not rel or Path(rel).is_absolute():
        raise SchemaError(f"{where}: payload_path must be a non-empty relative path")
    resolved_root = root.resolve()
    target = (resolved_root / rel).resolve()
    if not target.is_relative_to(resolved_root):
        raise SchemaError(f"{where}: payload_path {rel!r} escapes the bundle root")
    if not target.is_file():
        raise MissingFileError(f"{where}: payload {rel!r} not found")
    return target


def bundle_from_manifest(data: Any, root: Path, verify_payloads: bool = True) -> DocumentBundle:
    """Validate a decoded manifest and build the bundle it describes."""
    if not isinstance(data, dict):
        raise SchemaError("manifest must be a JSON object")
    doc_id = _require(data, "doc_id", str, "manifest")
    if not doc_id:
        raise SchemaError("manifest: doc_id must be non-empty")
    source_uri = _require(data, "source_uri", str, "manifest")
    raw_pages = _require(data, "pages", list, "manifest")

    pages: list[Page] = []
    seen_images: set[str] = set()
    prev_page = 0
    for i, raw_page in enumerate(raw_pages):
        where = f"{doc_id} pages[{i}]"
        number = _require(raw_page, "page_number", int, where)
        if (not pages and number != 1) or number <= prev_page:
            raise SchemaError(f"{where}: page numbers must start at 1 and strictly increase")
        prev_page = number

        blocks: list[TextBlock] = []
        for j, raw_block in enumerate(_require(raw_page, "text_blocks", list, where)):
            bwhere = f"{where} text_blocks[{j}]"
            idx = _require(raw_block, "order_index", int, bwhere)
            expected_min = blocks[-1].order_index + 1 if blocks else 0
            if (not blocks and idx != 0) or idx < expected_min:
                raise SchemaError(f"{bwhere}: order_index must start at 0 and strictly increase")
            text = _require(raw_block, "text", str, bwhere)
            blocks.append(TextBlock(idx, text, _bbox(raw_block.get("bbox"), bwhere)))

        images: list[ImageAsset] = []
        for j, raw_img in enumerate(_require(raw_page, "images", list, where)):
            iwhere = f"{where} images[{j}]"
            image_id = _require(raw_img, "image_id", str, iwhere)
            if not image_id or "/" in image_id:
                raise SchemaError(f"{iwhere}: image_id must be non-empty and contain no '/'")
            if image_id in seen_images:
                raise SchemaError(f"{iwhere}: duplicate image_id {image_id!r}")
            seen_images.add(image_id)
            rel = _require(raw_img, "payload_path", str, iwhere)
            digest = _require(raw_img, "content_hash", str, iwhere)
            if not _HEX64.match(digest):
                raise SchemaError(f"{iwhere}: content_hash must be 64 lowercase hex chars")
            if verify_payloads:
                target = _resolve_payload(root, rel, iwhere)
                actual = sha256_hex(target.read_bytes())
                if actual != digest:
                    raise HashMismatchError(
                        f"{iwhere}: content_hash {digest[:12]}... does not match payload ({actual[:12]}...)"
                    )
            images.append(ImageAsset(image_id, number, rel, digest, _bbox(raw_img.get("anchor"), iwhere)))

        pages.append(Page(number, tuple(blocks), tuple(images)))

    return DocumentBundle(doc_id, source_uri, tuple(pages), root)


def parse_bundle(manifest_path: str | Path) -> DocumentBundle:
    """Load and fully validate a bundle, verifying every payload hash.

    ``manifest_path`` may point at the manifest file or at the bundle directory.
    """
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"{path}: not valid UTF-8 JSON ({exc})") from exc
    return bundle_from_manifest(data, path.parent)


def bundle_to_manifest(bundle: DocumentBundle) -> dict:
    return {
        "doc_id": bundle.doc_id,
        "source_uri": bundle.source_uri,
        "pages": [
            {
                "page_number": page.page_number,
                "text_blocks": [
                    {"order_index": b.order_index, "text": b.text, "bbox": list(b.bbox) if b.bbox else None}
                    for b in page.text_blocks
                ],
                "images": [
                    {
                        "image_id": img.image_id,
                        "payload_path": img.payload_path,
                        "content_hash": img.content_hash,
                        "anchor": list(img.anchor) if img.anchor else None,
                    }
                    for img in page.images
                ],
            }
            for page in bundle.pages
        ],
    }


def write_manifest(bundle: DocumentBundle, root: str | Path | None = None) -> Path:
    """Serialize ``bundle`` to ``<root>/manifest.json`` (payload files are not touched)."""
    target = Path(root) if root is not None else bundle.root
    target.mkdir(parents=True, exist_ok=True)
    path = target / MANIFEST_NAME
    path.write_text(json.dumps(bundle_to_manifest(bundle), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def find_bundles(corpus_dir: str | Path) -> list[Path]:
    """Bundle directories under ``corpus_dir`` (itself or its children), sorted by path."""
    corpus = Path(corpus_dir)
    if (corpus / MANIFEST_NAME).is_file():
        return [corpus]
    if not corpus.is_dir():
        return []
    return sorted(p for p in corpus.iterdir() if (p / MANIFEST_NAME).is_file())


# ---------------------------------------------------------------------------
# surrounding text


def _join(blocks: list[TextBlock]) -> str:
    return " ".join(b.text for b in sorted(blocks, key=lambda b: b.order_index))


def extract_surrounding_text(
    bundle: DocumentBundle, image_id: str, window_chars: int = DEFAULT_WINDOW_CHARS
) -> SurroundingContext:
    """Collect whole text blocks near an image on its page.

    Anchored images pull blocks outward from the anchor, nearest first, until each
    side (above / below the anchor center) has accumulated ``window_chars``
    characters. Blocks lacking a bbox are placed by order index relative to the
    median index of the blocks that do have one, and rank after them. Images
    without an anchor, or pages whose blocks carry no geometry, get the whole page.
    """
    if window_chars < 1:
        raise ValueError("window_chars must be >= 1")
    image = bundle.find_image(image_id)
    blocks = [b for b in bundle.page(image.page_number).text_blocks if b.text.strip()]
    positioned = [b for b in blocks if b.bbox is not None]

    if image.anchor is None or not positioned:
        return SurroundingContext(image_id, _join(blocks), window_chars)

    anchor_y = (image.anchor[1] + image.anchor[3]) / 2.0
    pivot = statistics.median(b.order_index for b in positioned)

    ranked: list[tuple[tuple, str, TextBlock]] = []
    for b in blocks:
        if b.bbox is not None:
            cy = b.center_y
            side = "above" if cy < anchor_y else "below"
            key = (0, abs(cy - anchor_y), b.order_index)
        else:
            side = "above" if b.order_index < pivot else "below"
            key = (1, abs(b.order_index - pivot), b.order_index)
        ranked.append((key, side, b))
    ranked.sort(key=lambda item: item[0])

    used = {"above": 0, "below": 0}
    chosen: list[TextBlock] = []
    for _, side, b in ranked:
        if used[side] >= window_chars:
            continue
        chosen.append(b)
        used[side] += len(b.text)
    return SurroundingContext(image_id, _join(chosen), window_chars)


def _reading_key(image: ImageAsset) -> tuple:
    if image.anchor is None:
        return (1, 0.0, 0.0)
    return (0, image.anchor[1], image.anchor[0])


def enumerate_images(
    bundle: DocumentBundle, window_chars: int = DEFAULT_WINDOW_CHARS
) -> list[tuple[ImageAsset, SurroundingContext]]:
    """Every image in page order, then anchor reading order (top-to-bottom, left-to-right)."""
    out = []
    for page in sorted(bundle.pages, key=lambda p: p.page_number):
        # sorted() is stable: unanchored images keep manifest order
        for image in sorted(page.images, key=_reading_key):
            out.append((image, extract_surrounding_text(bundle, image.image_id, window_chars)))
    return out
