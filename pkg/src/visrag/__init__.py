"""Multimodal retrieval over document images: text, image, caption and OCR fusion."""

from visrag.documents import DocumentBundle, extract_surrounding_text, enumerate_images, parse_bundle
from visrag.fusion import PRESETS, WeightScheme, combine_embeddings, get_scheme
from visrag.index import (
    VectorIndex,
    build_index,
    deduplicate_diversify,
    load_index,
    persist_index,
    search,
)
from visrag.scoring import hybrid_score, rerank, text_match_score

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "DocumentBundle",
    "VectorIndex",
    "WeightScheme",
    "build_index",
    "combine_embeddings",
    "deduplicate_diversify",
    "enumerate_images",
    "extract_surrounding_text",
    "get_scheme",
    "hybrid_score",
    "load_index",
    "parse_bundle",
    "persist_index",
    "rerank",
    "search",
    "text_match_score",
]
