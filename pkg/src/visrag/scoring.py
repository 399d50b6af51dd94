"""Hybrid weighted scoring and the fine-grained rerank stage.

Per candidate the scorer produces up to four components, each in [0, 1]:

* text match - lexical blend of exact-phrase containment and unique-token coverage
  of the query against the record's surrounding text;
* image similarity - clamped cosine between the query embedding and the image vector;
* caption / OCR similarity - clamped cosine between sentence-similarity embeddings
  of the query and of the record's caption / OCR text.

The hybrid score is the scheme-weighted sum of the components the scheme uses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

from visrag.errors import EmptyQueryError, MissingComponentError
from visrag.fusion import WeightScheme
from visrag.index import Candidate, IndexRecord
from visrag.providers.base import EmbeddingVector, ProviderSet, cosine

PHRASE_WEIGHT = 0.5

_JOINERS = re.compile(r"(?<=\w)['’-](?=\w)")
_NON_WORD = re.compile(r"[^\w\s]|_")


def normalize_text(text: str) -> str:
    """Lowercase, fold intra-word apostrophes/hyphens ("eCheck-in" -> "echeckin"),
    turn remaining punctuation into spaces, collapse whitespace."""
    text = _JOINERS.sub("", text.lower())
    return " ".join(_NON_WORD.sub(" ", text).split())


def text_match_score(query: str, text: str, phrase_weight: float = PHRASE_WEIGHT) -> float:
    q = normalize_text(query)
    if not q:
        raise EmptyQueryError("query is empty after normalization")
    t = normalize_text(text)
    phrase = 1.0 if f" {q} " in f" {t} " else 0.0
    q_tokens = set(q.split())
    coverage = len(q_tokens & set(t.split())) / len(q_tokens)
    return phrase_weight * phrase + (1.0 - phrase_weight) * coverage


def semantic_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    return max(0.0, min(1.0, cosine(a, b)))


@dataclass(frozen=True)
class ComponentScores:
    text_match: float | None = None
    image_sim: float | None = None
    caption_sim: float | None = None
    ocr_sim: float | None = None

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if value is not None and not (0.0 <= value <= 1.0):
                raise ValueError(f"{name}={value} outside [0, 1]")

    def as_dict(self) -> dict[str, float | None]:
        return {
            "text_match": self.text_match,
            "image_sim": self.image_sim,
            "caption_sim": self.caption_sim,
            "ocr_sim": self.ocr_sim,
        }

    def by_modality(self) -> dict[str, float | None]:
        return {"text": self.text_match, "image": self.image_sim, "caption": self.caption_sim, "ocr": self.ocr_sim}

    def to_json(self) -> dict[str, float]:
        return {k: v for k, v in self.as_dict().items() if v is not None}

    @classmethod
    def from_json(cls, obj: dict) -> ComponentScores:
        return cls(**{k: obj.get(k) for k in ("text_match", "image_sim", "caption_sim", "ocr_sim")})


@dataclass(frozen=True)
class HybridScore:
    value01: float
    scheme_name: str
    components: ComponentScores | None = None

    @property
    def value100(self) -> float:
        return 100.0 * self.value01

    def display100(self) -> str:
        return format_score(self.value01, scale=100)

    def display01(self) -> str:
        return format_score(self.value01, scale=1)


def round_half_even(value: float, places: int) -> Decimal:
    # strip binary noise first so 42.7449999999 and 42.7450000001 both read as 42.745
    exact = Decimal(value).quantize(Decimal(1).scaleb(-(places + 8)), rounding=ROUND_HALF_EVEN)
    return exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN)


def format_score(value01: float, scale: int = 100) -> str:
    """Display form: 2 decimals on the 0-100 scale, 4 decimals on the 0-1 scale."""
    if scale == 100:
        return str(round_half_even(value01 * 100.0, 2))
    return str(round_half_even(value01, 4))


def hybrid_score(components: ComponentScores, scheme: WeightScheme) -> HybridScore:
    values = components.by_modality()
    total = 0.0
    for modality in scheme.active:
        comp = values[modality]
        if comp is None:
            raise MissingComponentError(f"scheme {scheme.name} weights {modality} but the component is absent")
        total += scheme.weight(modality) * comp
    return HybridScore(total, scheme.name, components)


def component_scores(
    query: str,
    query_embedding: EmbeddingVector,
    record: IndexRecord,
    scheme: WeightScheme,
    providers: ProviderSet,
    query_sim_embedding: EmbeddingVector | None = None,
) -> ComponentScores:
    """Score one record. ``query_sim_embedding`` (the query under the sentence-similarity
    embedder) may be passed in to avoid recomputing it per candidate."""
    active = set(scheme.active)
    text = image = caption = ocr = None
    if "text" in active:
        text = text_match_score(query, record.context_text)
    if "image" in active:
        image_vec = record.per_modality.get("image")
        image = semantic_similarity(query_embedding, image_vec) if image_vec is not None else 0.0
    if active & {"caption", "ocr"}:
        if query_sim_embedding is None:
            query_sim_embedding = providers.sentence_sim.embed_text(query)
        if "caption" in active:
            caption = semantic_similarity(query_sim_embedding, providers.sentence_sim.embed_text(record.caption))
        if "ocr" in active:
            ocr = semantic_similarity(query_sim_embedding, providers.sentence_sim.embed_text(record.ocr_text))
    return ComponentScores(text, image, caption, ocr)


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: Candidate
    hybrid: HybridScore

    @property
    def record(self) -> IndexRecord:
        return self.candidate.record


def rerank(
    query: str,
    query_embedding: EmbeddingVector,
    candidates: Sequence[Candidate],
    scheme: WeightScheme,
    providers: ProviderSet,
) -> list[ScoredCandidate]:
    """Fine stage: order coarse candidates by hybrid score (desc), then record_id."""
    sim_q = None
    if set(scheme.active) & {"caption", "ocr"} and candidates:
        sim_q = providers.sentence_sim.embed_text(query)
    scored = [
        ScoredCandidate(c, hybrid_score(component_scores(query, query_embedding, c.record, scheme, providers, sim_q), scheme))
        for c in candidates
    ]
    scored.sort(key=lambda s: (-s.hybrid.value01, s.record.record_id))
    return scored
