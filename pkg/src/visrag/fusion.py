"""Modality weight schemes and weighted embedding fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from visrag.errors import DimensionMismatchError, MissingModalityError, UnknownSchemeError
from visrag.providers.base import EmbeddingVector

MODALITIES = ("text", "image", "caption", "ocr")
WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class WeightScheme:
    name: str
    w_text: float
    w_image: float
    w_caption: float
    w_ocr: float

    def __post_init__(self):
        for m, w in self.weights.items():
            if not (0.0 <= w <= 1.0) or math.isnan(w):
                raise ValueError(f"{self.name}: weight for {m} must be in [0, 1], got {w}")
        total = sum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"{self.name}: weights sum to {total}, expected 1")

    @property
    def weights(self) -> dict[str, float]:
        return {"text": self.w_text, "image": self.w_image, "caption": self.w_caption, "ocr": self.w_ocr}

    def weight(self, modality: str) -> float:
        return self.weights[modality]

    @property
    def active(self) -> tuple[str, ...]:
        """Modalities with non-zero weight, in canonical order."""
        return tuple(m for m in MODALITIES if self.weights[m] > 0)

    def to_json(self) -> dict:
        return {"name": self.name, **{f"w_{m}": w for m, w in self.weights.items()}}

    @classmethod
    def from_json(cls, obj: Mapping) -> WeightScheme:
        return cls(obj["name"], *(float(obj[f"w_{m}"]) for m in MODALITIES))


PRESETS: Mapping[str, WeightScheme] = MappingProxyType(
    {
        s.name: s
        for s in (
            WeightScheme("text_only", 1.0, 0.0, 0.0, 0.0),
            WeightScheme("text_image", 0.55, 0.45, 0.0, 0.0),
            WeightScheme("text_image_caption", 0.35, 0.20, 0.45, 0.0),
            WeightScheme("full", 0.30, 0.15, 0.25, 0.30),
            WeightScheme("algorithm_fusion", 0.30, 0.15, 0.35, 0.20),
        )
    }
)
DEFAULT_SCHEME = "full"


def get_scheme(name: str, custom: Mapping[str, WeightScheme] | None = None) -> WeightScheme:
    if name in PRESETS:
        return PRESETS[name]
    if custom and name in custom:
        return custom[name]
    known = sorted(set(PRESETS) | set(custom or ()))
    raise UnknownSchemeError(f"unknown scheme {name!r}; known: {', '.join(known)}")


def weighted_sum(
    mods: Mapping[str, EmbeddingVector], scheme: WeightScheme, strict: bool = False
) -> np.ndarray:
    """Pre-normalization fusion: sum of weight * vector over present modalities."""
    dims = {v.dim for v in mods.values()}
    if len(dims) > 1:
        raise DimensionMismatchError(f"modality dims differ: {sorted(dims)}")
    if not dims:
        raise MissingModalityError("no modality vectors supplied")
    dim = dims.pop()

    total = np.zeros(dim)
    for m in MODALITIES:
        w = scheme.weight(m)
        if w == 0.0:
            continue
        vec = mods.get(m)
        if vec is None:
            if strict:
                raise MissingModalityError(f"scheme {scheme.name} weights {m} at {w} but no vector given")
            continue
        total += w * vec.values
    return total


def combine_embeddings(
    mods: Mapping[str, EmbeddingVector], scheme: WeightScheme, strict: bool = False
) -> EmbeddingVector:
    """L2-normalized weighted sum. Weights are not redistributed over missing or
    zero modalities; an all-zero sum comes back unnormalized."""
    total = weighted_sum(mods, scheme, strict)
    # single weight-1 modality: pass through so text_only ranks exactly like the text vector
    if len(scheme.active) == 1:
        only = mods.get(scheme.active[0])
        if only is not None and only.normalized and scheme.weight(scheme.active[0]) == 1.0:
            return only
    return EmbeddingVector.normalize(total)
