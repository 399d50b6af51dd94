"""Model provider roles: text/image embedders, captioner, OCR engine, sentence similarity."""

from __future__ import annotations

from visrag.providers.base import (
    DEFAULT_DIM,
    DEFAULT_SENTENCE_MODEL,
    ROLES,
    CaptionResult,
    EmbeddingVector,
    OcrResult,
    PromptTemplate,
    ProviderConfig,
    ProviderSet,
    cosine,
    load_prompt,
)
from visrag.providers.http import HttpProvider
from visrag.providers.mock import MockProvider


def make_provider(config: ProviderConfig) -> MockProvider | HttpProvider:
    if config.kind == "mock":
        return MockProvider(config)
    return HttpProvider(config)


def build_provider_set(configs: dict[str, ProviderConfig] | None = None) -> ProviderSet:
    """Instantiate every role; roles with identical configs share one provider instance."""
    configs = dict(configs or {})
    configs.setdefault("sentence_sim", ProviderConfig(model_id=DEFAULT_SENTENCE_MODEL))
    cache: dict[ProviderConfig, MockProvider | HttpProvider] = {}
    chosen = {}
    for role in ROLES:
        cfg = configs.get(role, ProviderConfig())
        if cfg not in cache:
            cache[cfg] = make_provider(cfg)
        chosen[role] = cache[cfg]
    return ProviderSet(**chosen)


def mock_provider_set(dim: int = DEFAULT_DIM, calibration: str | None = None) -> ProviderSet:
    """All five roles backed by a single mock instance."""
    provider = MockProvider(ProviderConfig(dim=dim, calibration=calibration))
    return ProviderSet(provider, provider, provider, provider, provider)


def describe_provider_set(providers: ProviderSet) -> dict:
    out = {}
    for role in ROLES:
        p = getattr(providers, role)
        cfg = getattr(p, "config", None)
        entry = cfg.describe() if isinstance(cfg, ProviderConfig) else {}
        entry["provider_id"] = p.provider_id
        out[role] = entry
    return out


__all__ = [
    "DEFAULT_DIM",
    "DEFAULT_SENTENCE_MODEL",
    "ROLES",
    "CaptionResult",
    "EmbeddingVector",
    "HttpProvider",
    "MockProvider",
    "OcrResult",
    "PromptTemplate",
    "ProviderConfig",
    "ProviderSet",
    "build_provider_set",
    "cosine",
    "describe_provider_set",
    "load_prompt",
    "make_provider",
    "mock_provider_set",
]
