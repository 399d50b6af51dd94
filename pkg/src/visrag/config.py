"""CLI configuration: one JSON file, located by --config or $VISRAG_CONFIG; flags win."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from visrag.documents import DEFAULT_WINDOW_CHARS
from visrag.fusion import PRESETS, WeightScheme, get_scheme
from visrag.index import DEFAULT_K, DEFAULT_MAX_PER_DOC, DEFAULT_SIM_THRESHOLD
from visrag.providers import ROLES, ProviderConfig, ProviderSet, build_provider_set
from visrag.providers.base import DEFAULT_SENTENCE_MODEL

ENV_VAR = "VISRAG_CONFIG"
DEFAULT_METHODS = ("text_only", "text_image", "text_image_caption", "full")


def _default_providers() -> dict[str, ProviderConfig]:
    cfgs = {role: ProviderConfig() for role in ROLES}
    cfgs["sentence_sim"] = ProviderConfig(model_id=DEFAULT_SENTENCE_MODEL)
    return cfgs


@dataclass
class CliConfig:
    providers: dict[str, ProviderConfig] = field(default_factory=_default_providers)
    window_chars: int = DEFAULT_WINDOW_CHARS
    k: int = DEFAULT_K
    sim_threshold: float = DEFAULT_SIM_THRESHOLD
    max_per_doc: int = DEFAULT_MAX_PER_DOC
    schemes: list[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    custom_schemes: dict[str, WeightScheme] = field(default_factory=dict)
    workers: int = 1
    source: Path | None = None

    def __post_init__(self):
        clash = set(self.custom_schemes) & set(PRESETS)
        if clash:
            raise ValueError(f"custom schemes may not redefine presets: {sorted(clash)}")
        for name in self.schemes:
            self.scheme(name)

    def scheme(self, name: str) -> WeightScheme:
        return get_scheme(name, self.custom_schemes)

    def provider_set(self) -> ProviderSet:
        return build_provider_set(self.providers)

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> CliConfig:
        providers = _default_providers()
        for role, raw in (data.get("providers") or {}).items():
            if role not in ROLES:
                raise ValueError(f"unknown provider role {role!r}")
            providers[role] = ProviderConfig.from_dict(raw, base_dir)
        custom = {
            name: WeightScheme(name, *(float(w[f"w_{m}"]) for m in ("text", "image", "caption", "ocr")))
            for name, w in (data.get("custom_schemes") or {}).items()
        }
        kwargs = {k: data[k] for k in ("window_chars", "k", "sim_threshold", "max_per_doc", "workers") if k in data}
        if "schemes" in data:
            kwargs["schemes"] = list(data["schemes"])
        return cls(providers=providers, custom_schemes=custom, **kwargs)


def load_config(path: str | Path | None = None) -> CliConfig:
    """Explicit path, else $VISRAG_CONFIG, else built-in defaults (all-mock providers)."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return CliConfig()
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    cfg = CliConfig.from_dict(data, base_dir=path.parent.resolve())
    cfg.source = path
    return cfg
