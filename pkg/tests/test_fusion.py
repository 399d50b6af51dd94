import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visrag.errors import DimensionMismatchError, MissingModalityError, UnknownSchemeError
from visrag.fusion import MODALITIES, PRESETS, WeightScheme, combine_embeddings, get_scheme, weighted_sum
from visrag.providers.base import EmbeddingVector

# Published modality weights per method, written out independently of the presets table.
EXPECTED_WEIGHTS = {
    "text_only": (1.0, 0.0, 0.0, 0.0),
    "text_image": (0.55, 0.45, 0.0, 0.0),
    "text_image_caption": (0.35, 0.20, 0.45, 0.0),
    "full": (0.30, 0.15, 0.25, 0.30),
    "algorithm_fusion": (0.30, 0.15, 0.35, 0.20),
}


def unit(*xs):
    return EmbeddingVector.normalize(np.array(xs, float))


def test_presets_match_published_weights():
    assert set(PRESETS) == set(EXPECTED_WEIGHTS)
    for name, weights in EXPECTED_WEIGHTS.items():
        scheme = PRESETS[name]
        assert tuple(scheme.weights.values()) == weights
        assert abs(sum(scheme.weights.values()) - 1.0) <= 1e-9


def test_scheme_validation():
    with pytest.raises(ValueError):
        WeightScheme("bad", 0.5, 0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        WeightScheme("neg", 1.5, -0.5, 0.0, 0.0)
    assert WeightScheme.from_json(PRESETS["full"].to_json()) == PRESETS["full"]


def test_get_scheme():
    assert get_scheme("full") is PRESETS["full"]
    custom = WeightScheme("mine", 0.5, 0.5, 0.0, 0.0)
    assert get_scheme("mine", {"mine": custom}) is custom
    with pytest.raises(UnknownSchemeError):
        get_scheme("nope")


def test_identical_unit_vectors_combine_to_themselves():
    e = unit(1, 2, 3)
    out = combine_embeddings({m: e for m in MODALITIES}, PRESETS["full"])
    np.testing.assert_allclose(out.values, e.values, atol=1e-12)


def test_dim2_toy():
    mods = {"text": unit(1, 0), "image": unit(0, 1), "caption": unit(1, 0), "ocr": unit(0, 1)}
    pre = weighted_sum(mods, PRESETS["full"])
    np.testing.assert_allclose(pre, [0.55, 0.45], atol=1e-12)
    norm = math.hypot(0.55, 0.45)
    out = combine_embeddings(mods, PRESETS["full"])
    np.testing.assert_allclose(out.values, [0.55 / norm, 0.45 / norm], atol=1e-12)
    # the published approximation (0.7739, 0.6333) is good to 1e-4
    np.testing.assert_allclose(out.values, [0.7739, 0.6333], atol=1e-4)


def test_text_only_passthrough():
    v = unit(0.3, -0.2, 0.9)
    assert combine_embeddings({"text": v, "image": unit(1, 0, 0)}, PRESETS["text_only"]) is v


def test_zero_weight_modalities_are_ignored():
    mods = {"text": unit(1, 0), "image": unit(0, 1), "caption": unit(1, 1)}
    out = combine_embeddings(mods, PRESETS["text_image"])
    np.testing.assert_allclose(out.values, combine_embeddings(dict(list(mods.items())[:2]), PRESETS["text_image"]).values)
    # dims must still agree across everything supplied
    with pytest.raises(DimensionMismatchError):
        combine_embeddings({**mods, "ocr": EmbeddingVector.zeros(5)}, PRESETS["text_image"])


def test_missing_and_mismatched_modalities():
    with pytest.raises(MissingModalityError):
        combine_embeddings({"text": unit(1, 0)}, PRESETS["text_image"], strict=True)
    with pytest.raises(DimensionMismatchError):
        combine_embeddings({"text": unit(1, 0), "image": unit(1, 0, 0)}, PRESETS["text_image"])


def test_all_zero_sum_stays_unnormalized():
    out = combine_embeddings({"text": EmbeddingVector.zeros(3), "image": EmbeddingVector.zeros(3)}, PRESETS["text_image"])
    assert out.is_zero and not out.normalized


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4).filter(
    lambda xs: math.sqrt(sum(x * x for x in xs)) > 1e-3
)


@settings(max_examples=200, deadline=None)
@given(st.fixed_dictionaries({m: vectors for m in MODALITIES}), st.sampled_from(sorted(PRESETS)))
def test_combined_is_normalized_weighted_sum(raw, name):
    scheme = PRESETS[name]
    mods = {m: unit(*xs) for m, xs in raw.items()}
    expected = [sum(scheme.weight(m) * float(mods[m].values[i]) for m in MODALITIES) for i in range(4)]
    np.testing.assert_allclose(weighted_sum(mods, scheme), expected, rtol=1e-9, atol=1e-12)
    out = combine_embeddings(mods, scheme)
    if not out.is_zero:
        assert abs(np.linalg.norm(out.values) - 1.0) <= 1e-9
