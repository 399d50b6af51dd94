import base64
import hashlib
import json
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visrag.errors import DimensionMismatchError, EmptyPayloadError, ProviderUnavailableError
from visrag.providers import build_provider_set, make_provider, mock_provider_set
from visrag.providers.base import EmbeddingVector, ProviderConfig, cosine, load_prompt, prompt_id_for
from visrag.providers.http import HttpProvider
from visrag.providers.mock import MockProvider, splitmix64


def reference_text_embedding(text: str, dim: int) -> list[float]:
    """Independent restatement of the mock text formula, in plain Python."""
    tokens, current = [], ""
    for ch in text.lower():
        if ch.isalnum():
            current += ch
        elif current:
            tokens.append(current)
            current = ""
    if current:
        tokens.append(current)
    counts = [0] * dim
    for tok in tokens:
        digest = hashlib.sha256(tok.encode()).digest()
        index = sum(b << (8 * (7 - i)) for i, b in enumerate(digest[:8])) % dim
        counts[index] += -1 if digest[8] % 2 else 1
    norm = math.sqrt(sum(c * c for c in counts))
    return [c / norm for c in counts] if norm else counts


# --- mock text --------------------------------------------------------------


def test_text_embedding_matches_reference():
    vec = MockProvider().embed_text("echeck in")
    assert vec.dim == 512 and vec.normalized
    np.testing.assert_allclose(vec.values, reference_text_embedding("echeck in", 512), rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.text(alphabet=st.characters(codec="ascii"), min_size=1, max_size=60), st.sampled_from([8, 64, 512]))
def test_text_embedding_reference_property(text, dim):
    ref = reference_text_embedding(text, dim)
    vec = MockProvider(ProviderConfig(dim=dim)).embed_text(text)
    np.testing.assert_allclose(vec.values, ref, rtol=0, atol=1e-12)


def test_text_embedding_is_deterministic():
    p = MockProvider()
    a, b = p.embed_text("a"), p.embed_text("a")
    assert a == b and a.values.tobytes() == b.values.tobytes()


def test_empty_text_is_zero_vector():
    vec = MockProvider().embed_text("")
    assert vec.is_zero and not vec.normalized and vec.dim == 512


def test_overlapping_texts_are_similar():
    p = MockProvider()
    near = cosine(p.embed_text("reset my password"), p.embed_text("reset your password"))
    far = cosine(p.embed_text("reset my password"), p.embed_text("video visit schedule"))
    assert near > 0.5 > far


# --- mock image -------------------------------------------------------------


def test_splitmix64_reference_values():
    # published reference outputs of the generator
    assert splitmix64(0, 1) == [0xE220A8397B1DCDAF]
    assert splitmix64(1234567, 5) == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


def test_image_embedding_deterministic_and_unit():
    p = MockProvider()
    a, b = p.embed_image(b"pixels"), p.embed_image(b"pixels")
    assert a == b
    assert abs(np.linalg.norm(a.values) - 1.0) <= 1e-9
    assert np.all(np.abs(a.values) <= 1.0)


def test_bit_flip_gives_unrelated_vector():
    rng = np.random.default_rng(7)
    p = MockProvider()
    sims = []
    for _ in range(100):
        data = bytearray(rng.integers(0, 256, size=64, dtype=np.uint8).tobytes())
        flipped = bytearray(data)
        flipped[int(rng.integers(64))] ^= 1 << int(rng.integers(8))
        sims.append(abs(cosine(p.embed_image(bytes(data)), p.embed_image(bytes(flipped)))))
    assert np.mean(sims) < 0.2


def test_empty_image_payload():
    p = MockProvider()
    with pytest.raises(EmptyPayloadError):
        p.embed_image(b"")
    with pytest.raises(EmptyPayloadError):
        p.generate_caption(b"", "prompt")
    with pytest.raises(EmptyPayloadError):
        p.extract_ocr(b"", "prompt")


# --- caption / OCR ----------------------------------------------------------


def test_sidecar_echo(fixture_dir):
    images = fixture_dir / "corpus" / "echeckin" / "images"
    payload = (images / "echeckin-p2-visit.bin").read_bytes()
    p = MockProvider()
    cap = p.generate_caption(payload, load_prompt("caption").text, image_id="echeckin-p2-visit", sidecar_dir=images)
    assert cap.caption.startswith("This image shows a medical appointment interface for a virtual visit")
    assert cap.prompt_id == "caption.v1"
    ocr = p.extract_ocr(payload, load_prompt("ocr").text, image_id="echeckin-p2-visit", sidecar_dir=images)
    assert "eCheck-In Save time at your appointment" in ocr.ocr_text
    assert ocr.prompt_id == "ocr.v1"


def test_fallback_without_sidecar(tmp_path):
    payload = b"no sidecar here"
    h = hashlib.sha256(payload).hexdigest()[:12]
    p = MockProvider()
    assert p.generate_caption(payload, "x", image_id="i", sidecar_dir=tmp_path).caption == f"mock-caption:{h}"
    assert p.extract_ocr(payload, "x").ocr_text == f"mock-ocr:{h}"


def test_prompts_ship_with_package():
    caption, ocr = load_prompt("caption"), load_prompt("ocr")
    assert caption.prompt_id == "caption.v1" and ocr.prompt_id == "ocr.v1"
    assert caption.text.strip() and ocr.text.strip() and caption.text != ocr.text
    assert prompt_id_for("something else") == "custom"


# --- calibration / config ---------------------------------------------------


def test_calibration_pins_vectors(tmp_path):
    table = {"dim": 8, "text": {"pinned": [[3, 2.0]]}, "image": {hashlib.sha256(b"img").hexdigest(): [[0, 1.0], [1, 1.0]]}}
    path = tmp_path / "cal.json"
    path.write_text(json.dumps(table))
    p = MockProvider(ProviderConfig(dim=8, calibration=str(path)))
    assert p.embed_text("pinned").values.tolist() == [0, 0, 0, 1, 0, 0, 0, 0]
    np.testing.assert_allclose(p.embed_image(b"img").values[:2], [2 ** -0.5] * 2)
    assert p.embed_text("other") == MockProvider(ProviderConfig(dim=8)).embed_text("other")


def test_calibration_dim_mismatch(tmp_path):
    path = tmp_path / "cal.json"
    path.write_text(json.dumps({"dim": 4}))
    with pytest.raises(DimensionMismatchError):
        MockProvider(ProviderConfig(dim=8, calibration=str(path)))


@pytest.mark.parametrize(
    "kwargs",
    [{"kind": "grpc"}, {"dim": 0}, {"timeout_ms": 0}, {"max_inflight": 0}, {"kind": "http"}, {"retries": -1}],
)
def test_invalid_provider_config(kwargs):
    with pytest.raises(ValueError):
        ProviderConfig(**kwargs)


def test_provider_set_shares_identical_configs():
    ps = build_provider_set()
    assert ps.text_embed is ps.image_embed
    assert ps.sentence_sim is not ps.text_embed
    assert ps.check_dims() == 512


def test_embedding_vector_validation():
    with pytest.raises(ValueError):
        EmbeddingVector([float("nan"), 1.0])
    with pytest.raises(ValueError):
        EmbeddingVector([2.0, 0.0], normalized=True)
    v = EmbeddingVector.normalize([3.0, 4.0])
    assert v.values.tolist() == [0.6, 0.8]
    assert EmbeddingVector.from_json(json.loads(json.dumps(v.to_json()))) == v
    with pytest.raises(DimensionMismatchError):
        cosine(v, EmbeddingVector.zeros(3))
    assert cosine(v, EmbeddingVector.zeros(2)) == 0.0


# --- HTTP adapter -----------------------------------------------------------


class _Backend:
    """Tiny model server: records requests, tracks peak concurrency."""

    def __init__(self, dim=4, delay=0.0, status=200, body=None):
        self.dim, self.delay, self.status, self.body = dim, delay, status, body
        self.requests: list[tuple[str, dict]] = []
        self.active = self.peak = 0
        self.lock = threading.Lock()
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                payload = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with backend.lock:
                    backend.requests.append((self.path, payload))
                    backend.active += 1
                    backend.peak = max(backend.peak, backend.active)
                try:
                    time.sleep(backend.delay)
                    out = backend.respond(self.path)
                finally:
                    with backend.lock:
                        backend.active -= 1
                self.send_response(backend.status)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(out)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def respond(self, path: str) -> bytes:
        if self.body is not None:
            return self.body
        if path == "/v1/embed":
            return json.dumps({"values": [1.0] + [0.0] * (self.dim - 1)}).encode()
        if path == "/v1/caption":
            return json.dumps({"caption": "a login screen"}).encode()
        return json.dumps({"text": "Sign In"}).encode()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def _http(url, **kw):
    return HttpProvider(ProviderConfig(kind="http", endpoint=url, model_id="m", dim=kw.pop("dim", 4), **kw))


def test_http_wire_format():
    with _Backend() as backend, _http(backend.url) as p:
        assert p.embed_text("hello").values.tolist() == [1.0, 0.0, 0.0, 0.0]
        p.embed_image(b"\x00\x01")
        assert p.generate_caption(b"img", "describe").caption == "a login screen"
        assert p.extract_ocr(b"img", "read").ocr_text == "Sign In"
    paths = [path for path, _ in backend.requests]
    assert paths == ["/v1/embed", "/v1/embed", "/v1/caption", "/v1/ocr"]
    assert backend.requests[0][1] == {"kind": "text", "text": "hello", "model_id": "m", "dim": 4}
    assert backend.requests[1][1]["image_b64"] == base64.b64encode(b"\x00\x01").decode()
    assert backend.requests[2][1] == {"image_b64": base64.b64encode(b"img").decode(), "prompt": "describe", "model_id": "m"}


def test_http_empty_text_makes_no_request():
    with _Backend() as backend, _http(backend.url) as p:
        assert p.embed_text("").is_zero
    assert backend.requests == []


def test_http_timeout_is_unavailable():
    with _Backend(delay=0.5) as backend, _http(backend.url, timeout_ms=50) as p:
        with pytest.raises(ProviderUnavailableError):
            p.embed_text("slow")


def test_http_unreachable_endpoint():
    with _http("http://127.0.0.1:9", timeout_ms=200) as p:
        with pytest.raises(ProviderUnavailableError):
            p.extract_ocr(b"img", "read")


@pytest.mark.parametrize("status,body", [(404, b"{}"), (200, b"not json"), (200, b"[1, 2]"), (200, b'{"values": "x"}')])
def test_http_bad_responses(status, body):
    with _Backend(status=status, body=body) as backend, _http(backend.url) as p:
        with pytest.raises(ProviderUnavailableError):
            p.embed_text("x")


def test_http_wrong_dimension():
    with _Backend(dim=3) as backend, _http(backend.url, dim=4) as p:
        with pytest.raises(DimensionMismatchError):
            p.embed_text("x")


def test_http_retry_budget():
    with _Backend(status=503, body=b"{}") as backend, _http(backend.url, retries=2) as p:
        with pytest.raises(ProviderUnavailableError):
            p.embed_text("x")
    assert len(backend.requests) == 3


def test_http_max_inflight_bound():
    with _Backend(delay=0.05) as backend, _http(backend.url, max_inflight=2) as p:
        threads = [threading.Thread(target=p.embed_text, args=(f"q{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert len(backend.requests) == 8
    assert backend.peak <= 2


def test_make_provider_dispatch():
    assert isinstance(make_provider(ProviderConfig()), MockProvider)
    http = make_provider(ProviderConfig(kind="http", endpoint="http://127.0.0.1:9"))
    assert isinstance(http, HttpProvider)
    http.close()
    assert mock_provider_set(dim=16).check_dims() == 16
