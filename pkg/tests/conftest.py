import json
from pathlib import Path

import numpy as np
import pytest

from visrag.documents import sha256_hex
from visrag.fixtures import write_fixture
from visrag.index import IndexRecord
from visrag.providers.base import EmbeddingVector


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory) -> Path:
    """The synthetic 20-document corpus, written once per session. Treat as read-only."""
    return write_fixture(tmp_path_factory.mktemp("fixture"))


def make_record(
    record_id: str,
    vec,
    *,
    content_hash: str | None = None,
    context_text: str = "",
    caption: str = "",
    ocr_text: str = "",
    per_modality: dict | None = None,
    scheme_name: str = "full",
) -> IndexRecord:
    doc_id, image_id = record_id.split("/")
    combined = vec if isinstance(vec, EmbeddingVector) else EmbeddingVector.normalize(np.asarray(vec, float))
    return IndexRecord(
        record_id=record_id,
        doc_id=doc_id,
        image_id=image_id,
        combined=combined,
        per_modality=per_modality or {},
        context_text=context_text,
        caption=caption,
        ocr_text=ocr_text,
        content_hash=content_hash or sha256_hex(record_id.encode()),
        scheme_name=scheme_name,
    )


def write_bundle(root: Path, manifest: dict, payloads: dict[str, bytes] | None = None) -> Path:
    """Write payload files and a manifest; hashes are filled in from the payload bytes."""
    root.mkdir(parents=True, exist_ok=True)
    for rel, data in (payloads or {}).items():
        (root / rel).parent.mkdir(parents=True, exist_ok=True)
        (root / rel).write_bytes(data)
    for page in manifest["pages"]:
        for img in page["images"]:
            if "content_hash" not in img:
                img["content_hash"] = sha256_hex(payloads[img["payload_path"]])
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


# --- acceptance reporting ---------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    _ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title}")
