from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

from exdet.errors import (
    CropOutOfBounds,
    CropTooSmall,
    DuplicateId,
    IoFailure,
    ManifestCorrupt,
    ManifestMissing,
    MissingImage,
    UnknownExemplarId,
)
from exdet.prompts import ExemplarLabel
from exdet.store import ExemplarStore, add_exemplar, load_store


@pytest.fixture
def source(rng):
    return rng.integers(0, 256, (256, 256, 3), dtype=np.uint8)


@pytest.fixture
def store(tmp_path):
    return ExemplarStore.initialize(tmp_path / "store")


class TestAdd:
    def test_crop_rect_arithmetic(self, store, source):
        record = store.add(source, crop_rect=(10, 10, 74, 74), label="positive")
        assert record.crop_w == 64 and record.crop_h == 64
        assert record.label is ExemplarLabel.POSITIVE
        assert len(load_store(store.root)) == 1

    def test_out_of_bounds(self, store, source):
        with pytest.raises(CropOutOfBounds):
            store.add(source, crop_rect=(-5, 0, 10, 10))

    def test_empty_rect(self, store, source):
        with pytest.raises(CropOutOfBounds):
            store.add(source, crop_rect=(10, 10, 10, 30))

    def test_too_small(self, store, source):
        with pytest.raises(CropTooSmall):
            store.add(source, crop_rect=(0, 0, 7, 20))

    def test_whole_image_by_default(self, store, source):
        record = store.add(source, label="negative")
        assert (record.crop_w, record.crop_h) == (256, 256)

    def test_id_is_png_hash_prefix(self, store, source):
        record = store.add(source, crop_rect=(0, 0, 32, 32))
        data = (store.root / record.image).read_bytes()
        assert record.id == hashlib.sha256(data).hexdigest()[:16]

    def test_duplicate_content_rejected(self, store, source):
        store.add(source, crop_rect=(0, 0, 32, 32))
        with pytest.raises(DuplicateId):
            store.add(source, crop_rect=(0, 0, 32, 32))


class TestLoad:
    def test_empty_store(self, tmp_path):
        ExemplarStore.initialize(tmp_path / "s")
        assert len(load_store(tmp_path / "s")) == 0

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ManifestMissing):
            load_store(tmp_path / "nowhere")

    def test_corrupt_manifest_reports_position(self, tmp_path):
        root = tmp_path / "s"
        root.mkdir()
        (root / "manifest.json").write_text('{"version": 1, "exemplars": [}')
        with pytest.raises(ManifestCorrupt) as err:
            load_store(root)
        assert err.value.position is not None

    def test_unsupported_version(self, tmp_path):
        root = tmp_path / "s"
        root.mkdir()
        (root / "manifest.json").write_text('{"version": 99, "exemplars": []}')
        with pytest.raises(ManifestCorrupt):
            load_store(root)

    def test_missing_image_names_id(self, store, source):
        record = store.add(source, crop_rect=(0, 0, 64, 64))
        (store.root / record.image).unlink()
        with pytest.raises(MissingImage) as err:
            load_store(store.root)
        assert err.value.exemplar_id == record.id

    def test_duplicate_ids_in_manifest(self, store, source):
        record = store.add(source, crop_rect=(0, 0, 64, 64))
        doc = json.loads((store.root / "manifest.json").read_text())
        doc["exemplars"].append(doc["exemplars"][0])
        (store.root / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(DuplicateId) as err:
            load_store(store.root)
        assert err.value.exemplar_id == record.id

    def test_roundtrip_three_records(self, store, source):
        added = [
            store.add(source, crop_rect=(0, 0, 64, 64), label="positive",
                      text_tag="tower", note="first"),
            store.add(source, crop_rect=(64, 0, 128, 64), label="negative"),
            store.add(source, crop_rect=(0, 64, 64, 128), label="positive", note="third"),
        ]
        reloaded = load_store(store.root).list()
        assert sorted(r.id for r in reloaded) == sorted(r.id for r in added)
        by_id = {r.id: r for r in reloaded}
        for record in added:
            assert by_id[record.id] == record

    def test_manifest_key_layout(self, store, source):
        store.add(source, crop_rect=(0, 0, 64, 64), label="negative")
        doc = json.loads((store.root / "manifest.json").read_text(encoding="utf-8"))
        assert doc["version"] == 1
        (record,) = doc["exemplars"]
        assert list(record) == [
            "id", "image", "label", "text_tag", "note", "created_at", "crop_w", "crop_h",
        ]
        assert record["label"] == "negative"
        # RFC 3339, second precision
        assert len(record["created_at"]) == 20 and record["created_at"].endswith("Z")


class TestAtomicityAndStability:
    def test_crash_between_temp_and_rename_preserves_manifest(
        self, store, source, monkeypatch
    ):
        store.add(source, crop_rect=(0, 0, 64, 64))
        before = (store.root / "manifest.json").read_bytes()

        import exdet.store as store_module

        def boom(src, dst):
            raise OSError("simulated crash before rename")

        monkeypatch.setattr(store_module.os, "replace", boom)
        with pytest.raises(IoFailure):
            store.add(source, crop_rect=(64, 64, 128, 128))
        monkeypatch.undo()

        # previous manifest intact and still loadable, temp file ignored
        assert (store.root / "manifest.json").read_bytes() == before
        assert len(load_store(store.root)) == 1

    def test_image_bytes_stable_across_loads(self, store, source):
        record = store.add(source, crop_rect=(0, 0, 64, 64))
        path = store.root / record.image
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        for _ in range(3):
            handle = load_store(store.root)
            handle.load_image(handle.get(record.id))
            assert hashlib.sha256(path.read_bytes()).hexdigest() == digest


class TestRemoveAndList:
    def test_remove(self, store, source):
        record = store.add(source, crop_rect=(0, 0, 64, 64))
        store.remove(record.id)
        assert len(load_store(store.root)) == 0
        assert not (store.root / record.image).exists()

    def test_remove_unknown(self, store):
        with pytest.raises(UnknownExemplarId) as err:
            store.remove("deadbeef00000000")
        assert "deadbeef00000000" in str(err.value)

    def test_list_ordering_same_timestamp_by_id(self, store, source, monkeypatch):
        import exdet.store as store_module

        monkeypatch.setattr(store_module, "_now_rfc3339", lambda: "2026-01-01T00:00:00Z")
        a = store.add(source, crop_rect=(0, 0, 64, 64))
        b = store.add(source, crop_rect=(64, 0, 128, 64))
        listed = load_store(store.root).list()
        assert [r.id for r in listed] == sorted([a.id, b.id])


class TestFunctionalAdd:
    def test_add_initializes_missing_store(self, tmp_path, source):
        record = add_exemplar(tmp_path / "fresh", source, crop_rect=(0, 0, 32, 32),
                              label="positive")
        assert (tmp_path / "fresh" / "manifest.json").is_file()
        assert load_store(tmp_path / "fresh").get(record.id) == record
