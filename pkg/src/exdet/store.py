"""Durable exemplar catalog: lossless crops plus a JSON manifest.

Layout (bit-exact contract):
    <store>/manifest.json   UTF-8; keys: version, exemplars[{id, image,
                            label, text_tag, note, created_at, crop_w,
                            crop_h}]; label is "positive" | "negative";
                            created_at is RFC 3339 at second precision.
    <store>/images/<id>.png lossless crops; <id> is the first 16 hex chars
                            of the SHA-256 of the PNG bytes.

Manifest updates are atomic (write temp file, rename), so a crash between
the two steps leaves the previous manifest readable. Single writer,
multiple readers per store directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    CropOutOfBounds,
    CropTooSmall,
    DuplicateId,
    IoFailure,
    ManifestCorrupt,
    ManifestMissing,
    MissingImage,
    UnknownExemplarId,
)
from .prompts import ExemplarLabel
from .validation import check_image, decode_png, encode_png

MANIFEST_NAME = "manifest.json"
IMAGES_DIR = "images"
STORE_VERSION = 1
MIN_CROP_SIDE = 8  # candidate search is unreliable below this


@dataclass(frozen=True)
class Exemplar:
    """One stored query crop with its label and metadata."""

    id: str
    image: str  # store-relative path
    label: ExemplarLabel
    text_tag: str | None
    note: str
    created_at: str
    crop_w: int
    crop_h: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "image": self.image,
            "label": self.label.value,
            "text_tag": self.text_tag,
            "note": self.note,
            "created_at": self.created_at,
            "crop_w": self.crop_w,
            "crop_h": self.crop_h,
        }


_REQUIRED_KEYS = ("id", "image", "label", "text_tag", "note", "created_at", "crop_w", "crop_h")


def _parse_record(raw: object, index: int) -> Exemplar:
    if not isinstance(raw, dict):
        raise ManifestCorrupt(f"exemplars[{index}] is not an object")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ManifestCorrupt(f"exemplars[{index}] missing key {key!r}")
    label_raw = raw["label"]
    if label_raw not in ("positive", "negative"):
        raise ManifestCorrupt(f"exemplars[{index}] has invalid label {label_raw!r}")
    crop_w, crop_h = raw["crop_w"], raw["crop_h"]
    if not isinstance(crop_w, int) or not isinstance(crop_h, int):
        raise ManifestCorrupt(f"exemplars[{index}] crop sizes must be integers")
    if crop_w < MIN_CROP_SIDE or crop_h < MIN_CROP_SIDE:
        raise ManifestCorrupt(
            f"exemplars[{index}] crop {crop_w}x{crop_h} below the {MIN_CROP_SIDE} px floor"
        )
    return Exemplar(
        id=str(raw["id"]),
        image=str(raw["image"]),
        label=ExemplarLabel(label_raw),
        text_tag=None if raw["text_tag"] is None else str(raw["text_tag"]),
        note=str(raw["note"]),
        created_at=str(raw["created_at"]),
        crop_w=crop_w,
        crop_h=crop_h,
    )


def _now_rfc3339() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ExemplarStore:
    """Handle over a validated store directory."""

    def __init__(self, root: Path, exemplars: dict[str, Exemplar]):
        self.root = Path(root)
        self._exemplars = exemplars

    # -- creation / loading --------------------------------------------------

    @classmethod
    def initialize(cls, root: "str | Path") -> "ExemplarStore":
        """Create an empty store (idempotent for an already-empty directory)."""
        root = Path(root)
        store = cls(root, {})
        try:
            (root / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
            store._write_manifest()
        except OSError as exc:
            raise IoFailure(f"cannot initialize store at {root}: {exc}") from exc
        return store

    @classmethod
    def load(cls, root: "str | Path") -> "ExemplarStore":
        """Open and fully validate an existing store.

        Raises:
            ManifestMissing, ManifestCorrupt, MissingImage, DuplicateId.
        """
        root = Path(root)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ManifestMissing(f"no {MANIFEST_NAME} under {root}")
        try:
            text = manifest_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ManifestCorrupt(str(exc)) from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestCorrupt(exc.msg, position=exc.pos) from exc
        if not isinstance(doc, dict):
            raise ManifestCorrupt("top level is not an object")
        if doc.get("version") != STORE_VERSION:
            raise ManifestCorrupt(f"unsupported version {doc.get('version')!r}")
        raw_list = doc.get("exemplars")
        if not isinstance(raw_list, list):
            raise ManifestCorrupt("'exemplars' is not a list")

        exemplars: dict[str, Exemplar] = {}
        for i, raw in enumerate(raw_list):
            record = _parse_record(raw, i)
            if record.id in exemplars:
                raise DuplicateId(record.id)
            exemplars[record.id] = record

        for record in exemplars.values():
            path = root / record.image
            if not path.is_file():
                raise MissingImage(record.id)
            try:
                decode_png(path.read_bytes())
            except Exception as exc:
                raise MissingImage(record.id, f"image not decodable: {exc}") from exc
        return cls(root, exemplars)

    # -- queries --------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._exemplars)

    def __contains__(self, exemplar_id: str) -> bool:
        return exemplar_id in self._exemplars

    def get(self, exemplar_id: str) -> Exemplar:
        try:
            return self._exemplars[exemplar_id]
        except KeyError:
            raise UnknownExemplarId(exemplar_id) from None

    def list(self) -> list[Exemplar]:
        """Records ordered by created_at, then id."""
        return sorted(self._exemplars.values(), key=lambda e: (e.created_at, e.id))

    def image_path(self, exemplar: Exemplar) -> Path:
        return self.root / exemplar.image

    def load_image(self, exemplar: Exemplar) -> np.ndarray:
        path = self.image_path(exemplar)
        if not path.is_file():
            raise MissingImage(exemplar.id)
        return decode_png(path.read_bytes())

    # -- mutation -------------------------------------------------------------

    def add(
        self,
        source_image,
        crop_rect: tuple[int, int, int, int] | None = None,
        label: "ExemplarLabel | str" = ExemplarLabel.POSITIVE,
        text_tag: str | None = None,
        note: str = "",
    ) -> Exemplar:
        """Crop, hash, and persist a new exemplar.

        crop_rect is (x0, y0, x1, y1) in pixels with x1/y1 exclusive; None
        stores the whole source image. The image file is written before the
        manifest, so a crash leaves at worst an orphan image.

        Raises:
            CropOutOfBounds, CropTooSmall, DuplicateId, IoFailure.
        """
        label = ExemplarLabel.parse(label)
        img = check_image(source_image)
        h, w = img.shape[:2]
        if crop_rect is None:
            crop_rect = (0, 0, w, h)
        x0, y0, x1, y1 = (int(v) for v in crop_rect)
        if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
            raise CropOutOfBounds(
                f"crop ({x0}, {y0}, {x1}, {y1}) outside image {w}x{h} or empty"
            )
        if x1 - x0 < MIN_CROP_SIDE or y1 - y0 < MIN_CROP_SIDE:
            raise CropTooSmall(
                f"crop {x1 - x0}x{y1 - y0} below the {MIN_CROP_SIDE} px minimum side"
            )
        crop = img[y0:y1, x0:x1]
        png = encode_png(crop)
        exemplar_id = hashlib.sha256(png).hexdigest()[:16]
        if exemplar_id in self._exemplars:
            raise DuplicateId(exemplar_id)

        record = Exemplar(
            id=exemplar_id,
            image=f"{IMAGES_DIR}/{exemplar_id}.png",
            label=label,
            text_tag=text_tag,
            note=note,
            created_at=_now_rfc3339(),
            crop_w=x1 - x0,
            crop_h=y1 - y0,
        )
        try:
            (self.root / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
            (self.root / record.image).write_bytes(png)
        except OSError as exc:
            raise IoFailure(f"cannot write exemplar image: {exc}") from exc
        self._exemplars[exemplar_id] = record
        try:
            self._write_manifest()
        except IoFailure:
            del self._exemplars[exemplar_id]
            raise
        return record

    def remove(self, exemplar_id: str) -> Exemplar:
        record = self.get(exemplar_id)
        del self._exemplars[exemplar_id]
        try:
            self._write_manifest()
        except IoFailure:
            self._exemplars[exemplar_id] = record
            raise
        self.image_path(record).unlink(missing_ok=True)
        return record

    def _write_manifest(self) -> None:
        doc = {
            "version": STORE_VERSION,
            "exemplars": [e.to_record() for e in self._exemplars.values()],
        }
        manifest = self.root / MANIFEST_NAME
        tmp = self.root / (MANIFEST_NAME + ".tmp")
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
            os.replace(tmp, manifest)
        except OSError as exc:
            raise IoFailure(f"cannot write manifest: {exc}") from exc


# Functional forms used by the CLI and tests.

def add_exemplar(
    store_dir: "str | Path",
    source_image,
    crop_rect: tuple[int, int, int, int] | None = None,
    label: "ExemplarLabel | str" = ExemplarLabel.POSITIVE,
    text_tag: str | None = None,
    note: str = "",
) -> Exemplar:
    """Add to the store at store_dir, initializing it when absent."""
    store_dir = Path(store_dir)
    if (store_dir / MANIFEST_NAME).is_file():
        store = ExemplarStore.load(store_dir)
    else:
        store = ExemplarStore.initialize(store_dir)
    return store.add(source_image, crop_rect, label, text_tag, note)


def load_store(store_dir: "str | Path") -> ExemplarStore:
    return ExemplarStore.load(store_dir)
