"""Input validation and image I/O helpers.

Images flow through the pipeline as (H, W, 3) uint8 RGB arrays; these
helpers normalize the accepted input forms (paths, PIL images, arrays)
and centralize PNG encode/decode for the store and the wire protocol.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDecodeError


def load_image(path: "str | Path") -> np.ndarray:
    """Decode an image file into an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (FileNotFoundError, UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image {path!r}: {exc}") from exc


def check_image(image) -> np.ndarray:
    """Coerce an image-like input to an (H, W, 3) uint8 RGB array.

    Accepts file paths, PIL images, 2-D grayscale arrays, and 3- or
    4-channel arrays (alpha is dropped).
    """
    if isinstance(image, (str, Path)):
        return load_image(image)
    if isinstance(image, Image.Image):
        return np.asarray(image.convert("RGB"), dtype=np.uint8)
    arr = np.asarray(image)
    if arr.size == 0:
        raise ImageDecodeError("image is empty")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ImageDecodeError(f"unsupported image shape {arr.shape}")
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr.astype(float)), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(arr)


def encode_png(image: np.ndarray) -> bytes:
    """Lossless PNG bytes for an RGB array (deterministic for fixed pixels)."""
    buf = io.BytesIO()
    Image.fromarray(check_image(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode PNG buffer: {exc}") from exc


def png_b64(image: np.ndarray) -> str:
    """Base64 text of the image's PNG encoding (wire format for images)."""
    return base64.b64encode(encode_png(image)).decode("ascii")


def image_from_b64(text: str) -> np.ndarray:
    try:
        data = base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise ImageDecodeError(f"invalid base64 image payload: {exc}") from exc
    return decode_png(data)
