"""Model adapters for the three wire-protocol roles.

Built-in adapters run with no downloaded weights: a seeded block-projection
feature extractor, an ORB keypoint matcher (OpenCV), and an exact-color
blob detector that consumes labeled box prompts natively. Heavier
backbones slot into the same registry: an adapter is any object with the
role's single inference method plus a ``name``.
"""

from __future__ import annotations

import base64
import io
import math

import cv2
import numpy as np
from PIL import Image


class InferenceError(Exception):
    """Model-level failure; reported to clients as an opaque HTTP 500."""


def decode_image_b64(text: str) -> np.ndarray:
    """Decode a base64 PNG payload to an (H, W, 3) uint8 RGB array.

    Raises ValueError for undecodable payloads (mapped to HTTP 400).
    """
    try:
        data = base64.b64decode(text, validate=True)
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ValueError(f"image payload not decodable: {exc}") from exc


def _gray(img: np.ndarray) -> np.ndarray:
    return cv2.cvtColor(img, cv2.COLOR_RGB2GRAY)


class BlockProjectionExtractor:
    """Seeded random projection of raw stride x stride RGB blocks.

    Deterministic, weight-free stand-in for a dense backbone: identical
    blocks give identical features, distinct textures land nearly
    orthogonal. Features are L2-normalized per cell.
    """

    def __init__(self, stride: int = 16, dim: int = 32, seed: int = 0):
        if stride < 1 or dim < 1:
            raise ValueError("stride and dim must be >= 1")
        self.name = f"block-projection(stride={stride},dim={dim},seed={seed})"
        self.stride = int(stride)
        self.dim = int(dim)
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((dim, 3 * stride * stride))

    def features(self, img: np.ndarray) -> dict:
        s = self.stride
        h, w = img.shape[:2]
        gw = math.ceil(w / s)
        gh = math.ceil(h / s)
        padded = np.zeros((gh * s, gw * s, 3))
        padded[:h, :w] = img.astype(float)
        blocks = (
            padded.reshape(gh, s, gw, s, 3).transpose(0, 2, 1, 3, 4).reshape(gh, gw, -1)
        )
        feats = blocks @ self._projection.T
        norms = np.linalg.norm(feats, axis=2, keepdims=True)
        nonzero = norms[..., 0] > 0.0
        feats[nonzero] = feats[nonzero] / norms[nonzero]
        return {
            "dim": self.dim,
            "stride": float(s),
            "grid_w": gw,
            "grid_h": gh,
            "values": [float(v) for v in feats.ravel()],
        }


class OrbMatcher:
    """ORB keypoints + brute-force Hamming matching with cross-check.

    A real keypoint matcher (detector, descriptor, and mutual-nearest
    matching); confidences map descriptor distance into [0, 1].
    """

    def __init__(self, max_features: int = 1000):
        if max_features < 1:
            raise ValueError("max_features must be >= 1")
        self.name = f"orb(max_features={max_features})"
        self._orb = cv2.ORB_create(nfeatures=int(max_features))
        self._bf = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=True)

    def match(self, img_a: np.ndarray, img_b: np.ndarray) -> dict:
        kp_a, des_a = self._orb.detectAndCompute(_gray(img_a), None)
        kp_b, des_b = self._orb.detectAndCompute(_gray(img_b), None)
        if des_a is None or des_b is None or not len(kp_a) or not len(kp_b):
            return {"matches": []}
        found = self._bf.match(des_a, des_b)
        found = sorted(found, key=lambda m: (m.distance, m.queryIdx))
        matches = []
        for m in found:
            pa = kp_a[m.queryIdx].pt
            pb = kp_b[m.trainIdx].pt
            confidence = max(0.0, min(1.0, 1.0 - m.distance / 256.0))
            matches.append(
                {
                    "ax": float(pa[0]),
                    "ay": float(pa[1]),
                    "bx": float(pb[0]),
                    "by": float(pb[1]),
                    "confidence": confidence,
                }
            )
        return {"matches": matches}


_COLORS = {
    "red": (255, 0, 0),
    "green": (0, 255, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "cyan": (0, 255, 255),
    "magenta": (255, 0, 255),
    "white": (255, 255, 255),
    "orange": (255, 165, 0),
}


def _iou(a: tuple, b: tuple) -> float:
    x0 = max(a[0], b[0])
    y0 = max(a[1], b[1])
    x1 = min(a[2], b[2])
    y1 = min(a[3], b[3])
    if x1 <= x0 or y1 <= y0:
        return 0.0
    inter = (x1 - x0) * (y1 - y0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


class ColorBlobDetector:
    """Connected components of an exact vocabulary color, prompt-aware.

    Labeled box prompts are consumed natively: detections overlapping a
    false prompt at IoU >= 0.5 are suppressed, and true prompts not
    covered by a surviving detection are emitted as detections. So
    supports_prompts is honestly true.
    """

    supports_prompts = True

    def __init__(self):
        self.name = "color-blob"

    def detect(self, img: np.ndarray, text: str, prompts: list[dict]) -> dict:
        key = text.strip().lower()
        if key not in _COLORS:
            raise InferenceError(f"text prompt {text!r} outside the color vocabulary")
        mask = np.all(img == np.array(_COLORS[key], np.uint8), axis=2).astype(np.uint8)
        count, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=4)
        boxes = []
        for i in range(1, count):  # label 0 is background
            x, y, w, h = (int(stats[i, k]) for k in range(4))
            boxes.append((float(x), float(y), float(x + w), float(y + h)))
        boxes.sort(key=lambda b: (b[1], b[0]))

        false_boxes = [tuple(p["box"]) for p in prompts if not p["polarity"]]
        survivors = [
            b for b in boxes if all(_iou(b, fb) < 0.5 for fb in false_boxes)
        ]
        detections = [{"box": list(b), "score": 1.0} for b in survivors]
        for p in prompts:
            if not p["polarity"]:
                continue
            pb = tuple(p["box"])
            if not any(_iou(b, pb) >= 0.5 for b in survivors):
                detections.append({"box": list(pb), "score": 1.0})
        return {"supports_prompts": True, "detections": detections}


_FEATURE_TYPES = {"block-projection": BlockProjectionExtractor}
_MATCH_TYPES = {"orb": OrbMatcher}
_DETECT_TYPES = {"color-blob": ColorBlobDetector}


def build_role(role: str, spec: dict | None):
    """Instantiate a role adapter from its config spec (None -> None)."""
    if spec is None:
        return None
    registry = {"features": _FEATURE_TYPES, "match": _MATCH_TYPES, "detect": _DETECT_TYPES}[role]
    kind = spec.get("type")
    if kind not in registry:
        raise ValueError(
            f"unknown {role} model type {kind!r}; available: {sorted(registry)}"
        )
    params = {k: v for k, v in spec.items() if k != "type"}
    return registry[kind](**params)
