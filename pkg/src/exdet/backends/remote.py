"""Remote backends speaking the v1 wire protocol to a model sidecar.

One HTTP POST per call, JSON bodies, images as base64-encoded PNG.
Transport failures map to BackendUnavailable; structurally bad responses
map to SchemaViolation naming the offending field. Unknown response
fields are ignored.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import requests

from ..errors import BackendUnavailable, SchemaViolation
from ..features import FeatureMap
from ..geometry import BBox, Point2
from ..prompts import BoxPrompt, Detection
from ..validation import check_image, png_b64
from ..verify import Correspondence

DEFAULT_TIMEOUT = 30.0


def remote_call(
    endpoint: str,
    path: str,
    payload: dict | None = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> dict:
    """One round-trip to the sidecar: GET when payload is None, else POST.

    Raises:
        BackendUnavailable: timeout, connection failure, or non-2xx status.
        SchemaViolation: response body is not a JSON object.
    """
    url = endpoint.rstrip("/") + path
    try:
        if payload is None:
            resp = requests.get(url, timeout=timeout)
        else:
            resp = requests.post(url, json=payload, timeout=timeout)
    except requests.exceptions.Timeout as exc:
        raise BackendUnavailable("timeout", endpoint=url) from exc
    except requests.exceptions.RequestException as exc:
        raise BackendUnavailable("connection", endpoint=url) from exc
    if not 200 <= resp.status_code < 300:
        raise BackendUnavailable("status", endpoint=url, status=resp.status_code)
    try:
        doc = resp.json()
    except ValueError as exc:
        raise SchemaViolation("<body>", "response is not JSON") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("<body>", "response is not a JSON object")
    return doc


def check_health(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> dict:
    doc = remote_call(endpoint, "/v1/health", timeout=timeout)
    if doc.get("status") != "ok":
        raise SchemaViolation("status", f"expected 'ok', got {doc.get('status')!r}")
    return doc


def _field(doc: dict, name: str, kind: type, parent: str = "") -> object:
    label = f"{parent}.{name}" if parent else name
    if name not in doc:
        raise SchemaViolation(label, "missing")
    value = doc[name]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaViolation(label, f"expected number, got {type(value).__name__}")
        return float(value)
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaViolation(label, f"expected integer, got {type(value).__name__}")
        return value
    if not isinstance(value, kind):
        raise SchemaViolation(label, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


class RemoteFeatureExtractor:
    """POST /v1/features adapter; validates the grid invariants."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout

    def extract(self, image: np.ndarray) -> FeatureMap:
        img = check_image(image)
        h, w = img.shape[:2]
        doc = remote_call(
            self.endpoint,
            "/v1/features",
            {"image_png_b64": png_b64(img)},
            timeout=self.timeout,
        )
        dim = _field(doc, "dim", int)
        stride = _field(doc, "stride", float)
        grid_w = _field(doc, "grid_w", int)
        grid_h = _field(doc, "grid_h", int)
        values = _field(doc, "values", list)
        if stride <= 0:
            raise SchemaViolation("stride", "must be positive")
        if grid_w != math.ceil(w / stride) or grid_h != math.ceil(h / stride):
            raise SchemaViolation(
                "grid_w", f"grid {grid_w}x{grid_h} inconsistent with image {w}x{h} at stride {stride}"
            )
        expected = grid_w * grid_h * dim
        if len(values) != expected:
            raise SchemaViolation("values", f"expected {expected} floats, got {len(values)}")
        try:
            arr = np.asarray(values, dtype=float).reshape(grid_h, grid_w, dim)
        except (TypeError, ValueError) as exc:
            raise SchemaViolation("values", str(exc)) from exc
        if not np.all(np.isfinite(arr)):
            raise SchemaViolation("values", "non-finite feature values")
        return FeatureMap(values=arr, stride=stride, image_w=w, image_h=h)


class RemotePairMatcher:
    """POST /v1/match adapter; image a is the query, image b the crop."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout

    def match(self, query_image: np.ndarray, crop_image: np.ndarray) -> list[Correspondence]:
        qimg = check_image(query_image)
        cimg = check_image(crop_image)
        doc = remote_call(
            self.endpoint,
            "/v1/match",
            {"image_a_png_b64": png_b64(qimg), "image_b_png_b64": png_b64(cimg)},
            timeout=self.timeout,
        )
        matches = _field(doc, "matches", list)
        out = []
        for i, m in enumerate(matches):
            if not isinstance(m, dict):
                raise SchemaViolation(f"matches[{i}]", "expected object")
            ax = _field(m, "ax", float, f"matches[{i}]")
            ay = _field(m, "ay", float, f"matches[{i}]")
            bx = _field(m, "bx", float, f"matches[{i}]")
            by = _field(m, "by", float, f"matches[{i}]")
            conf = _field(m, "confidence", float, f"matches[{i}]")
            if not 0.0 <= conf <= 1.0:
                raise SchemaViolation(f"matches[{i}].confidence", "outside [0, 1]")
            out.append(Correspondence(Point2(ax, ay), Point2(bx, by), conf))
        return out


class RemotePromptDetector:
    """POST /v1/detect adapter.

    supports_prompts is a declared capability refreshed from each response;
    the orchestrator reads it after the call to pick the fallback path.
    """

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout
        self.supports_prompts = True

    def detect(
        self, image: np.ndarray, text: str, prompts: Sequence[BoxPrompt] = ()
    ) -> list[Detection]:
        img = check_image(image)
        payload = {
            "image_png_b64": png_b64(img),
            "text": text,
            "prompts": [
                {"box": list(p.box.as_tuple()), "polarity": bool(p.polarity)}
                for p in prompts
            ],
        }
        doc = remote_call(self.endpoint, "/v1/detect", payload, timeout=self.timeout)
        supports = _field(doc, "supports_prompts", bool)
        detections = _field(doc, "detections", list)
        out = []
        for i, d in enumerate(detections):
            if not isinstance(d, dict):
                raise SchemaViolation(f"detections[{i}]", "expected object")
            box = _field(d, "box", list, f"detections[{i}]")
            if len(box) != 4:
                raise SchemaViolation(f"detections[{i}].box", "expected 4 numbers")
            score = _field(d, "score", float, f"detections[{i}]")
            if not 0.0 <= score <= 1.0:
                raise SchemaViolation(f"detections[{i}].score", "outside [0, 1]")
            try:
                bb = BBox(float(box[0]), float(box[1]), float(box[2]), float(box[3]))
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(f"detections[{i}].box", str(exc)) from exc
            out.append(Detection(bb, score, "detector"))
        self.supports_prompts = supports
        return out


def remote_backends(endpoint: str, timeout: float = DEFAULT_TIMEOUT):
    """A BackendSet whose three roles all talk to one sidecar endpoint."""
    from . import BackendSet

    return BackendSet(
        features=RemoteFeatureExtractor(endpoint, timeout),
        matcher=RemotePairMatcher(endpoint, timeout),
        detector=RemotePromptDetector(endpoint, timeout),
    )
