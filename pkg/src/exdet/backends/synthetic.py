"""Deterministic built-in backends for desk-scale runs and tests.

The feature extractor projects each raw pixel block through a seeded random
matrix, so identical blocks always produce identical features and distinct
textures land nearly orthogonal at dim 32. The matcher is classical
normalized cross-correlation on a query tile grid. The detector finds
exact-color blobs and honors true/false box prompts natively.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.signal import correlate

from ..errors import UnknownTextPrompt
from ..features import FeatureMap
from ..geometry import BBox, Point2
from ..prompts import BoxPrompt, Detection, fallback_post_filter
from ..validation import check_image
from ..verify import Correspondence

_VAR_EPS = 1e-9  # below this, a tile or window is flat and NCC is undefined


class SyntheticFeatureExtractor:
    """Seeded random projection of raw stride x stride pixel blocks.

    Each cell's RGB block (zero-padded at the right/bottom borders) is
    flattened, multiplied by a fixed dim x (3 * stride^2) Gaussian matrix
    drawn once from the seed, and L2-normalized. All-zero blocks keep a
    zero feature vector.
    """

    def __init__(self, stride: int = 16, dim: int = 32, seed: int = 0):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.stride = int(stride)
        self.dim = int(dim)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((dim, 3 * stride * stride))

    def extract(self, image: np.ndarray) -> FeatureMap:
        img = check_image(image).astype(float)
        h, w = img.shape[:2]
        s = self.stride
        gw = math.ceil(w / s)
        gh = math.ceil(h / s)
        padded = np.zeros((gh * s, gw * s, 3))
        padded[:h, :w] = img
        blocks = (
            padded.reshape(gh, s, gw, s, 3)
            .transpose(0, 2, 1, 3, 4)
            .reshape(gh, gw, 3 * s * s)
        )
        feats = blocks @ self._projection.T
        norms = np.linalg.norm(feats, axis=2, keepdims=True)
        nonzero = norms[..., 0] > 0.0
        feats[nonzero] = feats[nonzero] / norms[nonzero]
        return FeatureMap(values=feats, stride=float(s), image_w=w, image_h=h)


def synthetic_extract_features(
    image: np.ndarray, stride: int = 16, dim: int = 32, seed: int = 0
) -> FeatureMap:
    return SyntheticFeatureExtractor(stride=stride, dim=dim, seed=seed).extract(image)


def _luminance(image: np.ndarray) -> np.ndarray:
    arr = check_image(image).astype(float)
    return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]


def _window_sums(a: np.ndarray, k: int) -> np.ndarray:
    """Exact sliding k x k sums ('valid' placement grid) via integral image."""
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


class NccGridMatcher:
    """Exhaustive zero-normalized cross-correlation on a query tile grid.

    The query is cut into non-overlapping cell x cell tiles; each textured
    tile is correlated against every placement in the crop and the best
    location is emitted as a correspondence when its correlation clears
    ``min_corr``. Flat tiles and flat windows are skipped.
    """

    def __init__(self, cell: int = 16, min_corr: float = 0.8):
        if cell < 2:
            raise ValueError("cell must be >= 2")
        if not 0.0 < min_corr <= 1.0:
            raise ValueError("min_corr must be in (0, 1]")
        self.cell = int(cell)
        self.min_corr = float(min_corr)

    def match(self, query_image: np.ndarray, crop_image: np.ndarray) -> list[Correspondence]:
        cell = self.cell
        q = _luminance(query_image)
        c = _luminance(crop_image)
        if min(q.shape) < cell or min(c.shape) < cell:
            return []

        npix = float(cell * cell)
        s1 = _window_sums(c, cell)
        s2 = _window_sums(c * c, cell)
        win_var = s2 - (s1 * s1) / npix
        np.maximum(win_var, 0.0, out=win_var)
        win_norm = np.sqrt(win_var)
        flat_windows = win_norm <= _VAR_EPS

        out: list[Correspondence] = []
        half = cell / 2.0
        for ty in range(q.shape[0] // cell):
            for tx in range(q.shape[1] // cell):
                tile = q[ty * cell : (ty + 1) * cell, tx * cell : (tx + 1) * cell]
                t0 = tile - tile.mean()
                t_norm = math.sqrt(float((t0 * t0).sum()))
                if t_norm <= _VAR_EPS:
                    continue
                cross = correlate(c, t0, mode="valid", method="auto")
                with np.errstate(divide="ignore", invalid="ignore"):
                    corr = cross / (win_norm * t_norm)
                corr[flat_windows] = -np.inf
                by, bx = np.unravel_index(int(np.argmax(corr)), corr.shape)
                score = float(corr[by, bx])
                if not np.isfinite(score) or score < self.min_corr:
                    continue
                score = min(max(score, 0.0), 1.0)
                out.append(
                    Correspondence(
                        q=Point2(tx * cell + half, ty * cell + half),
                        c=Point2(bx + half, by + half),
                        confidence=score,
                    )
                )
        return out


def ncc_grid_match(
    query_image: np.ndarray,
    crop_image: np.ndarray,
    cell: int = 16,
    min_corr: float = 0.8,
) -> list[Correspondence]:
    return NccGridMatcher(cell=cell, min_corr=min_corr).match(query_image, crop_image)


COLOR_VOCABULARY: dict[str, tuple[int, int, int]] = {
    "red": (255, 0, 0),
    "green": (0, 255, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "cyan": (0, 255, 255),
    "magenta": (255, 0, 255),
    "white": (255, 255, 255),
    "orange": (255, 165, 0),
}


class SyntheticPromptDetector:
    """Exact-color blob detector with native prompt support.

    Detects connected components of the exact RGB value named by the text
    prompt, then applies true/false prompt semantics (suppression at
    IoU >= 0.5 against false prompts, injection of uncovered true prompts).
    """

    supports_prompts = True

    def detect(
        self, image: np.ndarray, text: str, prompts: Sequence[BoxPrompt] = ()
    ) -> list[Detection]:
        img = check_image(image)
        key = text.strip().lower()
        if key not in COLOR_VOCABULARY:
            raise UnknownTextPrompt(
                f"text prompt {text!r} not in vocabulary {sorted(COLOR_VOCABULARY)}"
            )
        color = np.array(COLOR_VOCABULARY[key], dtype=np.uint8)
        mask = np.all(img == color, axis=2)
        labeled, count = ndimage.label(mask)
        detections = []
        for sl in ndimage.find_objects(labeled):
            if sl is None:
                continue
            ys, xs = sl
            box = BBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop))
            detections.append(Detection(box, 1.0, "detector"))
        # Native prompt handling mirrors the fallback semantics at tau 0.5.
        return fallback_post_filter(detections, list(prompts), tau=0.5)


def synthetic_backends(seed: int = 0, stride: int = 16, dim: int = 32):
    """A ready-to-use BackendSet of the three synthetic roles."""
    from . import BackendSet

    return BackendSet(
        features=SyntheticFeatureExtractor(stride=stride, dim=dim, seed=seed),
        matcher=NccGridMatcher(),
        detector=SyntheticPromptDetector(),
    )
