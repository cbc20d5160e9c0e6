"""Dense feature maps and cosine-similarity queries against them.

A feature map is a coarse grid over an image: one feature vector per
stride x stride cell. Similarity search compares the query image's center
feature against every target cell and keeps the cells whose cosine score
clears a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyFeatureMap, ZeroQueryFeature


@dataclass(frozen=True)
class FeatureMap:
    """Per-cell features for an image.

    values has shape (grid_h, grid_w, dim); grid dimensions must equal
    ceil(image / stride) on each axis.
    """

    values: np.ndarray
    stride: float
    image_w: int
    image_h: int

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"feature values must be 3-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values must be finite")
        if self.stride <= 0:
            raise ValueError("stride must be positive")
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("image dimensions must be at least 1 pixel")
        gh, gw, _ = arr.shape
        if gw != math.ceil(self.image_w / self.stride):
            raise ValueError(
                f"grid_w {gw} != ceil({self.image_w} / {self.stride})"
            )
        if gh != math.ceil(self.image_h / self.stride):
            raise ValueError(
                f"grid_h {gh} != ceil({self.image_h} / {self.stride})"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        """Pixel center of cell (ix, iy), clamped to the image bounds."""
        px = min((ix + 0.5) * self.stride, float(self.image_w))
        py = min((iy + 0.5) * self.stride, float(self.image_h))
        return px, py


@dataclass(frozen=True)
class SimilarityPoint:
    """A cell center whose feature cleared the similarity threshold."""

    px: float
    py: float
    score: float


def query_center_feature(query_map: FeatureMap) -> np.ndarray:
    """Feature of the cell containing the query image's center pixel.

    The center pixel is (image_w / 2, image_h / 2); its cell index is
    floor(center / stride), clamped to the grid.
    """
    if query_map.values.size == 0:
        raise EmptyFeatureMap("query feature map has no cells")
    ix = min(int(math.floor((query_map.image_w / 2.0) / query_map.stride)), query_map.grid_w - 1)
    iy = min(int(math.floor((query_map.image_h / 2.0) / query_map.stride)), query_map.grid_h - 1)
    return np.array(query_map.values[iy, ix], dtype=float)


def similarity_points(
    center: np.ndarray, target_map: FeatureMap, sigma: float
) -> list[SimilarityPoint]:
    """Cells of the target map whose cosine similarity to `center` exceeds sigma.

    Cells with a zero-norm feature are skipped (cosine undefined). Output
    points are cell centers clamped to the image bounds, in row-major grid
    order.

    Raises:
        ZeroQueryFeature: if `center` has zero norm.
        DimensionMismatch: if dimensions disagree.
    """
    center = np.asarray(center, dtype=float).ravel()
    if center.shape[0] != target_map.dim:
        raise DimensionMismatch(
            f"query feature dim {center.shape[0]} != target dim {target_map.dim}"
        )
    cnorm = float(np.linalg.norm(center))
    if cnorm <= 0.0:
        raise ZeroQueryFeature("query center feature has zero norm")

    vals = target_map.values
    norms = np.linalg.norm(vals, axis=2)
    dots = vals @ (center / cnorm)
    scores = np.zeros_like(dots)
    nonzero = norms > 0.0
    scores[nonzero] = dots[nonzero] / norms[nonzero]
    # Guard against |cos| marginally above 1 from rounding.
    np.clip(scores, -1.0, 1.0, out=scores)

    keep = nonzero & (scores > sigma)
    iys, ixs = np.nonzero(keep)  # row-major
    out = []
    for iy, ix in zip(iys, ixs):
        px, py = target_map.cell_center(int(ix), int(iy))
        out.append(SimilarityPoint(px, py, float(scores[iy, ix])))
    return out
