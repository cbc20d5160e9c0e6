"""Planar geometry primitives: points, boxes, quads, homographies.

Coordinates are continuous pixels with the origin at the image's top-left
corner and y growing downward. Boxes are closed real intervals; the
half-open [min, max) convention applies only when a box is rasterized
into pixel indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, DegeneratePoint, EmptyAfterClip

# Perspective division guard: |w| at or below this maps the point to infinity.
_W_EPS = 1e-9
# Invertibility floor for a stored (normalized) homography.
_DET_EPS = 1e-8
# Rescale to m[2][2] = 1 only when the entry is safely away from zero.
_M22_EPS = 1e-6


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Point2:
    """A 2-D point in pixel coordinates."""

    x: float
    y: float

    def __post_init__(self):
        _require_finite("Point2 coordinate", self.x, self.y)

    def translated(self, dx: float, dy: float) -> "Point2":
        return Point2(self.x + dx, self.y + dy)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with x_min <= x_max and y_min <= y_max."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        _require_finite("BBox coordinate", self.x_min, self.y_min, self.x_max, self.y_max)
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(
                f"invalid box extents ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def intersect(self, other: "BBox") -> "BBox | None":
        """Intersection box, or None when the boxes do not overlap at all."""
        x0 = max(self.x_min, other.x_min)
        y0 = max(self.y_min, other.y_min)
        x1 = min(self.x_max, other.x_max)
        y1 = min(self.y_max, other.y_max)
        if x1 < x0 or y1 < y0:
            return None
        return BBox(x0, y0, x1, y1)

    def union_bounds(self, other: "BBox") -> "BBox":
        """Smallest box containing both boxes."""
        return BBox(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes.

    Returns 0 when the boxes are disjoint or either has zero area.
    """
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ia = inter.area
    if ia <= 0.0:
        return 0.0
    union = a.area + b.area - ia
    if union <= 0.0:
        return 0.0
    return ia / union


def expand_and_clip(
    cluster_bounds: BBox,
    query_w: float,
    query_h: float,
    image_w: float,
    image_h: float,
) -> BBox:
    """Grow cluster bounds by half the query size per side, then clip.

    The expansion is (x_min - w/2, y_min - h/2, x_max + w/2, y_max + h/2);
    the result is intersected with the [0, image_w] x [0, image_h] rectangle
    so the box is always croppable from the target image.

    Raises:
        EmptyAfterClip: if the clipped box has zero area.
    """
    if query_w < 0 or query_h < 0:
        raise ValueError("query size must be non-negative")
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    x0 = cluster_bounds.x_min - query_w / 2.0
    y0 = cluster_bounds.y_min - query_h / 2.0
    x1 = cluster_bounds.x_max + query_w / 2.0
    y1 = cluster_bounds.y_max + query_h / 2.0
    cx0 = max(x0, 0.0)
    cy0 = max(y0, 0.0)
    cx1 = min(x1, float(image_w))
    cy1 = min(y1, float(image_h))
    if cx1 <= cx0 or cy1 <= cy0:
        raise EmptyAfterClip(
            f"box ({x0}, {y0}, {x1}, {y1}) has zero area inside {image_w}x{image_h}"
        )
    return BBox(cx0, cy0, cx1, cy1)


@dataclass(frozen=True)
class Quad:
    """Image of a source rectangle under a projective map.

    Corners keep the source ordering top-left, top-right, bottom-right,
    bottom-left. With y growing downward that traversal has positive cross
    products between consecutive edges, so `is_valid` doubles as an
    orientation check: a reflected (or non-convex / collapsed) quad is
    flagged invalid.
    """

    corners: tuple[Point2, Point2, Point2, Point2]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise ValueError("Quad requires exactly 4 corners")

    @property
    def is_valid(self) -> bool:
        """True iff the quad is convex and orientation-preserving."""
        pts = [(p.x, p.y) for p in self.corners]
        for i in range(4):
            ax, ay = pts[i]
            bx, by = pts[(i + 1) % 4]
            cx, cy = pts[(i + 2) % 4]
            cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
            if cross <= 0.0:
                return False
        return True

    def hull_bbox(self) -> BBox:
        """Axis-aligned bounding box of the four corners."""
        xs = [p.x for p in self.corners]
        ys = [p.y for p in self.corners]
        return BBox(min(xs), min(ys), max(xs), max(ys))

    def translated(self, dx: float, dy: float) -> "Quad":
        return Quad(tuple(p.translated(dx, dy) for p in self.corners))  # type: ignore[arg-type]


class Homography:
    """A 3x3 projective transform, stored in a normalized form.

    The matrix is scaled to unit Frobenius norm and, when the resulting
    m[2][2] is safely non-zero, rescaled so m[2][2] = 1. Estimators return
    H only up to scale; normalizing makes equality checks and logs stable.

    Raises:
        DegenerateConfiguration: if the matrix is not invertible
            (|det| <= 1e-8 after normalization).
    """

    __slots__ = ("_m",)

    def __init__(self, m):
        arr = np.array(m, dtype=float)
        if arr.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("homography entries must be finite")
        fro = float(np.linalg.norm(arr))
        if fro <= 0.0:
            raise DegenerateConfiguration("zero homography matrix")
        arr = arr / fro
        if abs(arr[2, 2]) > _M22_EPS:
            arr = arr / arr[2, 2]
        det = float(np.linalg.det(arr))
        if abs(det) <= _DET_EPS:
            raise DegenerateConfiguration(f"homography not invertible (|det| = {abs(det):.3e})")
        arr.setflags(write=False)
        self._m = arr

    @property
    def matrix(self) -> np.ndarray:
        """Read-only 3x3 matrix (row-major)."""
        return self._m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    def apply(self, p: Point2) -> Point2:
        """Map a point and perform the perspective division.

        Raises:
            DegeneratePoint: if |w| <= 1e-9 after multiplication.
        """
        u, v, w = self._m @ (p.x, p.y, 1.0)
        if abs(w) <= _W_EPS:
            raise DegeneratePoint(f"point ({p.x}, {p.y}) maps to infinity (w = {w:.3e})")
        return Point2(float(u / w), float(v / w))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self._m))

    def __repr__(self) -> str:
        rows = "; ".join(
            "[" + ", ".join(f"{v:.6g}" for v in row) + "]" for row in self._m
        )
        return f"Homography({rows})"


def apply_homography(h: Homography, p: Point2) -> Point2:
    """Functional form of :meth:`Homography.apply`."""
    return h.apply(p)
