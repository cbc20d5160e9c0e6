"""Candidate-region generation: similarity thresholding, clustering, expansion.

Stage 1 of the pipeline. Given the query's center feature and a dense
target feature map, keep high-similarity cells, cluster them, grow each
cluster's bounds by half the query size per side, and merge heavily
overlapping candidates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .clustering import dbscan_cluster
from .errors import EmptyAfterClip
from .features import FeatureMap, SimilarityPoint, query_center_feature, similarity_points
from .geometry import BBox, bbox_iou, expand_and_clip


@dataclass(frozen=True)
class CandidateParams:
    """Tuning knobs for candidate generation.

    eps defaults to 2x the target map's stride when left as None, so
    adjacent grid cells always fall in one neighborhood.
    """

    sigma: float = 0.6
    eps: float | None = None
    min_samples: int = 3
    merge_iou: float = 0.5

    def __post_init__(self):
        if not -1.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must be in (-1, 1), got {self.sigma}")
        if self.eps is not None and self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_samples < 1:
            raise ValueError(f"min_samples must be >= 1, got {self.min_samples}")
        if not 0.0 <= self.merge_iou <= 1.0:
            raise ValueError(f"merge_iou must be in [0, 1], got {self.merge_iou}")

    def resolved_eps(self, stride: float) -> float:
        return self.eps if self.eps is not None else 2.0 * stride


@dataclass(frozen=True)
class CandidateRegion:
    """An expanded cluster box plus the points that produced it."""

    box: BBox
    cluster_points: tuple[SimilarityPoint, ...]
    mean_score: float
    index: int


def clusters_to_candidates(
    clusters: Sequence[Sequence[int]],
    points: Sequence[SimilarityPoint],
    query_w: float,
    query_h: float,
    image_w: float,
    image_h: float,
    merge_iou: float,
) -> list[CandidateRegion]:
    """Turn point clusters into expanded, merged, ranked candidate boxes.

    Per cluster the bounds are the min/max of member coordinates, expanded
    by half the query size per side and clipped to the image; a cluster
    whose box clips to zero area is dropped. Candidates overlapping above
    ``merge_iou`` are iteratively merged into their union box (points
    concatenated, mean score recomputed). Output is sorted by descending
    mean score, ties by ascending x_min, and indexed in that order.
    """
    staged: list[tuple[BBox, tuple[SimilarityPoint, ...], float]] = []
    for cluster in clusters:
        if not cluster:
            raise ValueError("clusters must be non-empty")
        members = tuple(points[i] for i in cluster)
        xs = [p.px for p in members]
        ys = [p.py for p in members]
        bounds = BBox(min(xs), min(ys), max(xs), max(ys))
        try:
            box = expand_and_clip(bounds, query_w, query_h, image_w, image_h)
        except EmptyAfterClip:
            continue
        mean_score = sum(p.score for p in members) / len(members)
        staged.append((box, members, mean_score))

    # Iteratively merge overlapping candidates until no pair exceeds the cap.
    merged = True
    while merged:
        merged = False
        for i in range(len(staged)):
            for j in range(i + 1, len(staged)):
                if bbox_iou(staged[i][0], staged[j][0]) > merge_iou:
                    bi, pi, _ = staged[i]
                    bj, pj, _ = staged[j]
                    pts = pi + pj
                    score = sum(p.score for p in pts) / len(pts)
                    staged[i] = (bi.union_bounds(bj), pts, score)
                    del staged[j]
                    merged = True
                    break
            if merged:
                break

    staged.sort(key=lambda entry: (-entry[2], entry[0].x_min))
    return [
        CandidateRegion(box=box, cluster_points=pts, mean_score=score, index=idx)
        for idx, (box, pts, score) in enumerate(staged)
    ]


def generate_candidates(
    query_map: FeatureMap, target_map: FeatureMap, params: CandidateParams
) -> list[CandidateRegion]:
    """Full stage-1 composition; deterministic for fixed inputs."""
    center = query_center_feature(query_map)
    pts = similarity_points(center, target_map, params.sigma)
    eps = params.resolved_eps(target_map.stride)
    clusters, _noise = dbscan_cluster(pts, eps, params.min_samples)
    return clusters_to_candidates(
        clusters,
        pts,
        query_w=float(query_map.image_w),
        query_h=float(query_map.image_h),
        image_w=float(target_map.image_w),
        image_h=float(target_map.image_h),
        merge_iou=params.merge_iou,
    )
