"""Geometric verification of candidate regions.

Stage 2 of the pipeline: estimate a homography from query-to-crop keypoint
correspondences (normalized DLT inside a seeded RANSAC loop), project the
query's corners into the target frame, and gate on match count, inlier
ratio, and quad sanity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .candidates import CandidateRegion
from .errors import (
    DegenerateConfiguration,
    DegeneratePoint,
    NoValidModel,
    TooFewMatches,
)
from .geometry import BBox, Homography, Point2, Quad

# Relative singular-value floor below which the DLT system is rank deficient.
_RANK_EPS = 1e-9
# Mean-distance floor below which Hartley normalization would divide by ~0.
_SPREAD_EPS = 1e-12
# Resample budget per RANSAC iteration when minimal samples are degenerate.
_MAX_RESAMPLES = 100


@dataclass(frozen=True)
class Correspondence:
    """A matched keypoint pair: query frame -> candidate-crop frame."""

    q: Point2
    c: Point2
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class VerifyParams:
    """Gates and estimator settings for match verification."""

    min_matches: int = 8
    min_inlier_ratio: float = 0.5
    reproj_threshold: float = 3.0
    ransac_iterations: int = 2000
    rng_seed: int = 0

    def __post_init__(self):
        if self.min_matches < 4:
            raise ValueError(f"min_matches must be >= 4, got {self.min_matches}")
        if not 0.0 < self.min_inlier_ratio <= 1.0:
            raise ValueError(
                f"min_inlier_ratio must be in (0, 1], got {self.min_inlier_ratio}"
            )
        if self.reproj_threshold <= 0:
            raise ValueError(
                f"reproj_threshold must be positive, got {self.reproj_threshold}"
            )
        if self.ransac_iterations < 1:
            raise ValueError(
                f"ransac_iterations must be >= 1, got {self.ransac_iterations}"
            )


class RejectReason(enum.Enum):
    TOO_FEW_MATCHES = "TooFewMatches"
    LOW_INLIER_RATIO = "LowInlierRatio"
    DEGENERATE_HOMOGRAPHY = "DegenerateHomography"
    INVALID_QUAD = "InvalidQuad"


@dataclass(frozen=True)
class Rejected:
    """A candidate that failed verification, with the failing gate."""

    candidate_index: int
    reason: RejectReason


@dataclass(frozen=True)
class VerifiedMatch:
    """A candidate that survived all gates."""

    homography: Homography
    quad_target: Quad
    box_target: BBox
    inlier_ratio: float
    match_count: int
    candidate_index: int


def _hartley_normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Translate centroid to origin, scale mean distance to sqrt(2).

    Returns (T, normalized points), or None when the points are (nearly)
    coincident and the scale is undefined.
    """
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = float(np.linalg.norm(shifted, axis=1).mean())
    if mean_dist <= _SPREAD_EPS:
        return None
    s = math.sqrt(2.0) / mean_dist
    T = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return T, shifted * s


def _fit_dlt(qp: np.ndarray, cp: np.ndarray) -> np.ndarray | None:
    """Normalized-DLT fit on (n, 2) source/target arrays.

    Returns the raw 3x3 matrix, or None for degenerate configurations
    (collinear or coincident points making the linear system rank deficient).
    """
    nq = _hartley_normalize(qp)
    nc = _hartley_normalize(cp)
    if nq is None or nc is None:
        return None
    Tq, q = nq
    Tc, c = nc

    n = q.shape[0]
    A = np.zeros((2 * n, 9))
    x, y = q[:, 0], q[:, 1]
    u, v = c[:, 0], c[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[0::2, 8] = -u
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    A[1::2, 8] = -v

    _, s, vt = np.linalg.svd(A)
    # Unique solution needs rank 8; s[7] ~ 0 means a one-parameter family.
    if s[7] <= _RANK_EPS * s[0]:
        return None
    Hn = vt[-1].reshape(3, 3)
    return np.linalg.solve(Tc, Hn) @ Tq


def _residuals(m: np.ndarray, q_h: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Forward reprojection errors ||H q - c||_2; inf where w ~ 0."""
    proj = q_h @ m.T
    w = proj[:, 2]
    err = np.full(q_h.shape[0], np.inf)
    ok = np.abs(w) > 1e-9
    err[ok] = np.hypot(
        proj[ok, 0] / w[ok] - c[ok, 0], proj[ok, 1] / w[ok] - c[ok, 1]
    )
    return err


def _corr_arrays(corrs: Sequence[Correspondence]) -> tuple[np.ndarray, np.ndarray]:
    q = np.array([[cr.q.x, cr.q.y] for cr in corrs], dtype=float)
    c = np.array([[cr.c.x, cr.c.y] for cr in corrs], dtype=float)
    return q, c


def dlt_homography(corrs: Sequence[Correspondence]) -> Homography:
    """Estimate a homography from >= 4 correspondences by normalized DLT.

    Both point sets are Hartley-normalized, the 2n x 9 system's null-space
    direction is taken from the SVD, and the result is denormalized before
    wrapping (which applies the storage normalization).

    Raises:
        TooFewMatches: fewer than 4 correspondences.
        DegenerateConfiguration: rank-deficient configuration (e.g. three
            or more collinear source points).
    """
    if len(corrs) < 4:
        raise TooFewMatches(f"DLT needs >= 4 correspondences, got {len(corrs)}")
    q, c = _corr_arrays(corrs)
    raw = _fit_dlt(q, c)
    if raw is None:
        raise DegenerateConfiguration("correspondence configuration is rank deficient")
    return Homography(raw)


def ransac_homography(
    corrs: Sequence[Correspondence], params: VerifyParams
) -> tuple[Homography, list[int]]:
    """Robust homography fit with a seeded, fixed-iteration RANSAC loop.

    Each iteration samples 4 distinct correspondences (resampling up to 100
    times past degenerate picks), fits a DLT model, and counts points whose
    forward reprojection error is within ``reproj_threshold``. The model
    with the most inliers wins (ties: lower mean inlier error). The final
    homography is refit on the winning inlier set, and the returned inlier
    indices are recomputed under that final model so they are exactly the
    points consistent with it.

    Raises:
        TooFewMatches: fewer than 4 correspondences.
        NoValidModel: every sampled minimal set was degenerate.
    """
    n = len(corrs)
    if n < 4:
        raise TooFewMatches(f"RANSAC needs >= 4 correspondences, got {n}")
    q, c = _corr_arrays(corrs)
    q_h = np.column_stack([q, np.ones(n)])
    rng = np.random.default_rng(params.rng_seed)

    best_count = -1
    best_mean = np.inf
    best_raw: np.ndarray | None = None
    best_mask: np.ndarray | None = None
    for _ in range(params.ransac_iterations):
        raw = None
        for _attempt in range(_MAX_RESAMPLES):
            idx = rng.choice(n, size=4, replace=False)
            raw = _fit_dlt(q[idx], c[idx])
            if raw is not None:
                break
        if raw is None:
            continue
        err = _residuals(raw, q_h, c)
        mask = err <= params.reproj_threshold
        count = int(mask.sum())
        if count == 0:
            continue
        mean_err = float(err[mask].mean())
        if count > best_count or (count == best_count and mean_err < best_mean):
            best_count = count
            best_mean = mean_err
            best_raw = raw
            best_mask = mask

    if best_raw is None or best_mask is None:
        raise NoValidModel("every RANSAC sample was degenerate")

    final_raw = None
    if int(best_mask.sum()) >= 4:
        final_raw = _fit_dlt(q[best_mask], c[best_mask])
    if final_raw is None:
        final_raw = best_raw
    try:
        h = Homography(final_raw)
    except DegenerateConfiguration:
        try:
            h = Homography(best_raw)
        except DegenerateConfiguration as exc:
            raise NoValidModel("winning RANSAC model is not invertible") from exc

    err = _residuals(h.matrix, q_h, c)
    inliers = [int(i) for i in np.nonzero(err <= params.reproj_threshold)[0]]
    return h, inliers


def project_and_offset(
    h: Homography, query_w: float, query_h: float, candidate_origin: Point2
) -> Quad:
    """Project the query corners and shift them into the target frame.

    Corners (0,0), (w,0), (w,h), (0,h) are mapped through the homography
    and translated by the candidate box's top-left corner.

    Raises:
        DegeneratePoint: if a corner maps to infinity.
    """
    corners = (
        Point2(0.0, 0.0),
        Point2(query_w, 0.0),
        Point2(query_w, query_h),
        Point2(0.0, query_h),
    )
    projected = tuple(
        h.apply(p).translated(candidate_origin.x, candidate_origin.y) for p in corners
    )
    return Quad(projected)


def verify_candidate(
    query_size: tuple[float, float],
    candidate: CandidateRegion,
    corrs: Sequence[Correspondence],
    params: VerifyParams,
    image_w: float,
    image_h: float,
) -> VerifiedMatch | Rejected:
    """Run all gates on one candidate.

    Rejects (never raises) with one of: TooFewMatches (below min_matches),
    DegenerateHomography (no robust model, or corners at infinity),
    LowInlierRatio, InvalidQuad (non-convex / reflected quad, or a hull box
    with zero area inside the image).
    """
    idx = candidate.index
    if len(corrs) < params.min_matches:
        return Rejected(idx, RejectReason.TOO_FEW_MATCHES)
    try:
        h, inliers = ransac_homography(corrs, params)
    except (NoValidModel, DegenerateConfiguration, TooFewMatches):
        return Rejected(idx, RejectReason.DEGENERATE_HOMOGRAPHY)

    ratio = len(inliers) / len(corrs)
    if ratio < params.min_inlier_ratio:
        return Rejected(idx, RejectReason.LOW_INLIER_RATIO)

    origin = Point2(candidate.box.x_min, candidate.box.y_min)
    try:
        quad = project_and_offset(h, query_size[0], query_size[1], origin)
    except DegeneratePoint:
        return Rejected(idx, RejectReason.DEGENERATE_HOMOGRAPHY)
    if not quad.is_valid:
        return Rejected(idx, RejectReason.INVALID_QUAD)

    hull = quad.hull_bbox()
    clipped = hull.intersect(BBox(0.0, 0.0, float(image_w), float(image_h)))
    if clipped is None or clipped.area <= 0.0:
        return Rejected(idx, RejectReason.INVALID_QUAD)

    return VerifiedMatch(
        homography=h,
        quad_target=quad,
        box_target=clipped,
        inlier_ratio=ratio,
        match_count=len(corrs),
        candidate_index=idx,
    )
