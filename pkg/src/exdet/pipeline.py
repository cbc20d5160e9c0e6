"""End-to-end pipeline driver.

For each stored exemplar: extract feature maps, generate candidate regions,
match the exemplar against each candidate crop, verify geometrically, and
collect labeled box prompts. All prompts are handed to the detector in a
single call together with the user's text prompt; prompt-blind detectors
get the fallback post-filter applied afterward.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backends import BackendSet
from .candidates import CandidateParams, CandidateRegion, generate_candidates
from .errors import BackendUnavailable, ExdetError, SchemaViolation
from .geometry import BBox
from .prompts import (
    BoxPrompt,
    Detection,
    ExemplarLabel,
    assemble_prompts,
    fallback_post_filter,
    sort_detections,
)
from .validation import check_image
from .verify import Correspondence, Rejected, VerifiedMatch, VerifyParams, verify_candidate


@dataclass(frozen=True)
class LoadedExemplar:
    """An exemplar ready for matching: id, label, and decoded crop pixels."""

    exemplar_id: str
    label: ExemplarLabel
    image: np.ndarray


@dataclass(frozen=True)
class PipelineConfig:
    candidate_params: CandidateParams = CandidateParams()
    verify_params: VerifyParams = VerifyParams()
    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


@dataclass
class ExemplarTrace:
    """Per-exemplar record of stage outputs; every candidate ends up either
    verified or rejected, so len(candidates) == len(verified) + len(rejections)."""

    exemplar_id: str
    candidates: list[CandidateRegion] = field(default_factory=list)
    verified: list[VerifiedMatch] = field(default_factory=list)
    rejections: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class PipelineTrace:
    """Observability record of one run."""

    exemplars: list[ExemplarTrace] = field(default_factory=list)
    prompts: list[BoxPrompt] = field(default_factory=list)
    timings_ms: dict[str, float] = field(default_factory=dict)


def _crop_for_match(image: np.ndarray, box: BBox) -> tuple[np.ndarray, tuple[int, int]]:
    """Rasterize a candidate box to integer pixel bounds and crop it."""
    h, w = image.shape[:2]
    x0 = max(int(math.floor(box.x_min)), 0)
    y0 = max(int(math.floor(box.y_min)), 0)
    x1 = min(int(math.ceil(box.x_max)), w)
    y1 = min(int(math.ceil(box.y_max)), h)
    return image[y0:y1, x0:x1], (x0, y0)


def _shift_to_box_frame(
    corrs: Sequence[Correspondence], box: BBox, crop_origin: tuple[int, int]
) -> list[Correspondence]:
    """Re-express crop-pixel correspondences relative to the box origin.

    The crop is rasterized at floor(box.x_min), so crop coordinates can be
    off the (fractional) box origin by under one pixel.
    """
    dx = crop_origin[0] - box.x_min
    dy = crop_origin[1] - box.y_min
    if dx == 0.0 and dy == 0.0:
        return list(corrs)
    return [
        Correspondence(cr.q, cr.c.translated(dx, dy), cr.confidence) for cr in corrs
    ]


def run_pipeline(
    target_image: np.ndarray,
    text_prompt: str,
    exemplars: Sequence[LoadedExemplar],
    backends: BackendSet,
    config: PipelineConfig | None = None,
) -> tuple[list[Detection], PipelineTrace]:
    """Run the full pipeline on one target image.

    Per-candidate failures are recorded as trace rejections and never abort
    the run; backend transport errors do propagate. With zero exemplars the
    output equals the bare detector's (after the canonical ordering).

    Returns:
        (detections, trace): detections sorted by descending score, ties by
        ascending x_min.
    """
    if config is None:
        config = PipelineConfig()
    target = check_image(target_image)
    image_h, image_w = target.shape[:2]
    trace = PipelineTrace()

    t_start = time.perf_counter()
    t_candidates = 0.0
    t_verify = 0.0

    target_map = None
    for exemplar in exemplars:
        query = check_image(exemplar.image)
        t0 = time.perf_counter()
        if target_map is None:
            target_map = backends.features.extract(target)
        query_map = backends.features.extract(query)
        cands = generate_candidates(query_map, target_map, config.candidate_params)
        t_candidates += time.perf_counter() - t0

        ex_trace = ExemplarTrace(exemplar_id=exemplar.exemplar_id, candidates=cands)
        t0 = time.perf_counter()
        query_size = (float(query_map.image_w), float(query_map.image_h))
        for cand in cands:
            try:
                crop, origin = _crop_for_match(target, cand.box)
                corrs = backends.matcher.match(query, crop)
                corrs = _shift_to_box_frame(corrs, cand.box, origin)
                result = verify_candidate(
                    query_size, cand, corrs, config.verify_params, image_w, image_h
                )
            except (BackendUnavailable, SchemaViolation):
                raise
            except ExdetError as exc:
                ex_trace.rejections.append((cand.index, type(exc).__name__))
                continue
            if isinstance(result, Rejected):
                ex_trace.rejections.append((result.candidate_index, result.reason.value))
            else:
                ex_trace.verified.append(result)
        t_verify += time.perf_counter() - t0

        trace.exemplars.append(ex_trace)
        trace.prompts.extend(
            assemble_prompts(ex_trace.verified, exemplar.label, exemplar.exemplar_id)
        )

    t0 = time.perf_counter()
    raw = backends.detector.detect(target, text_prompt, trace.prompts)
    t_detect = time.perf_counter() - t0

    if backends.detector.supports_prompts:
        final = list(raw)
    else:
        final = fallback_post_filter(raw, trace.prompts, config.tau)
    final = sort_detections(final)

    trace.timings_ms = {
        "candidates_ms": t_candidates * 1000.0,
        "verify_ms": t_verify * 1000.0,
        "detect_ms": t_detect * 1000.0,
        "total_ms": (time.perf_counter() - t_start) * 1000.0,
    }
    return final, trace
