"""Box prompts and detection post-processing.

Verified matches become labeled box prompts: exemplars of previously
missed objects yield must-detect (true) prompts, exemplars of previous
false alarms yield must-not-detect (false) prompts. For detectors that
cannot consume labeled prompts, `fallback_post_filter` applies the same
semantics outside the detector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .geometry import BBox, bbox_iou
from .verify import VerifiedMatch

# Two same-polarity prompts overlapping above this are duplicates.
_DEDUP_IOU = 0.9


class ExemplarLabel(enum.Enum):
    POSITIVE = "positive"  # previously missed: must be found
    NEGATIVE = "negative"  # previous false alarm: must be suppressed

    @classmethod
    def parse(cls, value: "str | ExemplarLabel") -> "ExemplarLabel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"label must be 'positive' or 'negative', got {value!r}") from None


@dataclass(frozen=True)
class BoxPrompt:
    """An axis-aligned box with true/false polarity for the detector."""

    box: BBox
    polarity: bool
    source_exemplar: str


@dataclass(frozen=True)
class Detection:
    """A final output box with score and provenance."""

    box: BBox
    score: float
    source: str = "detector"  # "detector" | "injected"

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.source not in ("detector", "injected"):
            raise ValueError(f"source must be 'detector' or 'injected', got {self.source!r}")


def assemble_prompts(
    verified: Sequence[VerifiedMatch], label: ExemplarLabel, exemplar_id: str
) -> list[BoxPrompt]:
    """One prompt per verified match, deduplicated.

    Polarity is true for POSITIVE exemplars, false for NEGATIVE ones.
    Matches whose boxes overlap above IoU 0.9 are duplicates; the one with
    the higher inlier ratio is kept. Output is ordered by candidate index.
    """
    polarity = label is ExemplarLabel.POSITIVE
    ranked = sorted(verified, key=lambda m: (-m.inlier_ratio, m.candidate_index))
    kept: list[VerifiedMatch] = []
    for match in ranked:
        if any(bbox_iou(match.box_target, k.box_target) > _DEDUP_IOU for k in kept):
            continue
        kept.append(match)
    kept.sort(key=lambda m: m.candidate_index)
    return [BoxPrompt(m.box_target, polarity, exemplar_id) for m in kept]


def fallback_post_filter(
    raw: Sequence[Detection], prompts: Sequence[BoxPrompt], tau: float = 0.5
) -> list[Detection]:
    """Apply prompt semantics outside a prompt-blind detector.

    Every raw detection overlapping a false prompt at IoU >= tau is removed;
    every true prompt not covered (IoU >= tau) by a surviving detection gets
    an injected detection at the prompt box with score 1.0. An empty prompt
    list returns the raw detections unchanged.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    false_boxes = [p.box for p in prompts if not p.polarity]
    survivors = [
        d for d in raw if all(bbox_iou(d.box, fb) < tau for fb in false_boxes)
    ]
    injected = []
    for prompt in prompts:
        if not prompt.polarity:
            continue
        if not any(bbox_iou(d.box, prompt.box) >= tau for d in survivors):
            injected.append(Detection(prompt.box, 1.0, "injected"))
    return survivors + injected


def sort_detections(detections: Sequence[Detection]) -> list[Detection]:
    """Canonical output order: descending score, ties by ascending x_min."""
    return sorted(detections, key=lambda d: (-d.score, d.box.x_min))
