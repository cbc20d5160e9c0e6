"""Backend capability contracts and their implementations.

Three roles feed the pipeline: dense feature extraction, pairwise keypoint
matching, and promptable detection. The built-in synthetic backends are
deterministic and fast enough for desk-scale testing; the remote adapters
speak the v1 JSON-over-HTTP wire protocol to a model sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..features import FeatureMap
from ..prompts import BoxPrompt, Detection
from ..verify import Correspondence


@runtime_checkable
class FeatureExtractor(Protocol):
    """Dense per-cell feature extraction; deterministic per instance."""

    def extract(self, image: np.ndarray) -> FeatureMap: ...


@runtime_checkable
class PairMatcher(Protocol):
    """Keypoint correspondence matching between a query image and a crop."""

    def match(self, query_image: np.ndarray, crop_image: np.ndarray) -> list[Correspondence]: ...


@runtime_checkable
class PromptableDetector(Protocol):
    """Text- and box-prompted detection.

    ``supports_prompts`` declares whether labeled box prompts are consumed
    natively; when False the orchestrator applies the fallback filter to
    the detector's raw output.
    """

    supports_prompts: bool

    def detect(
        self, image: np.ndarray, text: str, prompts: Sequence[BoxPrompt]
    ) -> list[Detection]: ...


@dataclass
class BackendSet:
    """The three roles bundled for one pipeline run."""

    features: FeatureExtractor
    matcher: PairMatcher
    detector: PromptableDetector


from .synthetic import (  # noqa: E402
    COLOR_VOCABULARY,
    NccGridMatcher,
    SyntheticFeatureExtractor,
    SyntheticPromptDetector,
    ncc_grid_match,
    synthetic_backends,
    synthetic_extract_features,
)
from .remote import (  # noqa: E402
    RemoteFeatureExtractor,
    RemotePairMatcher,
    RemotePromptDetector,
    check_health,
    remote_backends,
    remote_call,
)

__all__ = [
    "BackendSet",
    "COLOR_VOCABULARY",
    "FeatureExtractor",
    "NccGridMatcher",
    "PairMatcher",
    "PromptableDetector",
    "RemoteFeatureExtractor",
    "RemotePairMatcher",
    "RemotePromptDetector",
    "SyntheticFeatureExtractor",
    "SyntheticPromptDetector",
    "check_health",
    "ncc_grid_match",
    "remote_backends",
    "remote_call",
    "synthetic_backends",
    "synthetic_extract_features",
]
