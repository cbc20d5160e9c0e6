"""Scikit-learn style facade over the pipeline.

`ExemplarGuidedDetector` keeps every tuning knob as a constructor
parameter (so ``get_params`` / ``set_params`` / ``clone`` compose with the
wider ecosystem), takes exemplar crops and labels in ``fit``, and runs the
full pipeline per image in ``predict``.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .backends import BackendSet, remote_backends, synthetic_backends
from .candidates import CandidateParams
from .pipeline import LoadedExemplar, PipelineConfig, PipelineTrace, run_pipeline
from .prompts import Detection, ExemplarLabel
from .validation import check_image, encode_png
from .verify import VerifyParams


class ExemplarGuidedDetector(BaseEstimator):
    """Detect objects with text prompts steered by past-error exemplars.

    Parameters mirror the pipeline configuration; ``backend`` selects
    ``"synthetic"``, ``"remote"`` (requires ``endpoint``), or an explicit
    :class:`BackendSet` instance.
    """

    def __init__(
        self,
        text: str = "red",
        sigma: float = 0.6,
        eps: float | None = None,
        min_samples: int = 3,
        merge_iou: float = 0.5,
        min_matches: int = 8,
        min_inlier_ratio: float = 0.5,
        reproj_threshold: float = 3.0,
        ransac_iterations: int = 2000,
        tau: float = 0.5,
        backend: "str | BackendSet" = "synthetic",
        endpoint: str | None = None,
        rng_seed: int = 0,
    ):
        self.text = text
        self.sigma = sigma
        self.eps = eps
        self.min_samples = min_samples
        self.merge_iou = merge_iou
        self.min_matches = min_matches
        self.min_inlier_ratio = min_inlier_ratio
        self.reproj_threshold = reproj_threshold
        self.ransac_iterations = ransac_iterations
        self.tau = tau
        self.backend = backend
        self.endpoint = endpoint
        self.rng_seed = rng_seed

    # -- sklearn protocol ------------------------------------------------------

    def fit(self, X: Sequence, y: Sequence | None = None) -> "ExemplarGuidedDetector":
        """Ingest exemplar crops.

        Args:
            X: sequence of crop images (arrays, paths, or PIL images).
            y: matching labels; "positive"/"negative", ExemplarLabel values,
               or booleans (True = positive). Required unless X is empty.
        """
        X = list(X)
        if y is None:
            if X:
                raise ValueError("y (exemplar labels) is required when X is non-empty")
            y = []
        y = list(y)
        if len(X) != len(y):
            raise ValueError(f"X and y length mismatch: {len(X)} vs {len(y)}")
        exemplars = []
        for image, label in zip(X, y):
            if isinstance(label, bool):
                label = ExemplarLabel.POSITIVE if label else ExemplarLabel.NEGATIVE
            else:
                label = ExemplarLabel.parse(label)
            img = check_image(image)
            exemplar_id = hashlib.sha256(encode_png(img)).hexdigest()[:16]
            exemplars.append(LoadedExemplar(exemplar_id, label, img))
        self.exemplars_ = exemplars
        return self

    def predict(self, X) -> list[list[Detection]]:
        """Run the pipeline on each target image; returns detections per image."""
        self._check_fitted()
        images = X if isinstance(X, (list, tuple)) else [X]
        return [self.detect(img)[0] for img in images]

    def detect(self, image) -> tuple[list[Detection], PipelineTrace]:
        """Single-image run returning the full trace alongside detections."""
        self._check_fitted()
        backends = self._resolve_backends()
        return run_pipeline(
            check_image(image), self.text, self.exemplars_, backends, self._config()
        )

    # -- internals --------------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "exemplars_"):
            raise NotFittedError(
                "This ExemplarGuidedDetector instance is not fitted yet; "
                "call fit() with exemplar crops (or empty lists) first."
            )

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            candidate_params=CandidateParams(
                sigma=self.sigma,
                eps=self.eps,
                min_samples=self.min_samples,
                merge_iou=self.merge_iou,
            ),
            verify_params=VerifyParams(
                min_matches=self.min_matches,
                min_inlier_ratio=self.min_inlier_ratio,
                reproj_threshold=self.reproj_threshold,
                ransac_iterations=self.ransac_iterations,
                rng_seed=self.rng_seed,
            ),
            tau=self.tau,
        )

    def _resolve_backends(self) -> BackendSet:
        if isinstance(self.backend, BackendSet):
            return self.backend
        if self.backend == "synthetic":
            return synthetic_backends(seed=self.rng_seed)
        if self.backend == "remote":
            if not self.endpoint:
                raise ValueError("backend='remote' requires an endpoint")
            return remote_backends(self.endpoint)
        raise ValueError(f"unknown backend {self.backend!r}")
