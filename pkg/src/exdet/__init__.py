"""exdet: exemplar-guided box prompting for promptable object detectors.

Given stored crops of past detection errors (missed objects and false
alarms), exdet locates their instances in new target images through
similarity-map clustering plus homography verification, and converts the
verified locations into labeled box prompts that steer a promptable
detector — no retraining involved.
"""

from .candidates import CandidateParams, CandidateRegion, clusters_to_candidates, generate_candidates
from .clustering import dbscan_cluster
from .errors import ExdetError
from .estimator import ExemplarGuidedDetector
from .features import FeatureMap, SimilarityPoint, query_center_feature, similarity_points
from .geometry import (
    BBox,
    Homography,
    Point2,
    Quad,
    apply_homography,
    bbox_iou,
    expand_and_clip,
)
from .pipeline import LoadedExemplar, PipelineConfig, PipelineTrace, run_pipeline
from .prompts import (
    BoxPrompt,
    Detection,
    ExemplarLabel,
    assemble_prompts,
    fallback_post_filter,
    sort_detections,
)
from .store import Exemplar, ExemplarStore, add_exemplar, load_store
from .verify import (
    Correspondence,
    Rejected,
    RejectReason,
    VerifiedMatch,
    VerifyParams,
    dlt_homography,
    project_and_offset,
    ransac_homography,
    verify_candidate,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BoxPrompt",
    "CandidateParams",
    "CandidateRegion",
    "Correspondence",
    "Detection",
    "Exemplar",
    "ExemplarGuidedDetector",
    "ExemplarLabel",
    "ExemplarStore",
    "ExdetError",
    "FeatureMap",
    "Homography",
    "LoadedExemplar",
    "PipelineConfig",
    "PipelineTrace",
    "Point2",
    "Quad",
    "Rejected",
    "RejectReason",
    "SimilarityPoint",
    "VerifiedMatch",
    "VerifyParams",
    "add_exemplar",
    "apply_homography",
    "assemble_prompts",
    "bbox_iou",
    "clusters_to_candidates",
    "dbscan_cluster",
    "dlt_homography",
    "expand_and_clip",
    "fallback_post_filter",
    "generate_candidates",
    "load_store",
    "project_and_offset",
    "query_center_feature",
    "ransac_homography",
    "run_pipeline",
    "similarity_points",
    "sort_detections",
    "verify_candidate",
]
