from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from exdet.estimator import ExemplarGuidedDetector
from exdet.geometry import bbox_iou
from exdet.selftest import make_fp_scene, make_recovery_scene


class TestSklearnProtocol:
    def test_get_set_params_roundtrip(self):
        det = ExemplarGuidedDetector(sigma=0.7, rng_seed=3)
        params = det.get_params()
        assert params["sigma"] == 0.7 and params["rng_seed"] == 3
        det.set_params(sigma=0.55)
        assert det.sigma == 0.55

    def test_clone(self):
        det = ExemplarGuidedDetector(min_matches=10, tau=0.4)
        twin = clone(det)
        assert twin.get_params() == det.get_params()
        assert twin is not det

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            ExemplarGuidedDetector().predict(np.zeros((32, 32, 3), np.uint8))

    def test_fit_requires_labels(self):
        with pytest.raises(ValueError):
            ExemplarGuidedDetector().fit([np.zeros((32, 32, 3), np.uint8)])

    def test_fit_length_mismatch(self):
        with pytest.raises(ValueError):
            ExemplarGuidedDetector().fit([np.zeros((32, 32, 3), np.uint8)], ["positive", "negative"])

    def test_unknown_backend(self):
        det = ExemplarGuidedDetector(backend="quantum").fit([], [])
        with pytest.raises(ValueError):
            det.predict(np.zeros((16, 16, 3), np.uint8))


class TestDetection:
    CONFIG = dict(ransac_iterations=400, rng_seed=0, text="red")

    def test_fp_suppression_through_facade(self):
        scene = make_fp_scene(0)
        det = ExemplarGuidedDetector(**self.CONFIG).fit([scene.exemplar_image], ["negative"])
        (detections,) = det.predict([scene.image])
        assert all(bbox_iou(d.box, scene.gt_boxes["distractor_core"]) < 0.5 for d in detections)
        assert any(bbox_iou(d.box, scene.gt_boxes["legit_core"]) >= 0.5 for d in detections)

    def test_boolean_labels_accepted(self):
        scene = make_recovery_scene(0)
        det = ExemplarGuidedDetector(**self.CONFIG).fit([scene.exemplar_image], [True])
        detections, trace = det.detect(scene.image)
        assert bbox_iou(detections[0].box, scene.gt_boxes["target"]) >= 0.8
        assert trace.prompts[0].polarity is True

    def test_empty_fit_is_passthrough(self):
        scene = make_fp_scene(1)
        det = ExemplarGuidedDetector(**self.CONFIG).fit([], [])
        (detections,) = det.predict([scene.image])
        # both planted cores are plain detector hits
        assert len(detections) == 2
