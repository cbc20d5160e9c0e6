from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Make the sibling fixture module importable regardless of invocation dir.
sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).resolve().parent.parent
WIRE_DIR = REPO_ROOT / "wire"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_homography(rng: np.random.Generator, max_cond: float = 1e4) -> np.ndarray:
    """A random well-conditioned homography (mild affine + tiny projective)."""
    while True:
        m = np.array(
            [
                [1.0 + rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-50, 50)],
                [rng.uniform(-0.3, 0.3), 1.0 + rng.uniform(-0.3, 0.3), rng.uniform(-50, 50)],
                [rng.uniform(-1e-3, 1e-3), rng.uniform(-1e-3, 1e-3), 1.0],
            ]
        )
        if abs(np.linalg.det(m)) > 1e-3 and np.linalg.cond(m) < max_cond:
            return m


def project_points(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a raw 3x3 homography to an (n, 2) array."""
    h = np.column_stack([pts, np.ones(len(pts))]) @ m.T
    return h[:, :2] / h[:, 2:]
