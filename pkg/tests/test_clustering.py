from __future__ import annotations

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from exdet.clustering import dbscan_cluster
from exdet.features import SimilarityPoint


def pts(coords):
    return [SimilarityPoint(float(x), float(y), 0.9) for x, y in coords]


def brute_force_dbscan(coords: np.ndarray, eps: float, min_samples: int):
    """Independent O(n^2) reference with the same stated semantics.

    Cores from the full distance matrix; core components via scipy's
    connected_components; border points join the cluster of the
    smallest-index reachable core.
    """
    n = len(coords)
    if n == 0:
        return [], []
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    within = d <= eps
    core = within.sum(axis=1) >= min_samples

    core_idx = np.nonzero(core)[0]
    labels = np.full(n, -1)
    if len(core_idx):
        adj = csr_matrix(within[np.ix_(core_idx, core_idx)])
        _, comp = connected_components(adj, directed=False)
        # Relabel components by their smallest core's input order.
        order = {}
        for pos, i in enumerate(core_idx):
            order.setdefault(comp[pos], len(order))
        for pos, i in enumerate(core_idx):
            labels[i] = order[comp[pos]]
        for i in range(n):
            if core[i]:
                continue
            reachable = [j for j in core_idx if within[i, j]]
            if reachable:
                labels[i] = labels[min(reachable)]
    clusters = [[] for _ in range(labels.max() + 1)] if labels.max() >= 0 else []
    noise = []
    for i in range(n):
        if labels[i] == -1:
            noise.append(i)
        else:
            clusters[labels[i]].append(i)
    return clusters, noise


def canonical(clusters, noise):
    return frozenset(frozenset(c) for c in clusters), frozenset(noise)


class TestSpecCases:
    def test_triplet_within_eps(self):
        clusters, noise = dbscan_cluster(pts([(0, 0), (1, 0), (0, 1)]), eps=2.0, min_samples=3)
        assert clusters == [[0, 1, 2]] and noise == []

    def test_pair_below_min_samples_is_noise(self):
        clusters, noise = dbscan_cluster(pts([(0, 0), (1, 0)]), eps=2.0, min_samples=3)
        assert clusters == [] and noise == [0, 1]

    def test_two_far_triplets(self):
        eps = 2.0
        coords = [(0, 0), (1, 0), (0, 1)] + [(200, 200), (201, 200), (200, 201)]
        clusters, noise = dbscan_cluster(pts(coords), eps=eps, min_samples=3)
        assert len(clusters) == 2 and noise == []
        assert clusters[0] == [0, 1, 2] and clusters[1] == [3, 4, 5]

    def test_empty_input(self):
        assert dbscan_cluster([], eps=1.0, min_samples=3) == ([], [])

    def test_min_samples_one_has_no_noise(self):
        clusters, noise = dbscan_cluster(pts([(0, 0), (100, 100)]), eps=1.0, min_samples=1)
        assert noise == [] and len(clusters) == 2

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            dbscan_cluster([], eps=0.0, min_samples=3)
        with pytest.raises(ValueError):
            dbscan_cluster([], eps=1.0, min_samples=0)


class TestBorderTieBreak:
    # min_samples = 4 keeps the midpoint (ball of 3) a border point; with a
    # smaller floor it would become core and bridge the clusters.

    def test_border_joins_first_core_in_input_order(self):
        # Border (index 8) is within eps of one core from each cluster:
        # core index 3 at (3,0) and core index 4 at (9,0). Index 3 wins.
        coords = [(0, 0), (1, 0), (2, 0), (3, 0), (9, 0), (10, 0), (11, 0), (12, 0), (6, 0)]
        clusters, noise = dbscan_cluster(pts(coords), eps=3.0, min_samples=4)
        assert noise == []
        assert sorted(clusters[0]) == [0, 1, 2, 3, 8]
        assert sorted(clusters[1]) == [4, 5, 6, 7]

    def test_border_assignment_follows_input_order_not_distance(self):
        # Same geometry with the clusters' input order swapped: the border
        # now joins the physically-other cluster because its core comes
        # first in the input.
        coords = [(9, 0), (10, 0), (11, 0), (12, 0), (0, 0), (1, 0), (2, 0), (3, 0), (6, 0)]
        clusters, noise = dbscan_cluster(pts(coords), eps=3.0, min_samples=4)
        assert noise == []
        assert sorted(clusters[0]) == [0, 1, 2, 3, 8]
        assert sorted(clusters[1]) == [4, 5, 6, 7]


class TestOracleEquivalence:
    def test_random_sets_match_brute_force(self, rng):
        for _ in range(60):
            n = int(rng.integers(0, 120))
            coords = rng.uniform(0, 100, (n, 2))
            eps = float(rng.uniform(1.0, 20.0))
            min_samples = int(rng.integers(1, 6))
            got = dbscan_cluster(pts(coords), eps, min_samples)
            want = brute_force_dbscan(coords, eps, min_samples)
            assert canonical(*got) == canonical(*want)
