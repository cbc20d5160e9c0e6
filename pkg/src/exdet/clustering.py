"""Euclidean DBSCAN with deterministic border-point assignment.

Semantics, stated explicitly because implementations differ:

* a point is *core* iff its closed eps-ball (itself included) contains at
  least ``min_samples`` points;
* clusters are the connected components of core points under eps-adjacency,
  plus the non-core (border) points within eps of at least one core;
* a border point reachable from several clusters joins the cluster of the
  core with the smallest input index, so the partition is a deterministic
  function of input order.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .features import SimilarityPoint


def dbscan_cluster(
    points: Sequence[SimilarityPoint], eps: float, min_samples: int
) -> tuple[list[list[int]], list[int]]:
    """Cluster similarity points by density.

    Args:
        points: points in row-major input order (order breaks border ties).
        eps: neighborhood radius in pixels (closed ball).
        min_samples: minimum ball population for a core point, self included.

    Returns:
        (clusters, noise): clusters as ascending index lists, ordered by
        their first core point's input index; noise as an ascending index
        list. Empty input yields ([], []).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_samples < 1:
        raise ValueError("min_samples must be at least 1")
    n = len(points)
    if n == 0:
        return [], []

    xy = np.array([[p.px, p.py] for p in points], dtype=float)
    tree = cKDTree(xy)
    neighborhoods = tree.query_ball_point(xy, r=eps)  # closed ball, self included
    core = np.fromiter((len(nb) >= min_samples for nb in neighborhoods), dtype=bool, count=n)

    labels = np.full(n, -1, dtype=int)
    next_label = 0
    for start in range(n):
        if not core[start] or labels[start] != -1:
            continue
        labels[start] = next_label
        queue = deque([start])
        while queue:
            j = queue.popleft()
            for k in neighborhoods[j]:
                if core[k] and labels[k] == -1:
                    labels[k] = next_label
                    queue.append(k)
        next_label += 1

    # Border points: the smallest-index core within reach decides.
    for i in range(n):
        if core[i]:
            continue
        for j in sorted(neighborhoods[i]):
            if core[j]:
                labels[i] = labels[j]
                break

    clusters: list[list[int]] = [[] for _ in range(next_label)]
    noise: list[int] = []
    for i in range(n):
        if labels[i] == -1:
            noise.append(i)
        else:
            clusters[labels[i]].append(i)
    return clusters, noise
