"""Generates the clustering fixtures and their reference labelings.

Reference labels come from scikit-learn's HDBSCAN (EOM selection, Euclidean,
min_samples defaulting to min_cluster_size) and are renumbered by ascending
index of each cluster's first member. Run once; outputs are committed.
"""
import json

import numpy as np
from sklearn.cluster import HDBSCAN


def renumber(labels):
    mapping = {}
    out = []
    for lab in labels:
        if lab < 0:
            out.append(-1)
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out.append(mapping[lab])
    return out


def dump(name, points, min_cluster_size, min_samples=None):
    model = HDBSCAN(min_cluster_size=min_cluster_size, min_samples=min_samples)
    labels = renumber(model.fit_predict(points).tolist())
    with open(name, "w") as f:
        json.dump({
            "min_cluster_size": min_cluster_size,
            "min_samples": min_samples if min_samples is not None else min_cluster_size,
            "points": [[float(repr_x) for repr_x in p] for p in points.tolist()],
            "labels": labels,
        }, f, indent=1)
    print(name, "K =", max(labels) + 1, "noise =", labels.count(-1))


rng = np.random.default_rng(20240601)
a = rng.normal(loc=[0.0, 0.0], scale=1.0, size=(25, 2))
b = rng.normal(loc=[20.0, 0.0], scale=1.0, size=(25, 2))
outlier = np.array([[10.0, 80.0]])
dump("two_blobs.json", np.vstack([a, b, outlier]), 10)

rng = np.random.default_rng(7)
c1 = rng.normal(loc=[0.0, 0.0, 0.0], scale=0.5, size=(120, 3))
c2 = rng.normal(loc=[6.0, 6.0, 0.0], scale=1.0, size=(100, 3))
c3 = rng.normal(loc=[-6.0, 5.0, 3.0], scale=1.5, size=(80, 3))
noise = rng.uniform(low=-12.0, high=12.0, size=(30, 3))
pts = np.vstack([c1, c2, c3, noise])
pts = pts[rng.permutation(len(pts))]
dump("three_blobs_noise.json", pts, 15, 5)
