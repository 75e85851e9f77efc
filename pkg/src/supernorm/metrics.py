import itertools

import numpy as np
from scipy.stats import rankdata

from .exceptions import MetricError


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic.

    Ties count one half. The statistic is accumulated as an exact integer
    (twice the rank sum) before the single final division.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc needs both classes present")
    twice_ranks = np.rint(2.0 * rankdata(s)).astype(np.int64)
    u2 = int(twice_ranks[y].sum()) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


def roc_auc_bruteforce(scores, labels) -> float:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    pos, neg = s[y], s[~y]
    if not len(pos) or not len(neg):
        raise MetricError("roc_auc needs both classes present")
    total = sum(2 if a > b else 1 if a == b else 0 for a, b in itertools.product(pos, neg))
    return total / (2 * len(pos) * len(neg))


def accuracy(pred, target) -> float:
    pred, target = np.asarray(pred).ravel(), np.asarray(target).ravel()
    return float(np.mean(pred == target))


def class_distances(embeddings, labels):
    """``(intra, inter)`` centroid distances.

    ``intra`` is the mean distance of each sample to its class centroid and
    ``inter`` the mean pairwise distance between class centroids.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels).ravel()
    classes = np.unique(y)
    if len(classes) < 2:
        raise MetricError("class_distances needs at least two classes")
    centroids = np.stack([x[y == c].mean(axis=0) for c in classes])
    index = np.searchsorted(classes, y)
    intra = float(np.linalg.norm(x - centroids[index], axis=1).mean())
    pairs = [np.linalg.norm(centroids[i] - centroids[j]) for i, j in itertools.combinations(range(len(classes)), 2)]
    return intra, float(np.mean(pairs))
