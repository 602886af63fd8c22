"""K-means (k-means++ seeding, Lloyd iterations) over embedding rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CommuneError

MAX_ITER = 300


@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError(f"labels must lie in 0..{self.k - 1}")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.size

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Renumber arbitrary labels: largest community first, ties by first member."""
        labels = np.asarray(labels)
        uniq, inv = np.unique(labels, return_inverse=True)
        counts = np.bincount(inv)
        first = np.full(uniq.size, labels.size)
        np.minimum.at(first, inv, np.arange(labels.size))
        order = np.lexsort((first, -counts))
        remap = np.empty(uniq.size, dtype=np.int64)
        remap[order] = np.arange(uniq.size)
        return cls(remap[inv], int(uniq.size))


def _as_array(x):
    return np.asarray(getattr(x, "values", x), dtype=float)


def inertia(x, p) -> float:
    """Sum of squared distances from each row to its community centroid."""
    x = _as_array(x)
    labels = p.labels if isinstance(p, Partition) else np.asarray(p)
    total = 0.0
    for c in np.unique(labels):
        pts = x[labels == c]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def _sq_dists(x, centers):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x, k, rng):
    n = x.shape[0]
    n_trials = 2 + int(np.log(k))
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1]).ravel()
    for c in range(1, k):
        pot = closest.sum()
        if pot <= 0:
            # every point coincides with a chosen center
            centers[c] = x[rng.integers(n)]
            continue
        cand = np.searchsorted(np.cumsum(closest), rng.random(n_trials) * pot)
        cand = np.minimum(cand, n - 1)
        d_cand = np.minimum(closest[None, :], _sq_dists(x, x[cand]).T)
        best = int(np.argmin(d_cand.sum(axis=1)))
        centers[c] = x[cand[best]]
        closest = d_cand[best]
    return centers


def lloyd(x, centers, max_iter=MAX_ITER, history=None):
    """Lloyd iterations until the assignment stops changing; returns ``(labels, centers)``."""
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # hand the empty cluster the point currently farthest from its center
            own = d[np.arange(x.shape[0]), new]
            movable = counts[new] > 1
            far = int(np.argmax(np.where(movable, own, -1.0)))
            counts[new[far]] -= 1
            new[far] = c
            counts[c] = 1
            d[far] = 0.0
        if history is not None:
            history.append(inertia(x, new))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.vstack([x[labels == c].mean(axis=0) for c in range(k)])
    return labels, centers


def kmeans(x, k: int, restarts: int = 10, seed: int = 0) -> Partition:
    """Best-of-``restarts`` k-means; labels renumbered by descending community size."""
    x = _as_array(x)
    n = x.shape[0]
    if k < 1:
        raise CommuneError("k must be >= 1")
    if k > n:
        raise CommuneError(f"k={k} exceeds the number of points ({n})")
    if restarts < 1:
        raise CommuneError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best_labels, best_score = None, np.inf
    for _ in range(restarts):
        centers = kmeans_plusplus(x, k, rng)
        labels, _ = lloyd(x, centers)
        score = inertia(x, labels)
        if score < best_score:
            best_labels, best_score = labels, score
    return Partition.from_labels(best_labels)
