"""Clustering of embedding vectors and silhouette-based choice of K.

Both clusterers work on plain (N, p) coefficient matrices with unweighted
Euclidean distance. k-medoids is PAM (greedy build + best-improvement
swap) on a cached full distance matrix; k-means is Lloyd with a greedy
center initialization plus seeded distance-weighted restarts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 5
KMEDOIDS_RESTARTS = 4
PAM_MAX_SWAPS = 300
_SWAP_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """Cluster labels 0..k-1 with every cluster nonempty."""

    labels: np.ndarray
    k: int
    medoids: np.ndarray | None = None
    objective: float = float("nan")
    objective_history: tuple[float, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        labels.setflags(write=False)
        if labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        if labels.min(initial=0) < 0 or (labels.size and labels.max() >= self.k):
            raise ValueError(f"labels must lie in 0..{self.k - 1}")
        counts = np.bincount(labels, minlength=self.k)
        if np.any(counts == 0):
            raise ValueError("every cluster must be nonempty")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


@dataclass(frozen=True)
class SilhouetteReport:
    per_subject: np.ndarray
    average: float


@dataclass(frozen=True)
class KSelection:
    """Outcome of scanning k over a candidate range."""

    best_k: int
    partition: Partition
    ks: tuple[int, ...]
    scores: tuple[float, ...]

    @property
    def best_score(self) -> float:
        return self.scores[self.ks.index(self.best_k)]

    @property
    def second_score(self) -> float:
        """Highest average silhouette among candidates other than best_k."""
        others = [s for k, s in zip(self.ks, self.scores) if k != self.best_k]
        return max(others) if others else float("nan")


def distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Dense Euclidean distances with an exact zero diagonal."""
    x = np.asarray(vectors, dtype=float)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    np.fill_diagonal(d, 0.0)
    return d


def _check_k(k: int, n: int) -> None:
    if not 2 <= k <= n:
        raise ValueError(f"k must satisfy 2 <= k <= N, got k={k}, N={n}")


def _point_center_sq(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        + np.einsum("ij,ij->i", centers, centers)[None, :]
        - 2.0 * (x @ centers.T)
    )
    return np.maximum(d2, 0.0)


def _greedy_centers(x: np.ndarray, k: int) -> np.ndarray:
    # deterministic: most central point first, then farthest-point traversal
    d2_all = _point_center_sq(x, x)
    first = int(np.argmin(d2_all.sum(axis=1)))
    chosen = [first]
    mind2 = d2_all[:, first].copy()
    for _ in range(1, k):
        nxt = int(np.argmax(mind2))
        chosen.append(nxt)
        np.minimum(mind2, d2_all[:, nxt], out=mind2)
    return x[chosen].copy()


def _weighted_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    mind2 = _point_center_sq(x, x[[first]])[:, 0]
    for _ in range(1, k):
        total = mind2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=mind2 / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        np.minimum(mind2, _point_center_sq(x, x[[nxt]])[:, 0], out=mind2)
    return x[chosen].copy()


def _lloyd(x: np.ndarray, centers: np.ndarray, k: int) -> tuple[np.ndarray, float, list[float]]:
    n = x.shape[0]
    labels = np.full(n, -1)
    history: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        d2 = _point_center_sq(x, centers)
        new_labels = d2.argmin(axis=1)
        mind2 = d2[np.arange(n), new_labels]
        for empty in np.flatnonzero(np.bincount(new_labels, minlength=k) == 0):
            far = int(np.argmax(mind2))
            new_labels[far] = empty
            mind2[far] = -1.0  # keep later repairs from stealing the same point
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centers[c] = x[labels == c].mean(axis=0)
        d2 = _point_center_sq(x, centers)
        history.append(float(d2[np.arange(n), labels].sum()))
    return labels, history[-1], history


def kmeans(
    vectors: np.ndarray, k: int, seed: int = 0, restarts: int = KMEANS_RESTARTS
) -> Partition:
    """Lloyd k-means; best objective over one greedy start plus seeded restarts.

    Convergence: assignments stable or 300 iterations. Empty clusters are
    repaired by reassigning the point farthest from its center.
    """
    x = np.asarray(vectors, dtype=float)
    _check_k(k, x.shape[0])
    seeds = np.random.SeedSequence(seed).spawn(max(restarts - 1, 0))
    best: tuple[float, np.ndarray, list[float]] | None = None
    for r in range(max(restarts, 1)):
        if r == 0:
            centers = _greedy_centers(x, k)
        else:
            centers = _weighted_centers(x, k, np.random.default_rng(seeds[r - 1]))
        labels, obj, history = _lloyd(x, centers, k)
        if best is None or obj < best[0]:
            best = (obj, labels, history)
    obj, labels, history = best[0], best[1], best[2]
    return Partition(labels, k, objective=obj, objective_history=tuple(history))


def _pam_build(d: np.ndarray, k: int) -> list[int]:
    medoids = [int(np.argmin(d.sum(axis=0)))]
    d_near = d[:, medoids[0]].copy()
    for _ in range(1, k):
        gains = np.maximum(d_near[:, None] - d, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        nxt = int(np.argmax(gains))
        medoids.append(nxt)
        np.minimum(d_near, d[:, nxt], out=d_near)
    return medoids


def _pam_caches(d: np.ndarray, medoids: list[int]):
    dm = d[:, medoids]
    slot1 = dm.argmin(axis=1)
    n = d.shape[0]
    d1 = dm[np.arange(n), slot1]
    dm2 = dm.copy()
    dm2[np.arange(n), slot1] = np.inf
    d2 = dm2.min(axis=1)
    return slot1, d1, d2


def _pam_swap(d: np.ndarray, medoids: list[int], k: int) -> tuple[list[int], float, list[float]]:
    n = d.shape[0]
    objective = float(d[:, medoids].min(axis=1).sum())
    history = [objective]
    for _ in range(PAM_MAX_SWAPS):
        slot1, d1, d2 = _pam_caches(d, medoids)
        shrink = np.minimum(d - d1[:, None], 0.0)  # change for points whose medoid stays
        term = shrink.sum(axis=0)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), slot1] = 1.0
        own_shrink = onehot.T @ shrink
        own_move = onehot.T @ (np.minimum(d, d2[:, None]) - d1[:, None])
        delta = term[None, :] - own_shrink + own_move  # (slot, candidate)
        delta[:, medoids] = np.inf
        flat = int(np.argmin(delta))
        slot, cand = divmod(flat, n)
        if delta[slot, cand] >= -_SWAP_TOL:
            break
        medoids[slot] = cand
        objective = float(d[:, medoids].min(axis=1).sum())
        history.append(objective)
    return medoids, objective, history


def kmedoids(
    vectors: np.ndarray | None,
    k: int,
    seed: int = 0,
    dist: np.ndarray | None = None,
    restarts: int = KMEDOIDS_RESTARTS,
) -> Partition:
    """PAM k-medoids on the Euclidean distance matrix.

    One greedy build plus ``restarts`` seeded random initial medoid sets,
    each refined by best-improvement swaps until a local optimum; the best
    total dissimilarity wins. Swap evaluation is vectorized over every
    (medoid, candidate) exchange; ties break toward the smallest index, so
    the result is deterministic given the seed.
    """
    d = distance_matrix(vectors) if dist is None else np.asarray(dist, dtype=float)
    n = d.shape[0]
    _check_k(k, n)

    best: tuple[float, list[int], list[float]] | None = None
    seeds = np.random.SeedSequence(seed).spawn(max(restarts, 0))
    for r in range(max(restarts, 0) + 1):
        if r == 0:
            init = _pam_build(d, k)
        else:
            rng = np.random.default_rng(seeds[r - 1])
            init = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
        medoids, objective, history = _pam_swap(d, init, k)
        if best is None or objective < best[0] - _SWAP_TOL:
            best = (objective, medoids, history)
    objective, medoids, history = best

    med = np.asarray(medoids)
    labels = d[:, med].argmin(axis=1)
    labels[med] = np.arange(k)  # a medoid anchors its own cluster even under ties
    return Partition(
        labels,
        k,
        medoids=med,
        objective=objective,
        objective_history=tuple(history),
    )


def silhouette(
    vectors: np.ndarray | None,
    partition: Partition,
    dist: np.ndarray | None = None,
) -> SilhouetteReport:
    """Per-subject silhouettes s = (b - a) / max(a, b) and their mean.

    a is the mean distance to own-cluster companions, b the smallest mean
    distance to another cluster. Singleton-cluster subjects score 0.
    """
    if partition.k < 2:
        raise ValueError("silhouette requires at least 2 clusters")
    d = distance_matrix(vectors) if dist is None else np.asarray(dist, dtype=float)
    n = d.shape[0]
    if partition.n != n:
        raise ValueError("partition does not match the data")
    onehot = np.zeros((n, partition.k))
    onehot[np.arange(n), partition.labels] = 1.0
    sums = d @ onehot
    counts = onehot.sum(axis=0)

    own = partition.labels
    own_count = counts[own]
    a = np.zeros(n)
    multi = own_count > 1
    a[multi] = sums[np.arange(n), own][multi] / (own_count[multi] - 1.0)

    means = sums / counts[None, :]
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)

    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[~multi] = 0.0
    return SilhouetteReport(per_subject=s, average=float(s.mean()))


def select_k(
    vectors: np.ndarray,
    k_range: Iterable[int],
    method: str = "kmedoids",
    seed: int = 0,
    dist: np.ndarray | None = None,
) -> KSelection:
    """Cluster at every k in range and keep the silhouette argmax.

    Ties break toward smaller k. The full (k, score) table is retained for
    the stopping rule's second-best lookup.
    """
    x = np.asarray(vectors, dtype=float)
    ks = sorted(int(k) for k in k_range)
    if not ks:
        raise ValueError("empty candidate range")
    for k in ks:
        _check_k(k, x.shape[0])
    if method not in ("kmeans", "kmedoids"):
        raise ValueError(f"unknown clustering method {method!r}")
    d = distance_matrix(x) if dist is None else dist

    scores: list[float] = []
    best_k = ks[0]
    best_part: Partition | None = None
    best_score = -np.inf
    child = np.random.SeedSequence(seed).spawn(len(ks))
    for i, k in enumerate(ks):
        k_seed = int(child[i].generate_state(1)[0])
        if method == "kmedoids":
            part = kmedoids(None, k, seed=k_seed, dist=d)
        else:
            part = kmeans(x, k, seed=k_seed)
        score = silhouette(None, part, dist=d).average
        scores.append(score)
        if score > best_score:  # strict: earlier (smaller) k wins ties
            best_score = score
            best_k = k
            best_part = part
    return KSelection(best_k, best_part, tuple(ks), tuple(scores))


def export_silhouette_table(path, selection: KSelection) -> None:
    """Write the (k, average silhouette) table as delimited text."""
    with open(path, "w") as fh:
        fh.write("k,avg_silhouette\n")
        for k, s in zip(selection.ks, selection.scores):
            fh.write(f"{k},{float(s)!r}\n")
