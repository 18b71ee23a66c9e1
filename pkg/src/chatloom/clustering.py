"""Topic clustering over image embeddings and topic-aware group sampling.

Plain Lloyd's k-means with k-means++ initialization, run in full precision
and fully seeded so repeated runs are bit-identical. Undersized clusters are
pruned as outliers; conversation image groups are drawn cluster-first so
topics stay coherent within a group and diverse across groups.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import CaptionedImage


class ClusteringError(ValueError):
    pass


@dataclass
class TopicCluster:
    cluster_id: int
    centroid: np.ndarray
    member_ids: tuple[str, ...]  # sorted, unique

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass
class KMeansResult:
    clusters: list[TopicCluster]
    sse_history: list[float]
    iterations: int


@dataclass
class ImageGroup:
    """2-4 distinct images from one topic cluster, in draw order."""

    cluster_id: int
    images: list[CaptionedImage]

    def __post_init__(self):
        if not 2 <= len(self.images) <= 4:
            raise ClusteringError(f"image group must hold 2-4 images, got {len(self.images)}")
        ids = [img.image_id for img in self.images]
        if len(set(ids)) != len(ids):
            raise ClusteringError("image group contains duplicate images")


def _as_rng(rng_or_seed) -> np.random.Generator:
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(rng_or_seed)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (n_points, n_centroids)."""
    sq = (
        np.sum(points**2, axis=1)[:, None]
        + np.sum(centroids**2, axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    return np.maximum(sq, 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    closest = _sq_dists(points, points[chosen[0]][None, :])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen centroid
            chosen[j] = rng.integers(n)
        else:
            chosen[j] = rng.choice(n, p=closest / total)
        closest = np.minimum(closest, _sq_dists(points, points[chosen[j]][None, :])[:, 0])
    return points[chosen].copy()


def kmeans(
    embeddings: Mapping[str, np.ndarray],
    k: int = 4096,
    *,
    max_iters: int = 100,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> KMeansResult:
    """Cluster id-indexed vectors into k topics.

    Ids are processed in sorted order, so identical input and seed yield a
    bit-identical result. Clusters left empty after a mean update are
    re-seeded from the point currently farthest from its own centroid
    (lowest point index on ties).
    """
    ids = sorted(embeddings)
    if len(ids) < k:
        raise ClusteringError(f"need at least k={k} points, got {len(ids)}")
    points = np.stack([np.asarray(embeddings[i], dtype=np.float64) for i in ids])
    bad = np.flatnonzero(~np.isfinite(points).all(axis=1))
    if bad.size:
        raise ClusteringError(f"non-finite embedding for image {ids[bad[0]]}")

    rng = _as_rng(seed)
    centroids = _kmeanspp_init(points, k, rng)
    assignment = np.zeros(len(ids), dtype=np.int64)
    sse_history: list[float] = []
    iterations = 0

    for _ in range(max_iters):
        iterations += 1
        dists = _sq_dists(points, centroids)
        assignment = dists.argmin(axis=1)

        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, points)
        counts = np.bincount(assignment, minlength=k).astype(np.float64)
        new_centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1.0)[:, None], 0.0)

        # re-seed empty clusters from the globally farthest point
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own_dist = np.einsum(
                "ij,ij->i", points - new_centroids[assignment], points - new_centroids[assignment]
            )
            for cluster in empty:
                donors = np.flatnonzero(counts[assignment] > 1)
                if donors.size == 0:
                    break
                farthest = donors[np.argmax(own_dist[donors])]
                counts[assignment[farthest]] -= 1
                counts[cluster] += 1
                assignment[farthest] = cluster
                new_centroids[cluster] = points[farthest]
                own_dist[farthest] = 0.0

        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        diffs = points - centroids[assignment]
        sse_history.append(float(np.einsum("ij,ij->", diffs, diffs)))
        if shift < tolerance:
            break

    members: list[list[str]] = [[] for _ in range(k)]
    for idx, cluster in enumerate(assignment):
        members[cluster].append(ids[idx])
    clusters = [
        TopicCluster(cluster_id=c, centroid=centroids[c].copy(), member_ids=tuple(sorted(members[c])))
        for c in range(k)
    ]
    return KMeansResult(clusters=clusters, sse_history=sse_history, iterations=iterations)


@dataclass
class PruneResult:
    survivors: list[TopicCluster]
    pruned: list[TopicCluster]

    @property
    def unsampleable_ids(self) -> tuple[str, ...]:
        return tuple(i for cluster in self.pruned for i in cluster.member_ids)


def prune_outlier_clusters(clusters: Sequence[TopicCluster], min_size: int = 32) -> PruneResult:
    """Split clusters into (size >= min_size, outliers)."""
    seen: set[str] = set()
    for cluster in clusters:
        overlap = seen.intersection(cluster.member_ids)
        if overlap:
            raise ClusteringError(f"clusters are not disjoint: {sorted(overlap)[0]} repeated")
        seen.update(cluster.member_ids)
    result = PruneResult(survivors=[], pruned=[])
    for cluster in clusters:
        (result.survivors if cluster.size >= min_size else result.pruned).append(cluster)
    return result


def sample_image_group(
    clusters: Sequence[TopicCluster],
    corpus: Mapping[str, CaptionedImage],
    rng_seed,
    group_sizes: Sequence[int] = (2, 3, 4),
) -> ImageGroup:
    """Draw one conversation's image group.

    A cluster is chosen uniformly among surviving clusters large enough for
    any group size, then the group size n uniformly from ``group_sizes``,
    then n member images uniformly without replacement. All three draws come
    from the one seeded generator, in that order.
    """
    rng = _as_rng(rng_seed)
    need = max(group_sizes)
    eligible = sorted(
        (c for c in clusters if c.size >= need), key=lambda c: c.cluster_id
    )
    if not eligible:
        raise ClusteringError("corpus too small after pruning")
    cluster = eligible[int(rng.integers(len(eligible)))]
    n = int(group_sizes[int(rng.integers(len(group_sizes)))])
    picks = rng.choice(len(cluster.member_ids), size=n, replace=False)
    images = [corpus[cluster.member_ids[int(i)]] for i in picks]
    return ImageGroup(cluster_id=cluster.cluster_id, images=images)


# ---------------------------------------------------------------------------
# workspace files
# ---------------------------------------------------------------------------

CLUSTERS_FILE = "clusters.json"
PRUNED_FILE = "pruned.json"


def save_clusters(result: PruneResult, directory: Path | str) -> None:
    directory = Path(directory)
    payload = {
        str(c.cluster_id): {"member_ids": list(c.member_ids), "centroid": c.centroid.tolist()}
        for c in result.survivors
    }
    (directory / CLUSTERS_FILE).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    pruned = {
        "cluster_ids": [c.cluster_id for c in result.pruned],
        "unsampleable_ids": sorted(result.unsampleable_ids),
    }
    (directory / PRUNED_FILE).write_text(json.dumps(pruned, sort_keys=True), encoding="utf-8")


def load_clusters(directory: Path | str) -> list[TopicCluster]:
    payload = json.loads((Path(directory) / CLUSTERS_FILE).read_text(encoding="utf-8"))
    return [
        TopicCluster(
            cluster_id=int(cid),
            centroid=np.asarray(entry["centroid"], dtype=np.float64),
            member_ids=tuple(entry["member_ids"]),
        )
        for cid, entry in sorted(payload.items(), key=lambda kv: int(kv[0]))
    ]
