import numpy as np
import pytest

from chatloom.clustering import (
    ClusteringError,
    ImageGroup,
    TopicCluster,
    kmeans,
    load_clusters,
    prune_outlier_clusters,
    sample_image_group,
    save_clusters,
)
from helpers import gaussian_blobs, make_cluster, make_images, purity


# -- k-means -------------------------------------------------------------------


def test_kmeans_recovers_separated_blobs():
    embeddings, labels = gaussian_blobs()
    result = kmeans(embeddings, k=3, seed=0)
    assert purity(result.clusters, labels) == 1.0
    assert sorted(c.size for c in result.clusters) == [50, 50, 50]


def test_kmeans_sse_non_increasing():
    embeddings, _ = gaussian_blobs(std=3.0)  # overlapping blobs take more iterations
    result = kmeans(embeddings, k=5, seed=3)
    history = result.sse_history
    assert len(history) == result.iterations
    assert all(later <= earlier for earlier, later in zip(history, history[1:]))


def test_kmeans_is_deterministic():
    embeddings, _ = gaussian_blobs()
    a = kmeans(embeddings, k=4, seed=11)
    b = kmeans(embeddings, k=4, seed=11)
    assert [c.member_ids for c in a.clusters] == [c.member_ids for c in b.clusters]
    assert all(np.array_equal(x.centroid, y.centroid) for x, y in zip(a.clusters, b.clusters))
    assert a.sse_history == b.sse_history


def test_kmeans_seed_changes_runs():
    embeddings, _ = gaussian_blobs(std=4.0)
    a = kmeans(embeddings, k=6, seed=0, max_iters=2)
    b = kmeans(embeddings, k=6, seed=1, max_iters=2)
    assert [c.member_ids for c in a.clusters] != [c.member_ids for c in b.clusters]


def test_kmeans_partitions_every_point():
    embeddings, _ = gaussian_blobs()
    result = kmeans(embeddings, k=7, seed=2)
    seen = [m for c in result.clusters for m in c.member_ids]
    assert sorted(seen) == sorted(embeddings)


def test_kmeans_needs_enough_points():
    with pytest.raises(ClusteringError, match="need at least"):
        kmeans({"a": np.zeros(2), "b": np.zeros(2)}, k=3)


def test_kmeans_rejects_non_finite():
    embeddings = {"a": np.array([0.0, 1.0]), "b": np.array([np.nan, 0.0]), "c": np.ones(2)}
    with pytest.raises(ClusteringError, match="non-finite"):
        kmeans(embeddings, k=2)


def test_kmeans_handles_duplicate_points():
    # more centroids than distinct locations still terminates and partitions
    embeddings = {f"p{i}": np.array([float(i % 2), 0.0]) for i in range(8)}
    result = kmeans(embeddings, k=4, seed=0)
    assert sum(c.size for c in result.clusters) == 8


# -- pruning ---------------------------------------------------------------------


def test_prune_splits_exactly_at_min_size():
    images = make_images(80)
    clusters = [
        make_cluster(0, images[:32]),
        make_cluster(1, images[32:63]),  # 31 members: outlier
        make_cluster(2, images[63:80]),  # 17 members: outlier
    ]
    result = prune_outlier_clusters(clusters, min_size=32)
    assert [c.cluster_id for c in result.survivors] == [0]
    assert [c.cluster_id for c in result.pruned] == [1, 2]
    assert set(result.unsampleable_ids) == {img.image_id for img in images[32:]}


def test_prune_requires_disjoint_clusters():
    images = make_images(4)
    clusters = [make_cluster(0, images[:3]), make_cluster(1, images[2:])]
    with pytest.raises(ClusteringError, match="not disjoint"):
        prune_outlier_clusters(clusters, min_size=1)


# -- group sampling ----------------------------------------------------------------


def _sampling_setup(cluster_sizes=(10, 12, 3)):
    images = make_images(sum(cluster_sizes))
    corpus = {img.image_id: img for img in images}
    clusters = []
    start = 0
    for cid, size in enumerate(cluster_sizes):
        clusters.append(make_cluster(cid, images[start : start + size]))
        start += size
    return clusters, corpus


def test_sample_group_draws_within_one_cluster():
    clusters, corpus = _sampling_setup()
    members = {c.cluster_id: set(c.member_ids) for c in clusters}
    for seed in range(25):
        group = sample_image_group(clusters, corpus, rng_seed=seed)
        assert len(group.images) in (2, 3, 4)
        ids = [img.image_id for img in group.images]
        assert len(set(ids)) == len(ids)
        assert set(ids) <= members[group.cluster_id]


def test_sample_group_skips_clusters_too_small_for_max_size():
    clusters, corpus = _sampling_setup(cluster_sizes=(10, 12, 3))
    chosen = {sample_image_group(clusters, corpus, rng_seed=s).cluster_id for s in range(60)}
    assert 2 not in chosen  # 3 members cannot host a 4-image group
    assert chosen == {0, 1}


def test_sample_group_is_deterministic():
    clusters, corpus = _sampling_setup()
    a = sample_image_group(clusters, corpus, rng_seed=99)
    b = sample_image_group(clusters, corpus, rng_seed=99)
    assert [i.image_id for i in a.images] == [i.image_id for i in b.images]
    assert a.cluster_id == b.cluster_id


def test_sample_group_respects_group_sizes():
    clusters, corpus = _sampling_setup()
    sizes = {
        len(sample_image_group(clusters, corpus, rng_seed=s, group_sizes=(2,)).images)
        for s in range(10)
    }
    assert sizes == {2}


def test_sample_group_fails_when_nothing_is_large_enough():
    clusters, corpus = _sampling_setup(cluster_sizes=(3, 2, 3))
    with pytest.raises(ClusteringError, match="too small"):
        sample_image_group(clusters, corpus, rng_seed=0)


def test_image_group_validation():
    images = make_images(6)
    with pytest.raises(ClusteringError, match="2-4 images"):
        ImageGroup(cluster_id=0, images=images[:1])
    with pytest.raises(ClusteringError, match="2-4 images"):
        ImageGroup(cluster_id=0, images=images[:5])
    with pytest.raises(ClusteringError, match="duplicate"):
        ImageGroup(cluster_id=0, images=[images[0], images[0]])


# -- persistence ---------------------------------------------------------------------


def test_clusters_round_trip(tmp_path):
    embeddings, _ = gaussian_blobs(n_per_blob=40)
    result = kmeans(embeddings, k=3, seed=1)
    pruned = prune_outlier_clusters(result.clusters, min_size=32)
    save_clusters(pruned, tmp_path)
    loaded = load_clusters(tmp_path)
    assert [c.cluster_id for c in loaded] == [c.cluster_id for c in pruned.survivors]
    for before, after in zip(pruned.survivors, loaded):
        assert before.member_ids == after.member_ids
        assert np.allclose(before.centroid, after.centroid)
