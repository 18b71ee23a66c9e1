import json
import math

import numpy as np
import pytest

from chatloom.corpus import (
    CaptionedImage,
    CorpusError,
    HashEmbeddingProvider,
    attach_sidecar_embeddings,
    compute_matching_score,
    contains_reserved_tag,
    filter_by_score,
    ingest_pairs,
    load_corpus,
    load_embedding_sidecar,
    mean_pool,
    save_corpus,
    score_corpus,
    stable_image_id,
)
from helpers import make_images


# -- ingestion ---------------------------------------------------------------


def test_ingest_tsv_happy_path(tmp_path):
    path = tmp_path / "pairs.tsv"
    path.write_text(
        "a red bicycle\thttps://x/1.jpg\nan old harbor\thttps://x/2.jpg\n", encoding="utf-8"
    )
    result = ingest_pairs(path)
    assert [img.caption for img in result.images] == ["a red bicycle", "an old harbor"]
    assert result.skipped == 0 and result.duplicates == 0
    assert all(img.image_id == stable_image_id(img.uri) for img in result.images)


def test_ingest_jsonl(tmp_path):
    path = tmp_path / "pairs.jsonl"
    rows = [{"caption": "a red bicycle", "uri": "https://x/1.jpg"}]
    path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    result = ingest_pairs(path, fmt="jsonl")
    assert len(result.images) == 1


def test_ingest_skips_malformed_and_counts(tmp_path):
    lines = [
        "only one field",
        "a\tb\tc",
        "\thttps://x/1.jpg",  # empty caption
        "caption\t",  # empty uri
        "has <img0> inside\thttps://x/2.jpg",  # reserved markup
        "good caption\thttps://x/3.jpg",
        "good caption again\thttps://x/3.jpg",  # duplicate uri
        "",
    ]
    result = ingest_pairs(lines)
    assert len(result.images) == 1
    assert result.skipped == 5
    assert result.duplicates == 1


def test_ingest_unknown_format():
    with pytest.raises(CorpusError, match="unknown corpus format"):
        ingest_pairs([], fmt="csv")


def test_ingest_missing_file(tmp_path):
    with pytest.raises(CorpusError, match="cannot read"):
        ingest_pairs(tmp_path / "absent.tsv")


def test_reserved_tag_detection():
    assert contains_reserved_tag("look <img3> here")
    assert contains_reserved_tag("stray </img0> close")
    assert not contains_reserved_tag("an image of a tag")


# -- embeddings and scores ----------------------------------------------------


def test_mean_pool_matches_manual():
    features = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]
    assert np.allclose(mean_pool(features), [3.0, 4.0])


def test_mean_pool_rejects_bad_shapes():
    with pytest.raises(CorpusError):
        mean_pool(np.zeros((0, 4)))
    with pytest.raises(CorpusError):
        mean_pool(np.zeros(4))


def test_matching_score_is_scaled_cosine():
    v = np.array([1.0, 0.0])
    w = np.array([1.0, 1.0])
    expected = 100.0 * (1.0 / math.sqrt(2.0))
    assert compute_matching_score(v, w) == pytest.approx(expected)
    assert compute_matching_score(v, v) == pytest.approx(100.0)
    assert compute_matching_score(v, -v) == pytest.approx(-100.0)


def test_matching_score_errors():
    with pytest.raises(CorpusError, match="dimension mismatch"):
        compute_matching_score(np.ones(2), np.ones(3))
    with pytest.raises(CorpusError, match="zero vector"):
        compute_matching_score(np.zeros(2), np.ones(2))


def test_filter_by_score_partitions_at_threshold():
    images = make_images(3)
    images[0].matching_score = 29.999
    images[1].matching_score = 30.0
    images[2].matching_score = 77.0
    partition = filter_by_score(images, threshold=30.0)
    assert [img.image_id for img in partition.retained] == [
        images[1].image_id,
        images[2].image_id,
    ]
    assert [img.image_id for img in partition.rejected] == [images[0].image_id]


def test_filter_by_score_requires_scores():
    with pytest.raises(CorpusError, match="no matching score"):
        filter_by_score(make_images(1))


def test_hash_provider_is_deterministic():
    provider = HashEmbeddingProvider(dimension=8)
    image = make_images(1)[0]
    a = provider.embed_image(image)
    b = HashEmbeddingProvider(dimension=8).embed_image(image)
    assert a.shape == (8,)
    assert np.array_equal(a, b)
    assert np.array_equal(provider.embed_text("xyz"), provider.embed_text("xyz"))


def test_score_corpus_attaches_embeddings_and_scores():
    images = make_images(20)
    provider = HashEmbeddingProvider(dimension=8, mismatch_rate=0.5)
    score_corpus(images, provider)
    assert all(img.embedding is not None and img.embedding.shape == (8,) for img in images)
    assert all(img.matching_score is not None for img in images)
    scores = [img.matching_score for img in images]
    # the mismatch fraction must produce genuinely low scores to filter on
    assert min(scores) < 30.0 < max(scores)


def test_score_corpus_rejects_wrong_dimension():
    images = make_images(1)
    images[0].embedding = np.ones(3)
    with pytest.raises(CorpusError, match="dimension"):
        score_corpus(images, HashEmbeddingProvider(dimension=8))


# -- persistence ---------------------------------------------------------------


def test_corpus_round_trip_with_embeddings(tmp_path):
    images = make_images(5)
    score_corpus(images, HashEmbeddingProvider(dimension=4))
    save_corpus(images, tmp_path)
    loaded = load_corpus(tmp_path)
    assert [img.image_id for img in loaded] == [img.image_id for img in images]
    assert [img.caption for img in loaded] == [img.caption for img in images]
    for before, after in zip(images, loaded):
        assert after.matching_score == pytest.approx(before.matching_score)
        # embeddings persist through float32 storage
        assert np.allclose(after.embedding, before.embedding, atol=1e-6)


def test_corpus_round_trip_without_embeddings(tmp_path):
    images = make_images(2)
    save_corpus(images, tmp_path)
    loaded = load_corpus(tmp_path)
    assert len(loaded) == 2
    assert all(img.embedding is None for img in loaded)


def test_sidecar_round_trip(tmp_path):
    images = make_images(3)
    path = tmp_path / "vectors.jsonl"
    rows = [
        {"image_id": images[0].image_id, "embedding": [1.0, 2.0]},
        {"image_id": images[2].image_id, "embedding": [3.0, 4.0]},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    vectors = load_embedding_sidecar(path)
    attach_sidecar_embeddings(images, vectors)
    assert np.array_equal(images[0].embedding, [1.0, 2.0])
    assert images[1].embedding is None
    assert np.array_equal(images[2].embedding, [3.0, 4.0])


def test_sidecar_dimension_mismatch(tmp_path):
    path = tmp_path / "vectors.jsonl"
    path.write_text(
        '{"image_id": "a", "embedding": [1.0]}\n{"image_id": "b", "embedding": [1.0, 2.0]}\n',
        encoding="utf-8",
    )
    with pytest.raises(CorpusError, match="dimension"):
        load_embedding_sidecar(path)


def test_record_round_trip():
    image = make_images(1)[0]
    image.matching_score = 41.25
    clone = CaptionedImage.from_record(image.to_record())
    assert clone.image_id == image.image_id
    assert clone.matching_score == 41.25
