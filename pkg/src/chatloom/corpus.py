"""Image-caption corpus handling.

Ingests TSV / JSON-lines caption pairs, attaches embeddings through a
pluggable provider (or a precomputed sidecar file), computes image-text
matching scores, and applies the matching-score cleaning step. The pipeline
never touches image bytes; images are referenced by URI only.
"""

from __future__ import annotations

import hashlib
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


def contains_reserved_tag(text: str) -> bool:
    """True when the text collides with the image-placeholder markup."""
    return "<img" in text or "</img" in text


def stable_image_id(uri: str) -> str:
    return hashlib.sha256(uri.encode("utf-8")).hexdigest()[:16]


@dataclass
class CaptionedImage:
    """One image-caption pair; the pipeline's atomic input.

    ``matching_score`` is on a 0-100 scale (100 x cosine similarity) and
    ``embedding`` has the corpus-wide dimension; both stay None until the
    scoring stage runs.
    """

    image_id: str
    uri: str
    caption: str
    matching_score: float | None = None
    embedding: np.ndarray | None = None

    def to_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "uri": self.uri,
            "caption": self.caption,
            "matching_score": self.matching_score,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CaptionedImage":
        return cls(
            image_id=record["image_id"],
            uri=record["uri"],
            caption=record["caption"],
            matching_score=record.get("matching_score"),
        )


@dataclass
class IngestResult:
    images: list[CaptionedImage]
    skipped: int = 0
    duplicates: int = 0


def _validate_record(caption, uri) -> str | None:
    if not isinstance(caption, str) or not isinstance(uri, str):
        return "caption and uri must be strings"
    if not caption.strip():
        return "empty caption"
    if not uri.strip():
        return "empty uri"
    if contains_reserved_tag(caption):
        return "caption contains reserved image-tag substring"
    return None


def ingest_pairs(source: Path | str | Iterable[str], fmt: str = "tsv") -> IngestResult:
    """Read caption pairs into CaptionedImages, skipping malformed records.

    ``fmt`` is "tsv" (caption TAB uri) or "jsonl" ({"caption", "uri"}).
    Ids are assigned as a stable hash of the uri and deduplicated; an
    unreadable source raises, malformed records only log a warning.
    """
    if fmt not in ("tsv", "jsonl"):
        raise CorpusError(f"unknown corpus format: {fmt!r}")
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise CorpusError(f"cannot read corpus source {path}: {exc}") from exc
    else:
        lines = [line.rstrip("\n") for line in source]

    result = IngestResult(images=[])
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if fmt == "tsv":
            parts = line.split("\t")
            if len(parts) != 2:
                log.warning("line %d: expected 2 tab-separated fields, got %d", lineno, len(parts))
                result.skipped += 1
                continue
            caption, uri = parts
        else:
            try:
                record = json.loads(line)
                caption, uri = record["caption"], record["uri"]
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                log.warning("line %d: malformed json record (%s)", lineno, exc)
                result.skipped += 1
                continue
        problem = _validate_record(caption, uri)
        if problem is not None:
            log.warning("line %d: %s", lineno, problem)
            result.skipped += 1
            continue
        image_id = stable_image_id(uri)
        if image_id in seen:
            result.duplicates += 1
            continue
        seen.add(image_id)
        result.images.append(CaptionedImage(image_id=image_id, uri=uri, caption=caption))
    return result


def mean_pool(token_features) -> np.ndarray:
    """Column-wise mean of a t x d feature matrix."""
    features = np.asarray(token_features, dtype=np.float64)
    if features.ndim != 2:
        raise CorpusError(f"expected a 2-d feature matrix, got shape {features.shape}")
    if features.shape[0] == 0:
        raise CorpusError("empty feature sequence")
    return features.mean(axis=0)


def compute_matching_score(image_embedding, caption_embedding) -> float:
    """100 x cosine similarity between an image and its caption embedding."""
    v = np.asarray(image_embedding, dtype=np.float64)
    w = np.asarray(caption_embedding, dtype=np.float64)
    if v.shape != w.shape:
        raise CorpusError(f"embedding dimension mismatch: {v.shape} vs {w.shape}")
    nv, nw = float(np.linalg.norm(v)), float(np.linalg.norm(w))
    if nv == 0.0 or nw == 0.0:
        raise CorpusError("degenerate embedding (zero vector)")
    return 100.0 * float(np.dot(v, w) / (nv * nw))


@dataclass
class ScorePartition:
    retained: list[CaptionedImage]
    rejected: list[CaptionedImage]


def filter_by_score(images: Sequence[CaptionedImage], threshold: float = 30.0) -> ScorePartition:
    """Partition into (score >= threshold, rest); every image must be scored."""
    partition = ScorePartition(retained=[], rejected=[])
    for image in images:
        if image.matching_score is None:
            raise CorpusError(f"image {image.image_id} has no matching score")
        if image.matching_score >= threshold:
            partition.retained.append(image)
        else:
            partition.rejected.append(image)
    return partition


class EmbeddingProvider(ABC):
    """Vector source for images and captions.

    Implementations must be deterministic for identical inputs and identical
    provider configuration, and must return vectors of exactly ``dimension``.
    """

    name: str
    dimension: int

    @abstractmethod
    def embed_image(self, image: CaptionedImage) -> np.ndarray: ...

    @abstractmethod
    def embed_text(self, text: str) -> np.ndarray: ...


def _hash_rng(key: str) -> np.random.Generator:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic stand-in for a real image/text encoder.

    Caption embeddings are mean-pooled pseudo-random token features seeded
    from the text. Image embeddings start from the caption embedding and add
    uri-seeded noise; a ``mismatch_rate`` fraction of uris get large noise so
    the matching-score cleaning step has genuine rejects to act on.
    """

    def __init__(self, dimension: int = 16, mismatch_rate: float = 0.1):
        self.name = f"hash-{dimension}d"
        self.dimension = dimension
        self.mismatch_rate = mismatch_rate

    def embed_text(self, text: str) -> np.ndarray:
        rng = _hash_rng("text:" + text)
        rows = 4 + len(text) % 5
        return mean_pool(rng.normal(size=(rows, self.dimension)))

    def embed_image(self, image: CaptionedImage) -> np.ndarray:
        base = self.embed_text(image.caption)
        rng = _hash_rng("image:" + image.uri)
        scale = 10.0 if rng.random() < self.mismatch_rate else 0.25
        rows = 4 + len(image.uri) % 5
        noise = rng.normal(size=(rows, self.dimension)) * scale * float(np.linalg.norm(base))
        return mean_pool(base[np.newaxis, :] + noise)


def score_corpus(images: Sequence[CaptionedImage], provider: EmbeddingProvider) -> None:
    """Attach embeddings (where missing) and matching scores in place."""
    for image in images:
        if image.embedding is None:
            image.embedding = np.asarray(provider.embed_image(image), dtype=np.float64)
        if image.embedding.shape != (provider.dimension,):
            raise CorpusError(
                f"image {image.image_id}: embedding dimension "
                f"{image.embedding.shape} != ({provider.dimension},)"
            )
        caption_embedding = provider.embed_text(image.caption)
        image.matching_score = compute_matching_score(image.embedding, caption_embedding)


def load_embedding_sidecar(path: Path | str) -> dict[str, np.ndarray]:
    """Read a JSON-lines sidecar of {"image_id", "embedding"} records."""
    vectors: dict[str, np.ndarray] = {}
    dimension: int | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        vec = np.asarray(record["embedding"], dtype=np.float64)
        if dimension is None:
            dimension = vec.shape[0]
        elif vec.shape[0] != dimension:
            raise CorpusError(f"sidecar line {lineno}: dimension {vec.shape[0]} != {dimension}")
        vectors[record["image_id"]] = vec
    return vectors


def attach_sidecar_embeddings(images: Sequence[CaptionedImage], vectors: Mapping[str, np.ndarray]) -> None:
    for image in images:
        vec = vectors.get(image.image_id)
        if vec is not None:
            image.embedding = np.asarray(vec, dtype=np.float64)


# ---------------------------------------------------------------------------
# workspace files: corpus.jsonl + embeddings.bin with a JSON index
# ---------------------------------------------------------------------------

CORPUS_FILE = "corpus.jsonl"
EMBEDDINGS_FILE = "embeddings.bin"
EMBEDDINGS_INDEX_FILE = "embeddings.index.json"


def save_corpus(images: Sequence[CaptionedImage], directory: Path | str) -> None:
    directory = Path(directory)
    lines = [json.dumps(img.to_record(), sort_keys=True, ensure_ascii=False) for img in images]
    (directory / CORPUS_FILE).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    embedded = [img for img in images if img.embedding is not None]
    if not embedded:
        return
    dims = {img.embedding.shape[0] for img in embedded}
    if len(dims) != 1:
        raise CorpusError(f"mixed embedding dimensions in corpus: {sorted(dims)}")
    matrix = np.stack([img.embedding for img in embedded]).astype(np.float32)
    matrix.tofile(directory / EMBEDDINGS_FILE)
    index = {"dimension": int(matrix.shape[1]), "ids": [img.image_id for img in embedded]}
    (directory / EMBEDDINGS_INDEX_FILE).write_text(
        json.dumps(index, sort_keys=True), encoding="utf-8"
    )


def load_corpus(directory: Path | str) -> list[CaptionedImage]:
    directory = Path(directory)
    images = []
    for line in (directory / CORPUS_FILE).read_text(encoding="utf-8").splitlines():
        if line.strip():
            images.append(CaptionedImage.from_record(json.loads(line)))
    index_path = directory / EMBEDDINGS_INDEX_FILE
    if index_path.exists():
        index = json.loads(index_path.read_text(encoding="utf-8"))
        dimension = index["dimension"]
        matrix = np.fromfile(directory / EMBEDDINGS_FILE, dtype=np.float32).reshape(-1, dimension)
        rows = {image_id: matrix[i] for i, image_id in enumerate(index["ids"])}
        for image in images:
            row = rows.get(image.image_id)
            if row is not None:
                image.embedding = row.astype(np.float64)
    return images
