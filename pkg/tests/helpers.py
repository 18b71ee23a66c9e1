"""Shared builders for synthetic conversations, seed examples, and clusters."""

from __future__ import annotations

import numpy as np

from chatloom.clustering import TopicCluster
from chatloom.convparse import (
    Conversation,
    ImageRefSegment,
    RosterEntry,
    Segment,
    TextSegment,
    Turn,
)
from chatloom.corpus import CaptionedImage, stable_image_id
from chatloom.seedset import Characteristic, Quality, SeedExample


def build_message(*parts) -> list[Segment]:
    """Segments from strings and (index, description) pairs.

    Spans are computed as if the message had been rendered and re-parsed,
    so they tile the underlying text exactly.
    """
    segments: list[Segment] = []
    cursor = 0
    for part in parts:
        if isinstance(part, str):
            segments.append(TextSegment(content=part, span=(cursor, cursor + len(part))))
            cursor += len(part)
        else:
            index, description = part
            width = len(f"<img{index}> {description} </img{index}>")
            segments.append(
                ImageRefSegment(index=index, description=description, span=(cursor, cursor + width))
            )
            cursor += width
    return segments


def make_roster(captions) -> dict[int, RosterEntry]:
    return {
        i: RosterEntry(
            image_id=stable_image_id(f"https://img.example/{i}-{caption}"),
            caption=caption,
            uri=f"https://img.example/{i}.jpg",
        )
        for i, caption in enumerate(captions)
    }


def make_conversation(conversation_id: str, captions, turn_specs) -> Conversation:
    """``turn_specs`` is a list of (instruction_parts, response_parts)."""
    turns = [
        Turn(instruction=build_message(*instruction), response=build_message(*response))
        for instruction, response in turn_specs
    ]
    return Conversation(
        conversation_id=conversation_id, turns=turns, roster=make_roster(captions)
    )


def simple_conversation(conversation_id: str, captions=("a red bicycle", "an old harbor")) -> Conversation:
    """A clean two-turn conversation that passes every filter."""
    specs = [
        (
            ("Tell me about these two pictures.",),
            ("Happily. The first shows ", (0, captions[0]), " in detail."),
        ),
        (
            ("And the second one?",),
            ("That one is ", (1, captions[1]), ", my favorite of the pair."),
        ),
    ]
    return make_conversation(conversation_id, list(captions), specs)


def make_seed_example(
    conversation_id: str,
    quality: Quality = Quality.EXCELLENT,
    characteristics=(Characteristic.IMAGE_CREATION,),
    captions=("a red bicycle", "an old harbor"),
    iteration: int = 1,
) -> SeedExample:
    return SeedExample(
        conversation=simple_conversation(conversation_id, captions),
        quality=quality,
        characteristics=frozenset(characteristics),
        annotator="tester",
        iteration=iteration,
    )


def make_images(count: int, prefix: str = "cap") -> list[CaptionedImage]:
    images = []
    for i in range(count):
        uri = f"https://img.example/{prefix}/{i:04d}.jpg"
        images.append(
            CaptionedImage(
                image_id=stable_image_id(uri),
                uri=uri,
                caption=f"{prefix} subject number {i} on a plain background",
            )
        )
    return images


def make_cluster(cluster_id: int, images, dim: int = 4) -> TopicCluster:
    return TopicCluster(
        cluster_id=cluster_id,
        centroid=np.zeros(dim),
        member_ids=tuple(sorted(img.image_id for img in images)),
    )


def twelve_example_seed_set() -> list[SeedExample]:
    """Seed set whose feasible in-context triples are exactly (0, 1, x).

    Example 0 is the only holder of ImageCreation and example 1 the only
    holder of ImageComparison, both Satisfactory, so a feasible triple must
    contain both plus one of the ten Excellent examples for x.
    """
    two = [Characteristic.INTRINSIC_IMAGE_UNDERSTANDING, Characteristic.EXTRINSIC_IMAGE_UNDERSTANDING]
    examples = [
        make_seed_example(
            "seed-000",
            Quality.SATISFACTORY,
            (Characteristic.IMAGE_CREATION, Characteristic.INTRINSIC_IMAGE_UNDERSTANDING),
            captions=("a red bicycle", "a blue bicycle"),
        ),
        make_seed_example(
            "seed-001",
            Quality.SATISFACTORY,
            (Characteristic.IMAGE_COMPARISON, Characteristic.EXTRINSIC_IMAGE_UNDERSTANDING),
            captions=("an old harbor", "a busy market"),
        ),
    ]
    for i in range(2, 12):
        chars = [two[i % 2]] if i % 3 else two
        examples.append(
            make_seed_example(
                f"seed-{i:03d}",
                Quality.EXCELLENT,
                chars,
                captions=(f"a quiet street number {i}", f"a tall tower number {i}"),
            )
        )
    return examples


def gaussian_blobs(
    n_per_blob: int = 50,
    centers=((0.0, 0.0), (10.0, 10.0), (-10.0, 12.0)),
    std: float = 0.5,
    seed: int = 7,
) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    """Well-separated blobs as (id -> vector, id -> generating label)."""
    rng = np.random.default_rng(seed)
    embeddings: dict[str, np.ndarray] = {}
    labels: dict[str, int] = {}
    for blob, center in enumerate(centers):
        points = rng.normal(loc=center, scale=std, size=(n_per_blob, len(center)))
        for i, point in enumerate(points):
            key = f"b{blob}p{i:03d}"
            embeddings[key] = point
            labels[key] = blob
    return embeddings, labels


def purity(clusters, labels: dict[str, int]) -> float:
    """Fraction of points whose cluster's majority generating label is theirs."""
    agreeing = 0
    total = 0
    for cluster in clusters:
        if not cluster.member_ids:
            continue
        votes: dict[int, int] = {}
        for member in cluster.member_ids:
            votes[labels[member]] = votes.get(labels[member], 0) + 1
        agreeing += max(votes.values())
        total += len(cluster.member_ids)
    return agreeing / total


class ScriptedGenerator:
    """BatchGenerator stub yielding fresh deterministic conversations."""

    def __init__(self, overflow: int = 0, prefix: str = "gen"):
        self.overflow = overflow
        self.prefix = prefix
        self.calls = 0
        self.seen_seed_sizes: list[int] = []

    def generate_filtered(self, count: int, seed_examples):
        self.calls += 1
        self.seen_seed_sizes.append(len(seed_examples))
        conversations = [
            simple_conversation(f"{self.prefix}-{self.calls}-{i}") for i in range(count)
        ]
        return conversations, self.overflow
