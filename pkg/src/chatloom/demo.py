"""Synthetic caption corpus for demos and end-to-end tests.

Captions are drawn from a handful of topic word pools so that embedding
and clustering stages have real structure to find, without shipping any
image bytes. Everything is a pure function of the seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

TOPIC_POOLS: tuple[dict, ...] = (
    {
        "name": "bicycles",
        "adjectives": ["red", "vintage", "rusty", "folding"],
        "nouns": ["bicycle", "tandem bicycle", "delivery bike"],
        "contexts": [
            "leaning against a brick wall",
            "parked by the canal",
            "on a cobbled street at dawn",
        ],
    },
    {
        "name": "harbors",
        "adjectives": ["small", "busy", "foggy", "quiet"],
        "nouns": ["fishing boat", "sailboat", "ferry"],
        "contexts": [
            "moored at the old pier",
            "entering the harbor at sunset",
            "waiting beside the lighthouse",
        ],
    },
    {
        "name": "markets",
        "adjectives": ["crowded", "covered", "open-air", "night"],
        "nouns": ["market stall", "fruit stand", "flower shop"],
        "contexts": [
            "full of fresh produce",
            "under striped awnings",
            "lit by paper lanterns",
        ],
    },
    {
        "name": "mountains",
        "adjectives": ["snowy", "jagged", "distant", "green"],
        "nouns": ["mountain ridge", "alpine meadow", "hiking trail"],
        "contexts": [
            "above the cloud line",
            "reflected in a glacial lake",
            "crossed by a wooden bridge",
        ],
    },
    {
        "name": "kitchens",
        "adjectives": ["sunlit", "tiny", "professional", "farmhouse"],
        "nouns": ["kitchen counter", "bread oven", "copper pot"],
        "contexts": [
            "covered in flour",
            "ready for the dinner rush",
            "next to a bowl of lemons",
        ],
    },
    {
        "name": "libraries",
        "adjectives": ["quiet", "grand", "cluttered", "modern"],
        "nouns": ["reading room", "bookshelf", "card catalog"],
        "contexts": [
            "with tall arched windows",
            "stacked to the ceiling",
            "beside a green desk lamp",
        ],
    },
    {
        "name": "deserts",
        "adjectives": ["vast", "red", "windswept", "silent"],
        "nouns": ["sand dune", "desert road", "rock arch"],
        "contexts": [
            "under a full moon",
            "stretching to the horizon",
            "after a rare rainstorm",
        ],
    },
    {
        "name": "trains",
        "adjectives": ["old", "electric", "narrow-gauge", "express"],
        "nouns": ["steam locomotive", "railway platform", "dining car"],
        "contexts": [
            "leaving the mountain station",
            "crossing a stone viaduct",
            "waiting in the morning mist",
        ],
    },
)


def demo_rows(count: int = 200, seed: int = 0, topics: int = len(TOPIC_POOLS)) -> list[tuple[str, str]]:
    """(uri, caption) pairs cycling through the topic pools."""
    if topics < 1 or topics > len(TOPIC_POOLS):
        raise ValueError(f"topics must be in 1..{len(TOPIC_POOLS)}")
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        pool = TOPIC_POOLS[i % topics]
        caption = "a {} {} {}".format(
            pool["adjectives"][int(rng.integers(len(pool["adjectives"])))],
            pool["nouns"][int(rng.integers(len(pool["nouns"])))],
            pool["contexts"][int(rng.integers(len(pool["contexts"])))],
        )
        uri = f"https://images.example/{pool['name']}/{i:05d}.jpg"
        rows.append((uri, caption))
    return rows


def write_demo_tsv(path: Path | str, count: int = 200, seed: int = 0, topics: int = len(TOPIC_POOLS)) -> Path:
    path = Path(path)
    lines = [f"{caption}\t{uri}" for uri, caption in demo_rows(count, seed, topics)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
