"""Prompt assembly for conversation generation.

A prompt is rendered from a versioned text template with two slots: the
input-image list for the group being generated, and three in-context
example cases drawn from the seed set. Example selection is uniform over
the unordered triples that satisfy both constraints (at least one
Excellent example; the three together cover all four characteristic
labels).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .clustering import ImageGroup
from .convparse import render_transcript
from .seedset import ALL_CHARACTERISTICS, Quality, SeedExample

REJECTION_CAP = 10_000
TURN_LIMIT_INSTRUCTION = "The number of turns of the dialogue should be less than 6."
CASE_SEPARATOR = "---------"

TEMPLATE_NAME = "prompt_template.txt"
BOOTSTRAP_TEMPLATE_NAME = "prompt_template_bootstrap.txt"


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class ImageTag:
    index: int
    description: str

    def __post_init__(self):
        if self.index < 0:
            raise PromptError(f"image index must be >= 0, got {self.index}")
        if not self.description:
            raise PromptError("image description must be nonempty")

    def render(self) -> str:
        return render_image_tag(self.index, self.description)


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    image_group: ImageGroup
    in_context_examples: tuple[SeedExample, ...]


def render_image_tag(index: int, caption: str, validate: bool = True) -> str:
    """Serialize one image placeholder: ``<img0> a red bicycle </img0>``."""
    if validate:
        if index < 0:
            raise PromptError(f"image index must be >= 0, got {index}")
        if not caption:
            raise PromptError("caption must be nonempty")
        if "<img" in caption or "</img" in caption:
            raise PromptError(f"caption contains reserved substring: {caption!r}")
    return f"<img{index}> {caption} </img{index}>"


def load_template(name: str = TEMPLATE_NAME) -> str:
    return resources.files("chatloom").joinpath("templates", name).read_text(encoding="utf-8")


def _triple_ok(examples: tuple[SeedExample, ...]) -> bool:
    if not any(e.quality is Quality.EXCELLENT for e in examples):
        return False
    covered = frozenset().union(*(e.characteristics for e in examples))
    return covered >= ALL_CHARACTERISTICS


def enumerate_feasible_triples(seed_set: list[SeedExample] | tuple[SeedExample, ...]) -> list[tuple[int, int, int]]:
    """All index triples (i<j<k) satisfying both selection constraints."""
    return [
        (i, j, k)
        for i, j, k in itertools.combinations(range(len(seed_set)), 3)
        if _triple_ok((seed_set[i], seed_set[j], seed_set[k]))
    ]


def _infeasibility_reason(seed_set) -> str:
    if len(seed_set) < 3:
        return f"seed set has only {len(seed_set)} examples; 3 are required"
    if not any(e.quality is Quality.EXCELLENT for e in seed_set):
        return "no seed example is labeled Excellent"
    covered = frozenset().union(*(e.characteristics for e in seed_set))
    missing = ALL_CHARACTERISTICS - covered
    if missing:
        return "seed set covers no example with characteristics: " + ", ".join(
            sorted(c.value for c in missing)
        )
    return "no triple simultaneously includes an Excellent example and covers all four characteristics"


def select_in_context_examples(
    seed_set: list[SeedExample] | tuple[SeedExample, ...], rng_seed: int
) -> tuple[SeedExample, SeedExample, SeedExample]:
    """Draw a uniformly random feasible triple of in-context examples.

    Rejection sampling over unordered triples, falling back to exhaustive
    enumeration after REJECTION_CAP misses so a nearly-infeasible seed set
    still terminates (and a truly infeasible one gets a precise error).
    """
    seed_set = tuple(seed_set)
    if len(seed_set) < 3:
        raise PromptError("infeasible seed set: " + _infeasibility_reason(seed_set))
    rng = np.random.default_rng(rng_seed)
    for _ in range(REJECTION_CAP):
        idx = rng.choice(len(seed_set), size=3, replace=False)
        triple = tuple(seed_set[i] for i in sorted(idx))
        if _triple_ok(triple):
            return triple
    feasible = enumerate_feasible_triples(seed_set)
    if not feasible:
        raise PromptError("infeasible seed set: " + _infeasibility_reason(seed_set))
    i, j, k = feasible[int(rng.integers(len(feasible)))]
    return seed_set[i], seed_set[j], seed_set[k]


def _render_images_block(group: ImageGroup) -> str:
    return "\n".join(
        render_image_tag(i, image.caption) for i, image in enumerate(group.images)
    )


def _render_case(number: int, example: SeedExample) -> str:
    conversation = example.conversation
    roster_tags = "\n".join(
        render_image_tag(index, conversation.roster[index].caption, validate=False)
        for index in sorted(conversation.roster)
    )
    return (
        f"Case {number}:\n"
        f"Input Images:\n{roster_tags}\n"
        f"Output Dialogue:\n{render_transcript(conversation)}"
    )


def build_prompt(
    image_group: ImageGroup,
    examples: tuple[SeedExample, ...] | list[SeedExample],
    template_text: str | None = None,
) -> PromptBundle:
    """Render the full generation prompt for one image group."""
    examples = tuple(examples)
    if len(examples) != 3:
        raise PromptError(f"exactly 3 in-context examples required, got {len(examples)}")
    if not _triple_ok(examples):
        raise PromptError("in-context examples violate the selection constraints")
    template = template_text if template_text is not None else load_template()
    cases = ("\n" + CASE_SEPARATOR + "\n").join(
        _render_case(k + 1, example) for k, example in enumerate(examples)
    )
    text = template.replace("{{images}}", _render_images_block(image_group))
    text = text.replace("{{cases}}", cases)
    return PromptBundle(system_text=text, image_group=image_group, in_context_examples=examples)


def build_bootstrap_prompt(image_group: ImageGroup, template_text: str | None = None) -> PromptBundle:
    """Render the no-examples prompt used before any seed set exists."""
    template = (
        template_text if template_text is not None else load_template(BOOTSTRAP_TEMPLATE_NAME)
    )
    text = template.replace("{{images}}", _render_images_block(image_group))
    return PromptBundle(system_text=text, image_group=image_group, in_context_examples=())
