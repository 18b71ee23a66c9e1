"""Dataset-level metrics: corpus statistics, lexical diversity, per-turn
image placement, and annotation label distributions.

Words are counted on a deliberately simple tokenizer (lowercase,
whitespace split, edge punctuation stripped); image placeholders count as
images, never as words. Lexical diversity sums the distinct-over-total
ratio of word n-grams for n in {2, 3, 4}, with n-grams formed within each
message and pooled across the corpus.
"""

from __future__ import annotations

import csv
import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .convparse import Conversation, Segment, TextSegment
from .seedset import Annotation, Characteristic, ErrorTag, Quality

DIVERSITY_NGRAM_ORDERS = (2, 3, 4)
_EDGE_PUNCT = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokens with edge punctuation stripped."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_EDGE_PUNCT)
        if token:
            tokens.append(token)
    return tokens


def message_text(segments: Sequence[Segment]) -> str:
    """The textual content of a message, image placeholders removed."""
    return " ".join(s.content for s in segments if isinstance(s, TextSegment))


def _message_images(segments: Sequence[Segment]) -> int:
    return sum(1 for s in segments if not isinstance(s, TextSegment))


def diversity_score(texts: Iterable[str]) -> float:
    """Sum over n in {2,3,4} of distinct/total word n-grams, pooled."""
    token_lists = [tokenize(t) for t in texts]
    score = 0.0
    for n in DIVERSITY_NGRAM_ORDERS:
        total = 0
        distinct: set[tuple[str, ...]] = set()
        for tokens in token_lists:
            for i in range(len(tokens) - n + 1):
                distinct.add(tuple(tokens[i : i + n]))
                total += 1
        score += len(distinct) / total if total else 0.0
    return score


@dataclass(frozen=True)
class DiversityReport:
    score_instructions: float
    score_responses: float
    score_overall: float


@dataclass(frozen=True)
class CorpusStats:
    conversation_count: int
    turns_total: int
    images_instruction_total: int
    images_response_total: int
    words_instruction_total: int
    words_response_total: int
    avg_turns: float | None
    avg_images_instructions: float | None
    avg_images_responses: float | None
    avg_images_conversations: float | None
    avg_words_instructions: float | None
    avg_words_responses: float | None
    avg_words_conversations: float | None

    @property
    def images_total(self) -> int:
        return self.images_instruction_total + self.images_response_total

    @property
    def words_total(self) -> int:
        return self.words_instruction_total + self.words_response_total


@dataclass(frozen=True)
class TurnHistogramEntry:
    turn_index: int  # 1-based
    conversations: int  # conversations with at least turn_index turns
    instruction_images: int
    response_images: int

    @property
    def mean_instruction_images(self) -> float:
        return self.instruction_images / self.conversations

    @property
    def mean_response_images(self) -> float:
        return self.response_images / self.conversations


@dataclass(frozen=True)
class AnnotationDistributions:
    count: int
    quality: dict[str, float]
    characteristics: dict[str, float]
    error_tags: dict[str, float]


def corpus_stats(conversations: Sequence[Conversation]) -> CorpusStats:
    n = len(conversations)
    turns_total = 0
    img_instr = img_resp = 0
    words_instr = words_resp = 0
    for conv in conversations:
        turns_total += len(conv.turns)
        for turn in conv.turns:
            img_instr += _message_images(turn.instruction)
            img_resp += _message_images(turn.response)
            words_instr += len(tokenize(message_text(turn.instruction)))
            words_resp += len(tokenize(message_text(turn.response)))
    if n == 0:
        return CorpusStats(0, 0, 0, 0, 0, 0, None, None, None, None, None, None, None)
    avg_img_i = img_instr / n
    avg_img_r = img_resp / n
    avg_words_i = words_instr / n
    avg_words_r = words_resp / n
    return CorpusStats(
        conversation_count=n,
        turns_total=turns_total,
        images_instruction_total=img_instr,
        images_response_total=img_resp,
        words_instruction_total=words_instr,
        words_response_total=words_resp,
        avg_turns=turns_total / n,
        avg_images_instructions=avg_img_i,
        avg_images_responses=avg_img_r,
        # the per-conversation average is defined as the sum of the two
        # sides so the accounting identity holds exactly in floats
        avg_images_conversations=avg_img_i + avg_img_r,
        avg_words_instructions=avg_words_i,
        avg_words_responses=avg_words_r,
        avg_words_conversations=avg_words_i + avg_words_r,
    )


def diversity_report(conversations: Sequence[Conversation]) -> DiversityReport:
    instructions = []
    responses = []
    for conv in conversations:
        for turn in conv.turns:
            instructions.append(message_text(turn.instruction))
            responses.append(message_text(turn.response))
    return DiversityReport(
        score_instructions=diversity_score(instructions),
        score_responses=diversity_score(responses),
        score_overall=diversity_score(instructions + responses),
    )


def per_turn_image_histogram(conversations: Sequence[Conversation]) -> list[TurnHistogramEntry]:
    if not conversations:
        return []
    max_turns = max(len(c.turns) for c in conversations)
    entries = []
    for i in range(1, max_turns + 1):
        eligible = [c for c in conversations if len(c.turns) >= i]
        entries.append(
            TurnHistogramEntry(
                turn_index=i,
                conversations=len(eligible),
                instruction_images=sum(_message_images(c.turns[i - 1].instruction) for c in eligible),
                response_images=sum(_message_images(c.turns[i - 1].response) for c in eligible),
            )
        )
    return entries


def annotation_distributions(annotations: Sequence[Annotation]) -> AnnotationDistributions:
    n = len(annotations)
    if n == 0:
        return AnnotationDistributions(count=0, quality={}, characteristics={}, error_tags={})
    quality = {
        q.value: sum(1 for a in annotations if a.quality is q) / n for q in Quality
    }
    characteristics = {
        c.value: sum(1 for a in annotations if c in a.characteristics) / n
        for c in Characteristic
    }
    error_tags = {
        t.value: sum(1 for a in annotations if t in a.error_tags) / n for t in ErrorTag
    }
    return AnnotationDistributions(
        count=n, quality=quality, characteristics=characteristics, error_tags=error_tags
    )


# -- report assembly and export ---------------------------------------------


def compute_stats(
    conversations: Sequence[Conversation],
    annotations: Sequence[Annotation] | None = None,
) -> dict:
    stats = corpus_stats(conversations)
    diversity = diversity_report(conversations)
    histogram = per_turn_image_histogram(conversations)
    report = {
        "corpus": {
            "conversation_count": stats.conversation_count,
            "turns_total": stats.turns_total,
            "images_instruction_total": stats.images_instruction_total,
            "images_response_total": stats.images_response_total,
            "images_total": stats.images_total,
            "words_instruction_total": stats.words_instruction_total,
            "words_response_total": stats.words_response_total,
            "words_total": stats.words_total,
            "avg_turns": stats.avg_turns,
            "avg_images_instructions": stats.avg_images_instructions,
            "avg_images_responses": stats.avg_images_responses,
            "avg_images_conversations": stats.avg_images_conversations,
            "avg_words_instructions": stats.avg_words_instructions,
            "avg_words_responses": stats.avg_words_responses,
            "avg_words_conversations": stats.avg_words_conversations,
        },
        "diversity": {
            "instructions": diversity.score_instructions,
            "responses": diversity.score_responses,
            "overall": diversity.score_overall,
        },
        "per_turn_images": [
            {
                "turn_index": e.turn_index,
                "conversations": e.conversations,
                "instruction_images": e.instruction_images,
                "response_images": e.response_images,
                "mean_instruction_images": e.mean_instruction_images,
                "mean_response_images": e.mean_response_images,
            }
            for e in histogram
        ],
        "metadata": {
            "word_counting": (
                "lowercase whitespace tokens with edge punctuation stripped; "
                "image placeholders are excluded from word counts"
            ),
        },
    }
    if annotations is not None:
        dist = annotation_distributions(annotations)
        report["annotations"] = {
            "count": dist.count,
            "quality": dist.quality,
            "characteristics": dist.characteristics,
            "error_tags": dist.error_tags,
        }
    return report


def save_stats(report: dict, path: Path | str) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def export_csvs(report: dict, directory: Path | str) -> list[Path]:
    """Write one CSV per report section; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    corpus_path = directory / "corpus_stats.csv"
    with open(corpus_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key, value in sorted(report["corpus"].items()):
            writer.writerow([key, "" if value is None else value])
    written.append(corpus_path)

    diversity_path = directory / "diversity.csv"
    with open(diversity_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice", "score"])
        for key in ("instructions", "responses", "overall"):
            writer.writerow([key, report["diversity"][key]])
    written.append(diversity_path)

    histogram_path = directory / "per_turn_images.csv"
    with open(histogram_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "turn_index",
                "conversations",
                "instruction_images",
                "response_images",
                "mean_instruction_images",
                "mean_response_images",
            ]
        )
        for entry in report["per_turn_images"]:
            writer.writerow([entry[k] for k in (
                "turn_index",
                "conversations",
                "instruction_images",
                "response_images",
                "mean_instruction_images",
                "mean_response_images",
            )])
    written.append(histogram_path)

    if "annotations" in report:
        annotations_path = directory / "annotations.csv"
        with open(annotations_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "label", "fraction"])
            dist = report["annotations"]
            for group in ("quality", "characteristics", "error_tags"):
                for label, fraction in sorted(dist[group].items()):
                    writer.writerow([group, label, fraction])
        written.append(annotations_path)
    return written
