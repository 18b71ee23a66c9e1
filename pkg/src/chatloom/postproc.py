"""Rule-based quality filters over parsed conversations.

Two content rules (description drift above a normalized edit-distance
threshold, references to images outside the provided list) plus format
rules (parser defects, duplicated image tags, turn-count cap, truncated
generations). Every check contributes evidence; a conversation is
rejected exactly when at least one piece of evidence exists, and all
reasons are collected rather than stopping at the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .convparse import Conversation, ParseDefect, ParseResult

DRIFT_THRESHOLD = 0.1
MAX_TURNS = 5


class FilterReason(str, Enum):
    DESCRIPTION_DRIFT = "DescriptionDrift"
    UNKNOWN_IMAGE = "UnknownImage"
    DUPLICATE_IMAGE_COPY = "DuplicateImageCopy"
    INVALID_TAG = "InvalidTag"
    ALTERNATION_ERROR = "AlternationError"
    TURN_LIMIT_EXCEEDED = "TurnLimitExceeded"
    TRUNCATED_OUTPUT = "TruncatedOutput"


@dataclass(frozen=True)
class Evidence:
    reason: FilterReason
    detail: str
    span: tuple[int, int] | None = None
    distance: float | None = None
    image_index: int | None = None

    def sort_key(self):
        return (self.reason.value, self.span or (-1, -1), self.detail)


@dataclass(frozen=True)
class FilterVerdict:
    conversation_id: str
    status: str  # "Pass" | "Reject"
    reasons: tuple[FilterReason, ...]
    evidence: tuple[Evidence, ...] = ()

    def __post_init__(self):
        rejected = self.status == "Reject"
        if rejected != bool(self.reasons):
            raise ValueError("status must be Reject exactly when reasons are nonempty")

    @property
    def passed(self) -> bool:
        return self.status == "Pass"


def levenshtein_distance(a: str, b: str) -> int:
    """Character-level edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(b) < len(a):
        a, b = b, a
    a_codes = np.frombuffer(a.encode("utf-32-le"), dtype=np.uint32)
    b_codes = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    offsets = np.arange(a_codes.size + 1, dtype=np.int64)
    prev = offsets.copy()
    cur = np.empty_like(prev)
    for i in range(b_codes.size):
        cur[0] = i + 1
        np.minimum(prev[:-1] + (a_codes != b_codes[i]), prev[1:] + 1, out=cur[1:])
        # close the left-to-right insertion dependency in one vector pass:
        # cur[j] := j + min_{k<=j}(cur[k] - k)
        cur -= offsets
        np.minimum.accumulate(cur, out=cur)
        cur += offsets
        prev, cur = cur, prev
    return int(prev[-1])


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein distance scaled by the longer length; 0.0 when both empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein_distance(a, b) / longest


def check_description_drift(conv: Conversation, threshold: float = DRIFT_THRESHOLD) -> list[Evidence]:
    """Flag image descriptions that drifted from the roster caption."""
    evidence = []
    for _turn, _side, segment in conv.image_refs():
        entry = conv.roster.get(segment.index)
        if entry is None:
            continue  # out-of-roster refs belong to the unknown-image check
        distance = normalized_edit_distance(entry.caption, segment.description)
        if distance > threshold:
            evidence.append(
                Evidence(
                    reason=FilterReason.DESCRIPTION_DRIFT,
                    detail=(
                        f"img{segment.index} description drifted from caption "
                        f"(normalized distance {distance:.4f} > {threshold})"
                    ),
                    span=segment.span,
                    distance=distance,
                    image_index=segment.index,
                )
            )
    return evidence


def check_unknown_images(conv: Conversation) -> list[Evidence]:
    """Flag image references whose index is not in the provided list."""
    evidence = []
    for _turn, _side, segment in conv.image_refs():
        if segment.index not in conv.roster:
            evidence.append(
                Evidence(
                    reason=FilterReason.UNKNOWN_IMAGE,
                    detail=f"img{segment.index} is not among the provided input images",
                    span=segment.span,
                    image_index=segment.index,
                )
            )
    return evidence


def _promote_parse_defects(defects: Iterable[ParseDefect]) -> list[Evidence]:
    evidence = []
    for defect in defects:
        reason = (
            FilterReason.ALTERNATION_ERROR if defect.structural else FilterReason.INVALID_TAG
        )
        evidence.append(
            Evidence(reason=reason, detail=f"{defect.kind}: {defect.detail}", span=defect.span)
        )
    return evidence


def check_format(
    result: ParseResult | Conversation,
    max_turns: int = MAX_TURNS,
) -> list[Evidence]:
    """Promote parser defects and apply the structural policy rules."""
    if isinstance(result, ParseResult):
        evidence = _promote_parse_defects(result.defects)
        conv = result.conversation
    else:
        evidence = []
        conv = result
    if conv is None:
        return evidence
    seen: dict[int, int] = {}
    for _turn, _side, segment in conv.image_refs():
        seen[segment.index] = seen.get(segment.index, 0) + 1
    for index in sorted(seen):
        if seen[index] > 1:
            evidence.append(
                Evidence(
                    reason=FilterReason.DUPLICATE_IMAGE_COPY,
                    detail=f"img{index} appears as a tag {seen[index]} times; images must not be copied",
                    image_index=index,
                )
            )
    if len(conv.turns) > max_turns:
        evidence.append(
            Evidence(
                reason=FilterReason.TURN_LIMIT_EXCEEDED,
                detail=f"conversation has {len(conv.turns)} turns; at most {max_turns} allowed",
            )
        )
    return evidence


def check_truncation(truncated: bool) -> list[Evidence]:
    if not truncated:
        return []
    return [
        Evidence(
            reason=FilterReason.TRUNCATED_OUTPUT,
            detail="generation stopped at the output-length limit",
        )
    ]


def run_filter_pipeline(
    result: ParseResult,
    truncated: bool = False,
    drift_threshold: float = DRIFT_THRESHOLD,
    max_turns: int = MAX_TURNS,
) -> FilterVerdict:
    """Run every check and aggregate all evidence into one verdict."""
    evidence: list[Evidence] = []
    evidence.extend(check_format(result, max_turns=max_turns))
    evidence.extend(check_truncation(truncated))
    if result.conversation is not None:
        evidence.extend(check_unknown_images(result.conversation))
        evidence.extend(check_description_drift(result.conversation, threshold=drift_threshold))
    evidence.sort(key=Evidence.sort_key)
    reasons = tuple(sorted({e.reason for e in evidence}, key=lambda r: r.value))
    return FilterVerdict(
        conversation_id=result.conversation_id,
        status="Reject" if reasons else "Pass",
        reasons=reasons,
        evidence=tuple(evidence),
    )


def filter_batch(
    results: Sequence[ParseResult],
    truncated_flags: Sequence[bool] | None = None,
    drift_threshold: float = DRIFT_THRESHOLD,
    max_turns: int = MAX_TURNS,
) -> list[FilterVerdict]:
    flags = truncated_flags if truncated_flags is not None else [False] * len(results)
    if len(flags) != len(results):
        raise ValueError("truncated_flags must align with results")
    return [
        run_filter_pipeline(r, truncated=t, drift_threshold=drift_threshold, max_turns=max_turns)
        for r, t in zip(results, flags)
    ]


# -- serialization ----------------------------------------------------------


def verdict_to_dict(verdict: FilterVerdict) -> dict:
    return {
        "conversation_id": verdict.conversation_id,
        "status": verdict.status,
        "reasons": [r.value for r in verdict.reasons],
        "evidence": [
            {
                "reason": e.reason.value,
                "detail": e.detail,
                "span": list(e.span) if e.span is not None else None,
                "distance": e.distance,
                "image_index": e.image_index,
            }
            for e in verdict.evidence
        ],
    }


def verdict_from_dict(record: dict) -> FilterVerdict:
    return FilterVerdict(
        conversation_id=record["conversation_id"],
        status=record["status"],
        reasons=tuple(FilterReason(r) for r in record["reasons"]),
        evidence=tuple(
            Evidence(
                reason=FilterReason(e["reason"]),
                detail=e["detail"],
                span=tuple(e["span"]) if e.get("span") else None,
                distance=e.get("distance"),
                image_index=e.get("image_index"),
            )
            for e in record.get("evidence", [])
        ),
    )


def dump_verdicts(verdicts: Iterable[FilterVerdict], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for verdict in verdicts:
            fh.write(json.dumps(verdict_to_dict(verdict), sort_keys=True, ensure_ascii=False) + "\n")


def load_verdicts(path: Path | str) -> list[FilterVerdict]:
    verdicts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            verdicts.append(verdict_from_dict(json.loads(line)))
    return verdicts
