"""Structured parsing of generated dialogue transcripts.

A transcript is lines of ``Human:`` / ``Assistant:`` messages whose text may
interleave image placeholders of the form ``<imgX> DESCRIPTION </imgX>``.
Parsing is total: any input yields either a Conversation or a list of
defects (or a Conversation plus tag defects); it never raises on transcript
content. Defects are data for the filtering stage, not exceptions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

TAG_TOKEN_RE = re.compile(r"<(/?)img(\d+)>")
SPEAKER_RE = re.compile(r"^\s*(Human|Assistant):[ \t]?")


@dataclass(frozen=True)
class TextSegment:
    content: str
    span: tuple[int, int]  # character offsets into the message


@dataclass(frozen=True)
class ImageRefSegment:
    index: int
    description: str  # verbatim, minus the single framing spaces
    span: tuple[int, int]


Segment = Union[TextSegment, ImageRefSegment]


@dataclass
class Turn:
    instruction: list[Segment]
    response: list[Segment]


@dataclass(frozen=True)
class RosterEntry:
    image_id: str
    caption: str
    uri: str = ""


@dataclass(frozen=True)
class Provenance:
    prompt_fingerprint: str = ""
    cluster_id: int | None = None
    generated_at: str = ""
    truncated: bool = False
    model: str = ""


@dataclass
class Conversation:
    conversation_id: str
    turns: list[Turn]
    roster: dict[int, RosterEntry]
    provenance: Provenance = field(default_factory=Provenance)

    def image_refs(self) -> list[tuple[int, str, ImageRefSegment]]:
        """All image references as (turn number from 1, side, segment)."""
        refs = []
        for turn_no, turn in enumerate(self.turns, start=1):
            for side, segments in (("instruction", turn.instruction), ("response", turn.response)):
                for segment in segments:
                    if isinstance(segment, ImageRefSegment):
                        refs.append((turn_no, side, segment))
        return refs


@dataclass(frozen=True)
class ParseDefect:
    kind: str
    detail: str
    span: tuple[int, int] | None = None

    STRUCTURAL_KINDS = frozenset(
        {
            "no_messages",
            "text_outside_turns",
            "first_speaker_not_human",
            "non_alternating_speakers",
            "unanswered_final_instruction",
            "empty_message",
        }
    )

    @property
    def structural(self) -> bool:
        return self.kind in self.STRUCTURAL_KINDS


@dataclass
class ParseResult:
    conversation_id: str
    conversation: Conversation | None
    defects: list[ParseDefect]

    @property
    def ok(self) -> bool:
        return self.conversation is not None


def make_roster(images, uris: bool = True) -> dict[int, RosterEntry]:
    """Index an image group 0..n-1 for prompt rendering and validation."""
    return {
        i: RosterEntry(image_id=img.image_id, caption=img.caption, uri=img.uri if uris else "")
        for i, img in enumerate(images)
    }


def _validate_roster(roster: dict[int, RosterEntry]) -> None:
    if sorted(roster) != list(range(len(roster))):
        raise ValueError(f"roster indices must be exactly 0..n-1, got {sorted(roster)}")


# ---------------------------------------------------------------------------
# image-tag extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageTagMatch:
    index: int
    description: str
    span: tuple[int, int]


@dataclass
class TagExtraction:
    tags: list[ImageTagMatch]
    defects: list[ParseDefect]


def _strip_framing(content: str) -> str:
    if content.startswith(" "):
        content = content[1:]
    if content.endswith(" "):
        content = content[:-1]
    return content


def extract_image_tags(text: str) -> TagExtraction:
    """Scan left to right for well-formed ``<imgX> ... </imgX>`` tags.

    Malformed fragments (unclosed opens, mismatched close indices, stray
    closes) become defects with spans instead of tags.
    """
    tags: list[ImageTagMatch] = []
    defects: list[ParseDefect] = []
    pending: tuple[int, int, int] | None = None  # (index, open_start, open_end)

    for token in TAG_TOKEN_RE.finditer(text):
        closing, index = token.group(1) == "/", int(token.group(2))
        if not closing:
            if pending is not None:
                defects.append(
                    ParseDefect(
                        kind="unclosed_tag",
                        detail=f"<img{pending[0]}> opened again before being closed",
                        span=(pending[1], token.start()),
                    )
                )
            pending = (index, token.start(), token.end())
        else:
            if pending is None:
                defects.append(
                    ParseDefect(
                        kind="unmatched_close_tag",
                        detail=f"</img{index}> without a matching open tag",
                        span=token.span(),
                    )
                )
            elif pending[0] != index:
                defects.append(
                    ParseDefect(
                        kind="mismatched_close_index",
                        detail=f"<img{pending[0]}> closed by </img{index}>",
                        span=(pending[1], token.end()),
                    )
                )
                pending = None
            else:
                tags.append(
                    ImageTagMatch(
                        index=index,
                        description=_strip_framing(text[pending[2] : token.start()]),
                        span=(pending[1], token.end()),
                    )
                )
                pending = None
    if pending is not None:
        defects.append(
            ParseDefect(
                kind="unclosed_tag",
                detail=f"<img{pending[0]}> never closed",
                span=(pending[1], len(text)),
            )
        )
    return TagExtraction(tags=tags, defects=defects)


def segment_message(text: str) -> tuple[list[Segment], list[ParseDefect]]:
    """Split one message into text and image-reference segments.

    Segment spans tile the message exactly; whitespace-only gaps between
    tags are absorbed into the neighboring segment's span so no segment is
    blank after trimming.
    """
    extraction = extract_image_tags(text)
    pieces: list[Segment] = []
    cursor = 0
    for tag in extraction.tags:
        start, end = tag.span
        if start > cursor:
            pieces.append(TextSegment(content=text[cursor:start], span=(cursor, start)))
        pieces.append(ImageRefSegment(index=tag.index, description=tag.description, span=tag.span))
        cursor = end
    if cursor < len(text):
        pieces.append(TextSegment(content=text[cursor:], span=(cursor, len(text))))

    segments: list[Segment] = []
    lead_start: int | None = None  # open span start of pending leading whitespace
    for piece in pieces:
        if isinstance(piece, TextSegment) and not piece.content.strip():
            if segments:
                segments[-1] = _widen(segments[-1], end=piece.span[1], suffix=piece.content)
            elif lead_start is None:
                lead_start = piece.span[0]
        else:
            if lead_start is not None:
                piece = _widen(piece, start=lead_start, prefix=text[lead_start : piece.span[0]])
                lead_start = None
            segments.append(piece)
    return segments, extraction.defects


def _widen(segment: Segment, *, start=None, end=None, prefix="", suffix="") -> Segment:
    span = (segment.span[0] if start is None else start, segment.span[1] if end is None else end)
    if isinstance(segment, TextSegment):
        return TextSegment(content=prefix + segment.content + suffix, span=span)
    return ImageRefSegment(index=segment.index, description=segment.description, span=span)


# ---------------------------------------------------------------------------
# transcript parsing
# ---------------------------------------------------------------------------


def _split_messages(text: str) -> tuple[list[tuple[str, str]], list[ParseDefect]]:
    messages: list[tuple[str, list[str]]] = []
    defects: list[ParseDefect] = []
    preamble: list[str] = []
    for line in text.split("\n"):
        marker = SPEAKER_RE.match(line)
        if marker:
            messages.append((marker.group(1), [line[marker.end() :]]))
        elif messages:
            messages[-1][1].append(line)
        else:
            preamble.append(line)
    if any(line.strip() for line in preamble):
        defects.append(
            ParseDefect(kind="text_outside_turns", detail="content before the first speaker marker")
        )
    return [(speaker, "\n".join(lines)) for speaker, lines in messages], defects


def parse_transcript(
    text: str,
    roster: dict[int, RosterEntry],
    *,
    conversation_id: str = "",
    provenance: Provenance | None = None,
) -> ParseResult:
    """Parse a raw dialogue into a Conversation, or into defects.

    Structural problems (bad speaker alternation, empty or unpaired
    messages) block conversation construction; malformed image tags do not,
    they ride along as defects for the filter stage.
    """
    _validate_roster(roster)
    messages, defects = _split_messages(text)

    if not messages:
        defects.append(ParseDefect(kind="no_messages", detail="no speaker-marked lines found"))
    else:
        if messages[0][0] != "Human":
            defects.append(
                ParseDefect(kind="first_speaker_not_human", detail="first speaker not Human")
            )
        for i in range(1, len(messages)):
            if messages[i][0] == messages[i - 1][0]:
                defects.append(
                    ParseDefect(
                        kind="non_alternating_speakers",
                        detail=f"consecutive {messages[i][0]} messages at position {i}",
                    )
                )
        if len(messages) % 2 == 1 and messages[-1][0] == "Human":
            defects.append(
                ParseDefect(kind="unanswered_final_instruction", detail="unanswered final instruction")
            )

    parsed: list[tuple[str, list[Segment]]] = []
    for speaker, message in messages:
        segments, tag_defects = segment_message(message)
        defects.extend(tag_defects)
        if not segments:
            defects.append(
                ParseDefect(kind="empty_message", detail=f"{speaker} message is empty after trimming")
            )
        parsed.append((speaker, segments))

    if any(d.structural for d in defects):
        return ParseResult(conversation_id=conversation_id, conversation=None, defects=defects)

    turns = [
        Turn(instruction=parsed[i][1], response=parsed[i + 1][1])
        for i in range(0, len(parsed), 2)
    ]
    conversation = Conversation(
        conversation_id=conversation_id,
        turns=turns,
        roster=dict(roster),
        provenance=provenance or Provenance(),
    )
    return ParseResult(conversation_id=conversation_id, conversation=conversation, defects=defects)


# ---------------------------------------------------------------------------
# rendering and serialization
# ---------------------------------------------------------------------------


def render_segments(segments: Iterable[Segment]) -> str:
    from .promptkit import render_image_tag  # local import; promptkit depends on us

    parts = []
    for segment in segments:
        if isinstance(segment, TextSegment):
            parts.append(segment.content)
        else:
            parts.append(render_image_tag(segment.index, segment.description, validate=False))
    return "".join(parts)


def render_transcript(conversation: Conversation) -> str:
    lines = []
    for turn in conversation.turns:
        lines.append("Human: " + render_segments(turn.instruction))
        lines.append("Assistant: " + render_segments(turn.response))
    return "\n".join(lines)


def _segment_to_dict(segment: Segment) -> dict:
    if isinstance(segment, TextSegment):
        return {"type": "text", "content": segment.content, "span": list(segment.span)}
    return {
        "type": "image",
        "index": segment.index,
        "description": segment.description,
        "span": list(segment.span),
    }


def _segment_from_dict(d: dict) -> Segment:
    span = tuple(d["span"])
    if d["type"] == "text":
        return TextSegment(content=d["content"], span=span)
    return ImageRefSegment(index=d["index"], description=d["description"], span=span)


def conversation_to_dict(conversation: Conversation) -> dict:
    return {
        "conversation_id": conversation.conversation_id,
        "turns": [
            {
                "instruction": [_segment_to_dict(s) for s in turn.instruction],
                "response": [_segment_to_dict(s) for s in turn.response],
            }
            for turn in conversation.turns
        ],
        "roster": {
            str(i): {"image_id": e.image_id, "caption": e.caption, "uri": e.uri}
            for i, e in sorted(conversation.roster.items())
        },
        "provenance": {
            "prompt_fingerprint": conversation.provenance.prompt_fingerprint,
            "cluster_id": conversation.provenance.cluster_id,
            "generated_at": conversation.provenance.generated_at,
            "truncated": conversation.provenance.truncated,
            "model": conversation.provenance.model,
        },
    }


def conversation_from_dict(d: dict) -> Conversation:
    prov = d.get("provenance", {})
    return Conversation(
        conversation_id=d["conversation_id"],
        turns=[
            Turn(
                instruction=[_segment_from_dict(s) for s in turn["instruction"]],
                response=[_segment_from_dict(s) for s in turn["response"]],
            )
            for turn in d["turns"]
        ],
        roster={
            int(i): RosterEntry(
                image_id=e["image_id"], caption=e["caption"], uri=e.get("uri", "")
            )
            for i, e in d["roster"].items()
        },
        provenance=Provenance(
            prompt_fingerprint=prov.get("prompt_fingerprint", ""),
            cluster_id=prov.get("cluster_id"),
            generated_at=prov.get("generated_at", ""),
            truncated=prov.get("truncated", False),
            model=prov.get("model", ""),
        ),
    )


def dump_conversations(conversations: Sequence[Conversation], path) -> None:
    lines = [
        json.dumps(conversation_to_dict(c), sort_keys=True, ensure_ascii=False)
        for c in conversations
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_conversations(path) -> list[Conversation]:
    return [
        conversation_from_dict(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
