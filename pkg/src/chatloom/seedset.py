"""Annotated-conversation store and the iterative refinement protocol.

The seed set grows through generate -> annotate -> promote rounds: each
round generates a batch of filtered conversations, a human assigns one
quality label (Excellent / Satisfactory / Poor) plus characteristic labels,
and everything not Poor is promoted into the seed set. After a fixed number
of rounds the set freezes and only serves read queries.

Persistence is an append-only JSON-lines event log (``annotations.log``)
replayed on load, plus a rewritten ``seedset.jsonl`` projection.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .convparse import Conversation, conversation_from_dict, conversation_to_dict


class SeedsetError(ValueError):
    pass


class Quality(str, Enum):
    EXCELLENT = "Excellent"
    SATISFACTORY = "Satisfactory"
    POOR = "Poor"


class Characteristic(str, Enum):
    IMAGE_CREATION = "ImageCreation"
    IMAGE_COMPARISON = "ImageComparison"
    INTRINSIC_IMAGE_UNDERSTANDING = "IntrinsicImageUnderstanding"
    EXTRINSIC_IMAGE_UNDERSTANDING = "ExtrinsicImageUnderstanding"


class ErrorTag(str, Enum):
    IMG_CAP_MISMATCH = "ImgCapMismatch"
    INCOHERENCE = "Incoherence"
    HALLUCINATION = "Hallucination"


ALL_CHARACTERISTICS = frozenset(Characteristic)


@dataclass(frozen=True)
class Annotation:
    conversation_id: str
    quality: Quality
    characteristics: frozenset[Characteristic]
    annotator: str
    iteration: int
    error_tags: frozenset[ErrorTag] = frozenset()
    submitted_at: str = ""

    def __post_init__(self):
        if self.quality is not Quality.POOR and not self.characteristics:
            raise SeedsetError("characteristics may be empty only for Poor conversations")


@dataclass(frozen=True)
class SeedExample:
    """A promoted conversation usable as an in-context demonstration."""

    conversation: Conversation
    quality: Quality
    characteristics: frozenset[Characteristic]
    annotator: str
    iteration: int

    def __post_init__(self):
        if self.quality is Quality.POOR:
            raise SeedsetError("Poor conversations never become seed examples")


@dataclass
class IterationState:
    iteration: int  # completed promote rounds so far
    batch: list[str]  # conversation ids awaiting annotation
    frozen: bool


@dataclass
class QueueEntry:
    conversation: Conversation
    status: str = "pending"  # generating | pending | annotated


@dataclass
class BatchRecord:
    iteration: int  # 1-based round number
    conversation_ids: list[str]
    overflow: int = 0
    promoted_ids: list[str] = field(default_factory=list)
    promoted: bool = False


class BatchGenerator(Protocol):
    """Produces ``count`` filter-passing conversations for one round."""

    def generate_filtered(
        self, count: int, seed_examples: Sequence[SeedExample]
    ) -> tuple[list[Conversation], int]:
        """Returns (conversations, overflow) where overflow counts the
        generated conversations the filters rejected along the way."""
        ...


EVENT_LOG = "annotations.log"
SEEDSET_FILE = "seedset.jsonl"


class SeedStore:
    """Durable annotation queue and seed set with serialized writes."""

    def __init__(self, directory: Path | str, freeze_after: int = 3, clock: Callable[[], str] | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.freeze_after = freeze_after
        self._clock = clock or (lambda: "")
        self._lock = threading.Lock()
        self.completed_iterations = 0
        self.history: list[BatchRecord] = []
        self._queue: dict[str, QueueEntry] = {}
        self._annotations: dict[str, dict[str, Annotation]] = {}
        self._annotation_order: list[str] = []  # conv ids in last-write order
        self._seed: list[SeedExample] = []
        self._replay()

    # -- state queries ------------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self.completed_iterations >= self.freeze_after

    def state(self) -> IterationState:
        return IterationState(
            iteration=self.completed_iterations,
            batch=sorted(self._queue),
            frozen=self.frozen,
        )

    def pending_ids(self) -> list[str]:
        return sorted(cid for cid, e in self._queue.items() if e.status == "pending")

    def queue(self) -> dict[str, QueueEntry]:
        return dict(self._queue)

    def seed_examples(self) -> tuple[SeedExample, ...]:
        return tuple(self._seed)

    def get_conversation(self, conversation_id: str) -> Conversation | None:
        entry = self._queue.get(conversation_id)
        if entry is not None:
            return entry.conversation
        for example in self._seed:
            if example.conversation.conversation_id == conversation_id:
                return example.conversation
        return None

    def annotations(self) -> list[Annotation]:
        """Effective annotation per conversation: the latest write wins."""
        return [self._effective[cid] for cid in self._annotation_order]

    # -- protocol steps -----------------------------------------------------

    def start_iteration(self, generator: BatchGenerator, batch_size: int = 100) -> IterationState:
        with self._lock:
            if self.frozen:
                raise SeedsetError("seed set frozen")
            pending = self.pending_ids()
            if pending:
                raise SeedsetError(
                    "previous iteration not fully annotated; pending: " + ", ".join(pending)
                )
            conversations, overflow = generator.generate_filtered(batch_size, tuple(self._seed))
            if len(conversations) != batch_size:
                raise SeedsetError(
                    f"generator produced {len(conversations)} conversations, expected {batch_size}"
                )
            record = BatchRecord(
                iteration=self.completed_iterations + 1,
                conversation_ids=[c.conversation_id for c in conversations],
                overflow=overflow,
            )
            self._append_event(
                {
                    "event": "iteration_started",
                    "iteration": record.iteration,
                    "overflow": overflow,
                    "conversations": [conversation_to_dict(c) for c in conversations],
                }
            )
            self._apply_iteration_started(record, conversations)
            return self.state()

    def submit_annotation(
        self,
        conversation_id: str,
        quality: Quality | str,
        characteristics: Iterable[Characteristic | str],
        annotator: str,
        error_tags: Iterable[ErrorTag | str] = (),
    ) -> Annotation:
        with self._lock:
            if self.frozen:
                raise SeedsetError("seed set frozen")
            if conversation_id not in self._queue:
                raise SeedsetError(f"unknown conversation id: {conversation_id}")
            annotation = Annotation(
                conversation_id=conversation_id,
                quality=Quality(quality),
                characteristics=frozenset(Characteristic(c) for c in characteristics),
                annotator=annotator,
                iteration=self.completed_iterations + 1,
                error_tags=frozenset(ErrorTag(t) for t in error_tags),
                submitted_at=self._clock(),
            )
            self._append_event(
                {
                    "event": "annotation",
                    "conversation_id": conversation_id,
                    "quality": annotation.quality.value,
                    "characteristics": sorted(c.value for c in annotation.characteristics),
                    "annotator": annotator,
                    "iteration": annotation.iteration,
                    "error_tags": sorted(t.value for t in annotation.error_tags),
                    "submitted_at": annotation.submitted_at,
                }
            )
            self._apply_annotation(annotation)
            return annotation

    def promote_and_advance(self) -> list[SeedExample]:
        with self._lock:
            if self.frozen:
                raise SeedsetError("seed set frozen")
            if not self._queue:
                raise SeedsetError("no batch to promote; start an iteration first")
            pending = self.pending_ids()
            if pending:
                raise SeedsetError("annotations pending for: " + ", ".join(pending))
            self._append_event({"event": "promotion", "iteration": self.completed_iterations + 1})
            return self._apply_promotion()

    # -- event sourcing -----------------------------------------------------

    def _append_event(self, event: dict) -> None:
        with open(self.directory / EVENT_LOG, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, ensure_ascii=False) + "\n")
            fh.flush()

    def _replay(self) -> None:
        self._effective: dict[str, Annotation] = {}
        log_path = self.directory / EVENT_LOG
        if not log_path.exists():
            return
        for line in log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            kind = event["event"]
            if kind == "iteration_started":
                conversations = [conversation_from_dict(d) for d in event["conversations"]]
                record = BatchRecord(
                    iteration=event["iteration"],
                    conversation_ids=[c.conversation_id for c in conversations],
                    overflow=event.get("overflow", 0),
                )
                self._apply_iteration_started(record, conversations)
            elif kind == "annotation":
                self._apply_annotation(
                    Annotation(
                        conversation_id=event["conversation_id"],
                        quality=Quality(event["quality"]),
                        characteristics=frozenset(
                            Characteristic(c) for c in event["characteristics"]
                        ),
                        annotator=event["annotator"],
                        iteration=event["iteration"],
                        error_tags=frozenset(ErrorTag(t) for t in event.get("error_tags", [])),
                        submitted_at=event.get("submitted_at", ""),
                    )
                )
            elif kind == "promotion":
                self._apply_promotion()

    def _apply_iteration_started(self, record: BatchRecord, conversations: list[Conversation]) -> None:
        self.history.append(record)
        self._queue = {c.conversation_id: QueueEntry(conversation=c) for c in conversations}

    def _apply_annotation(self, annotation: Annotation) -> None:
        cid = annotation.conversation_id
        self._annotations.setdefault(cid, {})[annotation.annotator] = annotation
        self._effective[cid] = annotation
        if cid in self._annotation_order:
            self._annotation_order.remove(cid)
        self._annotation_order.append(cid)
        if cid in self._queue:
            self._queue[cid].status = "annotated"

    def _apply_promotion(self) -> list[SeedExample]:
        promoted: list[SeedExample] = []
        record = self.history[-1]
        for cid in record.conversation_ids:
            annotation = self._effective[cid]
            if annotation.quality is Quality.POOR:
                continue
            promoted.append(
                SeedExample(
                    conversation=self._queue[cid].conversation,
                    quality=annotation.quality,
                    characteristics=annotation.characteristics,
                    annotator=annotation.annotator,
                    iteration=record.iteration,
                )
            )
        record.promoted = True
        record.promoted_ids = [e.conversation.conversation_id for e in promoted]
        self._seed.extend(promoted)
        self._queue = {}
        self.completed_iterations += 1
        self._write_projection()
        return promoted

    def _write_projection(self) -> None:
        lines = []
        for example in self._seed:
            lines.append(
                json.dumps(
                    {
                        "conversation": conversation_to_dict(example.conversation),
                        "quality": example.quality.value,
                        "characteristics": sorted(c.value for c in example.characteristics),
                        "annotator": example.annotator,
                        "iteration": example.iteration,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
            )
        tmp = self.directory / (SEEDSET_FILE + ".tmp")
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        tmp.replace(self.directory / SEEDSET_FILE)


def load_seed_examples(path: Path | str) -> list[SeedExample]:
    """Read a ``seedset.jsonl`` projection without replaying the event log."""
    examples = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        examples.append(
            SeedExample(
                conversation=conversation_from_dict(record["conversation"]),
                quality=Quality(record["quality"]),
                characteristics=frozenset(Characteristic(c) for c in record["characteristics"]),
                annotator=record["annotator"],
                iteration=record["iteration"],
            )
        )
    return examples
