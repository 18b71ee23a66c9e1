"""End-to-end conversation generation: sample a topic-coherent image
group, assemble the prompt, call the model, parse, and filter.

Generation is organized in waves: a wave of prompts is sent through the
gateway, survivors accumulate, and new waves run until the requested
number of conversations passes the filters (the rejected count is
reported as overflow). All randomness derives from one base seed plus the
conversation's sequence number, so runs are reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .clustering import ImageGroup, TopicCluster, sample_image_group
from .config import PipelineConfig
from .convparse import (
    Conversation,
    ParseResult,
    Provenance,
    make_roster,
    parse_transcript,
)
from .corpus import CaptionedImage
from .llm_gateway import LlmGateway, RawTranscript
from .postproc import FilterVerdict, run_filter_pipeline
from .promptkit import (
    PromptBundle,
    PromptError,
    build_bootstrap_prompt,
    build_prompt,
    select_in_context_examples,
)
from .seedset import SeedExample

EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"

# the wave loop gives up after this many multiples of the requested count
MAX_OVERSAMPLE_FACTOR = 20


class PipelineError(RuntimeError):
    pass


def derive_seed(base_seed: int, index: int, label: str = "") -> int:
    """Stable per-slot seed; independent of process hash randomization."""
    digest = hashlib.sha256(f"{base_seed}:{index}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def conversation_id_for(base_seed: int, index: int, fingerprint: str, text: str) -> str:
    digest = hashlib.sha256(f"{base_seed}:{index}:{fingerprint}:{text}".encode()).hexdigest()
    return "c" + digest[:16]


@dataclass
class GenerationRecord:
    index: int
    group: ImageGroup
    bundle: PromptBundle
    transcript: RawTranscript
    parse_result: ParseResult
    verdict: FilterVerdict

    @property
    def accepted(self) -> bool:
        return self.verdict.passed


@dataclass
class ConversationPipeline:
    corpus: dict[str, CaptionedImage]
    clusters: Sequence[TopicCluster]
    gateway: LlmGateway
    config: PipelineConfig
    base_seed: int = 0
    timestamp: Callable[[], str] = lambda: EPOCH_TIMESTAMP
    records: list[GenerationRecord] = field(default_factory=list)
    _next_index: int = 0

    def sample_group(self, index: int) -> ImageGroup:
        return sample_image_group(
            self.clusters,
            self.corpus,
            rng_seed=derive_seed(self.base_seed, index, "group"),
            group_sizes=self.config.group_size_choices,
        )

    def build_bundle(self, group: ImageGroup, index: int, seed_examples: Sequence[SeedExample]) -> PromptBundle:
        """Full prompt when a feasible seed set exists, bootstrap otherwise."""
        if seed_examples:
            try:
                triple = select_in_context_examples(
                    tuple(seed_examples), rng_seed=derive_seed(self.base_seed, index, "triple")
                )
                return build_prompt(group, triple)
            except PromptError:
                pass
        return build_bootstrap_prompt(group)

    def _finish_record(
        self, index: int, group: ImageGroup, bundle: PromptBundle, transcript: RawTranscript
    ) -> GenerationRecord:
        conversation_id = conversation_id_for(
            self.base_seed, index, transcript.prompt_fingerprint, transcript.text
        )
        provenance = Provenance(
            prompt_fingerprint=transcript.prompt_fingerprint,
            cluster_id=group.cluster_id,
            generated_at=self.timestamp(),
            truncated=transcript.truncated,
            model=transcript.model,
        )
        result = parse_transcript(
            transcript.text,
            make_roster(group.images),
            conversation_id=conversation_id,
            provenance=provenance,
        )
        verdict = run_filter_pipeline(
            result,
            truncated=transcript.truncated,
            drift_threshold=self.config.drift_threshold,
            max_turns=self.config.max_turns,
        )
        return GenerationRecord(
            index=index,
            group=group,
            bundle=bundle,
            transcript=transcript,
            parse_result=result,
            verdict=verdict,
        )

    def run_wave(self, count: int, seed_examples: Sequence[SeedExample]) -> list[GenerationRecord]:
        """Generate `count` conversations (accepted or not) in one batch."""
        indices = list(range(self._next_index, self._next_index + count))
        self._next_index += count
        groups = [self.sample_group(i) for i in indices]
        bundles = [self.build_bundle(g, i, seed_examples) for g, i in zip(groups, indices)]
        transcripts = self.gateway.generate_batch([b.system_text for b in bundles])
        wave = [
            self._finish_record(i, g, b, t)
            for i, g, b, t in zip(indices, groups, bundles, transcripts)
        ]
        self.records.extend(wave)
        return wave

    def generate_filtered(
        self, count: int, seed_examples: Sequence[SeedExample] = ()
    ) -> tuple[list[Conversation], int]:
        """Generate until `count` conversations survive the filters.

        Returns (conversations, overflow) where overflow is how many
        generations the filters rejected along the way.
        """
        accepted: list[Conversation] = []
        overflow = 0
        budget = count * MAX_OVERSAMPLE_FACTOR
        spent = 0
        while len(accepted) < count:
            want = count - len(accepted)
            if spent + want > budget:
                raise PipelineError(
                    f"rejection rate too high: {overflow} rejected while "
                    f"collecting {len(accepted)}/{count} conversations"
                )
            wave = self.run_wave(want, seed_examples)
            spent += want
            for record in wave:
                if record.accepted:
                    accepted.append(record.parse_result.conversation)
                else:
                    overflow += 1
        return accepted, overflow
