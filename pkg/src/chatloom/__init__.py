"""Synthesis of multi-turn interleaved image-text conversations from
image-caption corpora: scoring, topic clustering, prompt assembly,
generation, parsing, filtering, iterative human refinement, and stats.
"""

from .config import ConfigError, PipelineConfig, load_config, save_config
from .corpus import (
    CaptionedImage,
    CorpusError,
    HashEmbeddingProvider,
    compute_matching_score,
    filter_by_score,
    ingest_pairs,
    load_corpus,
    save_corpus,
    score_corpus,
)
from .clustering import (
    ClusteringError,
    ImageGroup,
    TopicCluster,
    kmeans,
    prune_outlier_clusters,
    sample_image_group,
)
from .convparse import (
    Conversation,
    ParseDefect,
    ParseResult,
    Turn,
    extract_image_tags,
    make_roster,
    parse_transcript,
    render_transcript,
)
from .postproc import (
    FilterReason,
    FilterVerdict,
    normalized_edit_distance,
    run_filter_pipeline,
)
from .promptkit import (
    PromptBundle,
    PromptError,
    build_bootstrap_prompt,
    build_prompt,
    render_image_tag,
    select_in_context_examples,
)
from .llm_gateway import (
    GenerationConfig,
    LlmGateway,
    MockChatBackend,
    RawTranscript,
    prompt_fingerprint,
)
from .seedset import (
    Annotation,
    Characteristic,
    ErrorTag,
    Quality,
    SeedExample,
    SeedStore,
    SeedsetError,
)
from .stats import (
    CorpusStats,
    DiversityReport,
    corpus_stats,
    diversity_score,
    per_turn_image_histogram,
)
from .pipeline import ConversationPipeline, PipelineError

__version__ = "0.1.0"
