"""Command-line entry point: one subcommand per pipeline stage plus the
refinement-loop and service commands, all operating on a workspace
directory created by `init`.

Exit codes: 0 success, 1 user error (bad arguments, out-of-order stages,
protocol violations), 2 environment error (unreadable files, ports,
network), 3 data-quality fatal (nothing survives a filter, corrupted
artifacts).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .clustering import (
    ClusteringError,
    kmeans,
    load_clusters,
    prune_outlier_clusters,
    sample_image_group,
    save_clusters,
)
from .config import ConfigError, PipelineConfig, load_config
from .convparse import (
    ParseDefect,
    ParseResult,
    conversation_from_dict,
    conversation_to_dict,
    make_roster,
    parse_transcript,
    render_transcript,
    Provenance,
)
from .corpus import (
    CorpusError,
    HashEmbeddingProvider,
    filter_by_score,
    ingest_pairs,
    load_corpus,
    save_corpus,
    score_corpus,
)
from .demo import write_demo_tsv
from .llm_gateway import (
    BackendDescriptor,
    GatewayError,
    GenerationConfig,
    HttpChatBackend,
    LlmGateway,
    MockChatBackend,
)
from .pipeline import (
    ConversationPipeline,
    EPOCH_TIMESTAMP,
    PipelineError,
    conversation_id_for,
    derive_seed,
)
from .postproc import dump_verdicts, run_filter_pipeline, verdict_to_dict
from .promptkit import build_bootstrap_prompt, build_prompt, select_in_context_examples, PromptError
from .seedset import Annotation, Characteristic, ErrorTag, Quality, SeedsetError, SeedStore
from .stats import compute_stats, export_csvs, save_stats
from .workspace import (
    StaleWorkspaceError,
    Workspace,
    WorkspaceError,
    atomic_write_text,
)

EXIT_OK = 0
EXIT_USER = 1
EXIT_ENV = 2
EXIT_DATA = 3


class Progress:
    def __init__(self, as_json: bool):
        self.as_json = as_json

    def emit(self, stage: str, **fields) -> None:
        if self.as_json:
            print(json.dumps({"stage": stage, **fields}, sort_keys=True))
        else:
            detail = " ".join(f"{k}={v}" for k, v in fields.items())
            print(f"[{stage}] {detail}")


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    field_types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    if key not in field_types:
        raise ConfigError(f"unknown config key: {key}")
    declared = field_types[key]
    if "tuple" in str(declared):
        return key, tuple(int(part) for part in raw.split(",") if part.strip())
    if "bool" in str(declared):
        return key, raw.strip().lower() in {"1", "true", "yes", "on"}
    if "int" in str(declared):
        return key, int(raw)
    if "float" in str(declared):
        return key, float(raw)
    return key, raw


def _workspace(args) -> Workspace:
    ws = Workspace(args.workspace)
    if getattr(args, "deterministic_time", False):
        ws._timestamp = lambda: EPOCH_TIMESTAMP
    return ws


def _open_stage(ws: Workspace, stage: str, force: bool):
    manifest = ws.load_manifest()
    ws.check_fresh(manifest)
    ws.require_predecessors(manifest, stage, force=force)
    config = ws.load_config()
    if config.deterministic:
        ws._timestamp = lambda: EPOCH_TIMESTAMP
    return manifest, config


def _jsonl_rows(path: Path) -> list[dict]:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def _write_jsonl(path: Path, rows) -> None:
    text = "".join(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n" for row in rows)
    atomic_write_text(path, text)


def _build_gateway(args, config: PipelineConfig, root: Path) -> LlmGateway:
    if args.backend == "mock":
        backend = MockChatBackend(
            defect=args.defect,
            defect_rate=args.defect_rate if args.defect else 0.0,
        )
    else:
        backend = HttpChatBackend(
            BackendDescriptor(
                endpoint=args.endpoint or "",
                model=args.model,
                credential_env=args.credential_env,
            )
        )
    timestamp = (lambda: EPOCH_TIMESTAMP) if config.deterministic else None
    kwargs = {"timestamp": timestamp} if timestamp else {}
    return LlmGateway(
        backend,
        GenerationConfig(top_p=config.top_p, temperature=config.temperature),
        rpm=args.rpm,
        max_inflight=args.max_inflight,
        log_path=root / "generation_log.jsonl",
        **kwargs,
    )


def _load_seed_examples_if_any(ws: Workspace, config: PipelineConfig):
    if (ws.seedset_dir / "annotations.log").exists():
        store = SeedStore(ws.seedset_dir, freeze_after=config.freeze_after_iterations)
        return store.seed_examples()
    return ()


# -- commands ----------------------------------------------------------------


def cmd_init(args, progress: Progress) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.set:
        overrides = dict(_parse_override(item) for item in args.set)
        config = dataclasses.replace(config, **overrides)
    ws = Workspace.initialize(
        args.workspace,
        config,
        timestamp=(lambda: EPOCH_TIMESTAMP) if config.deterministic else None,
    )
    outputs = []
    if args.demo:
        write_demo_tsv(ws.path("source.tsv"), count=args.demo, seed=args.seed)
        outputs.append("source.tsv")
    manifest = ws.load_manifest()
    if outputs:
        ws.record_stage(manifest, "init", outputs=outputs + ["config.toml"], seed=args.seed)
    progress.emit("init", workspace=str(ws.root), demo_rows=args.demo)
    return EXIT_OK


def cmd_ingest(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "ingest", args.force)
    source = Path(args.source) if args.source else ws.path("source.tsv")
    if not source.exists():
        print(f"error: source not found: {source}", file=sys.stderr)
        return EXIT_ENV
    result = ingest_pairs(source, fmt=args.format)
    if not result.images:
        progress.emit("ingest", error="no usable caption pairs in source")
        return EXIT_DATA
    save_corpus(result.images, ws.root)
    ws.record_stage(manifest, "ingest", outputs=["corpus.jsonl"], forced=args.force)
    progress.emit(
        "ingest", images=len(result.images), skipped=result.skipped, duplicates=result.duplicates
    )
    return EXIT_OK


def cmd_score(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "score", args.force)
    images = load_corpus(ws.root)
    provider = HashEmbeddingProvider(dimension=args.dimension, mismatch_rate=args.mismatch_rate)
    score_corpus(images, provider)
    partition = filter_by_score(images, threshold=config.score_threshold)
    save_corpus(images, ws.root)
    retained = {
        "threshold": config.score_threshold,
        "retained": sorted(image.image_id for image in partition.retained),
        "dropped": sorted(image.image_id for image in partition.rejected),
    }
    atomic_write_text(ws.path("retained.json"), json.dumps(retained, indent=2, sort_keys=True) + "\n")
    outputs = ["corpus.jsonl", "embeddings.bin", "embeddings.index.json", "retained.json"]
    ws.record_stage(manifest, "score", outputs=outputs, forced=args.force)
    progress.emit(
        "score",
        scored=len(images),
        retained=len(partition.retained),
        dropped=len(partition.rejected),
        threshold=config.score_threshold,
    )
    if not partition.retained:
        progress.emit("score", error="score filter removed every image")
        return EXIT_DATA
    return EXIT_OK


def cmd_cluster(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "cluster", args.force)
    images = {image.image_id: image for image in load_corpus(ws.root)}
    retained_ids = json.loads(ws.path("retained.json").read_text(encoding="utf-8"))["retained"]
    embeddings = {iid: images[iid].embedding for iid in retained_ids}
    result = kmeans(
        embeddings,
        k=config.kmeans_k,
        max_iters=config.kmeans_max_iters,
        tolerance=config.kmeans_tolerance,
        seed=args.seed,
    )
    pruned = prune_outlier_clusters(result.clusters, min_size=config.min_cluster_size)
    save_clusters(pruned, ws.root)
    ws.record_stage(
        manifest,
        "cluster",
        outputs=["clusters.json", "pruned.json"],
        seed=args.seed,
        forced=args.force,
    )
    progress.emit(
        "cluster",
        k=config.kmeans_k,
        iterations=result.iterations,
        sse_first=round(result.sse_history[0], 6),
        sse_last=round(result.sse_history[-1], 6),
        survivors=len(pruned.survivors),
        pruned=len(pruned.pruned),
    )
    if not pruned.survivors:
        progress.emit("cluster", error="pruning removed every cluster")
        return EXIT_DATA
    return EXIT_OK


def cmd_sample(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "sample", args.force)
    images = {image.image_id: image for image in load_corpus(ws.root)}
    survivors = load_clusters(ws.root)
    rows = []
    for i in range(args.count):
        group = sample_image_group(
            survivors,
            images,
            rng_seed=derive_seed(args.seed, i, "group"),
            group_sizes=config.group_size_choices,
        )
        rows.append(
            {
                "index": i,
                "cluster_id": group.cluster_id,
                "image_ids": [image.image_id for image in group.images],
            }
        )
    _write_jsonl(ws.path("groups.jsonl"), rows)
    ws.record_stage(manifest, "sample", outputs=["groups.jsonl"], seed=args.seed, forced=args.force)
    progress.emit("sample", groups=len(rows))
    return EXIT_OK


def cmd_generate(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "generate", args.force)
    images = {image.image_id: image for image in load_corpus(ws.root)}
    groups = _jsonl_rows(ws.path("groups.jsonl"))
    seed_examples = _load_seed_examples_if_any(ws, config)
    gateway = _build_gateway(args, config, ws.root)

    from .clustering import ImageGroup

    bundles = []
    for row in groups:
        group = ImageGroup(
            cluster_id=row["cluster_id"], images=tuple(images[iid] for iid in row["image_ids"])
        )
        if seed_examples:
            try:
                triple = select_in_context_examples(
                    seed_examples, rng_seed=derive_seed(args.seed, row["index"], "triple")
                )
                bundles.append(build_prompt(group, triple))
                continue
            except PromptError:
                pass
        bundles.append(build_bootstrap_prompt(group))
    transcripts = gateway.generate_batch([b.system_text for b in bundles])
    rows = []
    for row, transcript in zip(groups, transcripts):
        rows.append(
            {
                "index": row["index"],
                "base_seed": args.seed,
                "cluster_id": row["cluster_id"],
                "image_ids": row["image_ids"],
                "fingerprint": transcript.prompt_fingerprint,
                "text": transcript.text,
                "truncated": transcript.truncated,
                "model": transcript.model,
                "attempts": transcript.attempts,
            }
        )
    _write_jsonl(ws.path("transcripts.jsonl"), rows)
    outputs = ["transcripts.jsonl"]
    if (ws.root / "generation_log.jsonl").exists():
        outputs.append("generation_log.jsonl")
    ws.record_stage(manifest, "generate", outputs=outputs, seed=args.seed, forced=args.force)
    progress.emit("generate", transcripts=len(rows), backend=args.backend)
    return EXIT_OK


def cmd_parse(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "parse", args.force)
    images = {image.image_id: image for image in load_corpus(ws.root)}
    rows = _jsonl_rows(ws.path("transcripts.jsonl"))
    out = []
    generated_at = EPOCH_TIMESTAMP if config.deterministic else ws._timestamp()
    for row in rows:
        roster = make_roster([images[iid] for iid in row["image_ids"]])
        conversation_id = conversation_id_for(
            row.get("base_seed", 0), row["index"], row["fingerprint"], row["text"]
        )
        provenance = Provenance(
            prompt_fingerprint=row["fingerprint"],
            cluster_id=row["cluster_id"],
            generated_at=generated_at,
            truncated=row["truncated"],
            model=row.get("model", ""),
        )
        result = parse_transcript(
            row["text"], roster, conversation_id=conversation_id, provenance=provenance
        )
        out.append(
            {
                "conversation_id": conversation_id,
                "ok": result.ok,
                "conversation": (
                    conversation_to_dict(result.conversation) if result.conversation else None
                ),
                "defects": [
                    {"kind": d.kind, "detail": d.detail, "span": list(d.span) if d.span else None}
                    for d in result.defects
                ],
                "truncated": row["truncated"],
            }
        )
    _write_jsonl(ws.path("parse_results.jsonl"), out)
    ws.record_stage(manifest, "parse", outputs=["parse_results.jsonl"], forced=args.force)
    progress.emit(
        "parse",
        transcripts=len(out),
        structured=sum(1 for r in out if r["conversation"] is not None),
        with_defects=sum(1 for r in out if r["defects"]),
    )
    return EXIT_OK


def cmd_filter(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "filter", args.force)
    rows = _jsonl_rows(ws.path("parse_results.jsonl"))
    drift = args.drift_threshold if args.drift_threshold is not None else config.drift_threshold
    max_turns = args.max_turns if args.max_turns is not None else config.max_turns
    verdicts = []
    accepted = []
    rejected = []
    for row in rows:
        result = ParseResult(
            conversation_id=row["conversation_id"],
            conversation=(
                conversation_from_dict(row["conversation"]) if row["conversation"] else None
            ),
            defects=tuple(
                ParseDefect(
                    kind=d["kind"],
                    detail=d["detail"],
                    span=tuple(d["span"]) if d.get("span") else None,
                )
                for d in row["defects"]
            ),
        )
        verdict = run_filter_pipeline(
            result, truncated=row["truncated"], drift_threshold=drift, max_turns=max_turns
        )
        verdicts.append(verdict)
        if verdict.passed:
            accepted.append(conversation_to_dict(result.conversation))
        else:
            rejected.append(
                {
                    "conversation_id": verdict.conversation_id,
                    "reasons": [r.value for r in verdict.reasons],
                    "conversation": row["conversation"],
                }
            )
    dump_verdicts(verdicts, ws.path("verdicts.jsonl"))
    _write_jsonl(ws.path("accepted.jsonl"), accepted)
    _write_jsonl(ws.path("rejected.jsonl"), rejected)
    ws.record_stage(
        manifest,
        "filter",
        outputs=["verdicts.jsonl", "accepted.jsonl", "rejected.jsonl"],
        forced=args.force,
    )
    progress.emit("filter", total=len(verdicts), accepted=len(accepted), rejected=len(rejected))
    if rows and not accepted:
        progress.emit("filter", error="every conversation was rejected")
        return EXIT_DATA
    return EXIT_OK


def cmd_stats(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "stats", args.force)
    dataset = Path(args.dataset) if args.dataset else ws.path("accepted.jsonl")
    conversations = [conversation_from_dict(row) for row in _jsonl_rows(dataset)]
    annotations = None
    if (ws.seedset_dir / "annotations.log").exists():
        store = SeedStore(ws.seedset_dir, freeze_after=config.freeze_after_iterations)
        annotations = store.annotations()
    report = compute_stats(conversations, annotations)
    save_stats(report, ws.path("stats.json"))
    csv_paths = export_csvs(report, ws.path("stats_csv"))
    outputs = ["stats.json"] + [str(p.relative_to(ws.root)) for p in csv_paths]
    ws.record_stage(manifest, "stats", outputs=outputs, forced=args.force)
    progress.emit(
        "stats",
        conversations=report["corpus"]["conversation_count"],
        avg_turns=report["corpus"]["avg_turns"],
        diversity_overall=round(report["diversity"]["overall"], 4),
    )
    return EXIT_OK


def cmd_iterate(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "iterate", args.force)
    images = {image.image_id: image for image in load_corpus(ws.root)}
    survivors = load_clusters(ws.root)
    store = SeedStore(ws.seedset_dir, freeze_after=config.freeze_after_iterations)
    gateway = _build_gateway(args, config, ws.root)
    pipeline = ConversationPipeline(
        corpus=images,
        clusters=survivors,
        gateway=gateway,
        config=config,
        base_seed=derive_seed(args.seed, store.completed_iterations + 1, "iteration"),
    )
    batch = args.batch if args.batch else config.iteration_batch_size
    state = store.start_iteration(pipeline, batch_size=batch)
    ws.record_stage(
        manifest,
        "iterate",
        outputs=["seedset/annotations.log"],
        seed=args.seed,
        forced=args.force,
    )
    progress.emit(
        "iterate",
        iteration=state.iteration + 1,
        queued=len(state.batch),
        overflow=store.history[-1].overflow,
    )
    return EXIT_OK


def cmd_annotate(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "promote", args.force)  # same gate as promote: needs iterate
    store = SeedStore(ws.seedset_dir, freeze_after=config.freeze_after_iterations)
    if args.script:
        for row in _jsonl_rows(Path(args.script)):
            store.submit_annotation(
                row["conversation_id"],
                quality=Quality(row["quality"]),
                characteristics=[Characteristic(c) for c in row.get("characteristics", [])],
                annotator=row.get("annotator", args.annotator),
                error_tags=[ErrorTag(t) for t in row.get("error_tags", [])],
            )
        progress.emit("annotate", applied=len(_jsonl_rows(Path(args.script))))
        return EXIT_OK
    if not sys.stdin.isatty():
        print("interactive annotation needs a terminal; use --script FILE", file=sys.stderr)
        return EXIT_USER
    quality_keys = {"1": Quality.EXCELLENT, "2": Quality.SATISFACTORY, "3": Quality.POOR}
    char_keys = {
        "a": Characteristic.IMAGE_CREATION,
        "b": Characteristic.IMAGE_COMPARISON,
        "c": Characteristic.INTRINSIC_IMAGE_UNDERSTANDING,
        "d": Characteristic.EXTRINSIC_IMAGE_UNDERSTANDING,
    }
    for cid in store.pending_ids():
        conversation = store.get_conversation(cid)
        print(f"\n=== {cid} ===\n{render_transcript(conversation)}\n")
        quality = None
        while quality is None:
            quality = quality_keys.get(
                input("quality [1=Excellent 2=Satisfactory 3=Poor]: ").strip()
            )
        keys = input("characteristics [a=creation b=comparison c=intrinsic d=extrinsic]: ").strip()
        characteristics = [char_keys[ch] for ch in keys if ch in char_keys]
        store.submit_annotation(cid, quality, characteristics, annotator=args.annotator)
    progress.emit("annotate", pending=len(store.pending_ids()))
    return EXIT_OK


def cmd_promote(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "promote", args.force)
    store = SeedStore(ws.seedset_dir, freeze_after=config.freeze_after_iterations)
    promoted = store.promote_and_advance()
    ws.record_stage(
        manifest,
        "promote",
        outputs=["seedset/annotations.log", "seedset/seedset.jsonl"],
        forced=args.force,
    )
    progress.emit(
        "promote",
        promoted=len(promoted),
        seedset_size=len(store.seed_examples()),
        iteration=store.completed_iterations,
        frozen=store.frozen,
    )
    return EXIT_OK


def cmd_serve(args, progress: Progress) -> int:
    import uvicorn

    from .service import create_app, make_pipeline_generator_factory

    ws = _workspace(args)
    ws.load_manifest()  # fail early when not a workspace
    app = create_app(
        ws.root,
        generator_factory=make_pipeline_generator_factory(ws.root, base_seed=args.seed),
        ui_dir=args.ui_dir,
    )
    progress.emit("serve", host=args.host, port=args.port)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_export(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest, config = _open_stage(ws, "export", args.force)
    rows = _jsonl_rows(ws.path("accepted.jsonl"))
    out = []
    for row in rows:
        conversation = conversation_from_dict(row)
        record = conversation_to_dict(conversation)
        uri_by_index = {index: entry.uri for index, entry in conversation.roster.items()}
        for turn in record["turns"]:
            for side in ("instruction", "response"):
                for segment in turn[side]:
                    if segment["type"] == "image":
                        segment["uri"] = uri_by_index.get(segment["index"], "")
        out.append(record)
    output = Path(args.output) if args.output else ws.path("dataset.jsonl")
    _write_jsonl(output, out)
    outputs = [str(output.relative_to(ws.root))] if output.is_relative_to(ws.root) else []
    if outputs:
        ws.record_stage(manifest, "export", outputs=outputs, forced=args.force)
    progress.emit("export", conversations=len(out), output=str(output))
    return EXIT_OK


def cmd_verify(args, progress: Progress) -> int:
    ws = _workspace(args)
    manifest = ws.load_manifest()
    mismatches = ws.verify_inventory(manifest)
    if mismatches:
        for line in mismatches:
            progress.emit("verify", mismatch=line)
        return EXIT_DATA
    progress.emit("verify", files=len(manifest.inventory), status="ok")
    return EXIT_OK


# -- argument wiring ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chatloom",
        description="Synthesize multi-turn image-text conversations from caption corpora.",
    )
    parser.add_argument("--json", action="store_true", help="machine-readable progress on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seeded=False):
        p.add_argument("workspace", help="workspace directory")
        p.add_argument("--force", action="store_true", help="skip predecessor checks")
        if seeded:
            p.add_argument("--seed", type=int, default=0, help="stage RNG seed")

    p = sub.add_parser("init", help="create a workspace")
    p.add_argument("workspace")
    p.add_argument("--config", help="TOML config to copy into the workspace")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--demo", type=int, default=0, help="write a synthetic source.tsv with N rows")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("ingest", help="read (uri, caption) pairs into the corpus")
    add_common(p)
    p.add_argument("--source", help="TSV or JSONL input (default: workspace/source.tsv)")
    p.add_argument("--format", choices=["tsv", "jsonl"], default="tsv")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("score", help="embed captions and filter by matching score")
    add_common(p)
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--mismatch-rate", type=float, default=0.1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("cluster", help="k-means topic clusters with outlier pruning")
    add_common(p, seeded=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sample", help="draw topic-coherent image groups")
    add_common(p, seeded=True)
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=cmd_sample)

    def add_backend(p):
        p.add_argument("--backend", choices=["mock", "http"], default="mock")
        p.add_argument("--endpoint", default="")
        p.add_argument("--model", default="mock")
        p.add_argument("--credential-env", default="", help="env var holding the API key")
        p.add_argument("--rpm", type=float, default=0.0, help="requests per minute (0 = unlimited)")
        p.add_argument("--max-inflight", type=int, default=4)
        p.add_argument("--defect", default=None, help="mock-only: inject a named defect")
        p.add_argument("--defect-rate", type=float, default=1.0)

    p = sub.add_parser("generate", help="send prompts for sampled groups to the model")
    add_common(p, seeded=True)
    add_backend(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("parse", help="parse raw transcripts into conversations")
    add_common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("filter", help="apply the quality filters")
    add_common(p)
    p.add_argument("--drift-threshold", type=float, default=None)
    p.add_argument("--max-turns", type=int, default=None)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("stats", help="dataset statistics and diversity")
    add_common(p)
    p.add_argument("--dataset", help="JSONL of conversations (default: accepted.jsonl)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("iterate", help="generate one refinement batch into the annotation queue")
    add_common(p, seeded=True)
    add_backend(p)
    p.add_argument("--batch", type=int, default=0, help="batch size (default from config)")
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("annotate", help="annotate the pending batch (terminal or scripted)")
    add_common(p)
    p.add_argument("--script", help="JSONL of annotations to apply")
    p.add_argument("--annotator", default="local")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("promote", help="promote the annotated batch into the seed set")
    add_common(p)
    p.set_defaults(func=cmd_promote)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("workspace")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-dir", default=None, help="static frontend bundle to mount at /ui")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="write the accepted dataset with resolved image uris")
    add_common(p)
    p.add_argument("--format", choices=["jsonl"], default="jsonl")
    p.add_argument("--output", help="output path (default: workspace/dataset.jsonl)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("verify", help="re-check manifest inventory hashes")
    p.add_argument("workspace")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    progress = Progress(as_json=args.json)
    try:
        return args.func(args, progress)
    except (StaleWorkspaceError, WorkspaceError, ConfigError, SeedsetError, PromptError, ClusteringError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GatewayError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except KeyboardInterrupt:
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
