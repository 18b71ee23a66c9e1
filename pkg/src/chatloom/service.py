"""HTTP facade over the refinement workflow for the annotation frontend.

The app exposes the iteration queue, conversation bodies, annotation
submission, the promoted seed set, and dataset stats. All writes funnel
through the single-writer seed store. Mutating endpoints honor an
Idempotency-Key header (successful responses are replayed verbatim for a
repeated key) and a small capability model driven by an optional
tokens.json file; without that file the service runs open for local use.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Callable, Sequence

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .config import PipelineConfig
from .convparse import Conversation, conversation_to_dict
from .postproc import load_verdicts, verdict_to_dict
from .seedset import (
    BatchGenerator,
    Characteristic,
    ErrorTag,
    Quality,
    SeedsetError,
    SeedStore,
)
from .stats import compute_stats

ALL_CAPABILITIES = frozenset({"read", "annotate", "iterate"})
FROZEN_REASON = "seed set frozen"


class AnnotationBody(BaseModel):
    quality: Quality
    characteristics: list[Characteristic] = Field(default_factory=list)
    error_tags: list[ErrorTag] = Field(default_factory=list)


class IterationRequest(BaseModel):
    batch_size: int | None = Field(default=None, ge=1)


class ApiSession(BaseModel):
    annotator: str
    capabilities: frozenset[str]

    model_config = {"frozen": True}


def _load_tokens(path: Path) -> dict[str, ApiSession]:
    raw = json.loads(path.read_text(encoding="utf-8"))
    sessions = {}
    for token, entry in raw.items():
        sessions[token] = ApiSession(
            annotator=entry["annotator"],
            capabilities=frozenset(entry.get("capabilities", ["read"])),
        )
    return sessions


def create_app(
    workspace: Path | str,
    generator_factory: Callable[[PipelineConfig, SeedStore], BatchGenerator] | None = None,
    tokens_path: Path | str | None = None,
    ui_dir: Path | str | None = None,
) -> FastAPI:
    root = Path(workspace)
    config_path = root / "config.toml"
    if config_path.exists():
        from .config import load_config

        config = load_config(config_path)
    else:
        config = PipelineConfig()

    store = SeedStore(root / "seedset", freeze_after=config.freeze_after_iterations)
    store_lock = threading.Lock()

    tokens_file = Path(tokens_path) if tokens_path is not None else root / "tokens.json"
    sessions = _load_tokens(tokens_file) if tokens_file.exists() else None

    app = FastAPI(title="chatloom annotation service", version="0.1.0")
    app.state.store = store
    app.state.config = config
    app.state.generation = {"status": "idle", "error": None}
    app.state.idempotency: dict[tuple[str, str], tuple[int, dict]] = {}
    app.state.generator_factory = generator_factory

    def get_session(x_api_token: str | None = Header(default=None)) -> ApiSession:
        if sessions is None:
            return ApiSession(annotator="local", capabilities=ALL_CAPABILITIES)
        if x_api_token is None or x_api_token not in sessions:
            raise HTTPException(status_code=401, detail="unknown or missing API token")
        return sessions[x_api_token]

    def require(session: ApiSession, capability: str) -> None:
        if capability not in session.capabilities:
            raise HTTPException(status_code=403, detail=f"missing capability: {capability}")

    def idempotent(request: Request, key: str | None, produce: Callable[[], tuple[int, dict]]) -> JSONResponse:
        cache_key = (request.url.path, key) if key else None
        if cache_key and cache_key in app.state.idempotency:
            status, body = app.state.idempotency[cache_key]
            return JSONResponse(status_code=status, content=body)
        status, body = produce()
        if cache_key and 200 <= status < 300:
            app.state.idempotency[cache_key] = (status, body)
        return JSONResponse(status_code=status, content=body)

    def load_workspace_verdicts() -> dict[str, dict]:
        verdicts_path = root / "verdicts.jsonl"
        if not verdicts_path.exists():
            return {}
        return {v.conversation_id: verdict_to_dict(v) for v in load_verdicts(verdicts_path)}

    # -- read endpoints -------------------------------------------------

    @app.get("/api/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.get("/api/iterations")
    def iterations(session: ApiSession = Depends(get_session)) -> dict:
        require(session, "read")
        state = store.state()
        return {
            "iteration": state.iteration,
            "frozen": state.frozen,
            "freeze_after": store.freeze_after,
            "pending": store.pending_ids(),
            "generation": app.state.generation["status"],
            "history": [
                {
                    "iteration": record.iteration,
                    "conversation_ids": record.conversation_ids,
                    "overflow": record.overflow,
                    "promoted": record.promoted,
                    "promoted_ids": record.promoted_ids,
                }
                for record in store.history
            ],
        }

    @app.get("/api/iterations/{k}/queue")
    def iteration_queue(k: int, session: ApiSession = Depends(get_session)) -> dict:
        require(session, "read")
        record = next((r for r in store.history if r.iteration == k), None)
        if record is None:
            raise HTTPException(status_code=404, detail=f"iteration {k} has not run")
        effective = {a.conversation_id: a for a in store.annotations()}
        items = []
        for cid in record.conversation_ids:
            annotation = effective.get(cid)
            entry = store.queue().get(cid)
            status = entry.status if entry is not None else "annotated"
            items.append(
                {
                    "conversation_id": cid,
                    "status": status,
                    "quality": annotation.quality.value if annotation else None,
                }
            )
        return {"iteration": k, "promoted": record.promoted, "items": items}

    @app.get("/api/conversations/{conversation_id}")
    def get_conversation(conversation_id: str, session: ApiSession = Depends(get_session)) -> dict:
        require(session, "read")
        conversation = store.get_conversation(conversation_id)
        if conversation is None:
            raise HTTPException(status_code=404, detail=f"unknown conversation: {conversation_id}")
        effective = {a.conversation_id: a for a in store.annotations()}
        annotation = effective.get(conversation_id)
        entry = store.queue().get(conversation_id)
        verdict = load_workspace_verdicts().get(conversation_id)
        return {
            "conversation": conversation_to_dict(conversation),
            "status": entry.status if entry is not None else "annotated",
            "annotation": (
                {
                    "quality": annotation.quality.value,
                    "characteristics": sorted(c.value for c in annotation.characteristics),
                    "error_tags": sorted(t.value for t in annotation.error_tags),
                    "annotator": annotation.annotator,
                    "iteration": annotation.iteration,
                }
                if annotation
                else None
            ),
            "verdict": verdict,
        }

    @app.get("/api/seedset")
    def seedset(session: ApiSession = Depends(get_session)) -> dict:
        require(session, "read")
        return {
            "size": len(store.seed_examples()),
            "frozen": store.frozen,
            "examples": [
                {
                    "conversation_id": example.conversation.conversation_id,
                    "quality": example.quality.value,
                    "characteristics": sorted(c.value for c in example.characteristics),
                    "annotator": example.annotator,
                    "iteration": example.iteration,
                }
                for example in store.seed_examples()
            ],
        }

    @app.get("/api/stats")
    def stats(session: ApiSession = Depends(get_session)) -> dict:
        require(session, "read")
        stats_path = root / "stats.json"
        if stats_path.exists():
            return json.loads(stats_path.read_text(encoding="utf-8"))
        conversations: list[Conversation] = [e.conversation for e in store.seed_examples()]
        conversations.extend(entry.conversation for entry in store.queue().values())
        return compute_stats(conversations, store.annotations())

    # -- write endpoints ------------------------------------------------

    @app.post("/api/iterations")
    def start_iteration(
        request: Request,
        body: IterationRequest | None = None,
        idempotency_key: str | None = Header(default=None),
        session: ApiSession = Depends(get_session),
    ):
        require(session, "iterate")

        def produce() -> tuple[int, dict]:
            if app.state.generator_factory is None:
                return 409, {"reason": "no generator configured for this workspace"}
            batch_size = (body.batch_size if body else None) or config.iteration_batch_size
            with store_lock:
                if store.frozen:
                    return 409, {"reason": FROZEN_REASON}
                app.state.generation = {"status": "generating", "error": None}
                try:
                    generator = app.state.generator_factory(config, store)
                    state = store.start_iteration(generator, batch_size=batch_size)
                except SeedsetError as exc:
                    app.state.generation = {"status": "idle", "error": str(exc)}
                    return 409, {"reason": str(exc)}
                finally:
                    if app.state.generation["status"] == "generating":
                        app.state.generation = {"status": "idle", "error": None}
            return 200, {
                "iteration": state.iteration + 1,
                "batch": state.batch,
                "queued": len(state.batch),
            }

        return idempotent(request, idempotency_key, produce)

    @app.post("/api/conversations/{conversation_id}/annotation")
    def annotate(
        conversation_id: str,
        body: AnnotationBody,
        request: Request,
        idempotency_key: str | None = Header(default=None),
        session: ApiSession = Depends(get_session),
    ):
        require(session, "annotate")

        def produce() -> tuple[int, dict]:
            with store_lock:
                if store.frozen:
                    return 409, {"reason": FROZEN_REASON}
                if conversation_id not in store.queue():
                    return 404, {"reason": f"unknown conversation: {conversation_id}"}
                try:
                    annotation = store.submit_annotation(
                        conversation_id,
                        quality=body.quality,
                        characteristics=body.characteristics,
                        annotator=session.annotator,
                        error_tags=body.error_tags,
                    )
                except SeedsetError as exc:
                    return 422, {"reason": str(exc)}
            return 200, {
                "conversation_id": annotation.conversation_id,
                "quality": annotation.quality.value,
                "characteristics": sorted(c.value for c in annotation.characteristics),
                "error_tags": sorted(t.value for t in annotation.error_tags),
                "annotator": annotation.annotator,
                "iteration": annotation.iteration,
            }

        return idempotent(request, idempotency_key, produce)

    @app.post("/api/iterations/promote")
    def promote(
        request: Request,
        idempotency_key: str | None = Header(default=None),
        session: ApiSession = Depends(get_session),
    ):
        require(session, "iterate")

        def produce() -> tuple[int, dict]:
            with store_lock:
                if store.frozen:
                    return 409, {"reason": FROZEN_REASON}
                try:
                    promoted = store.promote_and_advance()
                except SeedsetError as exc:
                    return 409, {"reason": str(exc)}
            return 200, {
                "promoted": [e.conversation.conversation_id for e in promoted],
                "iteration": store.completed_iterations,
                "frozen": store.frozen,
                "seedset_size": len(store.seed_examples()),
            }

        return idempotent(request, idempotency_key, produce)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def make_pipeline_generator_factory(
    workspace: Path | str,
    backend_name: str = "mock",
    base_seed: int = 0,
    defect: str | None = None,
    defect_rate: float = 0.15,
) -> Callable[[PipelineConfig, SeedStore], BatchGenerator]:
    """Build iteration generators from workspace artifacts on demand."""
    from .clustering import load_clusters
    from .corpus import load_corpus
    from .llm_gateway import GenerationConfig, LlmGateway, MockChatBackend
    from .pipeline import ConversationPipeline

    root = Path(workspace)

    def factory(config: PipelineConfig, store: SeedStore) -> BatchGenerator:
        images = load_corpus(root)
        survivors = load_clusters(root)
        if backend_name != "mock":
            raise ValueError("only the mock backend can be constructed from a workspace alone")
        gateway = LlmGateway(
            MockChatBackend(defect=defect, defect_rate=defect_rate if defect else 0.0),
            GenerationConfig(
                top_p=config.top_p,
                temperature=config.temperature,
            ),
            log_path=root / "generation_log.jsonl",
        )
        return ConversationPipeline(
            corpus={image.image_id: image for image in images},
            clusters=survivors,
            gateway=gateway,
            config=config,
            base_seed=base_seed + store.completed_iterations + 1,
        )

    return factory
