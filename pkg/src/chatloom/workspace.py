"""Workspace directory layout, stage gating, and the run manifest.

A workspace is a directory holding the config, every stage artifact, and
`manifest.json`: a record of which stages ran (with their seeds and any
forced overrides) plus a content-hash inventory of the files they wrote.
Stages refuse to run before their predecessors unless forced, and refuse
to run at all if the config file changed since the manifest was written.
All writes go through a temp-file-plus-rename so an interrupted stage
never corrupts completed artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .config import PipelineConfig, dump_config, load_config, save_config

MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.toml"
MANIFEST_VERSION = 1

STAGE_PREDECESSORS: dict[str, tuple[str, ...]] = {
    "init": (),
    "ingest": ("init",),
    "score": ("ingest",),
    "cluster": ("score",),
    "sample": ("cluster",),
    "generate": ("sample",),
    "parse": ("generate",),
    "filter": ("parse",),
    "stats": ("filter",),
    "export": ("filter",),
    "iterate": ("cluster",),
    "promote": ("iterate",),
}


class WorkspaceError(RuntimeError):
    pass


class StaleWorkspaceError(WorkspaceError):
    pass


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_text(path: Path | str, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class StageRecord:
    name: str
    completed_at: str
    seed: int | None = None
    forced: bool = False
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "completed_at": self.completed_at,
            "seed": self.seed,
            "forced": self.forced,
            "outputs": self.outputs,
        }

    @staticmethod
    def from_dict(d: dict) -> "StageRecord":
        return StageRecord(
            name=d["name"],
            completed_at=d["completed_at"],
            seed=d.get("seed"),
            forced=d.get("forced", False),
            outputs=list(d.get("outputs", [])),
        )


@dataclass
class Manifest:
    config_hash: str
    stages: dict[str, StageRecord] = field(default_factory=dict)
    inventory: dict[str, str] = field(default_factory=dict)
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "stages": {name: record.to_dict() for name, record in sorted(self.stages.items())},
            "inventory": dict(sorted(self.inventory.items())),
        }

    @staticmethod
    def from_dict(d: dict) -> "Manifest":
        return Manifest(
            config_hash=d["config_hash"],
            stages={name: StageRecord.from_dict(r) for name, r in d.get("stages", {}).items()},
            inventory=dict(d.get("inventory", {})),
            version=d.get("version", MANIFEST_VERSION),
        )


class Workspace:
    """Filesystem root for one pipeline run."""

    def __init__(self, root: Path | str, timestamp: Callable[[], str] | None = None):
        self.root = Path(root)
        self._timestamp = timestamp or _utc_now_iso

    # -- artifact paths -----------------------------------------------------

    @property
    def config_path(self) -> Path:
        return self.root / CONFIG_FILE

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_FILE

    def path(self, name: str) -> Path:
        return self.root / name

    @property
    def seedset_dir(self) -> Path:
        return self.root / "seedset"

    # -- lifecycle ----------------------------------------------------------

    @staticmethod
    def initialize(
        root: Path | str,
        config: PipelineConfig,
        timestamp: Callable[[], str] | None = None,
    ) -> "Workspace":
        ws = Workspace(root, timestamp=timestamp)
        ws.root.mkdir(parents=True, exist_ok=True)
        if ws.manifest_path.exists():
            raise WorkspaceError(f"workspace already initialized: {ws.root}")
        save_config(config, ws.config_path)
        manifest = Manifest(config_hash=hash_bytes(dump_config(config).encode("utf-8")))
        manifest.stages["init"] = StageRecord(
            name="init", completed_at=ws._timestamp(), outputs=[CONFIG_FILE]
        )
        manifest.inventory[CONFIG_FILE] = hash_file(ws.config_path)
        ws.save_manifest(manifest)
        return ws

    def load_config(self) -> PipelineConfig:
        if not self.config_path.exists():
            raise WorkspaceError(f"missing {CONFIG_FILE} in {self.root}")
        return load_config(self.config_path)

    def load_manifest(self) -> Manifest:
        if not self.manifest_path.exists():
            raise WorkspaceError(
                f"not a workspace (missing {MANIFEST_FILE}): {self.root}; run init first"
            )
        return Manifest.from_dict(json.loads(self.manifest_path.read_text(encoding="utf-8")))

    def save_manifest(self, manifest: Manifest) -> None:
        atomic_write_text(
            self.manifest_path, json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
        )

    # -- stage gating -------------------------------------------------------

    def check_fresh(self, manifest: Manifest) -> None:
        """Reject runs whose config changed after the manifest was written."""
        current = hash_bytes(dump_config(self.load_config()).encode("utf-8"))
        if current != manifest.config_hash:
            raise StaleWorkspaceError(
                "stale workspace: config.toml changed since initialization; "
                "re-run init in a fresh directory or restore the config"
            )

    def require_predecessors(self, manifest: Manifest, stage: str, force: bool = False) -> None:
        if stage not in STAGE_PREDECESSORS:
            raise WorkspaceError(f"unknown stage: {stage}")
        if force:
            return
        for predecessor in STAGE_PREDECESSORS[stage]:
            if predecessor not in manifest.stages:
                raise WorkspaceError(
                    f"stage '{stage}' requires '{predecessor}' to have completed first "
                    f"(use --force to override)"
                )

    def record_stage(
        self,
        manifest: Manifest,
        stage: str,
        outputs: list[str],
        seed: int | None = None,
        forced: bool = False,
    ) -> Manifest:
        manifest.stages[stage] = StageRecord(
            name=stage,
            completed_at=self._timestamp(),
            seed=seed,
            forced=forced,
            outputs=sorted(outputs),
        )
        for rel in outputs:
            manifest.inventory[rel] = hash_file(self.root / rel)
        self.save_manifest(manifest)
        return manifest

    def verify_inventory(self, manifest: Manifest) -> list[str]:
        """Paths whose current hash differs from the manifest (or vanished)."""
        mismatches = []
        for rel, expected in sorted(manifest.inventory.items()):
            target = self.root / rel
            if not target.exists():
                mismatches.append(f"{rel}: missing")
            elif hash_file(target) != expected:
                mismatches.append(f"{rel}: hash mismatch")
        return mismatches
