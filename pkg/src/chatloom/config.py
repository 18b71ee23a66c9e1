"""Pipeline configuration.

Every tunable lives in one flat dataclass so a workspace's ``config.toml``
is a complete, auditable record of a run. The shipped defaults are the
reference operating point of the pipeline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

try:  # stdlib from 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - py3.10
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for unknown keys or unparseable config files."""


@dataclass(frozen=True)
class PipelineConfig:
    # corpus cleaning
    score_threshold: float = 30.0
    # topic clustering
    kmeans_k: int = 4096
    min_cluster_size: int = 32
    kmeans_max_iters: int = 100
    kmeans_tolerance: float = 1e-4
    normalize_embeddings: bool = False
    # image-group sampling
    group_size_choices: tuple[int, ...] = (2, 3, 4)
    # generation
    top_p: float = 1.0
    temperature: float = 1.0
    max_output_tokens: int = 2048
    # post-processing filters
    drift_threshold: float = 0.1
    max_turns: int = 5
    # human-in-the-loop refinement
    iteration_batch_size: int = 100
    freeze_after_iterations: int = 3
    # reproducibility: fixed timestamps and zeroed latencies in all artifacts
    deterministic: bool = False

    def replace(self, **overrides) -> "PipelineConfig":
        return dataclasses.replace(self, **_coerce(overrides))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["group_size_choices"] = list(self.group_size_choices)
        return d


def _coerce(values: dict) -> dict:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = dict(values)
    if "group_size_choices" in out:
        out["group_size_choices"] = tuple(int(n) for n in out["group_size_choices"])
    return out


def load_config(path: Path | str) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return PipelineConfig(**_coerce(raw))


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(config: PipelineConfig) -> str:
    lines = []
    for field in dataclasses.fields(PipelineConfig):
        lines.append(f"{field.name} = {_toml_value(getattr(config, field.name))}")
    return "\n".join(lines) + "\n"


def save_config(config: PipelineConfig, path: Path | str) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
