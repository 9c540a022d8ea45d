"""Pipeline configuration: JSON file schema, defaults, validation.

The config file is plain JSON (schema documented in docs/formats.md).
Every numeric field is validated by its owning dataclass before any stage
runs; unknown keys are rejected to catch typos early. API tokens are never
read from the config file, only from the named environment variable.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .embedding import CombineRule
from .kinematics import KinematicsConfig
from .mlp import TrainConfig
from .preprocess import CleaningConfig


class ConfigError(ValueError):
    """The config file is invalid."""


@dataclass(frozen=True)
class PathsConfig:
    out: str = "runs/out"
    geolife_root: Optional[str] = None
    osm: Optional[str] = None
    segments: Optional[str] = None  # pre-built segment interchange file


@dataclass(frozen=True)
class RenderConfig:
    buffer_frac: float = 0.2
    max_px: int = 768
    raster: bool = False
    style_version: str = "v1"

    def __post_init__(self) -> None:
        if self.buffer_frac <= 0:
            raise ConfigError("render.buffer_frac must be positive")
        if self.max_px < 16:
            raise ConfigError("render.max_px must be at least 16")


@dataclass(frozen=True)
class NarrativeConfig:
    source: str = "deterministic"  # deterministic | remote
    point_cap: int = 2000

    def __post_init__(self) -> None:
        if self.source not in ("deterministic", "remote"):
            raise ConfigError(f"narrative.source must be deterministic|remote, got {self.source!r}")
        if self.point_cap < 2:
            raise ConfigError("narrative.point_cap must be at least 2")


@dataclass(frozen=True)
class EmbeddingConfig:
    backend: str = "offline"  # offline | remote
    dim: int = 256
    seed: int = 7
    combine_rule: str = "concatenation"

    def __post_init__(self) -> None:
        if self.backend not in ("offline", "remote"):
            raise ConfigError(f"embedding.backend must be offline|remote, got {self.backend!r}")
        if self.dim < 8:
            raise ConfigError("embedding.dim must be at least 8")
        try:
            CombineRule(self.combine_rule)
        except ValueError:
            raise ConfigError(f"embedding.combine_rule invalid: {self.combine_rule!r}") from None

    @property
    def rule(self) -> CombineRule:
        return CombineRule(self.combine_rule)


@dataclass(frozen=True)
class RemoteConfig:
    reasoner_endpoint: str = ""
    reasoner_model: str = ""
    embed_endpoint: str = ""
    embed_model: str = ""
    embed_dim: int = 256
    timeout_s: float = 30.0
    retries: int = 3
    requests_per_minute: float = 60.0
    max_in_flight: int = 2
    token_env: str = "TRAJMODE_API_TOKEN"


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    kinematics: KinematicsConfig = field(default_factory=KinematicsConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    narrative: NarrativeConfig = field(default_factory=NarrativeConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    remote: RemoteConfig = field(default_factory=RemoteConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def needs_network(self) -> bool:
        return self.embedding.backend == "remote" or self.narrative.source == "remote"

    def validate_remote_ready(self) -> None:
        """Pre-flight: fail before any stage when remote calls lack a token."""
        if not self.needs_network():
            return
        if not os.environ.get(self.remote.token_env):
            raise ConfigError(
                f"remote backend configured but environment variable "
                f"{self.remote.token_env} is not set"
            )
        if self.narrative.source == "remote" and not self.remote.reasoner_endpoint:
            raise ConfigError("narrative.source=remote requires remote.reasoner_endpoint")
        if self.embedding.backend == "remote" and not self.remote.embed_endpoint:
            raise ConfigError("embedding.backend=remote requires remote.embed_endpoint")

    def validate_inputs_exist(self, require_segments_source: bool = True) -> None:
        p = self.paths
        for label, value in (("paths.geolife_root", p.geolife_root), ("paths.osm", p.osm),
                             ("paths.segments", p.segments)):
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{label} does not exist: {value}")
        if require_segments_source and p.geolife_root is None and p.segments is None:
            raise ConfigError("config needs paths.geolife_root or paths.segments")


_SECTIONS = {
    "paths": PathsConfig,
    "cleaning": CleaningConfig,
    "kinematics": KinematicsConfig,
    "render": RenderConfig,
    "narrative": NarrativeConfig,
    "embedding": EmbeddingConfig,
    "train": TrainConfig,
    "remote": RemoteConfig,
}


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    coerced = dict(data)
    for f in dataclasses.fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    try:
        return cls(**coerced)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} config: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        if section in data:
            kwargs[section] = _build_section(cls, data[section], section)
    return PipelineConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(data)


def with_overrides(
    cfg: PipelineConfig,
    out: Optional[str] = None,
    seed: Optional[int] = None,
) -> PipelineConfig:
    """Apply the global CLI flags: --out and --seed.

    The seed drives the offline embedder and the train split so one flag
    reproduces a whole run.
    """
    paths = dataclasses.replace(cfg.paths, out=out) if out is not None else cfg.paths
    embedding = cfg.embedding
    train = cfg.train
    if seed is not None:
        embedding = dataclasses.replace(cfg.embedding, seed=seed)
        train = dataclasses.replace(cfg.train, split_seed=seed)
    return dataclasses.replace(cfg, paths=paths, embedding=embedding, train=train)
