"""Pipeline configuration: one JSON document, every key validated.

Unknown keys are rejected rather than ignored; a silently misspelled
"max_occlusion" would change selection results without any visible error,
and the whole pipeline is supposed to be reproducible from the config.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, MissingFile
from ..geometry import FilterConfig


@dataclass(frozen=True)
class SelectConfig:
    k_max: int = 32            # retain at most this many views per object
    min_angle_deg: float = 15.0
    seed_index: int = 0
    held_out: int = 2          # FPS-last views reserved as pseudo ground truth

    def validate(self):
        if self.k_max < 1:
            raise ConfigError(f"select.k_max must be >= 1, got {self.k_max}")
        if not 0.0 <= self.min_angle_deg < 180.0:
            raise ConfigError(f"select.min_angle_deg out of range: {self.min_angle_deg}")
        if self.held_out < 0:
            raise ConfigError(f"select.held_out must be >= 0, got {self.held_out}")


@dataclass(frozen=True)
class CropConfig:
    out_size: int = 128
    fov_min_deg: float = 10.0
    fov_max_deg: float = 40.0
    margin: float = 1.2        # fov covers margin * bounding-sphere radius

    def validate(self):
        if self.out_size < 8:
            raise ConfigError(f"crop.out_size too small: {self.out_size}")
        if not 0.0 < self.fov_min_deg <= self.fov_max_deg < 180.0:
            raise ConfigError(
                f"crop fov range invalid: [{self.fov_min_deg}, {self.fov_max_deg}]"
            )
        if self.margin <= 0:
            raise ConfigError(f"crop.margin must be positive, got {self.margin}")


@dataclass(frozen=True)
class OcclusionConfig:
    n_samples: int = 64

    def validate(self):
        if self.n_samples < 1:
            raise ConfigError(f"occlusion.n_samples must be >= 1, got {self.n_samples}")


@dataclass(frozen=True)
class TargetConfig:
    n_views: int = 16
    fov_deg: float = 30.0
    elevation_deg: float = 0.0
    image_size: int = 128
    distance_scale: float = 2.5  # distance = scale * object bounding radius

    def validate(self):
        if self.n_views < 1:
            raise ConfigError(f"targets.n_views must be >= 1, got {self.n_views}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"targets.fov_deg out of range: {self.fov_deg}")
        if self.image_size < 8:
            raise ConfigError(f"targets.image_size too small: {self.image_size}")
        if self.distance_scale <= 0:
            raise ConfigError(f"targets.distance_scale must be positive")


@dataclass(frozen=True)
class GeneratorConfig:
    mode: str = "solid_color"  # solid_color | copy_nearest | external_dir
    color: tuple = (0.5, 0.5, 0.5)
    external_dir: str | None = None

    def validate(self):
        if self.mode not in ("solid_color", "copy_nearest", "external_dir"):
            raise ConfigError(f"generator.mode unknown: '{self.mode}'")
        if len(self.color) != 3:
            raise ConfigError(f"generator.color must have 3 components")
        if self.mode == "external_dir" and not self.external_dir:
            raise ConfigError("generator.external_dir required for external_dir mode")


@dataclass(frozen=True)
class LiftConfig:
    mode: str = "fit_free"     # fit_free | external_asset
    block: int = 8             # one gaussian per block x block pixel tile
    sh_degree: int = 0
    opacity: float = 0.95
    external_asset: str | None = None

    def validate(self):
        if self.mode not in ("fit_free", "external_asset"):
            raise ConfigError(f"lift.mode unknown: '{self.mode}'")
        if self.block < 1:
            raise ConfigError(f"lift.block must be >= 1, got {self.block}")
        if not 0 <= self.sh_degree <= 3:
            raise ConfigError(f"lift.sh_degree must be in [0, 3], got {self.sh_degree}")
        if not 0.0 < self.opacity < 1.0:
            raise ConfigError(f"lift.opacity must be in (0, 1), got {self.opacity}")
        if self.mode == "external_asset" and not self.external_asset:
            raise ConfigError("lift.external_asset required for external_asset mode")


@dataclass(frozen=True)
class ReconLossConfig:
    l1_weight: float = 0.8
    ssim_weight: float = 0.2

    def validate(self):
        if self.l1_weight < 0 or self.ssim_weight < 0:
            raise ConfigError("recon_loss weights must be >= 0")


@dataclass(frozen=True)
class MetricsConfig:
    patch_size: int = 8
    lpips_scores: str | None = None  # external per-instance score table

    def validate(self):
        if self.patch_size < 1:
            raise ConfigError(f"metrics.patch_size must be >= 1")


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str | None = None
    model: str = "gpt-5.2"
    token_env: str = "JUDGE_API_TOKEN"
    max_in_flight: int = 4
    timeout_s: float = 60.0
    retries: int = 2

    def validate(self):
        if self.max_in_flight < 1:
            raise ConfigError("judge.max_in_flight must be >= 1")
        if self.retries < 0:
            raise ConfigError("judge.retries must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    jobs: int = 1
    filter: FilterConfig = field(default_factory=FilterConfig)
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    select: SelectConfig = field(default_factory=SelectConfig)
    crop: CropConfig = field(default_factory=CropConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    lift: LiftConfig = field(default_factory=LiftConfig)
    recon_loss: ReconLossConfig = field(default_factory=ReconLossConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)

    def validate(self):
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        for section in (
            self.occlusion, self.select, self.crop, self.targets,
            self.generator, self.lift, self.recon_loss, self.metrics, self.judge,
        ):
            section.validate()
        if self.filter.min_px < 1:
            raise ConfigError("filter.min_px must be >= 1")
        if self.filter.d_min < 0 or self.filter.d_max <= self.filter.d_min:
            raise ConfigError("filter distance range invalid")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        """Stable serialization used in stage hashes."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


_SECTIONS = {
    "filter": FilterConfig,
    "occlusion": OcclusionConfig,
    "select": SelectConfig,
    "crop": CropConfig,
    "targets": TargetConfig,
    "generator": GeneratorConfig,
    "lift": LiftConfig,
    "recon_loss": ReconLossConfig,
    "metrics": MetricsConfig,
    "judge": JudgeConfig,
}


def _build_section(name: str, cls, payload) -> object:
    if not isinstance(payload, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown key '{name}.{sorted(unknown)[0]}'")
    coerced = dict(payload)
    if "color" in coerced and isinstance(coerced["color"], list):
        coerced["color"] = tuple(coerced["color"])
    try:
        return cls(**coerced)
    except TypeError as exc:
        raise ConfigError(f"section '{name}': {exc}") from exc


def config_from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    top_known = {"seed", "jobs"} | set(_SECTIONS)
    unknown = set(doc) - top_known
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}'")
    kwargs = {}
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    if "jobs" in doc:
        kwargs["jobs"] = int(doc["jobs"])
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _build_section(name, cls, doc[name])
    cfg = PipelineConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    return config_from_dict(doc)


def default_config() -> PipelineConfig:
    cfg = PipelineConfig()
    cfg.validate()
    return cfg
