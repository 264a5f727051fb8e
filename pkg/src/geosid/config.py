"""Pipeline configuration loaded from one YAML file.

Top-level sections (``ingest``, ``sid``, ``serialization``, ``reward``,
``geocode``, ``eval``) hold defaults for every city; a block under
``cities.<name>`` names that city's dataset and may override any section.
Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import copy
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .geocode import DEFAULT_ADDRESS_FIELD, DEFAULT_PATH_TEMPLATE
from .ingest import FORMATS
from .prompt import SerializationConfig
from .reward import HierarchyWeights, RewardConfig
from .sid import SidConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IngestSettings:
    min_count: int = 10
    gap_hours: float = 24.0
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    fixpoint: bool = False


@dataclass(frozen=True)
class GeocodeSettings:
    cache: Path | None = None
    endpoint: str | None = None
    path_template: str = DEFAULT_PATH_TEMPLATE
    address_field: str = DEFAULT_ADDRESS_FIELD
    requests_per_second: float = 1.0
    timeout_s: float = 10.0


@dataclass(frozen=True)
class EvalSettings:
    hr_ks: tuple[int, ...] = (1, 5, 10, 20)
    ndcg_ks: tuple[int, ...] = (5, 10, 20)
    percentiles: tuple[int, ...] = (50, 75, 90)
    cdf_points: int = 200


@dataclass(frozen=True)
class PipelineConfig:
    city: str
    dataset_path: Path
    dataset_format: str = "foursquare_tsv"
    columns: dict[str, int] | None = None
    embeddings_path: Path | None = None
    output_dir: Path = Path("out")
    seed: int = 0
    ingest: IngestSettings = field(default_factory=IngestSettings)
    sid: SidConfig = field(default_factory=SidConfig)
    serialization: SerializationConfig = field(default_factory=SerializationConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    geocode: GeocodeSettings = field(default_factory=GeocodeSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    @property
    def city_dir(self) -> Path:
        return self.output_dir / self.city

    @property
    def geocode_cache(self) -> Path:
        return self.geocode.cache or self.output_dir / "geocode_cache.tsv"


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _build(cls, raw: Mapping | None, section: str, **forced):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {sorted(unknown)}")
    raw.update(forced)
    for k, v in raw.items():
        if isinstance(v, list):
            raw[k] = tuple(v)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _path(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def load_config(path: str | Path, city: str | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, city, base=path.parent)


def config_from_dict(raw: Mapping, city: str | None = None, base: Path = Path(".")) -> PipelineConfig:
    cities = raw.get("cities") or {}
    if city is None:
        city = raw.get("default_city")
    if city is None:
        if len(cities) != 1:
            raise ConfigError(f"choose a city with --city (configured: {sorted(cities)})")
        city = next(iter(cities))
    if city not in cities:
        raise ConfigError(f"unknown city {city!r}; configured: {sorted(cities)}")
    top = {k: v for k, v in raw.items() if k not in ("cities", "default_city")}
    merged = _merge(top, cities[city] or {})

    allowed = {
        "dataset", "embeddings", "output_dir", "seed",
        "ingest", "sid", "serialization", "reward", "geocode", "eval",
    }
    unknown = set(merged) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}")
    dataset = merged.get("dataset") or {}
    if "path" not in dataset:
        raise ConfigError(f"city {city!r} has no dataset.path")
    fmt = dataset.get("format", "foursquare_tsv")
    if fmt not in FORMATS:
        raise ConfigError(f"dataset.format must be one of {FORMATS}")

    seed = int(merged.get("seed", 0))
    sid_raw = dict(merged.get("sid") or {})
    sid_raw.setdefault("rng_seed", seed)
    reward_raw = dict(merged.get("reward") or {})
    if "weights" in reward_raw:
        reward_raw["weights"] = _build(HierarchyWeights, reward_raw["weights"], "reward.weights")
    geo_raw = dict(merged.get("geocode") or {})
    if geo_raw.get("cache") is not None:
        geo_raw["cache"] = _path(base, geo_raw["cache"])

    return PipelineConfig(
        city=city,
        dataset_path=_path(base, dataset["path"]),
        dataset_format=fmt,
        columns=dataset.get("columns"),
        embeddings_path=_path(base, merged.get("embeddings")),
        output_dir=_path(base, merged.get("output_dir", "out")),
        seed=seed,
        ingest=_build(IngestSettings, merged.get("ingest"), "ingest"),
        sid=_build(SidConfig, sid_raw, "sid"),
        serialization=_build(SerializationConfig, merged.get("serialization"), "serialization"),
        reward=_build(RewardConfig, reward_raw, "reward"),
        geocode=_build(GeocodeSettings, geo_raw, "geocode"),
        eval=_build(EvalSettings, merged.get("eval"), "eval"),
    )
