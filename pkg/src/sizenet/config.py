"""Pipeline configuration: one flat ``key = value`` file with a section per stage.

Example::

    [pipeline]
    seed = 7

    [simulate]
    articles_per_category = 400
    category_base_rate = 0.15, 0.25, 0.35

    [train]
    epochs = 150
    curriculum_fractions = 1/3, 2/3, 1

Unknown sections or keys are rejected. Every stage seed is derived from the
single global seed, so one number reproduces the whole run.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError
from .seeding import derive_seed
from .simulator import SimConfig
from .student import TrainConfig


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        parts = (self.train, self.validation, self.test)
        if any(f <= 0 for f in parts):
            raise ConfigError(f"split fractions must be positive: {parts}")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(parts)}")


@dataclass(frozen=True)
class PathsConfig:
    out: str = "sizenet-out"
    sales: str = ""
    returns: str = ""
    catalog: str = ""
    truth: str = ""
    images: str = ""
    embeddings: str = ""


@dataclass(frozen=True)
class LabelConfig:
    window_start: int = 0
    window_end: int | None = None  # default: last simulated day
    min_age: int | None = None


@dataclass(frozen=True)
class FeaturizeConfig:
    dim: int = 128
    standardize: bool = False


@dataclass(frozen=True)
class EvaluateConfig:
    coldstart_max_sales: int = 5
    w_split: float | None = None
    plots: bool = True


@dataclass(frozen=True)
class ExplainConfig:
    n_masks: int = 1000
    grid: int = 8
    p_keep: float = 0.5
    fill: str = "zero"
    top_tp: int = 5
    top_fp: int = 0
    quantile: float = 0.1

    def __post_init__(self):
        if self.fill not in ("zero", "background-mean"):
            raise ConfigError(f"explain.fill must be 'zero' or 'background-mean', got {self.fill!r}")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    simulate: SimConfig = field(default_factory=SimConfig)
    label: LabelConfig = field(default_factory=LabelConfig)
    featurize: FeaturizeConfig = field(default_factory=FeaturizeConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)

    def sub_seed(self, component: str) -> int:
        return derive_seed(self.seed, component)

    def seeded(self) -> "PipelineConfig":
        """Copy with every stage seed derived from the global seed."""
        return replace(
            self,
            simulate=replace(self.simulate, seed=self.sub_seed("simulate")),
            train=replace(self.train, seed=self.sub_seed("train")),
            split=replace(self.split, seed=self.sub_seed("split")),
        )

    @property
    def out(self) -> Path:
        return Path(self.paths.out)

    def path(self, key: str, default_name: str) -> Path:
        value = getattr(self.paths, key)
        return Path(value) if value else self.out / default_name


# section name -> (dataclass, attribute on PipelineConfig)
_SECTIONS = {
    "paths": (PathsConfig, "paths"),
    "simulate": (SimConfig, "simulate"),
    "label": (LabelConfig, "label"),
    "featurize": (FeaturizeConfig, "featurize"),
    "train": (TrainConfig, "train"),
    "split": (SplitSpec, "split"),
    "evaluate": (EvaluateConfig, "evaluate"),
    "explain": (ExplainConfig, "explain"),
}
# seeds are derived from [pipeline] seed, never set per stage
_DERIVED = {"seed"}


def _parse_number(text: str) -> float:
    return float(Fraction(text.strip()))


def _convert(raw: str, default, annotation: str, where: str):
    raw = raw.strip()
    try:
        if "bool" in annotation:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if raw == "" and "None" in annotation:
            return None
        if "tuple" in annotation:
            return tuple(_parse_number(p) for p in raw.split(",") if p.strip())
        if annotation.startswith("int"):
            return int(raw)
        if annotation.startswith("float"):
            return _parse_number(raw)
        if annotation.startswith("str"):
            return raw
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: cannot parse {raw!r} as {annotation}") from None
    raise ConfigError(f"{where}: unsupported option type {annotation}")


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read a config file (or defaults when ``path`` is None) and apply overrides.

    ``overrides`` accepts ``seed`` and ``out``.
    """
    sections: dict[str, dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
        sections = {name: dict(parser[name]) for name in parser.sections()}

    unknown = set(sections) - set(_SECTIONS) - {"pipeline"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    pipeline = sections.get("pipeline", {})
    extra = set(pipeline) - {"seed"}
    if extra:
        raise ConfigError(f"unknown key(s) in [pipeline]: {', '.join(sorted(extra))}")
    seed = int(pipeline.get("seed", 0))

    built = {}
    for name, (cls, attr) in _SECTIONS.items():
        values = sections.get(name, {})
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in fields or key in _DERIVED:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            f = fields[key]
            kwargs[key] = _convert(raw, f.default, str(f.type), f"[{name}] {key}")
        try:
            built[attr] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None

    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])
    if overrides.get("out"):
        built["paths"] = replace(built["paths"], out=str(overrides["out"]))
    return PipelineConfig(seed=seed, **built).seeded()
