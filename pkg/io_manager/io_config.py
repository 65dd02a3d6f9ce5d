"""Load and validate the JSON run configuration.

Keys are the snake_case RunConfig field names; nested objects are `paths`,
`mcmc`, `sim`, `prior` and the entries of `study_settings`. An unknown key
at any level is a ConfigError.
"""
from __future__ import annotations
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from errors import ConfigError
from mcmc_manager.mcmc_output import McmcConfig
from model_manager.model_priors import PRIOR_OVERRIDE_KEYS
from sim_manager.sim_generator import SimConfig

MODES = ("simulate", "fit", "evaluate", "predict", "replicate-study")
SETTINGS = ("linear", "maximum", "ordinal-only", "compositional-only", "full")
THRESHOLD_SETTINGS = ("linear", "maximum")
SIM_ZETA = 1e-12
FIELD_ZETA = 1e-3
DEFAULT_FRACTION = 0.2

# setting -> variant passed to the fusion sampler
SETTING_VARIANTS = {
    "maximum": "maximum-observed",
    "ordinal-only": "ordinal-only",
    "compositional-only": "compositional-only",
    "full": "full",
}


@dataclass(frozen=True)
class StudySetting:
    """One of the compared model settings, with its threshold or annotated share."""

    setting: str
    threshold: Optional[float] = None
    annotated_fraction: Optional[float] = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"unknown setting '{self.setting}' (expected one of {', '.join(SETTINGS)})")
        if (self.threshold is not None) != (self.setting in THRESHOLD_SETTINGS):
            raise ConfigError(f"a threshold is required for, and only for, {' and '.join(THRESHOLD_SETTINGS)}")
        if self.threshold is not None and not 0 < self.threshold <= 1:
            raise ConfigError("threshold must be in (0, 1]")
        if self.annotated_fraction is not None and not 0 <= self.annotated_fraction <= 1:
            raise ConfigError("annotated_fraction must be in [0, 1]")

    @property
    def label(self) -> str:
        if self.setting in THRESHOLD_SETTINGS:
            return f"{self.setting}[{_percent(self.threshold)}%]"
        if self.setting in ("full", "ordinal-only"):
            return f"{self.setting}[{_percent(self.data_fraction)}%]"
        return self.setting

    @property
    def data_fraction(self) -> float:
        """Annotated share of the data this setting is fitted to."""
        return DEFAULT_FRACTION if self.annotated_fraction is None else self.annotated_fraction

    @property
    def variant(self) -> Optional[str]:
        return SETTING_VARIANTS.get(self.setting)

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _percent(value: float) -> str:
    return f"{100 * value:g}"


def default_study_settings() -> Tuple[StudySetting, ...]:
    """The thirteen compared settings."""
    out: List[StudySetting] = []
    out += [StudySetting("linear", threshold=t, annotated_fraction=0.2) for t in (0.75, 0.9, 0.99)]
    out += [StudySetting("maximum", threshold=t) for t in (0.75, 0.9, 0.99)]
    out += [StudySetting("ordinal-only", annotated_fraction=f) for f in (0.1, 0.2, 0.5)]
    out += [StudySetting("compositional-only")]
    out += [StudySetting("full", annotated_fraction=f) for f in (0.1, 0.2, 0.5)]
    return tuple(out)


@dataclass(frozen=True)
class PathsConfig:
    data: Optional[str] = None
    test: Optional[str] = None
    fit: Optional[str] = None
    grid: Optional[str] = None
    out: str = "out"


@dataclass(frozen=True)
class RunConfig:
    mode: str = "fit"
    setting: str = "full"
    threshold: Optional[float] = None
    annotated_fraction: Optional[float] = None
    paths: PathsConfig = field(default_factory=PathsConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    sim: Optional[SimConfig] = None
    prior: Dict[str, float] = field(default_factory=dict)
    zeta: Optional[float] = None
    L: Optional[int] = None
    seed: int = 0
    workers: int = 1
    replicates: int = 100
    study_settings: Tuple[StudySetting, ...] = field(default_factory=default_study_settings)
    max_images: int = 30
    standardize: bool = True
    high_from: int = 4
    verbose: bool = False
    beta_true: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode '{self.mode}' (expected one of {', '.join(MODES)})")
        # raises on an unknown setting or a misplaced threshold
        StudySetting(self.setting, self.threshold, self.annotated_fraction)
        unknown = set(self.prior) - set(PRIOR_OVERRIDE_KEYS)
        if unknown:
            raise ConfigError(f"unknown prior override(s): {', '.join(sorted(unknown))}")
        if self.zeta is not None and not self.zeta > 0:
            raise ConfigError(f"zeta must be > 0, got {self.zeta}")
        if self.workers < 1 or self.replicates < 1 or self.max_images < 1:
            raise ConfigError("workers, replicates and max_images must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not self.study_settings:
            raise ConfigError("study_settings must not be empty")
        labels = [s.label for s in self.study_settings]
        if len(set(labels)) != len(labels):
            raise ConfigError("study_settings contains duplicate settings")
        if self.L is not None and self.L < 2:
            raise ConfigError("L must be >= 2")
        if self.high_from < 1:
            raise ConfigError("high_from must be >= 1")

    @property
    def effective_zeta(self) -> float:
        if self.zeta is not None:
            return self.zeta
        return SIM_ZETA if self.mode in ("simulate", "replicate-study") else FIELD_ZETA

    @property
    def study_setting(self) -> StudySetting:
        return StudySetting(self.setting, self.threshold, self.annotated_fraction)

    def sim_config(self) -> SimConfig:
        return self.sim if self.sim is not None else SimConfig()

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "mode": self.mode,
            "setting": self.setting,
            "threshold": self.threshold,
            "annotated_fraction": self.annotated_fraction,
            "paths": asdict(self.paths),
            "mcmc": self.mcmc.to_dict(),
            "sim": None if self.sim is None else self.sim.to_dict(),
            "prior": dict(self.prior),
            "zeta": self.zeta,
            "L": self.L,
            "seed": self.seed,
            "workers": self.workers,
            "replicates": self.replicates,
            "study_settings": [s.to_dict() for s in self.study_settings],
            "max_images": self.max_images,
            "standardize": self.standardize,
            "high_from": self.high_from,
            "verbose": self.verbose,
            "beta_true": None if self.beta_true is None else list(self.beta_true),
        }
        return out


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"invalid '{where}': {e}") from e


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("run configuration must be a JSON object")
    data = dict(data)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in run configuration: {', '.join(sorted(unknown))}")
    if data.get("paths") is not None:
        data["paths"] = _build(PathsConfig, data["paths"], "paths")
    else:
        data.pop("paths", None)
    if data.get("mcmc") is not None:
        data["mcmc"] = _build(McmcConfig, data["mcmc"], "mcmc")
    else:
        data.pop("mcmc", None)
    if data.get("sim") is not None:
        data["sim"] = _build(SimConfig, data["sim"], "sim")
    if data.get("prior") is None:
        data.pop("prior", None)
    elif not isinstance(data["prior"], dict):
        raise ConfigError("'prior' must be a JSON object")
    if data.get("study_settings") is not None:
        entries = data["study_settings"]
        if not isinstance(entries, list):
            raise ConfigError("'study_settings' must be a list")
        data["study_settings"] = tuple(
            _build(StudySetting, entry, f"study_settings[{i}]") for i, entry in enumerate(entries)
        )
    else:
        data.pop("study_settings", None)
    if data.get("beta_true") is not None:
        data["beta_true"] = tuple(float(b) for b in data["beta_true"])
    try:
        return RunConfig(**data)
    except TypeError as e:
        raise ConfigError(f"invalid run configuration: {e}") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Read a RunConfig from a JSON file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return run_config_from_dict(data)


def with_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Apply CLI flag values; None means 'not given'. Keys prefixed mcmc_/paths_ go to the nested configs."""
    top, mcmc, paths = {}, {}, {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key.startswith("mcmc_"):
            mcmc[key[5:]] = value
        elif key.startswith("paths_"):
            paths[key[6:]] = value
        else:
            top[key] = value
    if mcmc:
        top["mcmc"] = replace(config.mcmc, **mcmc)
    if paths:
        top["paths"] = replace(config.paths, **paths)
    return replace(config, **top)
