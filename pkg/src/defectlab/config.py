"""Run configuration: one YAML file, every pipeline constant overridable."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataset import SUITES
from .errors import ConfigError
from .learn import ModelSpec
from .miner import DEFAULT_FIX_WORDS, ISSUE_PATTERN

OUT_ENV = "DEFECTLAB_OUT"
DEFAULT_OUT = "defectlab-out"


@dataclass(frozen=True)
class ProjectConfig:
    name: str
    path: Path
    issues: Path | None = None


@dataclass(frozen=True)
class NamedModel:
    name: str
    spec: ModelSpec


def default_models(seed: int = 0) -> tuple[NamedModel, ...]:
    return tuple(NamedModel(kind, ModelSpec(kind, seed=seed)) for kind in ("NB", "DT", "RF"))


@dataclass(frozen=True)
class RunConfig:
    projects: tuple[ProjectConfig, ...] = ()
    interval_months: int = 6
    fix_words: tuple[str, ...] = DEFAULT_FIX_WORDS
    issue_pattern: str | None = ISSUE_PATTERN
    models: tuple[NamedModel, ...] = field(default_factory=default_models)
    importance_model: str = "RF"
    importance_scoring: str = "auc_weighted"
    suites: tuple[str, ...] = tuple(SUITES)
    k: int = 10
    repeats: int = 10
    seed: int = 0
    alpha: float = 0.05
    vif_investigate: float = 2.5
    vif_severe: float = 10.0
    undersample: bool = False
    output: Path | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.interval_months < 1:
            raise ConfigError("interval_months must be at least 1")
        if not 0 < self.vif_investigate < self.vif_severe:
            raise ConfigError("VIF thresholds must satisfy 0 < investigate < severe")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suites: {', '.join(unknown)}")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError("model names must be unique")
        if self.importance_model not in names:
            raise ConfigError(f"importance_model {self.importance_model!r} is not among the configured models")
        if self.importance_scoring not in ("auc_weighted", "f_minority"):
            raise ConfigError("importance_scoring must be auc_weighted or f_minority")
        projects = [p.name for p in self.projects]
        if len(set(projects)) != len(projects):
            raise ConfigError("project names must be unique")

    def model(self, name: str) -> ModelSpec:
        return next(m.spec for m in self.models if m.name == name)

    def output_root(self, override: str | Path | None = None) -> Path:
        """Command-line flag, then the environment variable, then the config file."""
        if override:
            return Path(override)
        if os.environ.get(OUT_ENV):
            return Path(os.environ[OUT_ENV])
        return self.output if self.output is not None else Path(DEFAULT_OUT)


_SCALARS = {
    "interval_months": int,
    "k": int,
    "repeats": int,
    "seed": int,
    "alpha": float,
    "importance_model": str,
    "importance_scoring": str,
    "undersample": bool,
}
_MODEL_KEYS = {"name", "kind", "max_depth", "min_samples_leaf", "n_trees", "max_features", "bootstrap"}


def _models(raw, seed: int) -> tuple[NamedModel, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("models must be a non-empty list")
    out = []
    for item in raw:
        if isinstance(item, str):
            item = {"kind": item}
        if not isinstance(item, dict) or "kind" not in item:
            raise ConfigError(f"bad model entry {item!r}")
        extra = set(item) - _MODEL_KEYS
        if extra:
            raise ConfigError(f"unknown model keys: {', '.join(sorted(extra))}")
        params = {k: v for k, v in item.items() if k != "name"}
        try:
            spec = ModelSpec(seed=seed, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model {item!r}: {exc}") from None
        out.append(NamedModel(str(item.get("name", item["kind"])), spec))
    return tuple(out)


def parse_config(raw: dict | None, base: Path = Path(".")) -> RunConfig:
    """Build a RunConfig from parsed YAML; relative paths resolve against ``base``."""
    raw = dict(raw or {})
    known = set(_SCALARS) | {"projects", "fix_words", "issue_pattern", "models", "suites", "vif", "output"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    kwargs: dict = {}
    try:
        for key, cast in _SCALARS.items():
            if key in raw:
                if cast is bool and not isinstance(raw[key], bool):
                    raise ValueError(f"{key} must be true or false")
                kwargs[key] = cast(raw[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    seed = kwargs.get("seed", 0)
    projects = []
    for item in raw.get("projects") or []:
        if not isinstance(item, dict) or "path" not in item:
            raise ConfigError(f"project entries need a path: {item!r}")
        path = base / str(item["path"])
        issues = base / str(item["issues"]) if item.get("issues") else None
        projects.append(ProjectConfig(str(item.get("name", path.name)), path, issues))
    kwargs["projects"] = tuple(projects)
    if "fix_words" in raw:
        kwargs["fix_words"] = tuple(str(w) for w in raw["fix_words"])
    if "issue_pattern" in raw:
        kwargs["issue_pattern"] = raw["issue_pattern"] or None
    kwargs["models"] = _models(raw["models"], seed) if "models" in raw else default_models(seed)
    if "suites" in raw:
        kwargs["suites"] = tuple(str(s) for s in raw["suites"])
    vif = raw.get("vif") or {}
    if not isinstance(vif, dict) or set(vif) - {"investigate", "severe"}:
        raise ConfigError("vif takes only investigate and severe")
    if "investigate" in vif:
        kwargs["vif_investigate"] = float(vif["investigate"])
    if "severe" in vif:
        kwargs["vif_severe"] = float(vif["severe"])
    if raw.get("output"):
        kwargs["output"] = base / str(raw["output"])
    return RunConfig(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw, path.parent)
