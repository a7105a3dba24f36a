"""Layered run configuration.

Values come from three places with fixed precedence: the TOML file
(``ftp.toml`` by default) is the base, command-line flags override the file,
and the FTP_LLM_* environment variables override both.  Every section has
documented defaults so an absent file is a valid configuration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

from .kb import EMBED_DIM, default_kb_dir
from .llm import (
    DEFAULT_N_SAMPLES,
    DEFAULT_TEMPERATURE,
    DEFAULT_TOP_P,
    ENV_API_KEY,
    ENV_BASE_URL,
    ENV_MODEL,
    LlmSettings,
)
from .verify import Adapter

DEFAULT_CONFIG_NAME = "ftp.toml"


class ConfigError(Exception):
    pass


@dataclass
class PathsConfig:
    kb_dir: str = ""  # empty: the packaged knowledge base
    failure_kb: str = "failures.json"
    model_file: str = "model.json"


@dataclass
class FaultlabConfig:
    per_latch: int = 20
    seed: int = 0
    exhaustive_budget: int = 100_000

    def __post_init__(self):
        if self.per_latch < 1:
            raise ConfigError("faultlab.per_latch must be at least 1")
        if self.exhaustive_budget < 1:
            raise ConfigError("faultlab.exhaustive_budget must be at least 1")
        if self.seed < 0:
            raise ConfigError("faultlab.seed must be non-negative")


@dataclass
class GnnConfig:
    features: int = 17
    hidden: int = 64
    learning_rate: float = 1e-3
    epochs: int = 200
    dropout: float = 0.5
    seed: int = 0
    split_seed: int = 0

    def __post_init__(self):
        if self.features < 1 or self.hidden < 1:
            raise ConfigError("gnn dimensions must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("gnn.learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("gnn.epochs must be at least 1")
        if not 0 <= self.dropout < 1:
            raise ConfigError("gnn.dropout must lie in [0, 1)")


@dataclass
class LlmConfig:
    base_url: str = ""
    model: str = ""
    api_key: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    n_samples: int = DEFAULT_N_SAMPLES

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ConfigError("llm.temperature must lie in [0, 2]")
        if not 0 < self.top_p <= 1:
            raise ConfigError("llm.top_p must lie in (0, 1]")
        if self.n_samples < 1:
            raise ConfigError("llm.n_samples must be at least 1")

    def settings(self) -> LlmSettings:
        return LlmSettings(
            base_url=self.base_url or None,
            model=self.model or None,
            api_key=self.api_key or None,
            temperature=self.temperature,
            top_p=self.top_p,
            n_samples=self.n_samples,
        )


@dataclass
class RagConfig:
    k: int = 3
    dims: int = EMBED_DIM

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("rag.k must be at least 1")
        if self.dims < 1:
            raise ConfigError("rag.dims must be at least 1")


@dataclass
class Config:
    paths: PathsConfig = field(default_factory=PathsConfig)
    faultlab: FaultlabConfig = field(default_factory=FaultlabConfig)
    gnn: GnnConfig = field(default_factory=GnnConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    rag: RagConfig = field(default_factory=RagConfig)
    adapters: dict[str, Adapter] = field(default_factory=dict)

    def kb_dir(self) -> Path:
        return Path(self.paths.kb_dir) if self.paths.kb_dir else default_kb_dir()


_SECTIONS = {
    "paths": PathsConfig,
    "faultlab": FaultlabConfig,
    "gnn": GnnConfig,
    "llm": LlmConfig,
    "rag": RagConfig,
}


def _build_section(name: str, cls, data: dict):
    known = {f.name: f.type for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key {name}.{key}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from exc


def _build_adapters(data: dict) -> dict[str, Adapter]:
    adapters = {}
    for stage, spec in data.items():
        if not isinstance(spec, dict) or "command" not in spec:
            raise ConfigError(f"adapters.{stage} needs a command string")
        extras = set(spec) - {"command", "timeout_s"}
        if extras:
            raise ConfigError(f"unknown key adapters.{stage}.{sorted(extras)[0]}")
        adapters[stage] = Adapter(
            command=str(spec["command"]),
            timeout_s=float(spec.get("timeout_s", 30.0)),
        )
    return adapters


def load_config(path: str | Path | None = None) -> Config:
    """Read the TOML file; a missing default file yields pure defaults,
    an explicitly named missing file is an error."""
    explicit = path is not None
    candidate = Path(path) if explicit else Path(DEFAULT_CONFIG_NAME)
    if not candidate.exists():
        if explicit:
            raise ConfigError(f"config file not found: {candidate}")
        return Config()
    try:
        raw = tomllib.loads(candidate.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {candidate}: {exc}") from exc

    kwargs = {}
    for name, payload in raw.items():
        if name == "adapters":
            kwargs["adapters"] = _build_adapters(payload)
        elif name in _SECTIONS:
            if not isinstance(payload, dict):
                raise ConfigError(f"[{name}] must be a table")
            kwargs[name] = _build_section(name, _SECTIONS[name], payload)
        else:
            raise ConfigError(f"unknown section [{name}]")
    return Config(**kwargs)


def apply_overrides(config: Config, overrides: dict[str, object]) -> Config:
    """Dotted-path updates (``{"faultlab.per_latch": 50}``), the flag layer.
    None values are ignored so absent flags pass through."""
    staged: dict[str, dict[str, object]] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or not key:
            raise ConfigError(f"unknown override {dotted!r}")
        if key not in {f.name for f in fields(_SECTIONS[section])}:
            raise ConfigError(f"unknown override {dotted!r}")
        staged.setdefault(section, {})[key] = value
    updated = config
    for section, changes in staged.items():
        updated = replace(updated, **{section: replace(getattr(updated, section), **changes)})
    return updated


def apply_env(config: Config, environ=os.environ) -> Config:
    """The FTP_LLM_* variables win over file and flags."""
    changes = {}
    for var, key in ((ENV_BASE_URL, "base_url"), (ENV_MODEL, "model"), (ENV_API_KEY, "api_key")):
        if environ.get(var):
            changes[key] = environ[var]
    if not changes:
        return config
    return replace(config, llm=replace(config.llm, **changes))


def resolve_config(
    path: str | Path | None = None,
    overrides: dict[str, object] | None = None,
    environ=os.environ,
) -> Config:
    """File, then flags, then environment."""
    config = load_config(path)
    if overrides:
        config = apply_overrides(config, overrides)
    return apply_env(config, environ)
