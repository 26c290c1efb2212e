"""Run configuration: TOML parsing, validation, and effective-config output.

Unknown keys are rejected (typos fail loudly); every field has a default
so a minimal config only names the data paths. CLI flags override file
values; the effective configuration is what lands in the run manifest.
"""

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .captions import DEFAULT_TAXONOMY
from .errors import ConfigError


@dataclass
class PathsConfig:
    dataset: str = ""
    bank: str = ""
    layout: str = ""
    out_dir: str = "out"


@dataclass
class EncoderSection:
    patch_len: int = 16
    d_model: int = 64
    n_spatial_layers: int = 2
    n_temporal_layers: int = 2
    n_attn_heads: int = 4
    ff_mult: int = 4
    dropout: float = 0.1
    seed: int = 0


@dataclass
class TrainSection:
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    temperature: float = 0.07
    loss_kind: str = "contrastive"
    active_heads: list = field(default_factory=list)
    seed: int = 0
    checkpoint_every: int = 0
    split: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    split_seed: int = 0


@dataclass
class EndpointSection:
    url: str = ""
    timeout: float = 30.0
    max_workers: int = 4


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    train: TrainSection = field(default_factory=TrainSection)
    taxonomy: dict = field(default_factory=lambda: {k: list(v) for k, v in
                                                    DEFAULT_TAXONOMY.items()})
    endpoint: EndpointSection = field(default_factory=EndpointSection)

    def to_dict(self) -> dict:
        return {
            "paths": asdict(self.paths),
            "encoder": asdict(self.encoder),
            "train": asdict(self.train),
            "taxonomy": {k: list(v) for k, v in self.taxonomy.items()},
            "endpoint": asdict(self.endpoint),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {
    "paths": PathsConfig,
    "encoder": EncoderSection,
    "train": TrainSection,
    "endpoint": EndpointSection,
}

_FLOAT_FIELDS = {"dropout", "learning_rate", "temperature", "timeout"}


def _apply_section(obj, section_name: str, values: dict):
    known = set(obj.__dataclass_fields__)
    for key, val in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {section_name}.{key!r}")
        current = getattr(obj, key)
        if key in _FLOAT_FIELDS or isinstance(current, float):
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{section_name}.{key} must be a number")
            val = float(val)
        elif isinstance(current, int) and not isinstance(current, bool):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{section_name}.{key} must be an integer")
        elif isinstance(current, str):
            if not isinstance(val, str):
                raise ConfigError(f"{section_name}.{key} must be a string")
        elif isinstance(current, list):
            if not isinstance(val, list):
                raise ConfigError(f"{section_name}.{key} must be a list")
            val = list(val)
        setattr(obj, key, val)


def from_dict(raw: dict) -> RunConfig:
    cfg = RunConfig()
    for section, values in raw.items():
        if section == "taxonomy":
            if not isinstance(values, dict):
                raise ConfigError("taxonomy must be a table of level -> names")
            for level, names in values.items():
                if level not in ("low", "mid", "high"):
                    raise ConfigError(f"unknown key taxonomy.{level!r}")
                if not isinstance(names, list):
                    raise ConfigError(f"taxonomy.{level} must be a list of names")
            cfg.taxonomy = {k: list(v) for k, v in values.items()}
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a table")
        _apply_section(getattr(cfg, section), section, values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.train.loss_kind not in ("contrastive", "mse"):
        raise ConfigError(f"train.loss_kind must be contrastive or mse, "
                          f"got {cfg.train.loss_kind!r}")
    if cfg.train.temperature <= 0:
        raise ConfigError("train.temperature must be > 0")
    if len(cfg.train.split) != 3 or any(r <= 0 for r in cfg.train.split):
        raise ConfigError("train.split must be three positive ratios")
    if abs(sum(cfg.train.split) - 1.0) > 1e-9:
        raise ConfigError("train.split must sum to 1")
    if not 0.0 <= cfg.encoder.dropout < 1.0:
        raise ConfigError("encoder.dropout must be in [0, 1)")


def parse_config(path) -> RunConfig:
    with open(path, "rb") as fp:
        try:
            raw = tomllib.load(fp)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return from_dict(raw)


# ---------------------------------------------------------------------------
# effective-config output (small TOML writer for our value types)
# ---------------------------------------------------------------------------

def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def to_toml(cfg: RunConfig) -> str:
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, val in values.items():
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
    return "\n".join(lines)


def write_effective(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(to_toml(cfg))
