"""
Configuration records and the flat `key = value` config file format.

Nested fields are addressed with dotted keys, e.g.

    crop = 256
    lr_fred = 0.0001
    weights_deblur.beta = 0.1
    blur.sigma_range = 0.5, 4.0
    ablation.use_aci = false
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from exceptions import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "UWF_ENHANCE_SEED"

TRUE_STRINGS = {"true", "yes", "on", "1"}
FALSE_STRINGS = {"false", "no", "off", "0"}

# Network config fields that mirror an ablation switch
ABLATION_MIRRORS = {"fred.use_aci": "use_aci", "rice.use_cpu": "use_cpu"}


class FieldRuleError(ValueError):
    """Cross-field rule failure that names the field to fix."""

    def __init__(self, message: str, key: str):
        super().__init__(message)
        self.key = key


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AciConfig(_Record):
    """Channel layout of one asymmetric channel integration unit."""

    in_channels_per_source: List[int]
    out_channels: int
    mlp_reduction: int = 8

    @model_validator(mode="after")
    def _check(self):
        if not self.in_channels_per_source or min(self.in_channels_per_source) < 1:
            raise ValueError("in_channels_per_source needs at least one positive count")
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if self.mlp_reduction < 1 or sum(self.in_channels_per_source) % self.mlp_reduction:
            raise ValueError(
                f"mlp_reduction {self.mlp_reduction} must divide the concatenated "
                f"channel count {sum(self.in_channels_per_source)}"
            )
        return self


class FredConfig(_Record):
    """Frequency-decoupled deblurring network layout."""

    levels: int = 3
    base_channels: int = 32
    channel_multipliers: Tuple[int, ...] = (1, 2, 4)
    aps_pool: int = 2
    supervision_scales: int = 3
    mlp_reduction: int = 8
    use_aci: bool = True
    zero_init_heads: bool = True

    @model_validator(mode="after")
    def _check(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if len(self.channel_multipliers) != self.levels:
            raise ValueError("channel_multipliers must have one entry per level")
        if self.supervision_scales != self.levels:
            raise ValueError("supervision_scales must equal levels")
        if self.base_channels < 1 or self.aps_pool < 1 or min(self.channel_multipliers) < 1:
            raise ValueError("channel counts and aps_pool must be positive")
        if self.use_aci and sum(self.level_channels) % self.mlp_reduction:
            raise ValueError(
                f"mlp_reduction {self.mlp_reduction} must divide the fused encoder "
                f"channel count {sum(self.level_channels)}"
            )
        return self

    @property
    def level_channels(self) -> List[int]:
        return [self.base_channels * m for m in self.channel_multipliers]

    @property
    def size_multiple(self) -> int:
        """Input height/width must be divisible by this."""
        return 2 ** (self.levels - 1) * self.aps_pool


class CpuConfig(_Record):
    """Color preservation unit width."""

    channels: int = 32
    per_band_params: bool = False

    @field_validator("channels")
    @classmethod
    def _positive(cls, value):
        if value < 1:
            raise ValueError("channels must be >= 1")
        return value


class RiceConfig(_Record):
    """Retinex-guided illumination compensation network layout."""

    channels: int = 32
    cpu_blocks: int = 3
    epsilon_r: float = 0.05
    use_cpu: bool = True
    per_band_params: bool = False

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 < self.epsilon_r < 1.0:
            raise ValueError("epsilon_r must lie in (0, 1)")
        if self.channels < 1 or self.cpu_blocks < 0:
            raise ValueError("channels must be >= 1 and cpu_blocks >= 0")
        return self

    @property
    def cpu(self) -> CpuConfig:
        return CpuConfig(channels=self.channels, per_band_params=self.per_band_params)

    @property
    def size_multiple(self) -> int:
        return 2


class DeblurLossWeights(_Record):
    beta: float = 0.1
    gamma: float = 0.01

    @model_validator(mode="after")
    def _check(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("loss weights must be >= 0")
        return self


class IllumLossWeights(_Record):
    alpha: float = 1.5
    exposure_target: float = 0.6
    patch: int = 16
    sigma_w: float = 0.1

    @model_validator(mode="after")
    def _check(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.exposure_target < 1.0:
            raise ValueError("exposure_target must lie in (0, 1)")
        if self.patch < 1 or self.sigma_w <= 0:
            raise ValueError("patch must be >= 1 and sigma_w > 0")
        return self


class BlurSpec(_Record):
    """Random blur distribution for synthesizing training pairs."""

    kernel_kind: Literal["gaussian", "motion", "mixed"] = "gaussian"
    sigma_range: Tuple[float, float] = (0.5, 4.0)
    kernel_size_range: Tuple[int, int] = (3, 25)
    motion_len_range: Tuple[float, float] = (3.0, 15.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        s_lo, s_hi = self.sigma_range
        k_lo, k_hi = self.kernel_size_range
        m_lo, m_hi = self.motion_len_range
        if s_lo <= 0 or s_hi < s_lo:
            raise ValueError("sigma_range must satisfy 0 < min <= max")
        if k_lo < 1 or k_hi < k_lo or k_lo % 2 == 0 or k_hi % 2 == 0:
            raise ValueError("kernel_size_range must hold odd sizes with min <= max")
        if m_lo < 1 or m_hi < m_lo:
            raise ValueError("motion_len_range must satisfy 1 <= min <= max")
        return self


class AblationSwitches(_Record):
    use_fred: bool = True
    use_rice: bool = True
    use_aci: bool = True
    use_cpu: bool = True


class TrainConfig(_Record):
    """Every hyperparameter of both training stages."""

    crop: int = 256
    batch: int = 4
    lr_fred: float = 1e-4
    lr_rice: float = 3e-4
    iters_fred: int = 2000
    iters_rice: int = 1000
    weights_deblur: DeblurLossWeights = Field(default_factory=DeblurLossWeights)
    weights_illum: IllumLossWeights = Field(default_factory=IllumLossWeights)
    blur: BlurSpec = Field(default_factory=BlurSpec)
    ablation: AblationSwitches = Field(default_factory=AblationSwitches)
    fred: FredConfig = Field(default_factory=FredConfig)
    rice: RiceConfig = Field(default_factory=RiceConfig)
    seed: int = 0
    data_dir: str = "data/train"
    out_dir: str = "runs/default"
    device: Literal["auto", "cpu", "cuda"] = "auto"
    workers: int = 0
    log_every: int = 10
    checkpoint_every: int = 500
    perceptual_extractor: Literal["random", "vgg16"] = "random"
    # One fixed crop and kernel per source image (overfit checks)
    fixed_pairs: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.lr_fred <= 0 or self.lr_rice <= 0:
            raise ValueError("learning rates must be > 0")
        if self.batch < 1 or self.iters_fred < 0 or self.iters_rice < 0:
            raise ValueError("batch must be >= 1 and iteration counts >= 0")
        multiple = self.fred.size_multiple
        if self.crop < 1 or self.crop % multiple:
            raise ValueError(f"crop {self.crop} must be a positive multiple of {multiple}")
        if self.crop % self.weights_illum.patch:
            raise ValueError(
                f"crop {self.crop} must be divisible by exposure patch {self.weights_illum.patch}"
            )
        if self.crop < self.blur.kernel_size_range[1]:
            raise FieldRuleError(
                f"crop {self.crop} is smaller than the largest blur kernel "
                f"{self.blur.kernel_size_range[1]}; raise crop or lower blur.kernel_size_range",
                key="crop",
            )
        if self.workers < 0 or self.log_every < 1 or self.checkpoint_every < 1:
            raise ValueError("workers must be >= 0; log_every and checkpoint_every >= 1")
        # The network configs carry the ablation switches so checkpoints record them
        if self.fred.use_aci != self.ablation.use_aci:
            self.fred = self.fred.model_copy(update={"use_aci": self.ablation.use_aci})
        if self.rice.use_cpu != self.ablation.use_cpu:
            self.rice = self.rice.model_copy(update={"use_cpu": self.ablation.use_cpu})
        return self


def _validation_to_config_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    key = ".".join(str(part) for part in first.get("loc", ())) or None
    cause = first.get("ctx", {}).get("error")
    if key is None and isinstance(cause, FieldRuleError):
        key = cause.key
    message = first.get("msg", str(exc))
    return ConfigError(f"invalid config{f' value for {key}' if key else ''}: {message}", key=key)


def _coerce(raw: str, template: Any, key: str) -> Any:
    """Convert a raw string to the type of the current value at `key`."""
    raw = raw.strip()
    try:
        if isinstance(template, bool):
            lowered = raw.lower()
            if lowered in TRUE_STRINGS:
                return True
            if lowered in FALSE_STRINGS:
                return False
            raise ValueError(f"not a boolean: '{raw}'")
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, (list, tuple)):
            parts = [p.strip() for p in raw.strip("()[]").split(",") if p.strip()]
            element = template[0] if template else ""
            return [_coerce(p, element, key) for p in parts]
        return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {exc}", key=key) from exc


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment."""
    entries: Dict[str, str] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_number}: expected 'key = value', got '{line}'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {line_number}: empty key")
        entries[key] = value.strip()
    return entries


def apply_overrides(cfg: TrainConfig, entries: Dict[str, str]) -> TrainConfig:
    """Return a new TrainConfig with dotted-key string overrides applied."""
    data = cfg.model_dump()
    for key, raw in entries.items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown config key '{key}'", key=key)
            node = node[part]
        leaf = parts[-1]
        if leaf not in node or isinstance(node[leaf], dict):
            raise ConfigError(f"unknown config key '{key}'", key=key)
        node[leaf] = _coerce(raw, node[leaf], key)

    # The network configs hold copies of the ablation switches
    for key, switch in ABLATION_MIRRORS.items():
        section, leaf = key.split(".")
        if key in entries and data[section][leaf] != data["ablation"][switch]:
            raise ConfigError(
                f"'{key}' conflicts with 'ablation.{switch}'; set 'ablation.{switch}' instead",
                key=key,
            )
    data["fred"]["use_aci"] = data["ablation"]["use_aci"]
    data["rice"]["use_cpu"] = data["ablation"]["use_cpu"]
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as exc:
        raise _validation_to_config_error(exc) from exc


def parse_set_arguments(assignments: Iterable[str]) -> Dict[str, str]:
    """Turn repeated `--set key=value` arguments into a dict."""
    entries: Dict[str, str] = {}
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"--set expects key=value, got '{assignment}'", key=assignment)
        key, value = assignment.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def apply_env_overrides(cfg: TrainConfig) -> TrainConfig:
    """Apply UWF_ENHANCE_SEED when set."""
    seed = os.getenv(SEED_ENV_VAR)
    if seed is None or seed.strip() == "":
        return cfg
    logger.info(f"Seed overridden from {SEED_ENV_VAR}: {seed}")
    return apply_overrides(cfg, {"seed": seed})


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Iterable[str]] = None) -> TrainConfig:
    """Defaults <- config file <- environment <- --set overrides."""
    cfg = TrainConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = apply_overrides(cfg, parse_config_text(path.read_text(encoding="utf-8")))
        logger.info(f"Loaded config from {path}")
    cfg = apply_env_overrides(cfg)
    if overrides:
        cfg = apply_overrides(cfg, parse_set_arguments(overrides))
    return cfg


def _flatten(data: Dict[str, Any], prefix: str = "") -> List[Tuple[str, Any]]:
    items: List[Tuple[str, Any]] = []
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            items.extend(_flatten(value, f"{dotted}."))
        else:
            items.append((dotted, value))
    return items


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def dump_config(cfg: TrainConfig) -> str:
    """Serialize to the `key = value` text format."""
    lines = ["# UWF enhancement training configuration"]
    lines.extend(f"{key} = {_format_value(value)}" for key, value in _flatten(cfg.model_dump()))
    return "\n".join(lines) + "\n"


def save_config(cfg: TrainConfig, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg), encoding="utf-8")


def model_error(exc: ValidationError) -> ConfigError:
    """Public wrapper used when building network configs outside TrainConfig."""
    return _validation_to_config_error(exc)
