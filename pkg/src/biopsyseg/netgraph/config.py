"""Declarative network description and its key=value text form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from ..errors import ConfigError

CONNECTIVITY = ("plain", "residual", "dense")
FUSIONS = ("ours", "fusion_a", "fusion_b", "none")

FULL_ENCODER = (64, 64, 128, 256, 512)
FULL_DECODER = (256, 128, 64, 64)


@dataclass
class ModelConfig:
    num_classes: int = 8
    num_levels: int = 5
    encoder_channels: Optional[tuple] = None
    dense_decoder_channels: Optional[tuple] = None
    connectivity: str = "dense"
    ia_rcu: bool = True
    dual_decoder: bool = True
    fusion: str = "ours"
    resolutions: int = 2
    patch_size: int = 256
    context_border: int = 64
    channel_scale: Fraction = Fraction(1)

    def __post_init__(self):
        self.channel_scale = Fraction(self.channel_scale).limit_denominator(1000)
        if self.num_classes < 1 or self.num_levels < 1:
            raise ConfigError("num_classes and num_levels must be positive")
        if self.encoder_channels is None:
            if self.num_levels > len(FULL_ENCODER):
                raise ConfigError(f"no default encoder channels for {self.num_levels} levels")
            self.encoder_channels = FULL_ENCODER[: self.num_levels]
        if self.dense_decoder_channels is None:
            if self.num_levels - 1 > len(FULL_DECODER):
                raise ConfigError(f"no default decoder channels for {self.num_levels} levels")
            tail = FULL_DECODER[len(FULL_DECODER) - (self.num_levels - 1) :] if self.num_levels > 1 else ()
            self.dense_decoder_channels = tuple(tail) + (self.num_classes,)
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        self.dense_decoder_channels = tuple(int(c) for c in self.dense_decoder_channels)
        self.validate()

    def validate(self) -> None:
        if len(self.encoder_channels) != self.num_levels:
            raise ConfigError(f"encoder_channels needs {self.num_levels} entries, got {len(self.encoder_channels)}")
        if len(self.dense_decoder_channels) != self.num_levels:
            raise ConfigError(
                f"dense_decoder_channels needs {self.num_levels} entries, got {len(self.dense_decoder_channels)}"
            )
        if self.dense_decoder_channels[-1] != self.num_classes:
            raise ConfigError("last dense decoder width must equal num_classes")
        if self.connectivity not in CONNECTIVITY:
            raise ConfigError(f"connectivity must be one of {CONNECTIVITY}, got {self.connectivity!r}")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.resolutions < 1:
            raise ConfigError("resolutions must be >= 1")
        if (self.fusion != "none") != (self.resolutions >= 2):
            raise ConfigError(
                f"fusion={self.fusion!r} is inconsistent with resolutions={self.resolutions} "
                "(fusion is required exactly when resolutions >= 2)"
            )
        if self.channel_scale <= 0:
            raise ConfigError("channel_scale must be positive")
        if self.patch_size % (2**self.num_levels):
            raise ConfigError(f"patch_size {self.patch_size} not divisible by 2^{self.num_levels}")
        if self.context_border % (2 ** (self.num_levels - 1)):
            raise ConfigError("context_border must keep context patches divisible by 2^num_levels")

    def scaled(self, channels: int) -> int:
        return max(1, int(round(channels * self.channel_scale)))

    @property
    def encoder_widths(self) -> tuple:
        return tuple(self.scaled(c) for c in self.encoder_channels)

    @property
    def decoder_widths(self) -> tuple:
        return tuple(self.scaled(c) for c in self.dense_decoder_channels[:-1]) + (self.num_classes,)

    def input_sizes(self) -> list:
        """Spatial input size of each resolution instance, context-most first."""
        p = self.resolutions
        return [self.patch_size + 2 * (p - i) * self.context_border for i in range(1, p + 1)]

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    # -- text form ---------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls(**_coerce(cls, parse_kv(text)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_text(Path(path).read_text())


def parse_kv(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(cls, raw: dict) -> dict:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = coerce_value(fields[key].default, value, key)
    return out


def coerce_value(default, value: str, key: str):
    try:
        if isinstance(default, bool):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if isinstance(default, Fraction):
            return Fraction(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if default is None or isinstance(default, tuple):
            if value.lower() == "none":
                return None
            return tuple(int(v) for v in value.split(",") if v.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


# ablation matrix: (connectivity, ia_rcu, dual_decoder, fusion when multi-resolution)
PRESETS = {
    "plain": ("plain", False, False, "ours"),
    "residual": ("residual", False, False, "ours"),
    "full": ("dense", True, True, "ours"),
    "a1": ("dense", False, True, "ours"),
    "a2": ("dense", True, False, "ours"),
    "a3": ("dense", False, False, "ours"),
    "fusion_a": ("dense", True, True, "fusion_a"),
    "fusion_b": ("dense", True, True, "fusion_b"),
}


def preset(name: str, multi: bool = False, **overrides) -> ModelConfig:
    """One row of the ablation matrix; fusion presets exist only multi-resolution."""
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    conn, ia, dual, fusion = PRESETS[key]
    if key.startswith("fusion") and not multi:
        raise ConfigError(f"preset {name!r} is only defined for multi-resolution models")
    base = dict(
        connectivity=conn,
        ia_rcu=ia,
        dual_decoder=dual,
        fusion=fusion if multi else "none",
        resolutions=2 if multi else 1,
    )
    base.update(overrides)
    return ModelConfig(**base)


@dataclass(frozen=True)
class FusionSpec:
    kind: str
    layers: tuple = field(default=())  # (kernel, dilation) pairs
    identity_links: bool = False
    parallel: bool = False

    @classmethod
    def of(cls, kind: str) -> "FusionSpec":
        if kind == "ours":
            return cls(kind, tuple((3, r) for r in (1, 2, 4, 8, 16, 1)), identity_links=True)
        if kind == "fusion_a":
            return cls(kind, ((3, 1),) * 3)
        if kind == "fusion_b":
            return cls(kind, tuple((3, r) for r in (6, 12, 18)), parallel=True)
        raise ConfigError(f"no fusion spec named {kind!r}")
