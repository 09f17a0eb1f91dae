"""Run configuration and its ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ContractError, FormatError
from ..fusion import VARIANTS


@dataclass
class Config:
    n_stages: int = 3
    tau: float = 0.5
    tokens: int = 5
    d_model: int = 64
    fusion_heads: int = 2
    decoder_heads: int = 4
    lr: float = 5e-4
    batch_size: int = 8
    epochs: int = 200
    n_vote: int = 10
    seed: int = 7
    fusion_variant: str = "weighted"
    skeleton_width: int = 16
    seg_hidden: int = 32
    head_hidden: int = 64
    # fixed output gains of the relative-score heads, in target units
    score_scale: float = 10.0
    splash_scale: float = 5.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ints = ("n_stages", "tokens", "d_model", "fusion_heads", "decoder_heads", "batch_size",
                "n_vote", "skeleton_width", "seg_hidden", "head_hidden")
        for name in ints:
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {self.epochs}")
        if not self.tau > 0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        if self.lr < 0:
            raise ContractError(f"lr must be non-negative, got {self.lr}")
        for h in ("fusion_heads", "decoder_heads"):
            if self.d_model % getattr(self, h):
                raise ContractError(f"{h}={getattr(self, h)} does not divide d_model={self.d_model}")
        if self.d_model % 4:
            raise ContractError(f"d_model must be a multiple of 4, got {self.d_model}")
        if self.fusion_variant not in VARIANTS:
            raise ContractError(f"fusion_variant must be one of {VARIANTS}, got {self.fusion_variant!r}")

    def replace(self, **kw) -> "Config":
        return dataclasses.replace(self, **kw)

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    types = {f.name: f.type for f in fields(Config)}
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"config line {n}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ContractError(f"config line {n}: unknown key {key!r}")
        if key in values:
            raise ContractError(f"config line {n}: duplicate key {key!r}")
        t = types[key]
        try:
            values[key] = int(val) if t in (int, "int") else float(val) if t in (float, "float") else val
        except ValueError:
            raise ContractError(f"config line {n}: bad value {val!r} for {key}") from None
    base = base or Config()
    return base.replace(**values)


def load_config(path) -> Config:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except OSError as e:
        raise FormatError(f"cannot read config {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise FormatError(f"config {path} is not UTF-8") from e
    return parse_config(text)
