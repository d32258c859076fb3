"""Model configuration shared by all architecture families."""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..errors import ContractError

FAMILIES = ("transformer", "transformer_pb", "sr_lstm", "sr_lstm_pb", "nv_lstm")
PB_FAMILIES = ("transformer_pb", "sr_lstm_pb")
CHANNEL_MASKS = ("none", "frame_only", "role_only", "both")


@dataclass
class ModelConfig:
    """Architecture family plus dimensions, channel mask, and training knobs.

    ``channel_mask`` defaults to "both" for the multi-channel (*_pb) families
    and "none" otherwise; a non-"none" mask on a single-channel family is a
    contract violation.  ``lr_decay`` is a per-epoch multiplicative factor on
    the learning rate by default; ``weight_decay_mode="l2"`` reinterprets it
    as a decoupled L2 penalty with coefficient (1 - lr_decay).
    """

    family: str
    num_blocks: int = 2
    num_heads: int = 4
    model_dim: int = 256
    hidden_dim: int = 256
    dropout_p: float = 0.1
    channel_mask: str = ""
    max_len: int = 15
    learning_rate: float = 1e-3
    warmup_steps: int = 500
    lr_decay: float = 0.99
    latent_dim: int = 32
    kl_weight: float = 1.0
    seed: int = 0
    norm_style: str = "paper"
    weight_decay_mode: str = "lr_decay"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.channel_mask:
            self.channel_mask = "both" if self.family in PB_FAMILIES else "none"
        if self.channel_mask not in CHANNEL_MASKS:
            raise ContractError(f"unknown channel_mask {self.channel_mask!r}")
        if self.family in PB_FAMILIES and self.channel_mask == "none":
            raise ContractError(f"{self.family} requires a channel_mask other than 'none'")
        if self.family not in PB_FAMILIES and self.channel_mask != "none":
            raise ContractError(f"channel_mask={self.channel_mask!r} is only valid for *_pb families")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ContractError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.max_len < 1:
            raise ContractError("max_len must be >= 1")
        if self.model_dim % self.num_heads != 0:
            raise ContractError(f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}")
        if self.norm_style not in ("paper", "post"):
            raise ContractError(f"norm_style must be 'paper' or 'post', got {self.norm_style!r}")
        if self.weight_decay_mode not in ("lr_decay", "l2"):
            raise ContractError(f"weight_decay_mode must be 'lr_decay' or 'l2'")

    def to_text(self) -> str:
        """Structured-text form: one ``key = value`` line per field."""
        return "\n".join(f"{f.name} = {getattr(self, f.name)}" for f in fields(self)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractError(f"config line {lineno} is not 'key = value': {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ContractError(f"unknown config key {key!r} on line {lineno}")
            kwargs[key] = _coerce(types[key], value)
        if "family" not in kwargs:
            raise ContractError("config is missing 'family'")
        return cls(**kwargs)


def _coerce(type_name: str, value: str):
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    return value
