"""Run configuration: flat ``key = value`` files with strict key checking."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

TIME_VARIANTS = ("both", "interval_only", "absolute_only", "cos_interval")
TRAIN_EXAMPLE_MODES = ("per_target", "last_target")
SCORE_SPACES = ("initial", "interactive")


@dataclass
class RunConfig:
    d: int = 64
    L: int = 50
    n_layers: int = 2
    n_heads: int = 2
    dropout: float = 0.2
    k1: int = 4
    k2: int = 4
    mu: float = 100.0
    freq: float = 10000.0
    p_max: int = 2200
    time_variant: str = "both"
    alpha_init: float = 0.1
    tau: float = 0.2
    beta: float = 0.3
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.5
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    patience: int = 10
    seed: int = 42
    grad_clip: float = 5.0
    causal: bool = True
    train_examples: str = "per_target"
    score_space: str = "initial"
    enable_cp: bool = True
    enable_idcl: bool = True
    enable_pcl: bool = True
    enable_imoe: bool = True
    enable_tmoe: bool = True
    use_text: bool = True
    use_image: bool = True

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.time_variant not in TIME_VARIANTS:
            raise ValueError(f"unknown time_variant {self.time_variant!r}")
        if self.train_examples not in TRAIN_EXAMPLE_MODES:
            raise ValueError(f"unknown train_examples {self.train_examples!r}")
        if self.score_space not in SCORE_SPACES:
            raise ValueError(f"unknown score_space {self.score_space!r}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.mu <= 0 or self.freq <= 1:
            raise ValueError(f"need mu > 0 and freq > 1, got {self.mu}, {self.freq}")

    @property
    def modalities(self) -> tuple[str, ...]:
        mods = ["id"]
        if self.use_text:
            mods.append("txt")
        if self.use_image:
            mods.append("img")
        return tuple(mods)


# file keys follow the documented config surface; P_max keeps its spelling
_FILE_KEYS = {f.name: f.name for f in fields(RunConfig)} | {"P_max": "p_max"}
del _FILE_KEYS["p_max"]

_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def _parse_value(field_name: str, raw: str):
    ftype = RunConfig.__dataclass_fields__[field_name].type
    raw = raw.strip()
    if ftype == "bool":
        if raw.lower() not in _BOOL_WORDS:
            raise ValueError(f"config: bad boolean for {field_name}: {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; blank lines and #-comments are skipped."""
    overrides = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config: line {line_no} is not 'key = value': {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FILE_KEYS:
            raise ValueError(f"config: unknown key {key!r} on line {line_no}")
        field_name = _FILE_KEYS[key]
        if field_name in overrides:
            raise ValueError(f"config: duplicate key {key!r} on line {line_no}")
        overrides[field_name] = _parse_value(field_name, raw)
    return RunConfig(**overrides)


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        key = "P_max" if f.name == "p_max" else f.name
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


ABLATION_VARIANTS = ("full", "-IMoE", "-TMoE", "-CP", "-IDCL", "-PCL",
                     "-Text", "-Image")


def apply_variant(cfg: RunConfig, variant: str) -> RunConfig:
    """Return a copy of ``cfg`` with one ablation applied."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    kwargs = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    if variant == "-IMoE":
        kwargs["enable_imoe"] = False
    elif variant == "-TMoE":
        # removing explicit time also removes placeholder contrastive learning
        kwargs["enable_tmoe"] = False
        kwargs["enable_pcl"] = False
        kwargs["lambda3"] = 0.0
    elif variant == "-CP":
        kwargs["enable_cp"] = False
        kwargs["lambda1"] = 0.0
    elif variant == "-IDCL":
        kwargs["enable_idcl"] = False
        kwargs["lambda2"] = 0.0
    elif variant == "-PCL":
        kwargs["enable_pcl"] = False
        kwargs["lambda3"] = 0.0
    elif variant == "-Text":
        kwargs["use_text"] = False
    elif variant == "-Image":
        kwargs["use_image"] = False
    return RunConfig(**kwargs)
