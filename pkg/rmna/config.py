import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from rmna.domain.errors import ConfigError

Norm = Literal["L1", "L2"]
Ablation = Literal["none", "nh", "nc", "nl", "ns"]

_STRICT = ConfigDict(extra="forbid")


class DataConfig(BaseModel):
    model_config = _STRICT

    name: str = "custom"
    train: Optional[Path] = None
    valid: Optional[Path] = None
    test: Optional[Path] = None


class MiningConfig(BaseModel):
    model_config = _STRICT

    l_max: int = Field(3, ge=1)
    hc_min: float = Field(0.7, ge=0.0, le=1.0)
    conf_min: float = Field(0.7, ge=0.0, le=1.0)
    min_support: int = Field(1, ge=1)


class PretrainConfig(BaseModel):
    model_config = _STRICT

    dim: int = Field(100, gt=0)
    learning_rate: float = Field(0.001, gt=0.0)
    margin: float = Field(1.0, gt=0.0)
    norm: Norm = "L1"
    negatives: int = Field(1, ge=1)
    epochs: int = Field(1000, ge=0)
    batch_size: int = Field(1024, ge=1)
    # early stopping on raw validation MRR; 0 disables
    patience: int = Field(50, ge=0)
    validate_every: int = Field(10, ge=0)
    validation_sample: int = Field(500, ge=1)


class FeatureMask(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    use_hc: bool = True
    use_conf: bool = True
    use_lnorm: bool = True
    use_s: bool = True

    @classmethod
    def for_ablation(cls, ablation: Ablation) -> "FeatureMask":
        return cls(
            use_hc=ablation != "nh",
            use_conf=ablation != "nc",
            use_lnorm=ablation != "nl",
            use_s=ablation != "ns",
        )

    @property
    def columns(self) -> Tuple[int, ...]:
        """Indices into (hc, conf, l_norm, s) that stay in the transformed input."""
        flags = (self.use_hc, self.use_conf, self.use_lnorm, self.use_s)
        return tuple(i for i, on in enumerate(flags) if on)

    @property
    def width(self) -> int:
        return len(self.columns)


class AggregatorConfig(BaseModel):
    model_config = _STRICT

    learning_rate: float = Field(0.001, gt=0.0)
    margin: float = Field(1.0, gt=0.0)
    dropout: float = Field(0.3, ge=0.0, lt=1.0)
    epochs: int = Field(2000, ge=0)
    batch_size: int = Field(256, ge=1)
    negatives: int = Field(1, ge=1)
    norm: Norm = "L1"
    num_attention_heads: int = Field(2, ge=1)
    num_self_attention_heads: int = Field(4, ge=1)
    dim1: int = Field(100, gt=0)
    dim2: int = Field(200, gt=0)
    query_dim1: int = Field(25, gt=0)
    key_dim1: int = Field(25, gt=0)
    value_dim1: int = Field(25, gt=0)
    query_dim2: int = Field(50, gt=0)
    key_dim2: int = Field(50, gt=0)
    value_dim2: int = Field(50, gt=0)
    neighbor_cap: int = Field(64, ge=1)
    freeze_base: bool = False
    use_transformed: bool = True
    ablation: Ablation = "none"
    use_hc: bool = True
    use_conf: bool = True
    use_lnorm: bool = True
    use_s: bool = True

    @model_validator(mode="after")
    def _query_matches_key(self) -> "AggregatorConfig":
        if self.query_dim1 != self.key_dim1 or self.query_dim2 != self.key_dim2:
            raise ValueError("query and key dimensions must match in each layer")
        return self

    @property
    def mask(self) -> FeatureMask:
        base = FeatureMask.for_ablation(self.ablation)
        return FeatureMask(
            use_hc=base.use_hc and self.use_hc,
            use_conf=base.use_conf and self.use_conf,
            use_lnorm=base.use_lnorm and self.use_lnorm,
            use_s=base.use_s and self.use_s,
        )


class DecoderConfig(BaseModel):
    model_config = _STRICT

    learning_rate: float = Field(0.001, gt=0.0)
    l2_reg: float = Field(0.001, ge=0.0)
    dropout: float = Field(0.3, ge=0.0, lt=1.0)
    epochs: int = Field(150, ge=0)
    batch_size: int = Field(256, ge=1)
    negatives: int = Field(1, ge=1)
    num_kernels: int = Field(50, ge=1)


class EvalConfig(BaseModel):
    model_config = _STRICT

    mode: Literal["raw", "filtered"] = "filtered"
    scorer: Literal["decoder", "na", "transe"] = "decoder"
    reference: Literal["none", "fb15k237", "wn18rr"] = "none"
    rank_dump: bool = False
    chunk_size: int = Field(1024, ge=1)


class PipelineConfig(BaseModel):
    model_config = _STRICT

    seed: int = 42
    work_dir: Path = Path("runs/default")
    inverse_relations: bool = True
    workers: int = Field(1, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    rules: MiningConfig = Field(default_factory=MiningConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    aggregator: AggregatorConfig = Field(default_factory=AggregatorConfig)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)


_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_PATH_KEYS = {"work_dir", "data.train", "data.valid", "data.test"}


def _parse_value(raw: str) -> Any:
    v = raw.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    low = v.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if _INT_RE.match(v):
        return int(v)
    if _FLOAT_RE.match(v):
        return float(v)
    return v


def parse_assignments(
    lines: Sequence[str], *, first_line: int = 1
) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Parse ``key = value`` lines into a flat dict plus key -> line number."""
    values: Dict[str, Any] = {}
    where: Dict[str, int] = {}
    for offset, line in enumerate(lines):
        line_no = first_line + offset
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", line_no=line_no)
        key, raw = text.split("=", 1)
        key = key.strip()
        if not key or not re.match(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?$", key):
            raise ConfigError(f"invalid key {key!r}", line_no=line_no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", line_no=line_no)
        values[key] = _parse_value(raw)
        where[key] = line_no
    return values, where


def _nest(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if "." in key:
            section, field = key.split(".", 1)
            nested.setdefault(section, {})
            if not isinstance(nested[section], dict):
                raise ConfigError(f"{section!r} is both a value and a section")
            nested[section][field] = value
        else:
            if isinstance(nested.get(key), dict):
                raise ConfigError(f"{key!r} is both a value and a section")
            nested[key] = value
    return nested


def _validation_error(e: ValidationError, where: Dict[str, int]) -> ConfigError:
    first = e.errors()[0]
    key = ".".join(str(p) for p in first["loc"])
    line_no = where.get(key)
    if line_no is None:
        # model-level validators report the section only
        line_no = min((n for k, n in where.items() if k.startswith(key + ".")), default=None)
    return ConfigError(f"invalid value for {key or 'config'}: {first['msg']}", line_no=line_no)


def load_config(
    path: str | os.PathLike | None = None,
    overrides: Sequence[str] = (),
) -> PipelineConfig:
    """
    Load a ``key = value`` config file, apply ``key=value`` overrides, validate.

    Unknown keys are rejected; relative paths resolve against the config
    file's directory (overrides resolve against the working directory).
    """
    flat: Dict[str, Any] = {}
    where: Dict[str, int] = {}
    base_dir = Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        flat, where = parse_assignments(text.splitlines())
        base_dir = p.resolve().parent
        for key in _PATH_KEYS & flat.keys():
            if isinstance(flat[key], str) and not Path(flat[key]).is_absolute():
                flat[key] = str(base_dir / flat[key])

    if overrides:
        extra, _ = parse_assignments(list(overrides), first_line=0)
        for key, value in extra.items():
            flat[key] = value
            where.pop(key, None)

    try:
        return PipelineConfig.model_validate(_nest(flat))
    except ValidationError as e:
        raise _validation_error(e, where) from e


def describe(config: PipelineConfig) -> List[str]:
    """
    Flattened ``key = value`` lines of the resolved config, for logs and run records.
    Unset optional paths are left out so the lines load back into the same config.
    """
    out: List[str] = []
    for key, value in config.model_dump(mode="json").items():
        if isinstance(value, dict):
            for sub, sv in value.items():
                if sv is not None:
                    out.append(f"{key}.{sub} = {sv}")
        else:
            out.append(f"{key} = {value}")
    return out


def log_level_from_env(default: str = "INFO") -> int:
    name = (os.getenv("RMNA_LOG_LEVEL") or default).strip().upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def progress_from_env() -> Optional[bool]:
    """RMNA_PROGRESS=0/1 forces progress bars off/on; unset leaves it to tqdm (TTY only)."""
    raw = (os.getenv("RMNA_PROGRESS") or "").strip().lower()
    if raw in ("0", "false", "no", "off"):
        return False
    if raw in ("1", "true", "yes", "on"):
        return True
    return None
