import logging
import math
from typing import Any, Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from slitwave.analysis.nullmap import NULL_THRESHOLD, Region
from slitwave.core.errors import ConfigError
from slitwave.core.geometry import SlitArray, SourceConfig
from slitwave.core.kernels import AmplitudeEvaluator, EvaluatorFactory, QuadratureSpec
from slitwave.core.store import format_number

_LIST_KEYS = ("slits", "region")
_INT_KEYS = ("nx", "nz", "samples", "seed", "points_per_panel")
_FLOAT_KEYS = ("x0", "zp", "threshold", "max_phase_per_panel")
_BOOL_KEYS = ("log_z",)


class RunConfig(BaseModel):
    """
    One run file. Lists and scalars are validated here; the core types
    (SlitArray, Region) validate their own invariants.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    slits: Optional[SlitArray] = None
    source: Literal["farfield", "finite"] = "farfield"
    x0: float = 0.0
    zp: Optional[float] = None
    evaluator: Literal["quadrature", "fresnel", "hypergeometric", "auto"] = "auto"
    region: Region = Region(x2_min=-30.0, x2_max=30.0, zpp_min=0.1, zpp_max=100.0)
    nx: int = Field(default=200, ge=2)
    nz: int = Field(default=200, ge=2)
    log_z: bool = False
    threshold: float = Field(default=NULL_THRESHOLD, ge=0)
    sampler: Literal["grid", "montecarlo"] = "grid"
    samples: int = Field(default=100_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 128)
    output: Optional[str] = None
    points_per_panel: int = Field(default=16, ge=2)
    max_phase_per_panel: float = Field(default=math.pi / 2.0, gt=0, le=math.pi)

    def source_config(self) -> SourceConfig:
        mode = "Finite" if self.source == "finite" else "FarField"
        return SourceConfig(mode=mode, x0=self.x0, zp=self.zp)

    def quadrature_spec(self) -> QuadratureSpec:
        return QuadratureSpec(points_per_panel=self.points_per_panel,
                              max_phase_per_panel=self.max_phase_per_panel)

    def build_evaluator(self) -> AmplitudeEvaluator:
        kwargs = {"source": self.source_config()}
        if self.evaluator in ("quadrature", "auto"):
            kwargs["spec"] = self.quadrature_spec()
        return EvaluatorFactory.get_evaluator(self.evaluator, **kwargs)

    def require_slits(self) -> SlitArray:
        if self.slits is None:
            raise ConfigError("a slit list is required for this run", key="slits")
        return self.slits


CONFIG_KEYS = tuple(RunConfig.model_fields)


def _number_list(key: str, text: str, line: Optional[int]) -> List[float]:
    if not (text.startswith("[") and text.endswith("]")):
        raise ConfigError(f"expected a bracketed number list (got '{text}')", key, line)
    body = text[1:-1].strip()
    if not body:
        return []
    try:
        return [float(item) for item in body.split(",")]
    except ValueError:
        raise ConfigError(f"malformed number in '{text}'", key, line)


def parse_value(key: str, text: str, line: Optional[int] = None) -> Any:
    """Converts the raw right-hand side of `key = value` to a Python value."""
    if key not in CONFIG_KEYS:
        raise ConfigError("unknown key", key, line)
    text = text.strip()
    if key in _LIST_KEYS:
        values = _number_list(key, text, line)
        if key == "slits":
            return {"edges": values}
        if len(values) != 4:
            raise ConfigError("region needs [x2_min, x2_max, zpp_min, zpp_max]", key, line)
        return dict(zip(("x2_min", "x2_max", "zpp_min", "zpp_max"), values))
    if key in _INT_KEYS:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"malformed integer '{text}'", key, line)
    if key in _FLOAT_KEYS:
        if key == "zp" and text.lower() == "none":
            return None
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"malformed number '{text}'", key, line)
    if key in _BOOL_KEYS:
        if text.lower() not in ("true", "false"):
            raise ConfigError(f"expected true or false (got '{text}')", key, line)
        return text.lower() == "true"
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        text = text[1:-1]
    return text if key == "output" else text.lower()


def build_config(values: Dict[str, Any], lines: Optional[Dict[str, int]] = None) -> RunConfig:
    lines = lines or {}
    try:
        config = RunConfig(**values)
    except ValidationError as e:
        err = e.errors()[0]
        key = str(err["loc"][0]) if err["loc"] else None
        message = err["msg"].removeprefix("Value error, ")
        raise ConfigError(message, key, lines.get(key))
    try:
        config.source_config()
    except ValidationError as e:
        key = "zp" if config.source == "finite" else "source"
        raise ConfigError(e.errors()[0]["msg"].removeprefix("Value error, "), key, lines.get(key))
    return config


def parse_config(text: str) -> RunConfig:
    """
    Parses the line-oriented run format: `key = value` per line, `#` starts a
    comment, numeric lists are bracketed. Errors name the key and line.
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' (got '{line}')", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, lineno)
        values[key] = parse_value(key, value, lineno)
        lines[key] = lineno
    config = build_config(values, lines)
    logging.debug(f"parse_config: {len(values)} keys set")
    return config


def apply_overrides(config: RunConfig, overrides: Sequence[str]) -> RunConfig:
    """`key=value` strings from the command line replace keys of a parsed config."""
    if not overrides:
        return config
    values = config.model_dump(exclude_none=True)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value (got '{item}')")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = parse_value(key, value)
    return build_config(values)


def _format_value(value: Any) -> str:
    if isinstance(value, SlitArray):
        return "[" + ", ".join(format_number(e) for e in value.edges) + "]"
    if isinstance(value, Region):
        return "[" + ", ".join(format_number(b) for b in value.bounds) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_number(value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Inverse of parse_config: every set key, one per line, in field order."""
    lines = []
    for key in CONFIG_KEYS:
        value = getattr(config, key)
        if value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"
