"""Configuration management for the polariton horizon simulator.

Two layers: ``Settings`` reads the process environment (``HORIZON_`` prefix,
``.env`` file), ``RunConfig`` is the declarative run file loaded by
``load_config``.
"""

import hashlib
import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, PrivateAttr, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import (
    AnalysisSpec,
    DefectPotential,
    GridSpec,
    OutputSpec,
    PolaritonParams,
    ProbeSpec,
    PumpSpec,
    SweepSpec,
    VariantFlags,
)

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process settings with environment variable support."""
    model_config = SettingsConfigDict(env_prefix="HORIZON_", env_file=".env", extra="ignore")

    # Worker pool
    max_workers: Optional[int] = Field(None, ge=1)  # caps --workers

    # Output
    output_root: str = "runs"
    log_level: str = "INFO"

    # Sweep robustness
    probe_retries: int = Field(3, ge=1)
    progress_every: int = Field(10, ge=0)  # steady-state windows between progress logs


settings = Settings()


class ConfigParseError(Exception):
    """The run file is not valid sectioned key-value syntax."""

    def __init__(self, path: str, line: Optional[int], column: Optional[int], message: str):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{path}{where}: {message}")
        self.path = path
        self.line = line
        self.column = column


class ConfigValidationError(Exception):
    """A field of the run file violates its constraint."""

    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint


SECTIONS = ("params", "grid", "pump", "defect", "probe", "sweep", "analysis", "output", "variant")


class RunConfig(BaseModel):
    """A validated run file."""
    params: PolaritonParams = PolaritonParams()
    grid: GridSpec = GridSpec()
    pump: PumpSpec = PumpSpec()
    defect: DefectPotential = DefectPotential()
    probe: Optional[ProbeSpec] = None  # None = steady-state-only config
    sweep: SweepSpec = SweepSpec()
    analysis: AnalysisSpec = AnalysisSpec()
    output: OutputSpec = OutputSpec()
    variant: VariantFlags = VariantFlags()
    seed: int = Field(12345, ge=0)

    _defaulted: List[str] = PrivateAttr(default_factory=list)

    @property
    def defaulted_fields(self) -> List[str]:
        return list(self._defaulted)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, seed: Optional[int] = None,
                       output_dir: Optional[str] = None) -> "RunConfig":
        update: Dict[str, Any] = {}
        if seed is not None:
            update["seed"] = seed
        if output_dir is not None:
            update["output"] = self.output.model_copy(update={"directory": output_dir})
        config = self.model_copy(update=update)
        config._defaulted = self.defaulted_fields
        return config


_TOML_POSITION = re.compile(r"\(at line (\d+), column (\d+)\)")


def _defaulted_fields(raw: Dict[str, Any]) -> List[str]:
    missing: List[str] = []
    for name, info in RunConfig.model_fields.items():
        if name not in raw:
            missing.append(name)
            continue
        annotation = info.annotation
        section_model = getattr(annotation, "model_fields", None)
        if section_model is None:
            args = getattr(annotation, "__args__", ())
            section_model = next((getattr(a, "model_fields", None) for a in args
                                  if getattr(a, "model_fields", None)), None)
        if section_model and isinstance(raw[name], dict):
            missing.extend(f"{name}.{f}" for f in section_model if f not in raw[name])
    return missing


def parse_config(text: str, path: str = "<string>") -> RunConfig:
    """Parse and validate run-file text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _TOML_POSITION.search(str(e))
        line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
        raise ConfigParseError(path, line, column, str(e)) from e

    unknown = [key for key, value in raw.items() if isinstance(value, dict) and key not in SECTIONS]
    if unknown:
        raise ConfigValidationError(unknown[0], f"unknown section, expected one of {SECTIONS}")

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(p) for p in error["loc"]) or "<root>"
        raise ConfigValidationError(field, error["msg"]) from e

    config._defaulted = _defaulted_fields(raw)
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """Load a run file; defaulted fields are reported at INFO."""
    path = Path(path)
    if not path.exists():
        raise ConfigParseError(str(path), None, None, "file not found")
    config = parse_config(path.read_text(encoding="utf-8"), str(path))
    if config.probe is None:
        logger.info(f"{path.name}: no [probe] section, steady-state-only configuration")
    if config.defaulted_fields:
        logger.info(f"{path.name}: defaults used for {', '.join(config.defaulted_fields)}")
    return config
