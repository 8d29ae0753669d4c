import sys
from pathlib import Path
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import ConfigurationError, EchoscopeError, EchoscopeException, UsageError
from echoscope.constants import (
    ARTIFACTS_DIR,
    CAPTURE_CONFIG,
    CLASSIFIER_CONFIG,
    DEFAULT_PER_FLOW_CAP,
    DEFAULT_PRIMARY_VOLUME_THRESHOLD,
    DEFAULT_SESSION_LENGTH_THRESHOLD,
    DEFAULT_SESSION_SEGMENTS,
    DEFAULT_SIDE_VOLUME_CEILING,
    MODELS_DIR,
    PROJECT_ROOT,
    SIMULATION_CONFIG,
    default_profiles_path,
)
from echoscope.entity.channel_entity import ServiceProfile
from echoscope.utils.common import read_yaml

logger = get_logger(__name__)


def _resolve(path_value, default: Path) -> Path:
    if path_value is None:
        return default
    path = Path(path_value)
    return path if path.is_absolute() else PROJECT_ROOT / path


def _load(config_path: Optional[Path], default: Path) -> Dict:
    config_path = Path(config_path) if config_path is not None else default
    if not config_path.exists():
        logger.warning(f"Config {config_path} not found, using built-in defaults")
        return {}
    logger.info(f"Loading config from: {config_path}")
    return read_yaml(config_path)


@dataclass
class CaptureConfig:
    per_flow_cap_bytes: int = DEFAULT_PER_FLOW_CAP
    workers: int = 1
    write_jsonl_mirror: bool = True
    resync_records: bool = False
    artifact_dir: Path = ARTIFACTS_DIR / "analysis"

    def __post_init__(self):
        if self.per_flow_cap_bytes <= 0:
            raise ConfigurationError(f"per_flow_cap_bytes must be positive, got {self.per_flow_cap_bytes}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_yaml(cls, config_path: Path = None):
        """
        Create CaptureConfig from YAML file.
        """
        try:
            config = _load(config_path, CAPTURE_CONFIG)
            return cls(
                per_flow_cap_bytes=int(config.get("per_flow_cap_bytes", DEFAULT_PER_FLOW_CAP)),
                workers=int(config.get("workers", 1)),
                write_jsonl_mirror=bool(config.get("write_jsonl_mirror", True)),
                resync_records=bool(config.get("resync_records", False)),
                artifact_dir=_resolve(config.get("artifact_dir"), ARTIFACTS_DIR / "analysis"),
            )
        except EchoscopeError:
            raise
        except Exception as e:
            logger.error(f"Error loading capture config from {config_path}")
            raise EchoscopeException(e, sys)


@dataclass
class ClassifierConfig:
    primary_volume_threshold: int = DEFAULT_PRIMARY_VOLUME_THRESHOLD
    side_volume_ceiling: int = DEFAULT_SIDE_VOLUME_CEILING
    session_length_threshold: float = DEFAULT_SESSION_LENGTH_THRESHOLD
    profiles: Tuple[ServiceProfile, ...] = ()
    profiles_path: Path = field(default_factory=default_profiles_path)

    def __post_init__(self):
        self.profiles = tuple(self.profiles)
        if self.primary_volume_threshold <= 0 or self.side_volume_ceiling <= 0:
            raise ConfigurationError("volume thresholds must be positive")
        if self.session_length_threshold <= 0:
            raise ConfigurationError("session_length_threshold must be positive")
        if self.side_volume_ceiling >= self.primary_volume_threshold:
            raise ConfigurationError(
                f"side_volume_ceiling ({self.side_volume_ceiling}) must be below "
                f"primary_volume_threshold ({self.primary_volume_threshold})"
            )

    @classmethod
    def from_yaml(cls, config_path: Path = None, **overrides):
        """
        Create ClassifierConfig from YAML file. Keyword overrides that are
        not None win over the file (CLI flags).
        """
        try:
            config = _load(config_path, CLASSIFIER_CONFIG)
            values = {
                "primary_volume_threshold": int(config.get("primary_volume_threshold", DEFAULT_PRIMARY_VOLUME_THRESHOLD)),
                "side_volume_ceiling": int(config.get("side_volume_ceiling", DEFAULT_SIDE_VOLUME_CEILING)),
                "session_length_threshold": float(config.get("session_length_threshold", DEFAULT_SESSION_LENGTH_THRESHOLD)),
                "profiles_path": (
                    _resolve(config["profiles_path"], default_profiles_path())
                    if config.get("profiles_path") else default_profiles_path()
                ),
            }
            values.update({key: value for key, value in overrides.items() if value is not None})
            return cls(**values)
        except EchoscopeError:
            raise
        except Exception as e:
            logger.error(f"Error loading classifier config from {config_path}")
            raise EchoscopeException(e, sys)


@dataclass
class SimulationConfig:
    models_dir: Path = MODELS_DIR
    session_segments: int = DEFAULT_SESSION_SEGMENTS
    policy_action: str = "block"
    policy_scope: str = "always"
    profiles_path: Path = field(default_factory=default_profiles_path)

    def __post_init__(self):
        if self.session_segments < 1:
            raise ConfigurationError(f"session_segments must be >= 1, got {self.session_segments}")

    @classmethod
    def from_yaml(cls, config_path: Path = None):
        try:
            config = _load(config_path, SIMULATION_CONFIG)
            return cls(
                models_dir=_resolve(config.get("models_dir"), MODELS_DIR),
                session_segments=int(config.get("session_segments", DEFAULT_SESSION_SEGMENTS)),
                policy_action=str(config.get("policy_action", "block")),
                policy_scope=str(config.get("policy_scope", "always")),
                profiles_path=(
                    _resolve(config["profiles_path"], default_profiles_path())
                    if config.get("profiles_path") else default_profiles_path()
                ),
            )
        except EchoscopeError:
            raise
        except Exception as e:
            logger.error(f"Error loading simulation config from {config_path}")
            raise EchoscopeException(e, sys)


class Subcommand(Enum):
    ANALYZE = "analyze"
    CLASSIFY = "classify"
    POLICY = "policy"
    SIMULATE = "simulate"
    TABLE2 = "table2"


@dataclass
class RunConfig:
    """Parsed command line of one CLI invocation."""
    subcommand: Subcommand
    input_path: Optional[Path] = None
    output_path: Optional[Path] = None
    profiles_path: Path = field(default_factory=default_profiles_path)
    model_path: Optional[Path] = None
    threshold_primary: Optional[int] = None
    threshold_side: Optional[int] = None
    threshold_session: Optional[float] = None
    target: Optional[str] = None
    action: str = "block"
    rate: Optional[int] = None
    scope: str = "always"
    scenario: str = "during"
    segments: Optional[int] = None

    def validate(self) -> None:
        """
        Check the flags before any work starts.

        Raises:
            UsageError: a required flag is missing or a value is out of range
        """
        if self.subcommand is not Subcommand.TABLE2:
            if self.input_path is None:
                raise UsageError(f"{self.subcommand.value} needs --in")
            if not self.input_path.exists():
                raise UsageError(f"input not found: {self.input_path}")
        if self.subcommand is Subcommand.POLICY and not self.target:
            raise UsageError("policy needs --target")
        if self.action not in ("block", "throttle"):
            raise UsageError(f"--action must be block or throttle, got {self.action!r}")
        if self.action == "throttle" and (self.rate is None or self.rate <= 0):
            raise UsageError("--action throttle needs a positive --rate (bits/second)")
        if self.scope not in ("before", "during", "always"):
            raise UsageError(f"--scope must be before, during or always, got {self.scope!r}")
        if self.scenario not in ("before", "during"):
            raise UsageError(f"--scenario must be before or during, got {self.scenario!r}")
        if self.segments is not None and self.segments < 1:
            raise UsageError(f"--segments must be >= 1, got {self.segments}")
        if self.model_path is not None and not self.model_path.exists():
            raise UsageError(f"model not found: {self.model_path}")
        if self.subcommand is not Subcommand.ANALYZE and not self.profiles_path.exists():
            raise UsageError(f"profiles not found: {self.profiles_path}")
