from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from echoscope.constants import DEFAULT_MIN_SIDE_RATE
from echoscope.exception.exception import InconsistentModel


class DependencyKind(Enum):
    SCHEDULE_CRITICAL = "ScheduleCritical"
    STARTUP_CRITICAL = "StartupCritical"
    COSMETIC = "Cosmetic"


@dataclass(frozen=True)
class SideDependency:
    host: str
    kind: DependencyKind
    period_segments: int = 0
    min_rate: int = DEFAULT_MIN_SIDE_RATE

    def __post_init__(self):
        if self.period_segments < 0:
            raise InconsistentModel(f"dependency {self.host}: period_segments must be >= 0")
        if self.min_rate <= 0:
            raise InconsistentModel(f"dependency {self.host}: min_rate must be positive")

    @property
    def periodic(self) -> bool:
        return self.period_segments > 0

    def due(self, segment: int) -> bool:
        return self.periodic and segment % self.period_segments == 0


@dataclass(frozen=True)
class Fallback:
    fallback_snis: Tuple[str, ...]
    degraded_rate: int
    degraded_quality_label: str

    def __post_init__(self):
        object.__setattr__(self, "fallback_snis", tuple(self.fallback_snis))
        if not self.fallback_snis:
            raise InconsistentModel("fallback lists no hosts")
        if self.degraded_rate <= 0:
            raise InconsistentModel("fallback degraded_rate must be positive")


@dataclass(frozen=True)
class QualityTier:
    label: str
    resolution: str
    gb_per_hour: float

    @property
    def rate(self) -> int:
        """Average bits/second implied by the hourly volume."""
        return int(round(self.gb_per_hour * 1e9 * 8 / 3600))


@dataclass(frozen=True)
class ServiceModel:
    name: str
    side_dependencies: Tuple[SideDependency, ...]
    normal_rate: int
    primary_public_name: str
    fallback: Optional[Fallback] = None
    schedule_buffer_segments: int = 0
    quality_tiers: Tuple[QualityTier, ...] = ()
    provenance: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "side_dependencies", tuple(self.side_dependencies))
        object.__setattr__(self, "quality_tiers", tuple(self.quality_tiers))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if self.schedule_buffer_segments < 0:
            raise InconsistentModel(f"model {self.name}: schedule_buffer_segments must be >= 0")
        if self.normal_rate <= 0:
            raise InconsistentModel(f"model {self.name}: normal_rate must be positive")
        if self.fallback is not None and self.fallback.degraded_rate >= self.normal_rate:
            raise InconsistentModel(f"model {self.name}: degraded_rate must be below normal_rate")
        hosts = [dep.host for dep in self.side_dependencies]
        if len(set(hosts)) != len(hosts):
            raise InconsistentModel(f"model {self.name}: a dependency host is listed twice")


class Scenario(Enum):
    BLOCK_BEFORE = "before"
    BLOCK_DURING = "during"


class Playback(Enum):
    NORMAL = "Normal"
    DEGRADED_QUALITY = "DegradedQuality"
    STOPS_AFTER_BUFFER = "StopsAfterBuffer"
    NO_VIDEO = "NoVideo"

    @property
    def severity(self) -> int:
        """0 for Normal up to 3 for NoVideo."""
        return list(Playback).index(self)


class EventKind(Enum):
    FETCH_OK = "fetch_ok"
    FETCH_DENIED = "fetch_denied"
    THROTTLED = "throttled"
    PRIMARY_FETCH = "primary_fetch"
    COSMETIC_LOSS = "cosmetic_loss"
    SCHEDULE_LOST = "schedule_lost"
    FALLBACK_SWITCH = "fallback_switch"
    SEGMENT_PLAYED = "segment_played"
    BUFFER_PLAYOUT = "buffer_playout"
    PLAYBACK_STOPPED = "playback_stopped"
    NO_VIDEO = "no_video"
    SESSION_END = "session_end"


@dataclass(frozen=True)
class TimelineEvent:
    segment: int
    kind: EventKind
    host: Optional[str] = None
    detail: str = ""

    def to_dict(self) -> Dict:
        return {"segment": self.segment, "event": self.kind.value, "host": self.host, "detail": self.detail}


@dataclass(frozen=True)
class SimOutcome:
    service: str
    scenario: Scenario
    playback: Playback
    cosmetic_losses: Tuple[str, ...] = ()
    achieved_rate: int = 0
    timeline: Tuple[TimelineEvent, ...] = field(default_factory=tuple)

    def events(self, kind: EventKind) -> Tuple[TimelineEvent, ...]:
        return tuple(event for event in self.timeline if event.kind is kind)

    def to_dict(self) -> Dict:
        return {
            "service": self.service,
            "scenario": self.scenario.value,
            "playback": self.playback.value,
            "cosmetic_losses": list(self.cosmetic_losses),
            "achieved_rate": self.achieved_rate,
            "timeline": [event.to_dict() for event in self.timeline],
        }
