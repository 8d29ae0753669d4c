from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from echoscope.entity.flow_entity import FlowKey, Transport
from echoscope.exception.exception import ProfileValidationError


def pattern_matches(pattern: str, host: str) -> bool:
    """Exact host, or suffix pattern ".domain.tld" matching any subdomain."""
    if pattern.startswith("."):
        return host.endswith(pattern)
    return host == pattern


@dataclass(frozen=True)
class ServiceProfile:
    service_name: str
    sni_patterns: Tuple[str, ...]
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sni_patterns", tuple(self.sni_patterns))
        if not self.sni_patterns:
            raise ProfileValidationError(f"profile {self.service_name!r} has no SNI patterns")
        for pattern in self.sni_patterns:
            if pattern != pattern.lower():
                raise ProfileValidationError(f"profile {self.service_name!r}: pattern {pattern!r} is not lowercase")
        if len(set(self.sni_patterns)) != len(self.sni_patterns):
            raise ProfileValidationError(f"profile {self.service_name!r} lists a pattern twice")

        # A suffix pattern must not swallow another pattern of the same profile
        for suffix in self.sni_patterns:
            if not suffix.startswith("."):
                continue
            for other in self.sni_patterns:
                if other != suffix and other.endswith(suffix):
                    raise ProfileValidationError(
                        f"profile {self.service_name!r}: {other!r} is covered by suffix {suffix!r}"
                    )

    def match(self, host: str) -> Optional[str]:
        for pattern in self.sni_patterns:
            if pattern_matches(pattern, host):
                return pattern
        return None

    def to_dict(self) -> Dict:
        return {
            "service_name": self.service_name,
            "sni_patterns": list(self.sni_patterns),
            "notes": self.notes,
        }


class EvidenceTag(Enum):
    VOLUME_ABOVE_THRESHOLD = "VolumeAboveThreshold"
    SESSION_LENGTH_ABOVE_THRESHOLD = "SessionLengthAboveThreshold"
    SNI_MATCHED = "SniMatched"
    ECH_OPAQUE = "EchOpaque"
    LOW_VOLUME = "LowVolume"


@dataclass(frozen=True)
class Evidence:
    tag: EvidenceTag
    detail: Optional[str] = None

    def __str__(self) -> str:
        if self.detail is None:
            return self.tag.value
        return f"{self.tag.value}({self.detail})"

    @classmethod
    def from_string(cls, text: str) -> "Evidence":
        name, _, rest = text.partition("(")
        detail = rest[:-1] if rest.endswith(")") else None
        return cls(EvidenceTag(name), detail)


class ChannelRole(Enum):
    PRIMARY = "Primary"
    SIDE = "Side"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ChannelClassification:
    flow: FlowKey
    role: ChannelRole
    service: Optional[str]
    evidence: Tuple[Evidence, ...]
    sni: Optional[str] = None
    privacy_level: str = "unknown"
    total_bytes: int = 0
    first_ts: float = 0.0
    last_ts: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "evidence", tuple(self.evidence))
        tags = {item.tag for item in self.evidence}
        if self.role is ChannelRole.SIDE and not tags & {EvidenceTag.SNI_MATCHED, EvidenceTag.LOW_VOLUME}:
            raise ValueError(f"Side classification of {self.flow} lacks SniMatched/LowVolume evidence")
        if EvidenceTag.SNI_MATCHED in tags and self.service is None:
            raise ValueError(f"SniMatched evidence without a service for {self.flow}")

    def has(self, tag: EvidenceTag) -> bool:
        return any(item.tag is tag for item in self.evidence)

    def overlaps(self, other: "ChannelClassification") -> bool:
        return self.first_ts <= other.last_ts and other.first_ts <= self.last_ts

    def to_dict(self) -> Dict:
        return {
            "flow": {
                "src_ip": self.flow.src_ip,
                "src_port": self.flow.src_port,
                "dst_ip": self.flow.dst_ip,
                "dst_port": self.flow.dst_port,
                "transport": self.flow.transport.value,
            },
            "role": self.role.value,
            "service": self.service,
            "evidence": [str(item) for item in self.evidence],
            "sni": self.sni,
            "privacy_level": self.privacy_level,
            "total_bytes": self.total_bytes,
            "first_ts": self.first_ts,
            "last_ts": self.last_ts,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ChannelClassification":
        flow = data["flow"]
        return cls(
            flow=FlowKey(
                flow["src_ip"], int(flow["src_port"]), flow["dst_ip"], int(flow["dst_port"]),
                Transport(flow.get("transport", "tcp")),
            ),
            role=ChannelRole(data["role"]),
            service=data.get("service"),
            evidence=tuple(Evidence.from_string(item) for item in data.get("evidence", [])),
            sni=data.get("sni"),
            privacy_level=data.get("privacy_level", "unknown"),
            total_bytes=int(data.get("total_bytes", 0)),
            first_ts=float(data.get("first_ts", 0.0)),
            last_ts=float(data.get("last_ts", 0.0)),
        )


@dataclass
class ServiceGroup:
    """Side flows of one service and the Primary flows active at the same time."""
    service: str
    side_flows: Tuple[FlowKey, ...] = field(default_factory=tuple)
    candidate_primary_flows: Tuple[FlowKey, ...] = field(default_factory=tuple)
    association: str = "circumstantial"

    def to_dict(self) -> Dict:
        return {
            "side_flows": [str(key) for key in self.side_flows],
            "candidate_primary_flows": [str(key) for key in self.candidate_primary_flows],
            "association": self.association,
        }
