from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, List, Optional


def _path_or_none(value) -> Optional[Path]:
    if value is None:
        return None
    return Path(value) if isinstance(value, str) else value


@dataclass
class AnalysisArtifact:
    success: bool
    report_path: Path
    mirror_path: Optional[Path]
    flow_count: int
    tls_flow_count: int
    ech_flow_count: int
    truncated_flow_count: int
    timestamp: str
    duration_seconds: float
    errors: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.report_path = _path_or_none(self.report_path)
        self.mirror_path = _path_or_none(self.mirror_path)

    def get_status_message(self) -> str:
        """
        Get human-readable status message.

        Returns:
            str: Status message
        """
        if self.success:
            return (
                f"Extracted {self.flow_count} flows ({self.tls_flow_count} TLS, "
                f"{self.ech_flow_count} ECH) in {self.duration_seconds:.2f}s"
            )
        return f"Extracted {self.flow_count} flows with {len(self.errors)} errors"

    def to_dict(self) -> Dict:
        return {
            "success": self.success,
            "report_path": str(self.report_path),
            "mirror_path": str(self.mirror_path) if self.mirror_path else None,
            "flow_count": self.flow_count,
            "tls_flow_count": self.tls_flow_count,
            "ech_flow_count": self.ech_flow_count,
            "truncated_flow_count": self.truncated_flow_count,
            "timestamp": self.timestamp,
            "duration_seconds": self.duration_seconds,
            "errors": self.errors,
        }


@dataclass
class ClassificationArtifact:
    success: bool
    report_path: Optional[Path]
    flow_count: int
    role_counts: Dict[str, int]
    service_counts: Dict[str, int]
    timestamp: str
    duration_seconds: float

    def __post_init__(self):
        self.report_path = _path_or_none(self.report_path)

    def get_status_message(self) -> str:
        roles = ", ".join(f"{count} {role}" for role, count in sorted(self.role_counts.items()))
        return f"Classified {self.flow_count} flows ({roles}) in {self.duration_seconds:.2f}s"

    def to_dict(self) -> Dict:
        return {
            "success": self.success,
            "report_path": str(self.report_path) if self.report_path else None,
            "flow_count": self.flow_count,
            "role_counts": self.role_counts,
            "service_counts": self.service_counts,
            "timestamp": self.timestamp,
            "duration_seconds": self.duration_seconds,
        }


@dataclass
class PolicyArtifact:
    success: bool
    policy_path: Optional[Path]
    target_service: str
    rule_count: int
    action: str
    scope: str
    timestamp: str

    def __post_init__(self):
        self.policy_path = _path_or_none(self.policy_path)

    def get_status_message(self) -> str:
        return f"Derived {self.rule_count} {self.action} rules ({self.scope}) against {self.target_service}"

    def to_dict(self) -> Dict:
        return {
            "success": self.success,
            "policy_path": str(self.policy_path) if self.policy_path else None,
            "target_service": self.target_service,
            "rule_count": self.rule_count,
            "action": self.action,
            "scope": self.scope,
            "timestamp": self.timestamp,
        }


@dataclass
class SimulationArtifact:
    success: bool
    report_path: Optional[Path]
    labels: Dict[str, str]
    mismatches: List[str]
    table: str
    timestamp: str
    duration_seconds: float

    def __post_init__(self):
        self.report_path = _path_or_none(self.report_path)

    def get_status_message(self) -> str:
        if self.success:
            return f"Simulated {len(self.labels)} runs in {self.duration_seconds:.2f}s"
        return f"Simulated {len(self.labels)} runs, {len(self.mismatches)} cells deviate from the reference"

    def to_dict(self) -> Dict:
        return {
            "success": self.success,
            "report_path": str(self.report_path) if self.report_path else None,
            "labels": self.labels,
            "mismatches": self.mismatches,
            "timestamp": self.timestamp,
            "duration_seconds": self.duration_seconds,
        }
