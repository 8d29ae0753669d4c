import sys
import re
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import (
    EchoscopeError,
    EchoscopeException,
    ProfileValidationError,
)
from echoscope.constants import CLASSIFICATION_REPORT_NAME
from echoscope.entity.artifact_entity import ClassificationArtifact
from echoscope.entity.channel_entity import (
    ChannelClassification,
    ChannelRole,
    Evidence,
    EvidenceTag,
    ServiceGroup,
    ServiceProfile,
    pattern_matches,
)
from echoscope.entity.config_entity import ClassifierConfig
from echoscope.entity.flow_entity import FlowKey, FlowRecord, Transport
from echoscope.tls.messages import PrivacyLevel
from echoscope.utils.common import (
    create_directories,
    get_timestamp,
    load_json,
    read_yaml_documents,
    save_json,
)

logger = get_logger(__name__)

FLOW_FRAME_COLUMNS = [
    "src_ip", "src_port", "dst_ip", "dst_port", "transport",
    "sni", "privacy_level", "total_bytes", "session_length_s", "first_ts", "last_ts",
]

_SCHEME = re.compile(r"^[a-z][a-z0-9+.-]*://")
_PORT = re.compile(r":\d+$")


# ================================
# PROFILES
# ================================

def normalize_host(host: str) -> str:
    return host.strip().lower().rstrip(".")


def normalize_pattern(raw: str) -> str:
    """
    Lowercase, drop any scheme, path, port and trailing dot. "*.x.y" is
    read as the suffix pattern ".x.y".
    """
    pattern = raw.strip().lower()
    pattern = _SCHEME.sub("", pattern)
    pattern = pattern.split("/", 1)[0]
    pattern = _PORT.sub("", pattern)
    pattern = pattern.rstrip(".")
    if pattern.startswith("*."):
        pattern = pattern[1:]
    return pattern


def validate_profiles(profiles: Sequence[ServiceProfile]) -> None:
    """
    No host may be claimed by two profiles: exact duplicates, an exact host
    under another profile's suffix, and nested suffixes are all rejected.
    """
    names = [p.service_name for p in profiles]
    if len(set(names)) != len(names):
        raise ProfileValidationError(f"service names are not unique: {names}")

    for i, first in enumerate(profiles):
        for second in profiles[i + 1:]:
            for a in first.sni_patterns:
                for b in second.sni_patterns:
                    overlap = (
                        a == b
                        or (a.startswith(".") and pattern_matches(a, b.lstrip(".")))
                        or (b.startswith(".") and pattern_matches(b, a.lstrip(".")))
                    )
                    if overlap:
                        raise ProfileValidationError(
                            f"{a!r} ({first.service_name}) and {b!r} ({second.service_name}) overlap"
                        )


def load_profiles(path: Union[str, Path]) -> List[ServiceProfile]:
    """
    Read a profile file: one YAML document per service with
    `service_name`, `sni_patterns` and optional `notes`.
    """
    path = Path(path)
    profiles = []
    for document in read_yaml_documents(path):
        if "service_name" not in document or "sni_patterns" not in document:
            raise ProfileValidationError("profile document needs service_name and sni_patterns", path=path)
        raw_patterns = document["sni_patterns"] or []
        patterns = tuple(normalize_pattern(str(p)) for p in raw_patterns)
        for raw, pattern in zip(raw_patterns, patterns):
            if raw != pattern:
                logger.debug(f"Pattern {raw!r} normalized to {pattern!r}")
        try:
            profiles.append(ServiceProfile(
                service_name=str(document["service_name"]).strip().lower(),
                sni_patterns=patterns,
                notes=str(document.get("notes", "") or "").strip(),
            ))
        except ProfileValidationError as e:
            e.path = str(path)
            raise

    try:
        validate_profiles(profiles)
    except ProfileValidationError as e:
        e.path = str(path)
        raise

    logger.info(f"Loaded {len(profiles)} service profiles from {path}")
    return profiles


def match_profile(sni: Optional[str], profiles: Sequence[ServiceProfile]) -> Optional[Tuple[str, str]]:
    """(service_name, pattern) of the profile claiming `sni`, if any."""
    if not sni:
        return None
    host = normalize_host(sni)
    for profile in profiles:
        pattern = profile.match(host)
        if pattern is not None:
            return profile.service_name, pattern
    return None


def associate_service(sni: Optional[str], profiles: Sequence[ServiceProfile]) -> Optional[str]:
    match = match_profile(sni, profiles)
    return match[0] if match else None


# ================================
# CLASSIFICATION
# ================================

def flows_to_frame(flows: Iterable[FlowRecord]) -> pd.DataFrame:
    """Classifier input table built from in-memory flow records."""
    rows = []
    for flow in flows:
        rows.append({
            "src_ip": flow.key.src_ip,
            "src_port": flow.key.src_port,
            "dst_ip": flow.key.dst_ip,
            "dst_port": flow.key.dst_port,
            "transport": flow.key.transport.value,
            "sni": flow.sni or "",
            "privacy_level": flow.privacy_level,
            "total_bytes": flow.total_bytes,
            "session_length_s": round(flow.session_length, 6),
            "first_ts": flow.first_ts,
            "last_ts": flow.last_ts,
        })
    return pd.DataFrame(rows, columns=FLOW_FRAME_COLUMNS)


def table_to_frame(table: pd.DataFrame) -> pd.DataFrame:
    """Classifier input table built from a loaded flow report."""
    frame = table.copy()
    frame["total_bytes"] = frame["bytes_up"].astype("int64") + frame["bytes_down"].astype("int64")
    return frame[FLOW_FRAME_COLUMNS].reset_index(drop=True)


def _as_frame(flows: Union[pd.DataFrame, Iterable[FlowRecord]]) -> pd.DataFrame:
    if isinstance(flows, pd.DataFrame):
        if "total_bytes" in flows.columns:
            return flows[FLOW_FRAME_COLUMNS].reset_index(drop=True)
        return table_to_frame(flows)
    return flows_to_frame(flows)


def classify_flows(
    flows: Union[pd.DataFrame, Iterable[FlowRecord]],
    cfg: ClassifierConfig
) -> List[ChannelClassification]:
    """
    Decide Primary / Side / Unknown per flow.

    Rules, first that fires wins:
      1. SNI claimed by a profile (never for FullEch flows) -> Side
      2. volume >= primary threshold, or volume >= side ceiling with a
         session at least as long as the length threshold -> Primary
      3. volume <= side ceiling -> Side
      4. otherwise Unknown
    Every applicable evidence tag is attached. Output is sorted by
    (first_ts, flow key) so input order does not matter.
    """
    frame = _as_frame(flows)
    if frame.empty:
        return []

    matches = [
        match_profile(sni, cfg.profiles) if level != PrivacyLevel.FULL_ECH.value else None
        for sni, level in zip(frame["sni"], frame["privacy_level"])
    ]
    total = frame["total_bytes"].to_numpy(dtype=np.int64)
    length = frame["session_length_s"].to_numpy(dtype=np.float64)

    sni_matched = np.array([m is not None for m in matches], dtype=bool)
    high_volume = total >= cfg.primary_volume_threshold
    long_session = length >= cfg.session_length_threshold
    low_volume = total <= cfg.side_volume_ceiling
    ech_opaque = (frame["privacy_level"] == PrivacyLevel.FULL_ECH.value).to_numpy()
    primary = high_volume | ((total >= cfg.side_volume_ceiling) & long_session)

    roles = np.select(
        [sni_matched, primary, low_volume],
        [ChannelRole.SIDE.value, ChannelRole.PRIMARY.value, ChannelRole.SIDE.value],
        default=ChannelRole.UNKNOWN.value,
    )

    classifications = []
    for i, row in enumerate(frame.itertuples(index=False)):
        evidence = []
        if sni_matched[i]:
            evidence.append(Evidence(EvidenceTag.SNI_MATCHED, matches[i][1]))
        if high_volume[i]:
            evidence.append(Evidence(EvidenceTag.VOLUME_ABOVE_THRESHOLD))
        if long_session[i]:
            evidence.append(Evidence(EvidenceTag.SESSION_LENGTH_ABOVE_THRESHOLD))
        if low_volume[i]:
            evidence.append(Evidence(EvidenceTag.LOW_VOLUME))
        if ech_opaque[i]:
            evidence.append(Evidence(EvidenceTag.ECH_OPAQUE))

        classifications.append(ChannelClassification(
            flow=FlowKey(row.src_ip, int(row.src_port), row.dst_ip, int(row.dst_port), Transport(row.transport)),
            role=ChannelRole(roles[i]),
            service=matches[i][0] if matches[i] else None,
            evidence=tuple(evidence),
            sni=row.sni or None,
            privacy_level=row.privacy_level,
            total_bytes=int(row.total_bytes),
            first_ts=float(row.first_ts),
            last_ts=float(row.last_ts),
        ))

    classifications.sort(key=lambda c: (c.first_ts, c.flow.sort_key()))
    return classifications


def group_by_service(classifications: Sequence[ChannelClassification]) -> Dict[str, ServiceGroup]:
    """
    Side flows per service, plus the Primary flows whose [first_ts, last_ts]
    overlaps any of them. The primary association is circumstantial.
    """
    groups: Dict[str, ServiceGroup] = {}
    primaries = [c for c in classifications if c.role is ChannelRole.PRIMARY]

    services = sorted({c.service for c in classifications if c.role is ChannelRole.SIDE and c.service})
    for service in services:
        sides = [c for c in classifications if c.role is ChannelRole.SIDE and c.service == service]
        candidates = [p for p in primaries if any(p.overlaps(side) for side in sides)]
        groups[service] = ServiceGroup(
            service=service,
            side_flows=tuple(c.flow for c in sides),
            candidate_primary_flows=tuple(p.flow for p in candidates),
        )
    return groups


# ================================
# REPORTS
# ================================

def save_classification_report(
    classifications: Sequence[ChannelClassification],
    path: Union[str, Path],
    groups: Optional[Dict[str, ServiceGroup]] = None
) -> Path:
    path = Path(path)
    groups = groups if groups is not None else group_by_service(classifications)
    save_json(path, {
        "classifications": [c.to_dict() for c in classifications],
        "services": {name: group.to_dict() for name, group in groups.items()},
    })
    return path


def load_classification_report(path: Union[str, Path]) -> List[ChannelClassification]:
    path = Path(path)
    data = load_json(path)
    if not isinstance(data, dict) or "classifications" not in data:
        raise EchoscopeError("not a classification report", path=path)
    return [ChannelClassification.from_dict(item) for item in data["classifications"]]


class ChannelClassifier:
    """
    Channel classification component.
    Turns a flow table into Primary / Side / Unknown decisions per service.
    """

    def __init__(self, config: ClassifierConfig):
        self.config = config
        if not self.config.profiles:
            self.config.profiles = tuple(load_profiles(self.config.profiles_path))
        self.classifications: List[ChannelClassification] = []
        logger.info(f"ChannelClassifier initialized with {len(self.config.profiles)} profiles")

    def initiate_classification(
        self,
        flows: Union[pd.DataFrame, Iterable[FlowRecord]],
        report_path: Optional[Union[str, Path]] = None
    ) -> ClassificationArtifact:
        try:
            logger.info("=" * 60)
            logger.info("STARTING CHANNEL CLASSIFICATION")
            logger.info("=" * 60)

            start_time = datetime.now()
            self.classifications = classify_flows(flows, self.config)
            groups = group_by_service(self.classifications)

            for service, group in groups.items():
                logger.info(
                    f"{service}: {len(group.side_flows)} side flows, "
                    f"{len(group.candidate_primary_flows)} overlapping primary candidates"
                )

            if report_path is not None:
                report_path = Path(report_path)
                if report_path.suffix.lower() != ".json":
                    create_directories([report_path])
                    report_path = report_path / CLASSIFICATION_REPORT_NAME
                save_classification_report(self.classifications, report_path, groups)

            role_counts: Dict[str, int] = {}
            service_counts: Dict[str, int] = {}
            for c in self.classifications:
                role_counts[c.role.value] = role_counts.get(c.role.value, 0) + 1
                if c.service:
                    service_counts[c.service] = service_counts.get(c.service, 0) + 1

            artifact = ClassificationArtifact(
                success=True,
                report_path=report_path,
                flow_count=len(self.classifications),
                role_counts=role_counts,
                service_counts=service_counts,
                timestamp=get_timestamp("%Y-%m-%d %H:%M:%S"),
                duration_seconds=(datetime.now() - start_time).total_seconds(),
            )

            logger.info("=" * 60)
            logger.info(artifact.get_status_message())
            logger.info("=" * 60)
            return artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Channel classification failed")
            raise EchoscopeException(e, sys)
