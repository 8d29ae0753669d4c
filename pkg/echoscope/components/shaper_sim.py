"""
Segment-level streaming session simulator.

Replays a service session under an attack policy: side fetches go through
apply_policy the way an SNI-keyed shaper would see them, failures cascade
through the dependency kinds of the service model, and the outcome is
mapped onto the outcome grid labels.
"""

import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import (
    ConfigurationError,
    EchoscopeError,
    EchoscopeException,
    IncompleteGrid,
    InconsistentModel,
)
from echoscope.constants import (
    DEFAULT_MIN_SIDE_RATE,
    DEFAULT_SESSION_SEGMENTS,
    FALLBACK_BLOCKED_ROW,
    LABEL_DEGRADED,
    LABEL_NO_THUMBNAILS,
    LABEL_NO_VIDEO,
    LABEL_NORMAL,
    LABEL_STOPS_AFTER_BUFFER,
    TABLE2_REFERENCE,
    TABLE2_SERVICES,
    VERSION_TLS1_3,
)
from echoscope.components.attack_policy import apply_policy, extend_policy, policy_for_profile
from echoscope.components.channel_classifier import load_profiles
from echoscope.entity.artifact_entity import SimulationArtifact
from echoscope.entity.channel_entity import ServiceProfile
from echoscope.entity.config_entity import SimulationConfig
from echoscope.entity.policy_entity import Decision, Policy, Verdict
from echoscope.entity.shaper_entity import (
    DependencyKind,
    EventKind,
    Fallback,
    Playback,
    QualityTier,
    Scenario,
    ServiceModel,
    SideDependency,
    SimOutcome,
    TimelineEvent,
)
from echoscope.tls.builder import make_client_hello
from echoscope.tls.ech import make_grease_ech
from echoscope.tls.messages import TlsClientHello
from echoscope.utils.common import get_timestamp, read_yaml, save_json, save_text

logger = get_logger(__name__)

SCENARIO_COLUMNS = {
    Scenario.BLOCK_BEFORE: "Side channels blocked before video",
    Scenario.BLOCK_DURING: "Side channels blocked during playout",
}

PLAYBACK_LABELS = {
    Playback.NO_VIDEO: LABEL_NO_VIDEO,
    Playback.STOPS_AFTER_BUFFER: LABEL_STOPS_AFTER_BUFFER,
    Playback.DEGRADED_QUALITY: LABEL_DEGRADED,
}

OutcomeGrid = Mapping[Tuple[str, Union[Scenario, str]], SimOutcome]


# ================================
# SERVICE MODELS
# ================================

def _profile_named(name: str, profiles: Sequence[ServiceProfile]) -> Optional[ServiceProfile]:
    for profile in profiles:
        if profile.service_name == name:
            return profile
    return None


def check_model_against_profiles(model: ServiceModel, profiles: Sequence[ServiceProfile]) -> None:
    """Every dependency host must be listed in the service's own profile."""
    profile = _profile_named(model.name, profiles)
    if profile is None:
        raise InconsistentModel(f"model {model.name} has no service profile")
    for dep in model.side_dependencies:
        if profile.match(dep.host) is None:
            raise InconsistentModel(f"model {model.name}: dependency {dep.host} is not in the {model.name} profile")


def service_model_from_dict(data: Dict) -> ServiceModel:
    fallback = data.get("fallback")
    return ServiceModel(
        name=str(data["name"]).strip().lower(),
        side_dependencies=tuple(
            SideDependency(
                host=str(dep["host"]).strip().lower(),
                kind=DependencyKind(dep["kind"]),
                period_segments=int(dep.get("period_segments", 0)),
                min_rate=int(dep.get("min_rate", DEFAULT_MIN_SIDE_RATE)),
            )
            for dep in data.get("side_dependencies") or []
        ),
        normal_rate=int(data["normal_rate"]),
        primary_public_name=str(data["primary_public_name"]),
        fallback=Fallback(
            fallback_snis=tuple(str(host).strip().lower() for host in fallback["fallback_snis"]),
            degraded_rate=int(fallback["degraded_rate"]),
            degraded_quality_label=str(fallback.get("degraded_quality_label", "")),
        ) if fallback else None,
        schedule_buffer_segments=int(data.get("schedule_buffer_segments", 0)),
        quality_tiers=tuple(
            QualityTier(label=str(t["label"]), resolution=str(t["resolution"]), gb_per_hour=float(t["gb_per_hour"]))
            for t in data.get("quality_tiers") or []
        ),
        provenance=tuple(str(note) for note in data.get("provenance") or []),
    )


def load_service_model(path: Union[str, Path], profiles: Optional[Sequence[ServiceProfile]] = None) -> ServiceModel:
    """
    Read a service model YAML file. With `profiles`, dependency hosts are
    checked against the service's profile.

    Raises:
        InconsistentModel: missing fields, bad values or hosts outside the profile
    """
    path = Path(path)
    data = read_yaml(path)
    try:
        model = service_model_from_dict(data)
    except InconsistentModel as e:
        e.path = str(path)
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise InconsistentModel(f"bad service model: {e}", path=path)

    if profiles is not None:
        try:
            check_model_against_profiles(model, profiles)
        except InconsistentModel as e:
            e.path = str(path)
            raise

    logger.debug(f"Loaded model {model.name} ({len(model.side_dependencies)} dependencies) from {path}")
    return model


# ================================
# SIMULATION
# ================================

def primary_hello(model: ServiceModel) -> TlsClientHello:
    """The outer hello the shaper sees on the ECH primary channel."""
    return make_client_hello(
        sni=model.primary_public_name,
        alpn=("h2", "http/1.1"),
        versions=(VERSION_TLS1_3,),
        ech_extension=make_grease_ech(model.name.encode()),
    )


def _usable(decision: Decision, min_rate: int) -> bool:
    if decision.verdict is Verdict.BLOCK:
        return False
    if decision.verdict is Verdict.THROTTLE:
        return decision.rate >= min_rate
    return True


class _Session:
    """Mutable state of one simulated session."""

    def __init__(self, model: ServiceModel, policy: Policy, scenario: Scenario):
        self.model = model
        self.policy = policy
        self.phase = scenario.value
        self.timeline: List[TimelineEvent] = []
        self.cosmetic_losses: List[str] = []

    def record(self, segment: int, kind: EventKind, host: Optional[str] = None, detail: str = "") -> None:
        self.timeline.append(TimelineEvent(segment, kind, host, detail))

    def lose_cosmetic(self, host: str) -> None:
        if host not in self.cosmetic_losses:
            self.cosmetic_losses.append(host)

    def fetch(self, segment: int, dep: SideDependency, gated: bool) -> bool:
        if not gated:
            self.record(segment, EventKind.FETCH_OK, dep.host, "not subject to policy")
            return True
        decision = apply_policy(dep.host, self.policy, self.phase)
        if not _usable(decision, dep.min_rate):
            detail = str(decision)
            if decision.verdict is Verdict.THROTTLE:
                detail += f" below min_rate {dep.min_rate}"
            self.record(segment, EventKind.FETCH_DENIED, dep.host, detail)
            return False
        if decision.verdict is Verdict.THROTTLE:
            self.record(segment, EventKind.THROTTLED, dep.host, str(decision))
        else:
            self.record(segment, EventKind.FETCH_OK, dep.host)
        return True

    def fallback_usable(self, fallback: Fallback) -> bool:
        return all(
            _usable(apply_policy(host, self.policy, self.phase), DEFAULT_MIN_SIDE_RATE)
            for host in fallback.fallback_snis
        )


def simulate(
    model: ServiceModel,
    policy: Policy,
    scenario: Union[Scenario, str],
    session_segments: int = DEFAULT_SESSION_SEGMENTS
) -> SimOutcome:
    """
    Deterministic replay of one session of `session_segments` segments.

    Segment 0 is startup: every dependency is fetched, through the policy
    only when blocking starts before the video. Segments 1..N fetch the
    periodic dependencies that are due (always through the policy) and then
    the primary payload. A failed critical fetch at startup means no video;
    a failed schedule fetch later switches to the fallback server, or lets
    the buffered schedule run out before playback stops.
    """
    scenario = scenario if isinstance(scenario, Scenario) else Scenario(str(scenario).lower())
    if session_segments < 1:
        raise ConfigurationError(f"session_segments must be >= 1, got {session_segments}")

    session = _Session(model, policy, scenario)
    deps = model.side_dependencies

    def finish(playback: Playback, rate: int) -> SimOutcome:
        session.record(session.timeline[-1].segment if session.timeline else 0, EventKind.SESSION_END, detail=playback.value)
        outcome = SimOutcome(
            service=model.name,
            scenario=scenario,
            playback=playback,
            cosmetic_losses=tuple(session.cosmetic_losses),
            achieved_rate=rate,
            timeline=tuple(session.timeline),
        )
        logger.debug(f"{model.name}/{scenario.value}: {playback.value}, {len(session.timeline)} events")
        return outcome

    # startup
    startup_failure = None
    for dep in deps:
        if session.fetch(0, dep, gated=scenario is Scenario.BLOCK_BEFORE):
            continue
        if dep.kind is DependencyKind.COSMETIC:
            session.lose_cosmetic(dep.host)
            session.record(0, EventKind.COSMETIC_LOSS, dep.host)
        elif startup_failure is None:
            startup_failure = dep
    if startup_failure is not None:
        session.record(0, EventKind.NO_VIDEO, startup_failure.host, f"{startup_failure.kind.value} fetch failed at startup")
        return finish(Playback.NO_VIDEO, 0)

    hello = primary_hello(model)
    playback = Playback.NORMAL
    rate = model.normal_rate
    buffer_left: Optional[int] = None
    abandoned = set()

    for segment in range(1, session_segments + 1):
        for dep in deps:
            if not dep.due(segment) or dep.host in abandoned:
                continue
            if session.fetch(segment, dep, gated=True):
                continue
            if dep.kind is DependencyKind.COSMETIC:
                session.lose_cosmetic(dep.host)
                session.record(segment, EventKind.COSMETIC_LOSS, dep.host)
                continue

            session.record(segment, EventKind.SCHEDULE_LOST, dep.host)
            abandoned.add(dep.host)
            fallback = model.fallback
            if fallback is not None:
                if not session.fallback_usable(fallback):
                    session.record(segment, EventKind.NO_VIDEO, dep.host, "fallback servers blocked as well")
                    return finish(Playback.NO_VIDEO, 0)
                playback = Playback.DEGRADED_QUALITY
                rate = fallback.degraded_rate
                session.record(
                    segment, EventKind.FALLBACK_SWITCH, ",".join(fallback.fallback_snis),
                    f"{fallback.degraded_quality_label} at {rate} b/s",
                )
            elif buffer_left is None:
                buffer_left = model.schedule_buffer_segments

        decision = apply_policy(hello, policy, session.phase)
        session.record(segment, EventKind.PRIMARY_FETCH, hello.sni, str(decision))
        if decision.verdict is Verdict.BLOCK:
            session.record(segment, EventKind.NO_VIDEO, hello.sni, "primary channel blocked")
            return finish(Playback.NO_VIDEO, 0)
        segment_rate = min(rate, decision.rate) if decision.verdict is Verdict.THROTTLE else rate

        if buffer_left is not None:
            if buffer_left == 0:
                session.record(segment, EventKind.PLAYBACK_STOPPED, detail="schedule buffer exhausted")
                return finish(Playback.STOPS_AFTER_BUFFER, 0)
            buffer_left -= 1
            session.record(segment, EventKind.BUFFER_PLAYOUT, detail=f"{buffer_left} buffered segments left")
        else:
            session.record(segment, EventKind.SEGMENT_PLAYED, detail=f"{segment_rate} b/s")

    return finish(playback, segment_rate)


def outcome_label(outcome: SimOutcome) -> str:
    """Map an outcome onto the outcome grid wording."""
    if outcome.playback in PLAYBACK_LABELS:
        return PLAYBACK_LABELS[outcome.playback]
    return LABEL_NO_THUMBNAILS if outcome.cosmetic_losses else LABEL_NORMAL


# ================================
# OUTCOME TABLE
# ================================

def _scenario_key(key: Tuple[str, Union[Scenario, str]]) -> Tuple[str, str]:
    service, scenario = key
    return service, scenario.value if isinstance(scenario, Scenario) else str(scenario)


def outcome_frame(
    outcomes: OutcomeGrid,
    extra_rows: Optional[Mapping[str, Mapping[Union[Scenario, str], SimOutcome]]] = None
) -> pd.DataFrame:
    """
    The 3×2 label grid (services × scenarios) as a DataFrame, followed by
    any extra rows. Extra rows may leave cells out ("-").

    Raises:
        IncompleteGrid: a (service, scenario) cell of the grid is missing
    """
    cells = {_scenario_key(key): outcome for key, outcome in outcomes.items()}
    missing = [
        f"{service}/{scenario.value}"
        for service in TABLE2_SERVICES
        for scenario in Scenario
        if (service, scenario.value) not in cells
    ]
    if missing:
        raise IncompleteGrid(f"outcome grid is missing {', '.join(missing)}")

    rows = {
        service: [outcome_label(cells[(service, scenario.value)]) for scenario in Scenario]
        for service in TABLE2_SERVICES
    }
    for name, row in (extra_rows or {}).items():
        row = {(s.value if isinstance(s, Scenario) else str(s)): outcome for s, outcome in row.items()}
        rows[name] = [outcome_label(row[s.value]) if s.value in row else "-" for s in Scenario]

    frame = pd.DataFrame.from_dict(rows, orient="index", columns=[SCENARIO_COLUMNS[s] for s in Scenario])
    frame.index.name = "service"
    return frame


def render_outcome_table(
    outcomes: OutcomeGrid,
    extra_rows: Optional[Mapping[str, Mapping[Union[Scenario, str], SimOutcome]]] = None
) -> str:
    return outcome_frame(outcomes, extra_rows).to_string()


def compare_with_reference(
    outcomes: OutcomeGrid,
    extra_rows: Optional[Mapping[str, Mapping[Union[Scenario, str], SimOutcome]]] = None
) -> List[str]:
    """Cells whose label deviates from the reference grid; empty when all match."""
    cells = {_scenario_key(key): outcome for key, outcome in outcomes.items()}
    mismatches = []
    for (service, scenario), expected in TABLE2_REFERENCE.items():
        outcome = cells.get((service, scenario))
        got = outcome_label(outcome) if outcome is not None else None
        if got != expected:
            mismatches.append(f"{service}/{scenario}: expected {expected!r}, got {got!r}")

    extra = (extra_rows or {}).get(FALLBACK_BLOCKED_ROW)
    if extra is not None:
        extra = {(s.value if isinstance(s, Scenario) else str(s)): outcome for s, outcome in extra.items()}
        outcome = extra.get(Scenario.BLOCK_DURING.value)
        got = outcome_label(outcome) if outcome is not None else None
        if got != LABEL_NO_VIDEO:
            mismatches.append(f"{FALLBACK_BLOCKED_ROW}/during: expected {LABEL_NO_VIDEO!r}, got {got!r}")
    return mismatches


class ShaperSimulator:
    """
    Shaper simulation component.
    Loads service models and replays sessions under attack policies.
    """

    def __init__(self, config: SimulationConfig, profiles: Optional[Sequence[ServiceProfile]] = None):
        self.config = config
        self.profiles = list(profiles) if profiles is not None else load_profiles(config.profiles_path)
        self.outcomes: Dict[Tuple[str, str], SimOutcome] = {}
        logger.info(f"ShaperSimulator initialized (models from {config.models_dir})")

    def model_path(self, name_or_path: Union[str, Path]) -> Path:
        path = Path(name_or_path)
        if path.suffix.lower() in (".yaml", ".yml"):
            return path
        return Path(self.config.models_dir) / f"{name_or_path}.yaml"

    def load_model(self, name_or_path: Union[str, Path]) -> ServiceModel:
        return load_service_model(self.model_path(name_or_path), self.profiles)

    def initiate_simulation(
        self,
        policy: Policy,
        scenario: Union[Scenario, str],
        model: Optional[Union[str, Path, ServiceModel]] = None,
        session_segments: Optional[int] = None,
        report_path: Optional[Union[str, Path]] = None
    ) -> SimulationArtifact:
        try:
            logger.info("=" * 60)
            logger.info("STARTING SHAPER SIMULATION")
            logger.info("=" * 60)

            start_time = datetime.now()
            if not isinstance(model, ServiceModel):
                model = self.load_model(model or policy.target_service)
            segments = session_segments or self.config.session_segments

            outcome = simulate(model, policy, scenario, segments)
            label = outcome_label(outcome)
            key = f"{outcome.service}/{outcome.scenario.value}"
            self.outcomes[(outcome.service, outcome.scenario.value)] = outcome
            logger.info(f"{key}: {outcome.playback.value} -> {label!r}")
            if outcome.cosmetic_losses:
                logger.info(f"Cosmetic losses: {', '.join(outcome.cosmetic_losses)}")

            if report_path is not None:
                save_json(report_path, {"label": label, **outcome.to_dict()})

            artifact = SimulationArtifact(
                success=True,
                report_path=report_path,
                labels={key: label},
                mismatches=[],
                table=label,
                timestamp=get_timestamp("%Y-%m-%d %H:%M:%S"),
                duration_seconds=(datetime.now() - start_time).total_seconds(),
            )
            logger.info(artifact.get_status_message())
            return artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Shaper simulation failed")
            raise EchoscopeException(e, sys)

    def run_table2(
        self,
        session_segments: Optional[int] = None,
        report_path: Optional[Union[str, Path]] = None
    ) -> SimulationArtifact:
        """
        Block every profile host of each service in both scenarios, plus
        the run where the primevideo fallback servers are blocked too.
        """
        try:
            logger.info("=" * 60)
            logger.info("REPRODUCING SIDE CHANNEL BLOCKING OUTCOMES")
            logger.info("=" * 60)

            start_time = datetime.now()
            segments = session_segments or self.config.session_segments
            grid: Dict[Tuple[str, str], SimOutcome] = {}
            extra_rows: Dict[str, Dict[str, SimOutcome]] = {}

            for service in TABLE2_SERVICES:
                profile = _profile_named(service, self.profiles)
                if profile is None:
                    raise InconsistentModel(f"no service profile for {service}")
                model = self.load_model(service)
                policy = policy_for_profile(profile, self.config.policy_action, self.config.policy_scope)

                for scenario in Scenario:
                    outcome = simulate(model, policy, scenario, segments)
                    grid[(service, scenario.value)] = outcome
                    logger.info(f"{service}/{scenario.value}: {outcome_label(outcome)}")

                if model.fallback is not None:
                    extended = extend_policy(
                        policy, model.fallback.fallback_snis, self.config.policy_action, self.config.policy_scope
                    )
                    outcome = simulate(model, extended, Scenario.BLOCK_DURING, segments)
                    extra_rows[f"{service} (fallback blocked)"] = {Scenario.BLOCK_DURING.value: outcome}
                    logger.info(f"{service} with fallback blocked: {outcome_label(outcome)}")

            self.outcomes = grid
            table = render_outcome_table(grid, extra_rows)
            mismatches = compare_with_reference(grid, extra_rows)
            for mismatch in mismatches:
                logger.warning(f"Deviation from reference: {mismatch}")

            if report_path is not None:
                save_text(report_path, table + "\n")

            labels = {f"{service}/{scenario}": outcome_label(o) for (service, scenario), o in grid.items()}
            for name, row in extra_rows.items():
                labels.update({f"{name}/{scenario}": outcome_label(o) for scenario, o in row.items()})

            artifact = SimulationArtifact(
                success=not mismatches,
                report_path=report_path,
                labels=labels,
                mismatches=mismatches,
                table=table,
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
            logger.error("Outcome grid reproduction failed")
            raise EchoscopeException(e, sys)
