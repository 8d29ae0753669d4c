import json

import pytest
import yaml

from echoscope.components.attack_policy import apply_policy, extend_policy, policy_for_profile
from echoscope.components.shaper_sim import (
    SCENARIO_COLUMNS,
    ShaperSimulator,
    compare_with_reference,
    load_service_model,
    outcome_frame,
    outcome_label,
    primary_hello,
    render_outcome_table,
    simulate,
)
from echoscope.constants import (
    FALLBACK_BLOCKED_ROW,
    LABEL_DEGRADED,
    LABEL_NO_THUMBNAILS,
    LABEL_NO_VIDEO,
    LABEL_NORMAL,
    LABEL_STOPS_AFTER_BUFFER,
    MODELS_DIR,
    TABLE2_REFERENCE,
    TABLE2_SERVICES,
)
from echoscope.entity.policy_entity import Policy, PolicyAction, PolicyRule
from echoscope.entity.shaper_entity import (
    DependencyKind,
    EventKind,
    Fallback,
    Playback,
    QualityTier,
    Scenario,
    ServiceModel,
    SideDependency,
)
from echoscope.exception.exception import ConfigurationError, IncompleteGrid, InconsistentModel
from echoscope.tls.messages import PrivacyLevel
from echoscope.tls.privacy import assess_privacy


@pytest.fixture(scope="module")
def models(profiles):
    return {name: load_service_model(MODELS_DIR / f"{name}.yaml", profiles) for name in TABLE2_SERVICES}


@pytest.fixture(scope="module")
def block_policies(profiles_by_name):
    return {name: policy_for_profile(profiles_by_name[name]) for name in TABLE2_SERVICES}


@pytest.fixture(scope="module")
def grid(models, block_policies):
    return {
        (name, scenario.value): simulate(models[name], block_policies[name], scenario)
        for name in TABLE2_SERVICES
        for scenario in Scenario
    }


def _segments(outcome, kind):
    return [event.segment for event in outcome.events(kind)]


# ------------------------------------------------------------------ models

def test_bundled_models_load(models):
    assert models["hotstar"].schedule_buffer_segments == 3
    assert models["hotstar"].fallback is None
    assert models["primevideo"].fallback.degraded_rate == 844_444
    assert {dep.kind for dep in models["youtube"].side_dependencies} == {DependencyKind.COSMETIC}
    for model in models.values():
        assert model.primary_public_name == "cdn.example"
        assert model.provenance


def test_quality_tier_rate():
    assert QualityTier("Good", "480p", 0.38).rate == 844_444


def test_dependency_due():
    dep = SideDependency("api.svc.example", DependencyKind.SCHEDULE_CRITICAL, period_segments=4)
    assert [s for s in range(1, 13) if dep.due(s)] == [4, 8, 12]
    assert not SideDependency("a.svc.example", DependencyKind.COSMETIC).due(4)


@pytest.mark.parametrize("build", [
    lambda: ServiceModel("svc", (), normal_rate=0, primary_public_name="cdn.example"),
    lambda: ServiceModel("svc", (), normal_rate=1000, primary_public_name="cdn.example", schedule_buffer_segments=-1),
    lambda: ServiceModel(
        "svc", (), normal_rate=1000, primary_public_name="cdn.example",
        fallback=Fallback(("f.svc.example",), degraded_rate=1000, degraded_quality_label="SD"),
    ),
    lambda: ServiceModel(
        "svc",
        (SideDependency("a.svc.example", DependencyKind.COSMETIC), SideDependency("a.svc.example", DependencyKind.COSMETIC)),
        normal_rate=1000, primary_public_name="cdn.example",
    ),
    lambda: SideDependency("a.svc.example", DependencyKind.COSMETIC, period_segments=-1),
    lambda: Fallback((), degraded_rate=10, degraded_quality_label="SD"),
])
def test_inconsistent_models_are_rejected(build):
    with pytest.raises(InconsistentModel):
        build()


def test_model_host_outside_profile(tmp_path, profiles):
    data = yaml.safe_load((MODELS_DIR / "hotstar.yaml").read_text())
    data["side_dependencies"].append({"host": "tracker.elsewhere.example", "kind": "Cosmetic"})
    path = tmp_path / "hotstar.yaml"
    path.write_text(yaml.safe_dump(data))

    load_service_model(path)
    with pytest.raises(InconsistentModel) as info:
        load_service_model(path, profiles)
    assert info.value.path == str(path)


def test_model_missing_field(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text(yaml.safe_dump({"name": "broken", "primary_public_name": "cdn.example"}))
    with pytest.raises(InconsistentModel) as info:
        load_service_model(path)
    assert info.value.path == str(path)


def test_model_without_profile(tmp_path, profiles):
    path = tmp_path / "netflix.yaml"
    path.write_text(yaml.safe_dump({"name": "netflix", "normal_rate": 5_000_000, "primary_public_name": "cdn.example"}))
    with pytest.raises(InconsistentModel):
        load_service_model(path, profiles)


# ------------------------------------------------------------- simulation

def test_outcome_grid_matches_reference(grid):
    for key, expected in TABLE2_REFERENCE.items():
        assert outcome_label(grid[key]) == expected, key
    assert compare_with_reference(grid) == []


def test_hotstar_startup_block(grid):
    outcome = grid[("hotstar", "before")]
    assert outcome.playback is Playback.NO_VIDEO
    assert outcome.achieved_rate == 0
    (no_video,) = outcome.events(EventKind.NO_VIDEO)
    assert no_video.segment == 0
    assert no_video.host == "service.hotstar.com"
    assert outcome.timeline[-1].kind is EventKind.SESSION_END


def test_hotstar_schedule_loss_drains_buffer(grid):
    outcome = grid[("hotstar", "during")]
    assert outcome.playback is Playback.STOPS_AFTER_BUFFER
    assert [(e.segment, e.host) for e in outcome.events(EventKind.SCHEDULE_LOST)] == [(4, "api.hotstar.com")]
    assert _segments(outcome, EventKind.BUFFER_PLAYOUT) == [4, 5, 6]
    assert _segments(outcome, EventKind.PLAYBACK_STOPPED) == [7]
    assert _segments(outcome, EventKind.SEGMENT_PLAYED) == [1, 2, 3]
    assert outcome.cosmetic_losses == ("img1.hotstarext.com",)


def test_primevideo_switches_to_fallback(grid, models):
    outcome = grid[("primevideo", "during")]
    assert outcome.playback is Playback.DEGRADED_QUALITY
    assert outcome.achieved_rate == models["primevideo"].fallback.degraded_rate
    (switch,) = outcome.events(EventKind.FALLBACK_SWITCH)
    assert switch.segment == 4
    assert "Good (480p SD)" in switch.detail
    # The schedule host is abandoned after the switch
    assert _segments(outcome, EventKind.SCHEDULE_LOST) == [4]
    assert _segments(outcome, EventKind.SEGMENT_PLAYED) == list(range(1, 21))


def test_primevideo_with_fallback_blocked(models, block_policies):
    model = models["primevideo"]
    policy = extend_policy(block_policies["primevideo"], model.fallback.fallback_snis)
    outcome = simulate(model, policy, Scenario.BLOCK_DURING)
    assert outcome.playback is Playback.NO_VIDEO
    assert outcome_label(outcome) == LABEL_NO_VIDEO
    assert _segments(outcome, EventKind.NO_VIDEO) == [4]


def test_youtube_loses_only_cosmetics(grid, models):
    before, during = grid[("youtube", "before")], grid[("youtube", "during")]
    assert before.playback is Playback.NORMAL
    assert sorted(before.cosmetic_losses) == sorted(d.host for d in models["youtube"].side_dependencies)
    assert during.cosmetic_losses == ("yt3.ggpht.com", "i.ytimg.com", "pagead2.googlesyndication.com")
    for outcome in (before, during):
        assert outcome.achieved_rate == models["youtube"].normal_rate
        assert outcome_label(outcome) == LABEL_NO_THUMBNAILS


def test_empty_policy_plays_normally(models):
    for model in models.values():
        outcome = simulate(model, Policy(model.name, ()), "before")
        assert outcome.playback is Playback.NORMAL
        assert not outcome.cosmetic_losses
        assert outcome.achieved_rate == model.normal_rate
        assert outcome_label(outcome) == LABEL_NORMAL
        assert not outcome.events(EventKind.FETCH_DENIED)


def test_throttle_below_min_rate_counts_as_blocked(models, profiles_by_name):
    policy = policy_for_profile(profiles_by_name["hotstar"], action="throttle", rate=100_000)
    outcome = simulate(models["hotstar"], policy, "before")
    assert outcome.playback is Playback.NO_VIDEO
    denied = outcome.events(EventKind.FETCH_DENIED)
    assert denied[0].detail == "Throttle(100000) below min_rate 128000"


def test_throttle_above_min_rate_keeps_playing(models, profiles_by_name):
    policy = policy_for_profile(profiles_by_name["hotstar"], action="throttle", rate=200_000)
    outcome = simulate(models["hotstar"], policy, "before")
    assert outcome.playback is Playback.NORMAL
    assert outcome.achieved_rate == models["hotstar"].normal_rate
    assert len(outcome.events(EventKind.THROTTLED)) >= len(models["hotstar"].side_dependencies)


def test_primary_channel_is_never_hit_by_profile_policies(models, block_policies):
    for name, model in models.items():
        hello = primary_hello(model)
        assert assess_privacy(hello).privacy_level is PrivacyLevel.FULL_ECH
        assert hello == primary_hello(model)
        for policy in block_policies.values():
            assert apply_policy(hello, policy, "during").allowed


def test_policy_on_outer_name_hits_the_primary(models):
    model = models["hotstar"]
    throttled = simulate(model, Policy("hotstar", (PolicyRule("cdn.example", PolicyAction.THROTTLE, rate=500_000),)), "during")
    assert throttled.playback is Playback.NORMAL
    assert throttled.achieved_rate == 500_000

    blocked = simulate(model, Policy("hotstar", (PolicyRule("cdn.example", PolicyAction.BLOCK),)), "during")
    assert blocked.playback is Playback.NO_VIDEO
    assert _segments(blocked, EventKind.NO_VIDEO) == [1]


def test_scoped_policy_only_bites_in_its_phase(models, profiles_by_name):
    policy = policy_for_profile(profiles_by_name["hotstar"], scope="before")
    assert simulate(models["hotstar"], policy, "before").playback is Playback.NO_VIDEO
    assert simulate(models["hotstar"], policy, "during").playback is Playback.NORMAL


def test_short_session_ends_before_schedule_refresh(models, block_policies):
    outcome = simulate(models["hotstar"], block_policies["hotstar"], "during", session_segments=3)
    assert outcome.playback is Playback.NORMAL
    assert outcome.achieved_rate == models["hotstar"].normal_rate


def test_simulation_is_deterministic(models, block_policies):
    first = simulate(models["primevideo"], block_policies["primevideo"], "during")
    second = simulate(models["primevideo"], block_policies["primevideo"], Scenario.BLOCK_DURING)
    assert first == second
    assert first.to_dict() == second.to_dict()


def test_zero_segments_is_rejected(models, block_policies):
    with pytest.raises(ConfigurationError):
        simulate(models["youtube"], block_policies["youtube"], "during", session_segments=0)


def test_playback_severity_order():
    assert [p.severity for p in (
        Playback.NORMAL, Playback.DEGRADED_QUALITY, Playback.STOPS_AFTER_BUFFER, Playback.NO_VIDEO,
    )] == [0, 1, 2, 3]


# ------------------------------------------------------------ outcome table

def test_outcome_frame(grid):
    extra = {"custom": {"during": grid[("youtube", "during")]}}
    frame = outcome_frame(grid, extra)
    assert frame.index.name == "service"
    assert list(frame.columns) == [SCENARIO_COLUMNS[s] for s in Scenario]
    assert list(frame.index) == TABLE2_SERVICES + ["custom"]
    assert frame.loc["hotstar", SCENARIO_COLUMNS[Scenario.BLOCK_DURING]] == LABEL_STOPS_AFTER_BUFFER
    assert frame.loc["custom", SCENARIO_COLUMNS[Scenario.BLOCK_BEFORE]] == "-"


def test_incomplete_grid(grid):
    partial = dict(grid)
    del partial[("primevideo", "before")]
    with pytest.raises(IncompleteGrid):
        render_outcome_table(partial)


def test_reference_comparison_reports_deviations(grid, models):
    changed = dict(grid)
    changed[("primevideo", "during")] = simulate(models["primevideo"], Policy("primevideo", ()), "during")
    (mismatch,) = compare_with_reference(changed)
    assert mismatch.startswith("primevideo/during: expected")

    extra = {FALLBACK_BLOCKED_ROW: {"during": grid[("primevideo", "during")]}}
    (mismatch,) = compare_with_reference(grid, extra)
    assert mismatch.startswith(FALLBACK_BLOCKED_ROW)


# ---------------------------------------------------------------- component

def test_run_table2(simulation_config, profiles, tmp_path):
    simulator = ShaperSimulator(simulation_config, profiles)
    artifact = simulator.run_table2(report_path=tmp_path / "table2.txt")

    assert artifact.success
    assert artifact.mismatches == []
    assert artifact.labels[f"{FALLBACK_BLOCKED_ROW}/during"] == LABEL_NO_VIDEO
    assert artifact.labels["primevideo/during"] == LABEL_DEGRADED
    assert len(artifact.labels) == 7
    for column in SCENARIO_COLUMNS.values():
        assert column in artifact.table
    assert (tmp_path / "table2.txt").read_text() == artifact.table + "\n"
    assert len(simulator.outcomes) == 6


def test_initiate_simulation_writes_report(simulation_config, profiles, profiles_by_name, tmp_path):
    simulator = ShaperSimulator(simulation_config, profiles)
    policy = policy_for_profile(profiles_by_name["hotstar"])
    artifact = simulator.initiate_simulation(policy, "during", report_path=tmp_path / "sim.json")

    assert artifact.labels == {"hotstar/during": LABEL_STOPS_AFTER_BUFFER}
    assert artifact.table == LABEL_STOPS_AFTER_BUFFER
    report = json.loads((tmp_path / "sim.json").read_text())
    assert report["label"] == LABEL_STOPS_AFTER_BUFFER
    assert report["playback"] == "StopsAfterBuffer"
    assert report["timeline"][-1]["event"] == "session_end"


def test_simulator_accepts_model_paths(simulation_config, profiles):
    simulator = ShaperSimulator(simulation_config, profiles)
    assert simulator.model_path("youtube") == MODELS_DIR / "youtube.yaml"
    assert simulator.model_path(MODELS_DIR / "youtube.yaml") == MODELS_DIR / "youtube.yaml"
    assert simulator.load_model("youtube").name == "youtube"
