import itertools

import pytest
import yaml

from echoscope.components.attack_policy import (
    PolicyDerivation,
    apply_policy,
    derive_attack_policy,
    extend_policy,
    load_policy,
    policy_for_profile,
    readable_sni,
    save_policy,
)
from echoscope.components.capture_ingest import read_capture, reassemble_flows
from echoscope.components.channel_classifier import classify_flows
from echoscope.entity.channel_entity import ChannelClassification, ChannelRole, Evidence, EvidenceTag
from echoscope.entity.config_entity import ClassifierConfig
from echoscope.entity.flow_entity import FlowKey, FlowRecord
from echoscope.entity.policy_entity import Policy, PolicyAction, PolicyRule, PolicyScope, Verdict
from echoscope.exception.exception import ConfigurationError, NoSideChannels
from echoscope.tls.builder import make_tls12_hello
from echoscope.utils.capture_writer import ech_hello, write_synthetic_capture

from tests.conftest import TABLE1_HOSTS


@pytest.fixture(scope="module")
def table1_classifications(table1_capture, profiles):
    flows = reassemble_flows(read_capture(table1_capture, include_control=True))
    return classify_flows(flows, ClassifierConfig(profiles=tuple(profiles)))


def _side(port, sni, service):
    return ChannelClassification(
        flow=FlowKey("10.0.0.2", port, "198.51.100.1", 443),
        role=ChannelRole.SIDE,
        service=service,
        evidence=(Evidence(EvidenceTag.SNI_MATCHED, sni), Evidence(EvidenceTag.LOW_VOLUME)),
        sni=sni,
        privacy_level="None",
    )


def _ech_primary(port, outer_sni):
    return ChannelClassification(
        flow=FlowKey("10.0.0.2", port, "198.51.100.2", 443),
        role=ChannelRole.PRIMARY,
        service=None,
        evidence=(Evidence(EvidenceTag.VOLUME_ABOVE_THRESHOLD), Evidence(EvidenceTag.ECH_OPAQUE)),
        sni=outer_sni,
        privacy_level="FullEch",
    )


def test_hotstar_block_policy(table1_classifications):
    policy = derive_attack_policy(table1_classifications, "hotstar")
    assert policy.target_service == "hotstar"
    assert list(policy.patterns) == sorted(TABLE1_HOSTS["hotstar"])
    assert {r.action for r in policy.rules} == {PolicyAction.BLOCK}
    assert {r.scope for r in policy.rules} == {PolicyScope.ALWAYS}
    assert all(r.rate is None for r in policy.rules)

    note = policy.derivation_note.splitlines()
    assert note[0] == "target_service: hotstar"
    assert any(line.startswith("api.hotstar.com <- tcp:10.0.0.2:") for line in note)
    assert any("shared CDN domain .akamaized.net" in line for line in note)


def test_primevideo_throttle_policy(table1_classifications):
    policy = derive_attack_policy(table1_classifications, "PrimeVideo", action="throttle", rate=100_000, scope="during")
    assert len(policy.rules) == 5
    assert {(r.action, r.rate, r.scope) for r in policy.rules} == {(PolicyAction.THROTTLE, 100_000, PolicyScope.DURING)}


def test_unknown_target_has_no_side_channels(table1_classifications):
    with pytest.raises(NoSideChannels):
        derive_attack_policy(table1_classifications, "netflix")


def test_all_ech_capture_has_no_side_channels(tmp_path, classifier_config):
    path = write_synthetic_capture(tmp_path / "ech_only.pcap", {"hotstar": []}, primary_bytes=2 * 1024 * 1024)
    flows = reassemble_flows(read_capture(path, include_control=True))
    classifications = classify_flows(flows, classifier_config)
    assert [c.role for c in classifications] == [ChannelRole.PRIMARY]
    with pytest.raises(NoSideChannels):
        derive_attack_policy(classifications, "hotstar")


def test_policy_blocks_target_side_flows_and_nothing_else(table1_classifications):
    policy = derive_attack_policy(table1_classifications, "youtube")
    for c in table1_classifications:
        decision = apply_policy(c, policy)
        if c.service == "youtube":
            assert decision.verdict is Verdict.BLOCK
        else:
            assert decision.allowed


def test_policies_never_hit_other_services(table1_classifications):
    policies = {s: derive_attack_policy(table1_classifications, s) for s in TABLE1_HOSTS}
    for attacker, victim in itertools.permutations(TABLE1_HOSTS, 2):
        for host in TABLE1_HOSTS[victim]:
            assert apply_policy(host, policies[attacker]).allowed, (attacker, host)


def test_derivation_is_idempotent(table1_classifications):
    first = derive_attack_policy(table1_classifications, "hotstar")
    doubled = list(table1_classifications) + list(reversed(table1_classifications))
    assert derive_attack_policy(doubled, "hotstar").rules == first.rules
    assert extend_policy(first, TABLE1_HOSTS["hotstar"]).rules == first.rules


def test_rule_matching_ech_outer_name_is_dropped():
    classifications = [
        _side(1, "a.svc.example", "svc"),
        _side(2, "cdn.example", "svc"),
        _ech_primary(3, "cdn.example"),
    ]
    policy = derive_attack_policy(classifications, "svc")
    assert policy.patterns == ("a.svc.example",)
    assert "dropped cdn.example: matches ECH outer SNI cdn.example" in policy.derivation_note

    with pytest.raises(NoSideChannels):
        derive_attack_policy(classifications[1:], "svc")


def test_scoped_rules_apply_only_in_their_phase():
    policy = Policy("svc", (PolicyRule("api.svc.example", PolicyAction.BLOCK, PolicyScope.BEFORE),))
    assert apply_policy("api.svc.example", policy).verdict is Verdict.BLOCK
    assert apply_policy("api.svc.example", policy, "before").verdict is Verdict.BLOCK
    assert apply_policy("api.svc.example", policy, "during").allowed


def test_first_matching_rule_wins():
    policy = Policy("svc", (
        PolicyRule("api.svc.example", PolicyAction.THROTTLE, rate=64_000),
        PolicyRule(".svc.example", PolicyAction.BLOCK),
    ))
    decision = apply_policy("API.svc.example.", policy)
    assert decision.verdict is Verdict.THROTTLE
    assert decision.rate == 64_000
    assert str(decision) == "Throttle(64000)"
    assert apply_policy("img.svc.example", policy).verdict is Verdict.BLOCK
    assert apply_policy("svc.example", policy).allowed


def test_targets_without_readable_sni_are_allowed(profiles_by_name):
    policy = policy_for_profile(profiles_by_name["hotstar"])
    flow = FlowRecord(FlowKey("10.0.0.2", 1, "198.51.100.1", 443), 0.0, 1.0)
    assert readable_sni(flow) is None
    assert apply_policy(flow, policy).allowed
    assert apply_policy(None, policy).allowed
    assert apply_policy(make_tls12_hello("api.hotstar.com"), policy).verdict is Verdict.BLOCK
    assert apply_policy(ech_hello("api.hotstar.com"), policy).allowed


def test_policy_for_profile(profiles_by_name):
    policy = policy_for_profile(profiles_by_name["youtube"], action="throttle", rate=200_000)
    assert policy.patterns == tuple(sorted(TABLE1_HOSTS["youtube"]))
    assert policy.derivation_note == "target_service: youtube\nall 4 profile patterns"


def test_save_and_load_policy(table1_classifications, tmp_path):
    policy = derive_attack_policy(table1_classifications, "hotstar", scope="before")
    path = save_policy(policy, tmp_path / "policy.yaml")

    text = path.read_text()
    assert text.startswith("# target_service: hotstar\n")
    assert yaml.safe_load(text)["rules"][0] == {"match_sni": "api.hotstar.com", "action": "block", "scope": "before"}
    assert load_policy(path) == policy


@pytest.mark.parametrize("document", [
    {"target_service": "x", "rules": [], "extra": 1},
    {"rules": []},
    {"target_service": "x", "rules": [{"match_sni": "a.example", "action": "block", "comment": "no"}]},
    {"target_service": "x", "rules": [{"match_sni": "a.example", "action": "throttle"}]},
    {"target_service": "x", "rules": [{"match_sni": "a.example", "action": "block", "rate": 10}]},
    {"target_service": "x", "rules": [{"match_sni": "a.example", "action": "drop"}]},
])
def test_malformed_policies_are_rejected(document, tmp_path):
    path = tmp_path / "policy.yaml"
    path.write_text(yaml.safe_dump(document))
    with pytest.raises(ConfigurationError):
        load_policy(path)


def test_throttle_without_rate_is_rejected():
    with pytest.raises(ConfigurationError):
        PolicyDerivation(action="throttle")


def test_policy_derivation_component(table1_classifications, tmp_path):
    derivation = PolicyDerivation(action="block", scope="during")
    artifact = derivation.initiate_policy_derivation(table1_classifications, "primevideo", tmp_path / "p.yaml")
    assert artifact.success
    assert artifact.rule_count == 5
    assert artifact.scope == "during"
    assert load_policy(artifact.policy_path) == derivation.policy
