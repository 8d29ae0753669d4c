import sys
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import (
    ConfigurationError,
    EchoscopeError,
    EchoscopeException,
    NoSideChannels,
)
from echoscope.constants import SHARED_CDN_SUFFIXES
from echoscope.entity.artifact_entity import PolicyArtifact
from echoscope.entity.channel_entity import (
    ChannelClassification,
    ChannelRole,
    EvidenceTag,
    ServiceProfile,
)
from echoscope.entity.flow_entity import FlowRecord
from echoscope.entity.policy_entity import (
    ALLOW,
    Decision,
    Policy,
    PolicyAction,
    PolicyRule,
    PolicyScope,
    Verdict,
)
from echoscope.tls.messages import PrivacyLevel, TlsClientHello
from echoscope.utils.common import get_timestamp, read_yaml, save_yaml

logger = get_logger(__name__)

PolicyTarget = Union[TlsClientHello, FlowRecord, ChannelClassification, str, None]

POLICY_KEYS = {"target_service", "rules"}
RULE_KEYS = {"match_sni", "action", "rate", "scope"}


def _coerce(action, scope, rate) -> tuple:
    action = action if isinstance(action, PolicyAction) else PolicyAction(str(action).lower())
    scope = scope if isinstance(scope, PolicyScope) else PolicyScope(str(scope).lower())
    if action is PolicyAction.THROTTLE:
        if rate is None or rate <= 0:
            raise ConfigurationError("throttle needs a positive rate in bits/second")
        return action, scope, int(rate)
    return action, scope, None


def shared_cdn_suffix(host: str) -> Optional[str]:
    for suffix in SHARED_CDN_SUFFIXES:
        if host.endswith(suffix):
            return suffix
    return None


def derive_attack_policy(
    classifications: Sequence[ChannelClassification],
    target: str,
    action: Union[PolicyAction, str] = PolicyAction.BLOCK,
    scope: Union[PolicyScope, str] = PolicyScope.ALWAYS,
    rate: Optional[int] = None
) -> Policy:
    """
    One SNI rule per distinct host among the target's profile-matched Side
    flows, sorted by host. A rule that would also match the readable outer
    SNI of a FullEch flow is dropped. Raises NoSideChannels when nothing
    identifiable remains.
    """
    action, scope, rate = _coerce(action, scope, rate)
    target = target.strip().lower()

    evidence = {}
    for c in classifications:
        if c.role is ChannelRole.SIDE and c.service == target and c.sni and c.has(EvidenceTag.SNI_MATCHED):
            evidence.setdefault(c.sni.lower().rstrip("."), []).append(c)

    ech_outer_snis = {
        c.sni.lower().rstrip(".") for c in classifications
        if c.privacy_level == PrivacyLevel.FULL_ECH.value and c.sni
    }

    note = [f"target_service: {target}"]
    rules: List[PolicyRule] = []
    for host in sorted(evidence):
        rule = PolicyRule(match_sni=host, action=action, scope=scope, rate=rate)
        collateral = sorted(outer for outer in ech_outer_snis if rule.matches(outer))
        if collateral:
            logger.warning(f"Dropping rule for {host}: it would match ECH outer SNI {collateral}")
            note.append(f"dropped {host}: matches ECH outer SNI {', '.join(collateral)}")
            continue
        rules.append(rule)
        flows = "; ".join(str(c.flow) for c in evidence[host])
        note.append(f"{host} <- {flows}")
        suffix = shared_cdn_suffix(host)
        if suffix:
            note.append(
                f"{host} sits on shared CDN domain {suffix}; the rule is SNI-only, "
                "an IP rule would hit other tenants"
            )

    if not rules:
        raise NoSideChannels(f"no identifiable side channels for {target}")

    logger.info(f"Derived {len(rules)} {action.value} rules against {target}")
    return Policy(target_service=target, rules=tuple(rules), derivation_note="\n".join(note))


def readable_sni(target: PolicyTarget) -> Optional[str]:
    """The SNI an on-path middlebox can read, if any."""
    if target is None:
        return None
    if isinstance(target, str):
        sni = target
    else:
        sni = target.sni
    if not sni:
        return None
    return sni.strip().lower().rstrip(".")


def apply_policy(target: PolicyTarget, policy: Policy, phase: Optional[str] = None) -> Decision:
    """
    First matching rule wins; no readable SNI means Allow. With `phase`
    ("before"/"during") only rules scoped to that phase or `always` apply.
    """
    host = readable_sni(target)
    if host is None:
        return ALLOW
    for rule in policy.rules:
        if rule.scope.applies_in(phase) and rule.matches(host):
            if rule.action is PolicyAction.THROTTLE:
                return Decision(Verdict.THROTTLE, rate=rule.rate, rule=rule)
            return Decision(Verdict.BLOCK, rule=rule)
    return ALLOW


def policy_for_profile(
    profile: ServiceProfile,
    action: Union[PolicyAction, str] = PolicyAction.BLOCK,
    scope: Union[PolicyScope, str] = PolicyScope.ALWAYS,
    rate: Optional[int] = None
) -> Policy:
    """A policy covering every SNI pattern a profile lists."""
    action, scope, rate = _coerce(action, scope, rate)
    rules = tuple(
        PolicyRule(match_sni=pattern, action=action, scope=scope, rate=rate)
        for pattern in sorted(profile.sni_patterns)
    )
    return Policy(
        target_service=profile.service_name,
        rules=rules,
        derivation_note=f"target_service: {profile.service_name}\nall {len(rules)} profile patterns",
    )


def extend_policy(
    policy: Policy,
    hosts: Iterable[str],
    action: Union[PolicyAction, str] = PolicyAction.BLOCK,
    scope: Union[PolicyScope, str] = PolicyScope.ALWAYS,
    rate: Optional[int] = None
) -> Policy:
    action, scope, rate = _coerce(action, scope, rate)
    rules = list(policy.rules)
    known = set(policy.patterns)
    added = []
    for host in hosts:
        host = host.strip().lower().rstrip(".")
        if host not in known:
            rules.append(PolicyRule(match_sni=host, action=action, scope=scope, rate=rate))
            known.add(host)
            added.append(host)
    note = policy.derivation_note + (f"\nextended with {', '.join(added)}" if added else "")
    return Policy(target_service=policy.target_service, rules=tuple(rules), derivation_note=note.strip())


def save_policy(policy: Policy, path: Union[str, Path]) -> Path:
    path = Path(path)
    save_yaml(path, policy.to_dict(), header_comment=policy.derivation_note or None)
    return path


def load_policy(path: Union[str, Path]) -> Policy:
    path = Path(path)
    data = read_yaml(path)
    if not isinstance(data, dict) or set(data) != POLICY_KEYS:
        raise ConfigurationError(f"policy must have exactly the keys {sorted(POLICY_KEYS)}", path=path)

    rules = []
    for index, item in enumerate(data["rules"] or []):
        if not isinstance(item, dict) or not set(item) <= RULE_KEYS or "match_sni" not in item:
            raise ConfigurationError(f"rule {index} has unexpected fields", path=path)
        try:
            rules.append(PolicyRule.from_dict(item))
        except (ValueError, KeyError) as e:
            raise ConfigurationError(f"rule {index}: {e}", path=path)

    with open(path, "r", encoding="utf-8") as f:
        comments = []
        for line in f:
            if not line.startswith("#"):
                break
            comments.append(line[1:].strip())

    return Policy(
        target_service=str(data["target_service"]),
        rules=tuple(rules),
        derivation_note="\n".join(comments),
    )


class PolicyDerivation:
    """
    Attack policy component.
    Builds the SNI block/throttle list for one target service.
    """

    def __init__(
        self,
        action: Union[PolicyAction, str] = PolicyAction.BLOCK,
        scope: Union[PolicyScope, str] = PolicyScope.ALWAYS,
        rate: Optional[int] = None
    ):
        self.action, self.scope, self.rate = _coerce(action, scope, rate)
        self.policy: Optional[Policy] = None
        logger.info(f"PolicyDerivation initialized ({self.action.value}, scope {self.scope.value})")

    def initiate_policy_derivation(
        self,
        classifications: Sequence[ChannelClassification],
        target: str,
        policy_path: Optional[Union[str, Path]] = None
    ) -> PolicyArtifact:
        try:
            logger.info("=" * 60)
            logger.info(f"DERIVING ATTACK POLICY AGAINST {target.upper()}")
            logger.info("=" * 60)

            self.policy = derive_attack_policy(classifications, target, self.action, self.scope, self.rate)
            for rule in self.policy.rules:
                logger.info(f"  {rule.action.value} {rule.match_sni} ({rule.scope.value})")

            if policy_path is not None:
                policy_path = save_policy(self.policy, policy_path)

            artifact = PolicyArtifact(
                success=True,
                policy_path=policy_path,
                target_service=self.policy.target_service,
                rule_count=len(self.policy.rules),
                action=self.action.value,
                scope=self.scope.value,
                timestamp=get_timestamp("%Y-%m-%d %H:%M:%S"),
            )

            logger.info("=" * 60)
            logger.info(artifact.get_status_message())
            logger.info("=" * 60)
            return artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Policy derivation failed")
            raise EchoscopeException(e, sys)
