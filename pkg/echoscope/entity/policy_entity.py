from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

from echoscope.entity.channel_entity import pattern_matches


class PolicyAction(Enum):
    BLOCK = "block"
    THROTTLE = "throttle"


class PolicyScope(Enum):
    BEFORE = "before"
    DURING = "during"
    ALWAYS = "always"

    def applies_in(self, phase: Optional[str]) -> bool:
        if phase is None or self is PolicyScope.ALWAYS:
            return True
        return self.value == phase


@dataclass(frozen=True)
class PolicyRule:
    match_sni: str
    action: PolicyAction
    scope: PolicyScope = PolicyScope.ALWAYS
    rate: Optional[int] = None

    def __post_init__(self):
        if not self.match_sni or self.match_sni != self.match_sni.lower():
            raise ValueError(f"rule pattern must be non-empty lowercase: {self.match_sni!r}")
        if self.action is PolicyAction.THROTTLE:
            if self.rate is None or self.rate <= 0:
                raise ValueError(f"throttle rule for {self.match_sni} needs a positive rate")
        elif self.rate is not None:
            raise ValueError(f"block rule for {self.match_sni} carries a rate")

    def matches(self, host: str) -> bool:
        return pattern_matches(self.match_sni, host)

    def to_dict(self) -> Dict:
        data = {"match_sni": self.match_sni, "action": self.action.value}
        if self.rate is not None:
            data["rate"] = self.rate
        data["scope"] = self.scope.value
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "PolicyRule":
        rate = data.get("rate")
        return cls(
            match_sni=str(data["match_sni"]),
            action=PolicyAction(str(data["action"]).lower()),
            scope=PolicyScope(str(data.get("scope", "always")).lower()),
            rate=int(rate) if rate is not None else None,
        )


@dataclass(frozen=True)
class Policy:
    target_service: str
    rules: Tuple[PolicyRule, ...]
    derivation_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @property
    def patterns(self) -> Tuple[str, ...]:
        return tuple(rule.match_sni for rule in self.rules)

    def to_dict(self) -> Dict:
        return {
            "target_service": self.target_service,
            "rules": [rule.to_dict() for rule in self.rules],
        }


class Verdict(Enum):
    ALLOW = "Allow"
    BLOCK = "Block"
    THROTTLE = "Throttle"


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    rate: Optional[int] = None
    rule: Optional[PolicyRule] = None

    @property
    def allowed(self) -> bool:
        return self.verdict is Verdict.ALLOW

    def __str__(self) -> str:
        if self.verdict is Verdict.THROTTLE:
            return f"Throttle({self.rate})"
        return self.verdict.value


ALLOW = Decision(Verdict.ALLOW)
