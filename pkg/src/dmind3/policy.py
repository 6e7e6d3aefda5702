"""Signing-time policy: thresholds, ordered rules, and the deterministic gate.

Gate evaluation order: (1) first-matching rule wins, (2) step-up when
gamma < tau_conf or rho > tau_risk (strict inequalities), (3) Allow.
The gate is a pure function with no network or clock access.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .intent import Intent, RiskFlag, risk_features


class Verdict(str, Enum):
    ALLOW = "Allow"
    BLOCK = "Block"
    STEPUP = "StepUp"


REASON_CLEAN = "Clean"
REASON_CONFIDENCE = "ConfidenceBelowThreshold"
REASON_RISK = "RiskAboveThreshold"
REASON_RULE = "RuleMatch"


class PolicyError(ValueError):
    pass


class SchemaError(PolicyError):
    pass


class RangeError(PolicyError):
    pass


class LossMatrixError(PolicyError):
    pass


class UnknownFlagError(PolicyError):
    pass


DEFAULT_TAU_CONF = 0.8
DEFAULT_TAU_RISK = 0.5
DEFAULT_EPSILON = 0.25
DEFAULT_LATENCY_BUDGET_MS = 500
DEFAULT_BETA = 0.05
DEFAULT_RELEASE_THRESHOLD = 0.3
DEFAULT_BLOCK_THRESHOLD = 0.7

# Asymmetric by design: an unsafe authorization costs an order of magnitude
# more than a conservative block; stepping up costs attention either way.
DEFAULT_LOSS_MATRIX = {
    "safe": {"Allow": 0.0, "Block": 1.0, "StepUp": 0.5},
    "unsafe": {"Allow": 10.0, "Block": 0.0, "StepUp": 0.5},
}

DEFAULT_FLAG_WEIGHTS = {
    RiskFlag.UNLIMITED_APPROVAL.value: 0.6,
    RiskFlag.UNUSUAL_DELEGATE.value: 0.55,
    RiskFlag.PERMISSION_AMPLIFICATION.value: 0.5,
    RiskFlag.UNKNOWN_SELECTOR.value: 0.35,
    RiskFlag.VALUE_WITH_UNKNOWN_CALL.value: 0.45,
    RiskFlag.UI_MISMATCH_CANDIDATE.value: 0.55,
}

DEFAULT_PLAN_COSTS = {"EdgeOnly": 1.0, "EdgeLocal": 4.0, "EdgeCloud": 3.0, "EdgeCloudLocal": 7.0}

DEFAULT_RULES = (
    {
        "id": "block_unlimited",
        "verdict": "Block",
        "match": {"flags_any": ["UnlimitedApproval"], "target_in_allowlist": False},
    },
)

# Sensitivity-label presets a policy document can reference via "profile".
# "default" leaves ui_claim unlabeled on purpose: with missing-label-is-public
# the raw claim text is kept, which is exactly the mechanical gap the
# sanitization audit exists to catch. "strict" treats missing as sensitive.
PROFILES: dict[str, dict] = {
    "default": {
        "missing_label_default": "public",
        "labels": {
            "chain_id": "public",
            "gas_limit": "public",
            "value": "coarsen",
            "destination": "coarsen",
            "calldata": "coarsen",
            "sender": "forbid",
            "nonce": "forbid",
            "value_bucket": "public",
            "destination_category": "public",
            "calldata_selector": "public",
        },
    },
    "strict": {
        "missing_label_default": "sensitive",
        "labels": {
            "chain_id": "public",
            "gas_limit": "forbid",
            "value": "coarsen",
            "destination": "coarsen",
            "calldata": "coarsen",
            "sender": "forbid",
            "nonce": "forbid",
            "ui_claim": "forbid",
            "value_bucket": "public",
            "destination_category": "public",
            "calldata_selector": "public",
        },
    },
    "user_override": {
        "missing_label_default": "public",
        "labels": {
            "chain_id": "public",
            "gas_limit": "public",
            "value": "coarsen",
            "destination": "coarsen",
            "calldata": "coarsen",
            "sender": "public",    # operator opted in; permitted, so not a violation
            "nonce": "forbid",
            "ui_claim": "public",
            "value_bucket": "public",
            "destination_category": "public",
            "calldata_selector": "public",
        },
    },
}


@dataclass(frozen=True)
class Rule:
    id: str
    verdict: Verdict
    actions: tuple[str, ...] | None = None
    flags_any: tuple[str, ...] | None = None
    flags_all: tuple[str, ...] | None = None
    target_in_allowlist: bool | None = None
    unlimited: bool | None = None
    amount_min: int | None = None
    amount_max: int | None = None

    def matches(self, intent: Intent, allowlist: frozenset[str]) -> bool:
        """Total, side-effect-free predicate; all stated conditions must hold."""
        if self.actions is not None and intent.action.value not in self.actions:
            return False
        flags = {f.value for f in intent.risk_flags}
        if self.flags_any is not None and not flags.intersection(self.flags_any):
            return False
        if self.flags_all is not None and not flags.issuperset(self.flags_all):
            return False
        if self.target_in_allowlist is not None:
            in_list = intent.target is not None and intent.target in allowlist
            if in_list != self.target_in_allowlist:
                return False
        if self.unlimited is not None and intent.unlimited_approval != self.unlimited:
            return False
        if self.amount_min is not None:
            if intent.amount is None or intent.amount < self.amount_min:
                return False
        if self.amount_max is not None:
            if intent.amount is None or intent.amount > self.amount_max:
                return False
        return True


@dataclass(frozen=True)
class Policy:
    tau_conf: float = DEFAULT_TAU_CONF
    tau_risk: float = DEFAULT_TAU_RISK
    epsilon: float = DEFAULT_EPSILON
    latency_budget_ms: int = DEFAULT_LATENCY_BUDGET_MS
    beta: float = DEFAULT_BETA
    release_threshold: float = DEFAULT_RELEASE_THRESHOLD
    block_threshold: float = DEFAULT_BLOCK_THRESHOLD
    loss_matrix: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_LOSS_MATRIX)))
    rules: tuple[Rule, ...] = ()
    flag_weights: dict = field(default_factory=lambda: dict(DEFAULT_FLAG_WEIGHTS))
    sensitivity_labels: dict = field(default_factory=dict)
    missing_label_default: str | None = "public"
    cloud_enabled: bool = True
    allowlist: frozenset[str] = frozenset()
    known_protocols: frozenset[str] = frozenset()
    value_buckets: tuple = ()
    plan_costs: dict = field(default_factory=lambda: dict(DEFAULT_PLAN_COSTS))
    sanitizer_bypass: tuple[str, ...] = ()  # test-only fault injection

    def loss(self, label: str, verdict: str) -> float:
        return float(self.loss_matrix[label][verdict])

    def to_dict(self) -> dict:
        return {
            "tau_conf": self.tau_conf,
            "tau_risk": self.tau_risk,
            "epsilon": self.epsilon,
            "latency_budget_ms": self.latency_budget_ms,
            "beta": self.beta,
            "release_threshold": self.release_threshold,
            "block_threshold": self.block_threshold,
            "loss_matrix": self.loss_matrix,
            "rules": [_rule_to_dict(r) for r in self.rules],
            "flag_weights": dict(self.flag_weights),
            "sensitivity_labels": dict(self.sensitivity_labels),
            "missing_label_default": self.missing_label_default,
            "cloud_enabled": self.cloud_enabled,
            "allowlist": sorted(self.allowlist),
            "known_protocols": sorted(self.known_protocols),
            "value_buckets": [list(b) for b in self.value_buckets],
            "plan_costs": dict(self.plan_costs),
            "sanitizer_bypass": list(self.sanitizer_bypass),
        }


def _rule_to_dict(rule: Rule) -> dict:
    match: dict = {}
    if rule.actions is not None:
        match["actions"] = list(rule.actions)
    if rule.flags_any is not None:
        match["flags_any"] = list(rule.flags_any)
    if rule.flags_all is not None:
        match["flags_all"] = list(rule.flags_all)
    if rule.target_in_allowlist is not None:
        match["target_in_allowlist"] = rule.target_in_allowlist
    if rule.unlimited is not None:
        match["unlimited"] = rule.unlimited
    if rule.amount_min is not None:
        match["amount_min"] = str(rule.amount_min)
    if rule.amount_max is not None:
        match["amount_max"] = str(rule.amount_max)
    return {"id": rule.id, "verdict": rule.verdict.value, "match": match}


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    reason: str
    rule_id: str | None
    gamma: float
    rho: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "reason": self.reason,
            "rule_id": self.rule_id,
            "gamma": self.gamma,
            "rho": self.rho,
        }


def _parse_rule(doc: dict) -> Rule:
    try:
        verdict = Verdict(doc["verdict"])
        match = doc.get("match", {})
        known = {"actions", "flags_any", "flags_all", "target_in_allowlist",
                 "unlimited", "amount_min", "amount_max"}
        unknown = set(match) - known
        if unknown:
            raise SchemaError(f"rule {doc.get('id')}: unknown match keys {sorted(unknown)}")
        return Rule(
            id=str(doc["id"]),
            verdict=verdict,
            actions=tuple(match["actions"]) if "actions" in match else None,
            flags_any=tuple(match["flags_any"]) if "flags_any" in match else None,
            flags_all=tuple(match["flags_all"]) if "flags_all" in match else None,
            target_in_allowlist=match.get("target_in_allowlist"),
            unlimited=match.get("unlimited"),
            amount_min=int(match["amount_min"]) if "amount_min" in match else None,
            amount_max=int(match["amount_max"]) if "amount_max" in match else None,
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed rule: {exc}") from exc


def load_policy(document: str | dict) -> Policy:
    """Parse and validate a policy document; missing thresholds get defaults."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"policy is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError("policy document must be a JSON object")

    def _threshold(key: str, default: float) -> float:
        raw = document.get(key, default)
        try:
            value = float(raw)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{key} must be a number") from exc
        if not 0.0 <= value <= 1.0:
            raise RangeError(f"{key}={value} outside [0, 1]")
        return value

    tau_conf = _threshold("tau_conf", DEFAULT_TAU_CONF)
    tau_risk = _threshold("tau_risk", DEFAULT_TAU_RISK)
    epsilon = _threshold("epsilon", DEFAULT_EPSILON)
    release = _threshold("release_threshold", DEFAULT_RELEASE_THRESHOLD)
    block = _threshold("block_threshold", DEFAULT_BLOCK_THRESHOLD)

    budget = document.get("latency_budget_ms", DEFAULT_LATENCY_BUDGET_MS)
    if not isinstance(budget, int) or budget <= 0:
        raise SchemaError("latency_budget_ms must be a positive integer")
    beta = document.get("beta", DEFAULT_BETA)
    if not isinstance(beta, (int, float)) or beta < 0:
        raise SchemaError("beta must be a nonnegative number")

    loss_matrix = document.get("loss_matrix", DEFAULT_LOSS_MATRIX)
    try:
        loss_matrix = {
            label: {v.value: float(loss_matrix[label][v.value]) for v in Verdict}
            for label in ("safe", "unsafe")
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"loss_matrix malformed: {exc}") from exc
    if not loss_matrix["unsafe"]["Allow"] > loss_matrix["safe"]["Block"]:
        raise LossMatrixError(
            "loss_matrix must penalize (unsafe, Allow) strictly more than (safe, Block)")

    rules_doc = document.get("rules", [dict(r) for r in DEFAULT_RULES])
    if not isinstance(rules_doc, list):
        raise SchemaError("rules must be a list")
    rules = tuple(_parse_rule(r) for r in rules_doc)

    flag_weights = dict(DEFAULT_FLAG_WEIGHTS)
    flag_weights.update(document.get("flag_weights", {}))
    for name, weight in flag_weights.items():
        if not 0.0 <= float(weight) <= 1.0:
            raise RangeError(f"flag weight {name}={weight} outside [0, 1]")

    profile = document.get("profile")
    if profile is not None:
        if profile not in PROFILES:
            raise SchemaError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        preset = PROFILES[profile]
        labels = {**preset["labels"], **document.get("sensitivity_labels", {})}
        missing_default = document.get("missing_label_default",
                                       preset["missing_label_default"])
    else:
        labels = dict(document.get("sensitivity_labels", {}))
        missing_default = document.get("missing_label_default", "public")
    for fld, label in labels.items():
        if label not in ("public", "coarsen", "forbid"):
            raise SchemaError(f"sensitivity label {fld}={label!r} not public/coarsen/forbid")
    if missing_default not in ("public", "sensitive", None):
        raise SchemaError("missing_label_default must be public, sensitive, or null")

    buckets_doc = document.get("value_buckets", [])
    try:
        value_buckets = tuple((str(label), int(upper) if upper is not None else None)
                              for label, upper in buckets_doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"value_buckets malformed: {exc}") from exc

    return Policy(
        tau_conf=tau_conf,
        tau_risk=tau_risk,
        epsilon=epsilon,
        latency_budget_ms=budget,
        beta=float(beta),
        release_threshold=release,
        block_threshold=block,
        loss_matrix=loss_matrix,
        rules=rules,
        flag_weights={k: float(v) for k, v in flag_weights.items()},
        sensitivity_labels=dict(labels),
        missing_label_default=missing_default,
        cloud_enabled=bool(document.get("cloud_enabled", True)),
        allowlist=frozenset(a.lower() for a in document.get("allowlist", [])),
        known_protocols=frozenset(a.lower() for a in document.get("known_protocols", [])),
        value_buckets=value_buckets,
        plan_costs={**DEFAULT_PLAN_COSTS, **document.get("plan_costs", {})},
        sanitizer_bypass=tuple(document.get("sanitizer_bypass", [])),
    )


def compute_edge_risk(features: dict[str, int], policy: Policy) -> float:
    """rho = min(1, sum of weight * indicator) over the flag features."""
    total = 0.0
    for name, indicator in features.items():
        if name not in policy.flag_weights:
            raise UnknownFlagError(f"no weight configured for flag {name!r}")
        total += policy.flag_weights[name] * indicator
    return min(1.0, total)


def evaluate_gate(intent: Intent, policy: Policy, *, stepup_enabled: bool = True) -> Decision:
    """Deterministic signing-time gate; pure, no network or clock access.

    ``stepup_enabled=False`` is the fast-path ablation: ordered rules still
    fire, but the threshold escalation step is skipped entirely.
    """
    gamma = intent.confidence
    rho = compute_edge_risk(risk_features(intent), policy)
    for rule in policy.rules:
        if rule.matches(intent, policy.allowlist):
            if rule.verdict is Verdict.ALLOW:
                return Decision(Verdict.ALLOW, REASON_CLEAN, None, gamma, rho)
            return Decision(rule.verdict, REASON_RULE, rule.id, gamma, rho)
    if stepup_enabled:
        if gamma < policy.tau_conf:
            return Decision(Verdict.STEPUP, REASON_CONFIDENCE, None, gamma, rho)
        if rho > policy.tau_risk:
            return Decision(Verdict.STEPUP, REASON_RISK, None, gamma, rho)
    return Decision(Verdict.ALLOW, REASON_CLEAN, None, gamma, rho)
