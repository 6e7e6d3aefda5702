"""Local verifier and cloud synthesizer stubs plus the divergence metric.

Both tiers are deterministic rule batteries behind the interfaces a
networked implementation would also satisfy. The privacy boundary is structural:
cloud_synthesize accepts only (SanitizedPayload, PublicContext, TierMode,
TierConfig) and nothing in this module converts a PrivateContext into a
SanitizedPayload.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .intent import ActionKind, Intent, RiskFlag, classify_intent, decode_calldata, SelectorRegistry
from .payload import TransactionPayload
from .sanitizer import SanitizedPayload


class TierMode(str, Enum):
    NONE = "None"
    REFLECT = "Reflect"       # local tier only
    FORESIGHT = "Foresight"   # cloud tier only


class TierUnavailableError(RuntimeError):
    pass


class DeadlineExceededError(RuntimeError):
    pass


class InvalidModeError(ValueError):
    pass


DEFAULT_RISK_TABLE = {"allowlisted": 0.05, "known-protocol": 0.2, "unknown": 0.9}

# Check batteries. Standard always runs; Reflect adds the negative-hypothesis
# battery and the critique pass, so its checks_run strictly extends Standard's.
STANDARD_CHECKS = ("chk_allowlist_miss", "chk_exposure_exceeded", "chk_unknown_with_value")
REFLECT_CHECKS = ("neg_attacker_target", "neg_drain_approval",
                  "neg_ui_contradiction", "crit_reparse_divergence")

CHECK_CONTRIBUTIONS = {
    "chk_allowlist_miss": 0.2,
    "chk_exposure_exceeded": 0.3,
    "chk_unknown_with_value": 0.3,
    "neg_attacker_target": 0.5,
    "neg_drain_approval": 0.6,
    "neg_ui_contradiction": 0.6,
    "crit_reparse_divergence": 0.4,
}

FEATURE_NAMES = (
    "destination_risk", "value_bucket_level", "selector_known", "claim_present",
    "chain_mainnet", "ecosystem_risk_max", "history_block_rate", "history_stepup_rate",
)
_STANDARD_FEATURES = 5  # foresight fills the remaining risk/history components


@dataclass(frozen=True)
class TierConfig:
    seed: int = 0
    rule_battery: tuple[str, ...] = STANDARD_CHECKS + REFLECT_CHECKS
    risk_table: dict = field(default_factory=lambda: dict(DEFAULT_RISK_TABLE))
    deadline_default_ms: int = 1000
    fault: str | None = None                # "unavailable" | "deadline" (injected)
    intent_perturbation: str | None = None  # test-only divergence injection

    @classmethod
    def from_dict(cls, doc: dict) -> "TierConfig":
        return cls(
            seed=int(doc.get("seed", 0)),
            rule_battery=tuple(doc.get("rule_battery", STANDARD_CHECKS + REFLECT_CHECKS)),
            risk_table={**DEFAULT_RISK_TABLE, **doc.get("risk_table", {})},
            deadline_default_ms=int(doc.get("deadline_default_ms", 1000)),
            fault=doc.get("fault"),
            intent_perturbation=doc.get("intent_perturbation"),
        )


@dataclass(frozen=True)
class PrivateContext:
    allowlist: frozenset[str] = frozenset()
    exposure_limits: dict = field(default_factory=dict)   # asset -> max amount
    local_history: tuple = ()
    preferences: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PublicContext:
    ecosystem_risk_table: dict = field(default_factory=lambda: dict(DEFAULT_RISK_TABLE))
    aggregate_history: dict = field(default_factory=dict)  # coarse counters only
    feed_timestamp: float = 0.0


@dataclass(frozen=True)
class LocalVerdict:
    refined_intent: Intent
    risk_score: float
    explanation: str
    mode_used: TierMode
    checks_run: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "refined_intent": self.refined_intent.to_dict(),
            "risk_score": self.risk_score,
            "explanation": self.explanation,
            "mode_used": self.mode_used.value,
            "checks_run": list(self.checks_run),
        }


@dataclass(frozen=True)
class SynthesisFeatures:
    features: tuple[float, ...]          # fixed length, FEATURE_NAMES order
    mode_used: TierMode
    inputs_manifest: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "features": dict(zip(FEATURE_NAMES, self.features)),
            "mode_used": self.mode_used.value,
            "inputs_manifest": list(self.inputs_manifest),
        }

    def max_feature(self) -> float:
        return max(self.features)


def _check_fault(config: TierConfig, deadline_ms: float | None) -> None:
    if config.fault == "unavailable":
        raise TierUnavailableError("tier unavailable (injected fault)")
    if config.fault == "deadline":
        raise DeadlineExceededError("tier deadline exceeded (injected fault)")
    if deadline_ms is not None and deadline_ms <= 0:
        raise DeadlineExceededError("caller budget exhausted before tier call")


def local_verify(payload: TransactionPayload, ctx: PrivateContext, mode: TierMode,
                 config: TierConfig, registry: SelectorRegistry | None = None,
                 deadline_ms: float | None = None) -> LocalVerdict:
    """Deeper verification on user hardware.

    Standard mode re-derives the intent and runs allowlist/exposure checks;
    Reflect mode additionally runs the negative-hypothesis battery and the
    critique pass (re-derivation + comparison). Deterministic given
    (payload, ctx, mode, config).
    """
    if mode not in (TierMode.NONE, TierMode.REFLECT):
        raise InvalidModeError(f"local tier cannot run in mode {mode.value}")
    _check_fault(config, deadline_ms)
    registry = registry or _default_registry()

    decoded = decode_calldata(payload, registry)
    refined = classify_intent(decoded, payload, registry)
    refined = _perturb(refined, config, mode)

    enabled = set(config.rule_battery)
    checks_run: list[str] = [c for c in STANDARD_CHECKS if c in enabled]
    fired: list[str] = []

    def fire(check: str, condition: bool) -> None:
        if check in enabled and condition:
            fired.append(check)

    target_known = refined.target is not None and refined.target in ctx.allowlist
    fire("chk_allowlist_miss", refined.target is not None and not target_known)
    limit = ctx.exposure_limits.get("default")
    fire("chk_exposure_exceeded",
         limit is not None and refined.amount is not None and refined.amount > limit)
    fire("chk_unknown_with_value",
         refined.action is ActionKind.UNKNOWN and payload.value > 0)

    if mode is TierMode.REFLECT:
        checks_run += [c for c in REFLECT_CHECKS if c in enabled]
        fire("neg_attacker_target",
             not target_known and refined.action in (ActionKind.DELEGATE, ActionKind.UNKNOWN))
        fire("neg_drain_approval",
             refined.action in (ActionKind.APPROVE, ActionKind.PERMIT)
             and RiskFlag.UNLIMITED_APPROVAL in refined.risk_flags)
        claimed_mismatch = RiskFlag.UI_MISMATCH_CANDIDATE in refined.risk_flags
        fire("neg_ui_contradiction", claimed_mismatch)
        # Critique pass: re-derive from scratch and compare with what the
        # (possibly perturbed) working intent says.
        fresh = classify_intent(decode_calldata(payload, registry), payload, registry)
        fire("crit_reparse_divergence", intent_divergence(fresh, refined) > 0.0)

    risk = min(1.0, sum(CHECK_CONTRIBUTIONS[c] for c in fired))
    explanation = ("checks fired: " + ", ".join(fired)) if fired else "no findings"
    return LocalVerdict(
        refined_intent=refined,
        risk_score=risk,
        explanation=explanation,
        mode_used=mode,
        checks_run=tuple(checks_run),
    )


def cloud_synthesize(sanitized: SanitizedPayload, ctx: PublicContext, mode: TierMode,
                     config: TierConfig, deadline_ms: float | None = None) -> SynthesisFeatures:
    """Advisory feature synthesis from the sanitized projection only.

    Never produces a verdict. Foresight mode folds the ecosystem risk table
    and aggregate history into the tail components of the fixed-length
    feature vector; Standard mode leaves them at zero.
    """
    if mode not in (TierMode.NONE, TierMode.FORESIGHT):
        raise InvalidModeError(f"cloud tier cannot run in mode {mode.value}")
    _check_fault(config, deadline_ms)

    data = sanitized.data
    manifest: list[str] = []
    # All components are risk-oriented values in [0, 1]; the indicator-style
    # ones stay well below the 0.7 depth-coupling threshold by construction.
    features = [0.0] * len(FEATURE_NAMES)

    category = data.get("destination_category")
    if category is None:
        features[0] = 0.5  # degraded: category unavailable after projection
        manifest.append("destination_category:missing")
    else:
        table = {**config.risk_table, **ctx.ecosystem_risk_table}
        features[0] = float(table.get(category, config.risk_table.get("unknown", 0.9)))
        manifest.append(f"destination_category:{category}")

    bucket = data.get("value_bucket")
    if bucket is not None:
        features[1] = 0.25 if bucket.startswith("<") else (0.75 if bucket.startswith(">") else 0.5)
        manifest.append(f"value_bucket:{bucket}")
    sel = data.get("calldata_selector")
    if sel is not None:
        features[2] = 0.3 if sel == "none" else 0.1
        manifest.append("calldata_selector")
    features[3] = 0.3 if data.get("ui_claim") else 0.0
    if data.get("ui_claim"):
        manifest.append("ui_claim:present")
    features[4] = 0.1 if data.get("chain_id") == 1 else 0.2
    manifest.append(f"chain_id:{data.get('chain_id')}")

    if mode is TierMode.FORESIGHT:
        risk_values = [float(v) for v in ctx.ecosystem_risk_table.values()]
        features[5] = max(risk_values) if risk_values else 0.0
        manifest.append("ecosystem_risk_table")
        total = sum(ctx.aggregate_history.values()) or 1
        features[6] = ctx.aggregate_history.get("blocked", 0) / total
        features[7] = ctx.aggregate_history.get("stepped_up", 0) / total
        manifest.append("aggregate_history")

    return SynthesisFeatures(
        features=tuple(features),
        mode_used=mode,
        inputs_manifest=tuple(manifest),
    )


DIVERGENCE_WEIGHTS = {"action": 0.5, "target": 0.2, "amount_bucket": 0.15, "approval": 0.15}


def _amount_bucket(amount: int | None) -> int:
    if amount is None:
        return -1
    return len(str(amount))  # order of magnitude


def intent_divergence(edge: Intent, local: Intent,
                      weights: dict[str, float] | None = None) -> float:
    """Weighted field mismatch in [0, 1]; symmetric, zero on identity."""
    w = weights or DIVERGENCE_WEIGHTS
    if abs(sum(w.values()) - 1.0) > 1e-9:
        raise ValueError("divergence weights must sum to 1")
    delta = 0.0
    if edge.action is not local.action:
        delta += w["action"]
    if edge.target != local.target:
        delta += w["target"]
    if _amount_bucket(edge.amount) != _amount_bucket(local.amount):
        delta += w["amount_bucket"]
    approval_view_edge = (edge.unlimited_approval,
                          RiskFlag.UNLIMITED_APPROVAL in edge.risk_flags,
                          RiskFlag.PERMISSION_AMPLIFICATION in edge.risk_flags)
    approval_view_local = (local.unlimited_approval,
                           RiskFlag.UNLIMITED_APPROVAL in local.risk_flags,
                           RiskFlag.PERMISSION_AMPLIFICATION in local.risk_flags)
    if approval_view_edge != approval_view_local:
        delta += w["approval"]
    return min(1.0, delta)


def _perturb(intent: Intent, config: TierConfig, mode: TierMode) -> Intent:
    """Test-only divergence injection; production configs leave this unset."""
    kind = config.intent_perturbation
    if kind is None:
        return intent
    if kind == "action_standard_only" and mode is not TierMode.NONE:
        return intent  # the Reflect re-run re-derives cleanly
    if kind in ("action", "action_standard_only"):
        flipped = ActionKind.SWAP if intent.action is not ActionKind.SWAP else ActionKind.TRANSFER
        return replace(intent, action=flipped)
    if kind == "target":
        return replace(intent, target="0x" + "ee" * 20)
    return intent


_REGISTRY_CACHE: SelectorRegistry | None = None


def _default_registry() -> SelectorRegistry:
    global _REGISTRY_CACHE
    if _REGISTRY_CACHE is None:
        _REGISTRY_CACHE = SelectorRegistry.default()
    return _REGISTRY_CACHE
