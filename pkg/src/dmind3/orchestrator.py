"""End-to-end decision pipeline with provenance and graceful degradation.

The edge decision anchors everything: rule blocks are terminal, Allow is
terminal, and only StepUp routes onward. Escalated requests can end Allow
only through a successful local verification whose risk score clears the
release threshold while edge/local intents agree. A failed local hop always
folds into a conservative StepUp-pending outcome; a failed cloud hop only
degrades the advisory features. All timing is simulated from the seeded
NetworkState, so outcomes serialize byte-identically for a fixed seed.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .intent import Intent, SelectorRegistry, classify_intent, decode_calldata
from .payload import TransactionPayload, canonical_json
from .policy import (Decision, Policy, REASON_RISK, Verdict, evaluate_gate)
from .router import (ComputePlan, NetworkState, PlanPath,
                     enumerate_plans, select_plan)
from .sanitizer import project_public
from .tiers import (DeadlineExceededError, LocalVerdict, PrivateContext,
                    PublicContext, SynthesisFeatures, TierConfig, TierMode,
                    TierUnavailableError, cloud_synthesize, intent_divergence,
                    local_verify)

FINAL_ALLOW = "Allow"
FINAL_BLOCK = "Block"
FINAL_STEPUP_PENDING = "StepUp-pending"

PROCEED = "proceed"
REVERIFY = "reverify"
BLOCK_CONSISTENCY = "block"


@dataclass(frozen=True)
class RunConfig:
    stepup_enabled: bool = True
    local_reflect: str = "auto"  # auto | never | always
    foresight_reflect_threshold: float = 0.7
    tier_config: TierConfig = field(default_factory=TierConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return cls(
            stepup_enabled=bool(doc.get("stepup_enabled", True)),
            local_reflect=doc.get("local_reflect", "auto"),
            foresight_reflect_threshold=float(doc.get("foresight_reflect_threshold", 0.7)),
            tier_config=TierConfig.from_dict(doc.get("tier_config", {})),
        )

    def to_dict(self) -> dict:
        return {
            "stepup_enabled": self.stepup_enabled,
            "local_reflect": self.local_reflect,
            "foresight_reflect_threshold": self.foresight_reflect_threshold,
        }


@dataclass(frozen=True)
class ProvenanceEvent:
    ts_ms: float
    tier: str
    operation: str
    input_digest: str
    output_digest: str
    mode: str
    duration_ms: float

    def to_dict(self) -> dict:
        return {
            "ts_ms": self.ts_ms,
            "tier": self.tier,
            "operation": self.operation,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "mode": self.mode,
            "duration_ms": self.duration_ms,
        }


@dataclass(frozen=True)
class FinalOutcome:
    verdict: str
    final_reason: str
    plan_used: ComputePlan
    edge_decision: Decision
    edge_intent: Intent
    local_verdict: LocalVerdict | None
    features: SynthesisFeatures | None
    divergence: float | None
    provenance: tuple[ProvenanceEvent, ...]
    total_latency_ms: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "final_reason": self.final_reason,
            "plan_used": self.plan_used.to_dict(),
            "edge_decision": self.edge_decision.to_dict(),
            "edge_intent": self.edge_intent.to_dict(),
            "local_verdict": self.local_verdict.to_dict() if self.local_verdict else None,
            "features": self.features.to_dict() if self.features else None,
            "divergence": self.divergence,
            "provenance": [e.to_dict() for e in self.provenance],
            "total_latency_ms": self.total_latency_ms,
        }

    def to_canonical_json(self) -> str:
        return canonical_json(self.to_dict())


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def resolve_divergence(edge: Intent, local: LocalVerdict, policy: Policy,
                       already_reverified: bool = False) -> tuple[str, float]:
    """(action, delta): proceed below epsilon, one forced re-verification
    above it, and a consistency block when divergence persists."""
    delta = intent_divergence(edge, local.refined_intent)
    if delta <= policy.epsilon:
        return PROCEED, delta
    if not already_reverified:
        return REVERIFY, delta
    return BLOCK_CONSISTENCY, delta


class _Trail:
    def __init__(self) -> None:
        self.events: list[ProvenanceEvent] = []
        self.clock_ms = 0.0

    def add(self, tier: str, operation: str, input_obj, output_obj,
            mode: str = "None", duration_ms: float = 0.0) -> None:
        self.events.append(ProvenanceEvent(
            ts_ms=self.clock_ms,
            tier=tier,
            operation=operation,
            input_digest=digest(input_obj),
            output_digest=digest(output_obj),
            mode=mode,
            duration_ms=duration_ms,
        ))
        self.clock_ms += duration_ms


def process_transaction(payload: TransactionPayload, private_ctx: PrivateContext,
                        public_ctx: PublicContext, policy: Policy,
                        network: NetworkState, seed: int,
                        run_config: RunConfig | None = None,
                        registry: SelectorRegistry | None = None) -> FinalOutcome:
    """Run one payload through parse -> gate -> route -> tiers -> resolution."""
    config = run_config or RunConfig()
    registry = registry or SelectorRegistry.default()
    rng = random.Random(seed)
    trail = _Trail()
    policy_sha = digest(policy.to_dict())

    decoded = decode_calldata(payload, registry)
    intent = classify_intent(decoded, payload, registry)
    trail.add("edge", "parse", payload.to_dict(),
              {"decoded": decoded.to_dict(), "intent": intent.to_dict()})

    decision = evaluate_gate(intent, policy, stepup_enabled=config.stepup_enabled)
    edge_latency = network.sample_latency("edge", rng) if "edge" in network.links else 0.0
    trail.add("edge", "gate", {"intent": intent.to_dict(), "policy_sha": policy_sha},
              decision.to_dict(), duration_ms=edge_latency)

    def finish(verdict: str, reason: str, plan: ComputePlan,
               local: LocalVerdict | None = None,
               features: SynthesisFeatures | None = None,
               delta: float | None = None) -> FinalOutcome:
        return FinalOutcome(
            verdict=verdict,
            final_reason=reason,
            plan_used=plan,
            edge_decision=decision,
            edge_intent=intent,
            local_verdict=local,
            features=features,
            divergence=delta,
            provenance=tuple(trail.events),
            total_latency_ms=trail.clock_ms,
        )

    if decision.verdict is not Verdict.STEPUP:
        plan = enumerate_plans(decision, policy, network, payload)[0]
        if decision.verdict is Verdict.BLOCK:
            return finish(FINAL_BLOCK, "edge_rule", plan)
        return finish(FINAL_ALLOW, "edge_gate", plan)

    candidates = enumerate_plans(decision, policy, network, payload)
    plan = select_plan(candidates, policy)
    trail.add("edge", "route", {"decision": decision.to_dict()},
              {"plan": plan.to_dict(), "candidates": [c.path.value for c in candidates]})

    if plan.fallback or plan.path is PlanPath.EDGE_ONLY:
        reason = "no_feasible_escalation" if plan.fallback else "edge_only_pending"
        return finish(FINAL_STEPUP_PENDING, reason, plan)

    budget = float(policy.latency_budget_ms)
    features: SynthesisFeatures | None = None

    if plan.path in (PlanPath.EDGE_CLOUD, PlanPath.EDGE_CLOUD_LOCAL):
        sanitized = project_public(payload, policy)
        trail.add("edge", "sanitize", payload.to_dict(), sanitized.to_dict())
        link = "edge_cloud"
        dropped = network.sample_drop(link, rng)
        hop_latency = network.sample_latency(link, rng)
        remaining = budget - trail.clock_ms
        fault: str | None = None
        if dropped:
            fault = "unavailable"
        else:
            try:
                features = cloud_synthesize(sanitized, public_ctx, TierMode.FORESIGHT,
                                            config.tier_config, deadline_ms=remaining)
                if hop_latency > remaining:
                    features = None
                    fault = "deadline"
            except TierUnavailableError:
                fault = "unavailable"
            except DeadlineExceededError:
                fault = "deadline"
        # Advisory tier: faults degrade features but never abort the pipeline.
        output = features.to_dict() if features else {"fault": fault}
        trail.add("cloud", "cloud_synthesize",
                  {"sanitized": sanitized.to_dict(), "mode": TierMode.FORESIGHT.value},
                  output, mode=TierMode.FORESIGHT.value, duration_ms=hop_latency)

    if plan.path in (PlanPath.EDGE_LOCAL, PlanPath.EDGE_CLOUD_LOCAL):
        link = "edge_local" if plan.path is PlanPath.EDGE_LOCAL else "cloud_local"
        local, delta, outcome = _run_local(
            payload, private_ctx, policy, network, rng, trail, config, registry,
            intent, decision, features, budget, link)
        if outcome is not None:
            return finish(outcome[0], outcome[1], plan, local, features, delta)
        return finish(*_terminal(local, policy), plan, local, features, delta)

    # Cloud-only plans are advisory: they can inform but never release.
    return finish(FINAL_STEPUP_PENDING, "advisory_only", plan, None, features)


def _local_mode(config: RunConfig, decision: Decision,
                features: SynthesisFeatures | None) -> TierMode:
    if config.local_reflect == "always":
        return TierMode.REFLECT
    if config.local_reflect == "never":
        return TierMode.NONE
    if decision.reason == REASON_RISK:
        return TierMode.REFLECT
    if features is not None and features.max_feature() > config.foresight_reflect_threshold:
        return TierMode.REFLECT
    return TierMode.NONE


def _run_local(payload, private_ctx, policy, network, rng, trail, config, registry,
               intent, decision, features, budget, link):
    """Local hop with the one-time divergence re-verification.

    Returns (local_verdict, delta, forced_outcome); forced_outcome is set for
    faults and consistency blocks, otherwise the caller applies thresholds.
    """
    mode = _local_mode(config, decision, features)
    local: LocalVerdict | None = None
    delta: float | None = None
    for attempt in (0, 1):
        dropped = network.sample_drop(link, rng)
        hop_latency = network.sample_latency(link, rng)
        remaining = budget - trail.clock_ms
        fault: str | None = None
        verdict_out = None
        try:
            if dropped:
                raise TierUnavailableError("link drop")
            verdict_out = local_verify(payload, private_ctx, mode, config.tier_config,
                                       registry=registry, deadline_ms=remaining)
            if hop_latency > remaining:
                verdict_out = None
                fault = "deadline"
        except TierUnavailableError:
            fault = "unavailable"
        except DeadlineExceededError:
            fault = "deadline"
        output = verdict_out.to_dict() if verdict_out else {"fault": fault}
        trail.add("local", "local_verify",
                  {"payload_sha": digest(payload.to_dict()), "mode": mode.value},
                  output, mode=mode.value, duration_ms=hop_latency)
        if verdict_out is None:
            # Verification hop failed: conservative completion, never Allow.
            return local, delta, (FINAL_STEPUP_PENDING, "tier_fault")
        local = verdict_out
        action, delta = resolve_divergence(intent, local, policy,
                                           already_reverified=bool(attempt))
        if action == PROCEED:
            return local, delta, None
        if action == BLOCK_CONSISTENCY:
            return local, delta, (FINAL_BLOCK, "consistency_failure")
        mode = TierMode.REFLECT  # forced re-verification, once
    return local, delta, None


def _terminal(local: LocalVerdict, policy: Policy) -> tuple[str, str]:
    if local.risk_score < policy.release_threshold:
        return FINAL_ALLOW, "released"
    if local.risk_score >= policy.block_threshold:
        return FINAL_BLOCK, "local_block"
    return FINAL_STEPUP_PENDING, "local_pending"
