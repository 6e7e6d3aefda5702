import hashlib
import json

import pytest

from dmind3.intent import ActionKind, Intent, encode_args, parse_arg_types
from dmind3.keccak import selector
from dmind3.orchestrator import (BLOCK_CONSISTENCY, FINAL_ALLOW, FINAL_BLOCK,
                                 FINAL_STEPUP_PENDING, PROCEED, REVERIFY,
                                 RunConfig, process_transaction,
                                 resolve_divergence)
from dmind3.payload import MAX_UINT256, canonical_json
from dmind3.policy import Verdict, load_policy
from dmind3.router import PlanPath
from dmind3.tiers import LocalVerdict, TierConfig, TierMode
from tests.conftest import ATTACKER, PEER, make_payload


def _call(signature, values):
    return selector(signature) + encode_args(parse_arg_types(signature), values)


def _run(payload, policy, network, contexts, seed=0, config=None):
    private_ctx, public_ctx = contexts
    return process_transaction(payload, private_ctx, public_ctx, policy, network,
                               seed=seed, run_config=config)


def _clean_transfer():
    return make_payload(to=PEER, value=10 ** 18, ui_claim="Send 1 ETH")


def _ui_mismatch():
    return make_payload(data=_call("approve(address,uint256)", [ATTACKER, 500 * 10 ** 18]),
                        ui_claim="Swap 100 USDC for ETH")


def _obfuscated():
    return make_payload(to=ATTACKER, data=bytes.fromhex("deadbeef") + b"\x37" * 64,
                        value=10 ** 18)


def _phish():
    return make_payload(data=_call("approve(address,uint256)", [ATTACKER, MAX_UINT256]))


def test_clean_transfer_edge_only(default_policy, reference_network, contexts):
    outcome = _run(_clean_transfer(), default_policy, reference_network, contexts)
    assert outcome.verdict == FINAL_ALLOW
    assert outcome.plan_used.path is PlanPath.EDGE_ONLY
    assert [e.operation for e in outcome.provenance] == ["parse", "gate"]
    assert outcome.total_latency_ms == 28.0


def test_low_confidence_escalates_to_local(default_policy, reference_network, contexts):
    outcome = _run(_ui_mismatch(), default_policy, reference_network, contexts)
    assert outcome.edge_decision.verdict is Verdict.STEPUP
    assert outcome.plan_used.path is PlanPath.EDGE_LOCAL
    assert [e.operation for e in outcome.provenance] == [
        "parse", "gate", "route", "local_verify"]
    assert outcome.local_verdict is not None
    assert outcome.verdict == FINAL_BLOCK  # reflect catches the mismatch
    assert outcome.local_verdict.mode_used is TierMode.REFLECT


def test_obfuscated_routes_cloud_then_local(default_policy, reference_network, contexts):
    outcome = _run(_obfuscated(), default_policy, reference_network, contexts)
    assert outcome.plan_used.path is PlanPath.EDGE_CLOUD_LOCAL
    assert [e.operation for e in outcome.provenance] == [
        "parse", "gate", "route", "sanitize", "cloud_synthesize", "local_verify"]
    assert outcome.features is not None
    # Foresight risk above threshold forces the reflect pass.
    assert outcome.local_verdict.mode_used is TierMode.REFLECT
    assert outcome.verdict == FINAL_BLOCK
    assert outcome.total_latency_ms == 360.0


def test_rule_block_finishes_edge_only(default_policy, reference_network, contexts):
    outcome = _run(_phish(), default_policy, reference_network, contexts)
    assert outcome.verdict == FINAL_BLOCK
    assert outcome.final_reason == "edge_rule"
    assert outcome.plan_used.path is PlanPath.EDGE_ONLY
    assert outcome.local_verdict is None


def test_all_tiers_down_never_allows(default_policy, reference_network, contexts):
    config = RunConfig(tier_config=TierConfig(fault="unavailable"))
    outcome = _run(_ui_mismatch(), default_policy, reference_network, contexts, config=config)
    assert outcome.edge_decision.verdict is Verdict.STEPUP
    assert outcome.verdict in (FINAL_BLOCK, FINAL_STEPUP_PENDING)
    assert outcome.verdict == FINAL_STEPUP_PENDING
    assert outcome.final_reason == "tier_fault"


def test_cloud_fault_degrades_but_local_still_verifies(default_policy, reference_network,
                                                       contexts):
    network_doc = reference_network.to_dict()
    network_doc["links"]["edge_cloud"]["drop_prob"] = 1.0
    from dmind3.router import NetworkState
    flaky = NetworkState.from_dict(network_doc)
    outcome = _run(_obfuscated(), default_policy, flaky, contexts)
    assert outcome.features is None
    assert outcome.local_verdict is not None  # pipeline continued
    assert outcome.verdict in (FINAL_BLOCK, FINAL_STEPUP_PENDING)


def test_stepup_disabled_fast_path(default_policy, reference_network, contexts):
    config = RunConfig(stepup_enabled=False)
    outcome = _run(_ui_mismatch(), default_policy, reference_network, contexts, config=config)
    assert outcome.verdict == FINAL_ALLOW
    assert outcome.edge_decision.verdict is Verdict.ALLOW  # gate rewrites, invariant holds
    assert outcome.plan_used.path is PlanPath.EDGE_ONLY

    blocked = _run(_phish(), default_policy, reference_network, contexts, config=config)
    assert blocked.verdict == FINAL_BLOCK  # rules still terminal on the fast path


def test_release_threshold_boundaries(reference_network, contexts):
    # delegate-hijack fires only chk_allowlist_miss (0.2) in standard mode.
    payload = make_payload(data=_call("delegate(address)", [ATTACKER]))
    permissive = load_policy({"release_threshold": 0.3})
    config = RunConfig(local_reflect="never")
    outcome = _run(payload, permissive, reference_network, contexts, config=config)
    assert outcome.local_verdict.risk_score == pytest.approx(0.2)
    assert outcome.verdict == FINAL_ALLOW

    strict_release = load_policy({"release_threshold": 0.2})
    outcome2 = _run(payload, strict_release, reference_network, contexts, config=config)
    assert outcome2.verdict == FINAL_STEPUP_PENDING  # r == threshold is not below it


def test_edge_anchored_enforcement(default_policy, reference_network, contexts):
    # No tier output converts a rule block into anything else.
    for reflect in ("auto", "never", "always"):
        outcome = _run(_phish(), default_policy, reference_network, contexts,
                       config=RunConfig(local_reflect=reflect))
        assert outcome.verdict == FINAL_BLOCK
        assert outcome.final_reason == "edge_rule"


def test_provenance_tier_invocations_match_hops(default_policy, reference_network, contexts):
    for payload in (_clean_transfer(), _ui_mismatch(), _obfuscated()):
        outcome = _run(payload, default_policy, reference_network, contexts)
        tier_events = [e for e in outcome.provenance if e.tier in ("local", "cloud")]
        assert len(tier_events) == len(outcome.plan_used.hops) - 1


def test_provenance_digests_reverify(default_policy, reference_network, contexts):
    outcome = _run(_clean_transfer(), default_policy, reference_network, contexts)
    parse_event = outcome.provenance[0]
    recomputed = hashlib.sha256(
        canonical_json(_clean_transfer().to_dict()).encode()).hexdigest()
    assert parse_event.input_digest == recomputed

    gate_event = outcome.provenance[1]
    gate_output = hashlib.sha256(
        canonical_json(outcome.edge_decision.to_dict()).encode()).hexdigest()
    assert gate_event.output_digest == gate_output


def test_latency_accounting(default_policy, reference_network, contexts):
    for payload in (_clean_transfer(), _ui_mismatch(), _obfuscated()):
        outcome = _run(payload, default_policy, reference_network, contexts, seed=11)
        total = sum(e.duration_ms for e in outcome.provenance)
        assert abs(outcome.total_latency_ms - total) <= 1.0


def test_outcome_serialization_repeatable(default_policy, reference_network, contexts):
    blobs = {_run(_obfuscated(), default_policy, reference_network, contexts,
                  seed=5).to_canonical_json() for _ in range(100)}
    assert len(blobs) == 1
    parsed = json.loads(next(iter(blobs)))
    assert parsed["verdict"] == FINAL_BLOCK


# ---------------------------------------------------------------------------
# resolve_divergence

def _verdict_with(intent: Intent) -> LocalVerdict:
    return LocalVerdict(refined_intent=intent, risk_score=0.1, explanation="",
                        mode_used=TierMode.NONE, checks_run=())


def test_resolve_divergence_proceed(default_policy):
    intent = Intent(action=ActionKind.TRANSFER, target=PEER, amount=10,
                    unlimited_approval=False, risk_flags=frozenset(), confidence=1.0)
    action, delta = resolve_divergence(intent, _verdict_with(intent), default_policy)
    assert action == PROCEED and delta == 0.0


def test_resolve_divergence_reverify_then_block(default_policy):
    edge = Intent(action=ActionKind.TRANSFER, target=PEER, amount=10,
                  unlimited_approval=False, risk_flags=frozenset(), confidence=1.0)
    local = Intent(action=ActionKind.SWAP, target=PEER, amount=10,
                   unlimited_approval=False, risk_flags=frozenset(), confidence=1.0)
    action, delta = resolve_divergence(edge, _verdict_with(local), default_policy)
    assert action == REVERIFY and delta == 0.5
    action, _ = resolve_divergence(edge, _verdict_with(local), default_policy,
                                   already_reverified=True)
    assert action == BLOCK_CONSISTENCY


def test_divergence_injection_resolves_after_reflect(default_policy, reference_network,
                                                     contexts):
    config = RunConfig(local_reflect="never",
                       tier_config=TierConfig(intent_perturbation="action_standard_only"))
    outcome = _run(_ui_mismatch(), default_policy, reference_network, contexts, config=config)
    operations = [e.operation for e in outcome.provenance]
    assert operations.count("local_verify") == 2  # one forced re-verification
    assert outcome.divergence == 0.0  # reflect re-run agreed with the edge
    assert outcome.verdict == FINAL_BLOCK  # and then caught the mismatch


def test_divergence_persistent_blocks(default_policy, reference_network, contexts):
    config = RunConfig(tier_config=TierConfig(intent_perturbation="action"))
    outcome = _run(_ui_mismatch(), default_policy, reference_network, contexts, config=config)
    assert outcome.verdict == FINAL_BLOCK
    assert outcome.final_reason == "consistency_failure"
    assert outcome.divergence is not None and outcome.divergence > default_policy.epsilon


def test_fallback_keeps_conservative_verdict(reference_network, contexts):
    # Budget below every escalation path: fallback plan, outcome stays pending.
    policy = load_policy({"latency_budget_ms": 10})
    outcome = _run(_ui_mismatch(), policy, reference_network, contexts)
    assert outcome.plan_used.fallback is True
    assert outcome.verdict == FINAL_STEPUP_PENDING


def test_explanation_independence(default_policy):
    # The terminal mapping and the divergence check read the risk score and
    # refined intent; swapping the explanation text changes nothing.
    from dmind3.orchestrator import _terminal
    intent = Intent(action=ActionKind.TRANSFER, target=PEER, amount=10,
                    unlimited_approval=False, risk_flags=frozenset(), confidence=1.0)
    for risk in (0.1, 0.5, 0.9):
        one = LocalVerdict(refined_intent=intent, risk_score=risk,
                           explanation="checks fired: a, b",
                           mode_used=TierMode.NONE, checks_run=())
        other = LocalVerdict(refined_intent=intent, risk_score=risk,
                             explanation="a different story entirely",
                             mode_used=TierMode.NONE, checks_run=())
        assert _terminal(one, default_policy) == _terminal(other, default_policy)
        assert resolve_divergence(intent, one, default_policy) == resolve_divergence(
            intent, other, default_policy)
