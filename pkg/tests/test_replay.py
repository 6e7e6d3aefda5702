import math
import random

import pytest

from dmind3.corpus import CorpusSpec, generate_corpus
from dmind3.replay import (AblationConfig, EmptySamplesError, MetricsReport,
                           ReplayConfig, ablation_default_configs,
                           bench_latency, percentiles, replay, replay_outcomes,
                           run_ablation, summarize)
from dmind3.orchestrator import RunConfig
from dmind3.router import NetworkState


# ---------------------------------------------------------------------------
# percentiles

def percentile_oracle(samples, q):
    ordered = sorted(samples)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[min(rank, len(ordered)) - 1]


def test_percentiles_one_to_hundred():
    samples = list(range(1, 101))
    assert percentiles(samples, [0.50]) == [50]
    assert percentiles(samples, [0.99]) == [99]
    assert percentiles(samples, [1.0]) == [100]


def test_percentiles_single_sample():
    assert percentiles([7.5], [0.01, 0.5, 0.99]) == [7.5, 7.5, 7.5]


def test_percentiles_empty_errors():
    with pytest.raises(EmptySamplesError):
        percentiles([], [0.5])


def test_percentiles_match_oracle_random_sets():
    # 1e4 random sample sets run in the acceptance suite; a fast slice here.
    rng = random.Random(31)
    for _ in range(1000):
        samples = [rng.uniform(0, 1000) for _ in range(rng.randint(1, 120))]
        qs = [rng.random() for _ in range(3)]
        got = percentiles(samples, qs)
        assert got == [percentile_oracle(samples, q) for q in qs]


# ---------------------------------------------------------------------------
# replay

@pytest.fixture(scope="module")
def small_corpus():
    return generate_corpus(CorpusSpec(size=600, adversarial_fraction=0.3, seed=7))


def test_replay_empty_corpus(default_policy, reference_network):
    report = replay([], default_policy, reference_network)
    assert report.total == 0
    assert report.unsafe_allow_rate == 0.0
    assert report.latency_ms == {}


def test_replay_confusion_counts_conserve(small_corpus, default_policy, reference_network):
    report = replay(small_corpus, default_policy, reference_network, ReplayConfig(seed=1))
    assert sum(report.counts.values()) == len(small_corpus) == report.total


def test_replay_default_blocks_attacks(small_corpus, default_policy, reference_network):
    report = replay(small_corpus, default_policy, reference_network, ReplayConfig(seed=1))
    assert report.unsafe_allow_rate == 0.0
    assert report.counts["block_unsafe"] > 0
    assert report.counts["allow_safe"] > 0


def test_replay_reference_p50s(small_corpus, default_policy, tight_policy, reference_network):
    report = replay(small_corpus, default_policy, reference_network, ReplayConfig(seed=2))
    assert report.latency_ms["EdgeOnly"]["p50"] == pytest.approx(28.0, abs=1.0)
    assert report.latency_ms["EdgeLocal"]["p50"] == pytest.approx(210.0, abs=1.0)
    assert report.latency_ms["EdgeCloudLocal"]["p50"] == pytest.approx(360.0, abs=1.0)

    tight = replay(small_corpus, tight_policy, reference_network, ReplayConfig(seed=2))
    assert tight.latency_ms["EdgeCloud"]["p50"] == pytest.approx(140.0, abs=1.0)


def test_replay_worker_counts_identical(small_corpus, default_policy, reference_network):
    reports = [
        replay(small_corpus, default_policy, reference_network,
               ReplayConfig(seed=5, workers=workers)).to_dict()
        for workers in (1, 4)
    ]
    assert reports[0] == reports[1]


def test_replay_outcomes_align_with_corpus(small_corpus, default_policy, reference_network):
    outcomes = replay_outcomes(small_corpus, default_policy, reference_network,
                               ReplayConfig(seed=5))
    assert len(outcomes) == len(small_corpus)
    report = summarize(small_corpus, outcomes, default_policy)
    assert isinstance(report, MetricsReport)
    assert report.total == len(small_corpus)


def test_replay_allow_invariant_holds(small_corpus, default_policy, reference_network):
    # Allow requires an edge Allow, or a verified release: local verdict
    # present, risk below the release threshold, divergence within epsilon.
    outcomes = replay_outcomes(small_corpus, default_policy, reference_network,
                               ReplayConfig(seed=21))
    for outcome in outcomes:
        assert outcome.provenance  # never empty
        if outcome.verdict != "Allow":
            continue
        released = (outcome.local_verdict is not None
                    and outcome.local_verdict.risk_score < default_policy.release_threshold
                    and (outcome.divergence is None
                         or outcome.divergence <= default_policy.epsilon))
        assert outcome.edge_decision.verdict.value == "Allow" or released


def test_replay_runtime_audit_counts_cloud_exports(small_corpus, default_policy,
                                                   reference_network):
    outcomes = replay_outcomes(small_corpus, default_policy, reference_network,
                               ReplayConfig(seed=1))
    cloud_items = sum(1 for o in outcomes
                      if o.plan_used.path.value in ("EdgeCloud", "EdgeCloudLocal"))
    report = summarize(small_corpus, outcomes, default_policy)
    assert report.sanitization.requests == cloud_items
    assert report.sanitization.violations == 0


# ---------------------------------------------------------------------------
# ablation

def test_ablation_identical_configs_zero_deltas(small_corpus, default_policy,
                                                reference_network):
    configs = [AblationConfig("a", default_policy, RunConfig(), 1),
               AblationConfig("b", default_policy, RunConfig(), 1)]
    result = run_ablation(configs, small_corpus[:200], reference_network)
    assert set(result["reports"]) == {"a", "b"}
    assert all(v == 0.0 for v in result["deltas"]["a_vs_b"].values())


def test_ablation_requires_two_configs(small_corpus, default_policy, reference_network):
    with pytest.raises(ValueError):
        run_ablation([AblationConfig("only", default_policy, RunConfig())],
                     small_corpus, reference_network)


def test_ablation_directions(small_corpus, default_policy, reference_network):
    result = run_ablation(ablation_default_configs(default_policy),
                          small_corpus, reference_network)
    reports = result["reports"]
    assert set(reports) == {"default", "stepup_disabled", "standard_only",
                            "reflect_enabled"}
    assert reports["stepup_disabled"]["unsafe_allow_rate"] > reports[
        "default"]["unsafe_allow_rate"]
    assert reports["standard_only"]["unsafe_allow_rate"] > reports[
        "reflect_enabled"]["unsafe_allow_rate"]


# ---------------------------------------------------------------------------
# bench

def test_bench_latency_reference(reference_network):
    table = bench_latency(reference_network, samples=200, seed=1)
    assert table["EdgeOnly"]["p50"] == 28.0
    assert table["EdgeCloud"]["p50"] == 140.0
    assert table["EdgeLocal"]["p50"] == 210.0
    assert table["EdgeCloudLocal"]["p50"] == 360.0
    # Configured ordering: EdgeOnly < EdgeCloud < EdgeLocal < EdgeCloudLocal.
    p50s = [table[p]["p50"] for p in ("EdgeOnly", "EdgeCloud", "EdgeLocal",
                                      "EdgeCloudLocal")]
    assert p50s == sorted(p50s)


def test_bench_latency_jitter_percentile_order():
    network = NetworkState.from_dict({
        "links": {"edge": {"base_ms": 20, "jitter_ms": 50},
                  "edge_local": {"base_ms": 100, "jitter_ms": 200},
                  "edge_cloud": {"base_ms": 80, "jitter_ms": 120},
                  "cloud_local": {"base_ms": 150, "jitter_ms": 100}}})
    table = bench_latency(network, samples=500, seed=2)
    for row in table.values():
        assert row["p50"] <= row["p95"] <= row["p99"]


def test_bench_deterministic(reference_network):
    assert bench_latency(reference_network, 100, 9) == bench_latency(reference_network, 100, 9)
