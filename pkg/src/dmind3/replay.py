"""Deterministic trace replay, latency percentiles, and the ablation runner.

Replay derives one seed per corpus item from the run seed by a counter
scheme and merges results in corpus order, so worker count cannot change
any reported number. Latencies are simulated from the NetworkState links;
nothing reads the wall clock.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import LabeledTransaction, derive_seed
from .intent import SelectorRegistry
from .orchestrator import (FINAL_ALLOW, FINAL_BLOCK, FINAL_STEPUP_PENDING,
                           FinalOutcome, RunConfig, process_transaction)
from .policy import Policy
from .router import NetworkState, PATH_LINKS, PlanPath
from .sanitizer import AuditReport, audit_violations
from .tiers import PrivateContext, PublicContext


class EmptySamplesError(ValueError):
    pass


def percentiles(samples: list[float], qs: list[float]) -> list[float]:
    """Nearest-rank percentiles: the sorted sample at index ceil(q * n)."""
    if not samples:
        raise EmptySamplesError("cannot take percentiles of no samples")
    ordered = sorted(samples)
    n = len(ordered)
    out = []
    for q in qs:
        rank = max(1, math.ceil(q * n))
        out.append(ordered[min(rank, n) - 1])
    return out


@dataclass(frozen=True)
class ReplayConfig:
    seed: int = 0
    workers: int = 1
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "ReplayConfig":
        return cls(
            seed=int(doc.get("seed", 0)),
            workers=int(doc.get("workers", 1)),
            run=RunConfig.from_dict(doc),
        )


@dataclass(frozen=True)
class MetricsReport:
    total: int
    counts: dict
    unsafe_allow_rate: float
    conservative_block_rate: float
    stepup_rate: float
    latency_ms: dict
    sanitization: AuditReport

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(self.counts),
            "unsafe_allow_rate": self.unsafe_allow_rate,
            "conservative_block_rate": self.conservative_block_rate,
            "stepup_rate": self.stepup_rate,
            "latency_ms": self.latency_ms,
            "sanitization": self.sanitization.to_dict(),
        }


def default_contexts(policy: Policy) -> tuple[PrivateContext, PublicContext]:
    private_ctx = PrivateContext(
        allowlist=frozenset(policy.allowlist),
        exposure_limits={"default": 10 ** 30},
    )
    public_ctx = PublicContext(
        aggregate_history={"allowed": 92, "blocked": 3, "stepped_up": 5},
        feed_timestamp=0.0,
    )
    return private_ctx, public_ctx


def replay_outcomes(corpus: list[LabeledTransaction], policy: Policy,
                    network: NetworkState, config: ReplayConfig | None = None,
                    registry: SelectorRegistry | None = None) -> list[FinalOutcome]:
    """Per-item FinalOutcomes in corpus order, identical for any worker count."""
    config = config or ReplayConfig()
    registry = registry or SelectorRegistry.default()
    private_ctx, public_ctx = default_contexts(policy)

    def run_one(indexed: tuple[int, LabeledTransaction]) -> FinalOutcome:
        index, item = indexed
        return process_transaction(
            item.payload, private_ctx, public_ctx, policy, network,
            seed=derive_seed(config.seed, index, "replay"),
            run_config=config.run, registry=registry,
        )

    work = list(enumerate(corpus))
    if config.workers <= 1:
        return [run_one(pair) for pair in work]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(run_one, work))


_VERDICT_KEYS = {FINAL_ALLOW: "allow", FINAL_BLOCK: "block", FINAL_STEPUP_PENDING: "stepup"}
_CLOUD_PATHS = (PlanPath.EDGE_CLOUD, PlanPath.EDGE_CLOUD_LOCAL)


def summarize(corpus: list[LabeledTransaction], outcomes: list[FinalOutcome],
              policy: Policy) -> MetricsReport:
    counts = {f"{v}_{label}": 0 for v in _VERDICT_KEYS.values() for label in ("safe", "unsafe")}
    by_path: dict[str, list[float]] = {}
    exported = []
    for item, outcome in zip(corpus, outcomes):
        counts[f"{_VERDICT_KEYS[outcome.verdict]}_{item.ground_truth}"] += 1
        by_path.setdefault(outcome.plan_used.path.value, []).append(outcome.total_latency_ms)
        if outcome.plan_used.path in _CLOUD_PATHS:
            exported.append(item.payload)

    safe_total = counts["allow_safe"] + counts["block_safe"] + counts["stepup_safe"]
    unsafe_total = counts["allow_unsafe"] + counts["block_unsafe"] + counts["stepup_unsafe"]
    total = safe_total + unsafe_total
    latency = {
        path: dict(zip(("p50", "p95", "p99"), percentiles(samples, [0.50, 0.95, 0.99])))
        for path, samples in sorted(by_path.items())
    }
    return MetricsReport(
        total=total,
        counts=counts,
        unsafe_allow_rate=counts["allow_unsafe"] / unsafe_total if unsafe_total else 0.0,
        conservative_block_rate=counts["block_safe"] / safe_total if safe_total else 0.0,
        stepup_rate=(counts["stepup_safe"] + counts["stepup_unsafe"]) / total if total else 0.0,
        latency_ms=latency,
        sanitization=audit_violations(exported, policy),
    )


def replay(corpus: list[LabeledTransaction], policy: Policy, network: NetworkState,
           config: ReplayConfig | None = None,
           registry: SelectorRegistry | None = None) -> MetricsReport:
    outcomes = replay_outcomes(corpus, policy, network, config, registry)
    return summarize(corpus, outcomes, policy)


@dataclass(frozen=True)
class AblationConfig:
    name: str
    policy: Policy
    run: RunConfig
    seed: int = 0


def ablation_default_configs(policy: Policy, seed: int = 0) -> list[AblationConfig]:
    """The shipped ablation rows: default, step-up disabled, Standard-only
    verifier, Reflect-enabled verifier."""
    return [
        AblationConfig("default", policy, RunConfig(), seed),
        AblationConfig("stepup_disabled", policy, RunConfig(stepup_enabled=False), seed),
        AblationConfig("standard_only", policy, RunConfig(local_reflect="never"), seed),
        AblationConfig("reflect_enabled", policy, RunConfig(local_reflect="always"), seed),
    ]


_DELTA_METRICS = ("unsafe_allow_rate", "conservative_block_rate", "stepup_rate")


def run_ablation(configs: list[AblationConfig], corpus: list[LabeledTransaction],
                 network: NetworkState) -> dict:
    """One MetricsReport per named config plus pairwise metric deltas."""
    if len(configs) < 2:
        raise ValueError("ablation needs at least two configs")
    reports: dict[str, MetricsReport] = {}
    for cfg in configs:
        replay_cfg = ReplayConfig(seed=cfg.seed, workers=1, run=cfg.run)
        reports[cfg.name] = replay(corpus, cfg.policy, network, replay_cfg)
    deltas = {}
    names = [c.name for c in configs]
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            deltas[f"{a}_vs_{b}"] = {
                metric: getattr(reports[a], metric) - getattr(reports[b], metric)
                for metric in _DELTA_METRICS
            }
    return {
        "reports": {name: report.to_dict() for name, report in reports.items()},
        "deltas": deltas,
    }


def bench_latency(network: NetworkState, samples: int = 1000, seed: int = 0) -> dict:
    """Sample every path's simulated latency directly; percentile table per path."""
    out = {}
    for path in PlanPath:
        rng = random.Random(derive_seed(seed, 0, f"bench:{path.value}"))
        draws = [
            sum(network.sample_latency(link, rng) for link in PATH_LINKS[path])
            for _ in range(samples)
        ]
        p50, p95, p99 = percentiles(draws, [0.50, 0.95, 0.99])
        out[path.value] = {"p50": p50, "p95": p95, "p99": p99}
    return out
