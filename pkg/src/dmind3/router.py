"""Compute-plan enumeration and selection under leak and latency constraints.

Selection minimizes expected_loss + beta * cost over the candidates that
satisfy leak_count == 0 and predicted latency <= budget. The expected-loss
surrogate models p_unsafe = rho * (1 - gamma); a plan's verification depth
multiplies the residual unsafe-Allow mass (edge-only 1.0, local 0.3, cloud
0.6, both 0.2). Plans with a local hop resolve the rest terminally; plans
without one leave it at StepUp cost. Prediction uses expected latency, never
a sampled draw, so selection is deterministic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum

from .payload import TransactionPayload
from .policy import Decision, Policy, Verdict
from .sanitizer import violating_fields, forbidden_fields


class PlanPath(str, Enum):
    EDGE_ONLY = "EdgeOnly"
    EDGE_LOCAL = "EdgeLocal"
    EDGE_CLOUD = "EdgeCloud"
    EDGE_CLOUD_LOCAL = "EdgeCloudLocal"


PATH_ORDER = (PlanPath.EDGE_ONLY, PlanPath.EDGE_LOCAL,
              PlanPath.EDGE_CLOUD, PlanPath.EDGE_CLOUD_LOCAL)

PATH_HOPS: dict[PlanPath, tuple[str, ...]] = {
    PlanPath.EDGE_ONLY: ("edge",),
    PlanPath.EDGE_LOCAL: ("edge", "local"),
    PlanPath.EDGE_CLOUD: ("edge", "cloud"),
    PlanPath.EDGE_CLOUD_LOCAL: ("edge", "cloud", "local"),
}

# Link names per leg of each path; the scenario file configures these.
PATH_LINKS: dict[PlanPath, tuple[str, ...]] = {
    PlanPath.EDGE_ONLY: ("edge",),
    PlanPath.EDGE_LOCAL: ("edge", "edge_local"),
    PlanPath.EDGE_CLOUD: ("edge", "edge_cloud"),
    PlanPath.EDGE_CLOUD_LOCAL: ("edge", "edge_cloud", "cloud_local"),
}

VERIFICATION_FACTORS = {
    PlanPath.EDGE_ONLY: 1.0,
    PlanPath.EDGE_LOCAL: 0.3,
    PlanPath.EDGE_CLOUD: 0.6,
    PlanPath.EDGE_CLOUD_LOCAL: 0.2,
}

_HAS_LOCAL = {PlanPath.EDGE_LOCAL, PlanPath.EDGE_CLOUD_LOCAL}
_HAS_CLOUD = {PlanPath.EDGE_CLOUD, PlanPath.EDGE_CLOUD_LOCAL}


class MissingLinkModelError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    base_ms: float
    jitter_ms: float = 0.0
    drop_prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")


@dataclass(frozen=True)
class NetworkState:
    links: dict[str, Link] = field(default_factory=dict)
    degradation_multiplier: float = 1.0

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkState":
        links = {
            name: Link(
                base_ms=float(spec["base_ms"]),
                jitter_ms=float(spec.get("jitter_ms", 0.0)),
                drop_prob=float(spec.get("drop_prob", 0.0)),
            )
            for name, spec in doc.get("links", {}).items()
        }
        return cls(links=links,
                   degradation_multiplier=float(doc.get("degradation_multiplier", 1.0)))

    def to_dict(self) -> dict:
        return {
            "links": {
                name: {"base_ms": l.base_ms, "jitter_ms": l.jitter_ms, "drop_prob": l.drop_prob}
                for name, l in self.links.items()
            },
            "degradation_multiplier": self.degradation_multiplier,
        }

    def link(self, name: str) -> Link:
        try:
            return self.links[name]
        except KeyError as exc:
            raise MissingLinkModelError(f"no link model for {name!r}") from exc

    def expected_latency(self, name: str) -> float:
        link = self.link(name)
        return (link.base_ms + link.jitter_ms / 2.0) * self.degradation_multiplier

    def sample_latency(self, name: str, rng: random.Random) -> float:
        link = self.link(name)
        return (link.base_ms + rng.uniform(0.0, link.jitter_ms)) * self.degradation_multiplier

    def sample_drop(self, name: str, rng: random.Random) -> bool:
        link = self.link(name)
        return rng.random() < link.drop_prob


@dataclass(frozen=True)
class ComputePlan:
    path: PlanPath
    hops: tuple[str, ...]
    predicted_latency_ms: float
    cost: float
    leak_count: int
    expected_loss: float
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "path": self.path.value,
            "hops": list(self.hops),
            "predicted_latency_ms": self.predicted_latency_ms,
            "cost": self.cost,
            "leak_count": self.leak_count,
            "expected_loss": self.expected_loss,
            "fallback": self.fallback,
        }


def predict_latency(path: PlanPath, network: NetworkState) -> float:
    """Additive expected-value hop model in milliseconds."""
    return sum(network.expected_latency(name) for name in PATH_LINKS[path])


def check_leak(path: PlanPath, payload: TransactionPayload | None, policy: Policy) -> int:
    """0 for plans without a cloud hop; dry-run projection count otherwise."""
    if path not in _HAS_CLOUD:
        return 0
    if payload is None:
        # Structural dry run: only a configured bypass can leak without data.
        return len(set(policy.sanitizer_bypass) & set(forbidden_fields(policy)))
    return len(violating_fields(payload, policy))


def unsafe_probability(decision: Decision) -> float:
    return min(1.0, max(0.0, decision.rho * (1.0 - decision.gamma)))


def expected_plan_loss(path: PlanPath, decision: Decision, policy: Policy) -> float:
    """Closed-form surrogate for the expected decision loss of one plan."""
    p_unsafe = unsafe_probability(decision)
    if decision.verdict is not Verdict.STEPUP:
        # Nothing to escalate: the loss is that of the verdict itself.
        verdict = decision.verdict.value
        return (p_unsafe * policy.loss("unsafe", verdict)
                + (1.0 - p_unsafe) * policy.loss("safe", verdict))
    v = VERIFICATION_FACTORS[path]
    residual_allow = v * p_unsafe * policy.loss("unsafe", "Allow")
    if path in _HAS_LOCAL:
        caught = (1.0 - v) * p_unsafe * policy.loss("unsafe", "Block")
        safe_mass = (1.0 - p_unsafe) * policy.loss("safe", "Allow")
    else:
        caught = (1.0 - v) * p_unsafe * policy.loss("unsafe", "StepUp")
        safe_mass = (1.0 - p_unsafe) * policy.loss("safe", "StepUp")
    return residual_allow + caught + safe_mass


def _annotate(path: PlanPath, decision: Decision, policy: Policy,
              network: NetworkState, payload: TransactionPayload | None,
              fallback: bool = False) -> ComputePlan:
    return ComputePlan(
        path=path,
        hops=PATH_HOPS[path],
        predicted_latency_ms=predict_latency(path, network),
        cost=float(policy.plan_costs[path.value]),
        leak_count=check_leak(path, payload, policy),
        expected_loss=expected_plan_loss(path, decision, policy),
        fallback=fallback,
    )


def enumerate_plans(decision: Decision, policy: Policy, network: NetworkState,
                    payload: TransactionPayload | None = None) -> list[ComputePlan]:
    """The members of K permitted by policy, annotated for selection.

    Non-StepUp decisions have nothing to escalate and yield the single
    EdgeOnly plan; cloud paths are omitted when cloud_enabled is false.
    """
    if decision.verdict is not Verdict.STEPUP:
        return [_annotate(PlanPath.EDGE_ONLY, decision, policy, network, payload)]
    paths = [p for p in PATH_ORDER if policy.cloud_enabled or p not in _HAS_CLOUD]
    return [_annotate(p, decision, policy, network, payload) for p in paths]


def select_plan(candidates: list[ComputePlan], policy: Policy) -> ComputePlan:
    """Argmin of expected_loss + beta*cost over feasible candidates.

    Ties break toward the shallower path. With no feasible candidate the
    EdgeOnly plan comes back flagged fallback=True and the orchestrator
    keeps the conservative gate verdict.
    """
    feasible = [c for c in candidates
                if c.leak_count == 0 and c.predicted_latency_ms <= policy.latency_budget_ms]
    if not feasible:
        base = next((c for c in candidates if c.path is PlanPath.EDGE_ONLY), None)
        if base is None:
            base = ComputePlan(
                path=PlanPath.EDGE_ONLY,
                hops=PATH_HOPS[PlanPath.EDGE_ONLY],
                predicted_latency_ms=0.0,
                cost=float(policy.plan_costs[PlanPath.EDGE_ONLY.value]),
                leak_count=0,
                expected_loss=0.0,
            )
        return replace(base, fallback=True)
    return min(feasible,
               key=lambda c: (c.expected_loss + policy.beta * c.cost,
                              PATH_ORDER.index(c.path)))
