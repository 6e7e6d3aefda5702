"""Pydantic request/response models for the HTTP surface."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class TransactionModel(BaseModel):
    """Wire form of one transaction payload."""
    model_config = ConfigDict(populate_by_name=True)

    chain_id: int
    from_: str = Field(alias="from")
    to: Optional[str] = None
    value: str
    data: str = "0x"
    gas_limit: int
    nonce: int
    ui_claim: Optional[str] = None

    def to_payload_dict(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "from": self.from_,
            "to": self.to,
            "value": self.value,
            "data": self.data,
            "gas_limit": self.gas_limit,
            "nonce": self.nonce,
            "ui_claim": self.ui_claim,
        }


class LabeledTransactionModel(BaseModel):
    payload: TransactionModel
    ground_truth: Literal["safe", "unsafe"]
    pattern: str


class RunConfigModel(BaseModel):
    stepup_enabled: bool = True
    local_reflect: Literal["auto", "never", "always"] = "auto"
    foresight_reflect_threshold: float = 0.7
    tier_config: dict = Field(default_factory=dict)


class DecideRequest(BaseModel):
    transaction: TransactionModel
    policy: Optional[dict] = None      # policy document; None = builtin default
    network: Optional[dict] = None     # scenario document; None = builtin reference
    seed: int = 0
    config: Optional[RunConfigModel] = None


class DecideResponse(BaseModel):
    verdict: Literal["Allow", "Block", "StepUp-pending"]
    exit_code: int
    outcome: dict


class CorpusRequest(BaseModel):
    spec: dict


class CorpusResponse(BaseModel):
    count: int
    items: list[dict]


class ReplayRequest(BaseModel):
    corpus: list[LabeledTransactionModel]
    policy: Optional[dict] = None
    network: Optional[dict] = None
    seed: int = 0
    workers: int = 1
    config: Optional[RunConfigModel] = None


class ReplayResponse(BaseModel):
    report: dict


class AblationRequest(BaseModel):
    corpus: list[LabeledTransactionModel]
    policy: Optional[dict] = None
    network: Optional[dict] = None
    seed: int = 0


class AblationResponse(BaseModel):
    reports: dict
    deltas: dict


class AuditRequest(BaseModel):
    corpus: list[LabeledTransactionModel]
    profile: Optional[Literal["default", "strict", "user_override"]] = None
    policy: Optional[dict] = None


class AuditResponse(BaseModel):
    requests: int
    violations: int
    violation_rate: float
    mean_size_units: float


class BenchRequest(BaseModel):
    network: Optional[dict] = None
    samples: int = 1000
    seed: int = 0


class BenchResponse(BaseModel):
    paths: dict


class LossRequest(BaseModel):
    kind: Literal["hps", "c3"]
    instance: dict[str, Any]


class LossResponse(BaseModel):
    kind: str
    loss: float


class HealthResponse(BaseModel):
    status: str
    version: str
