"""FastAPI service wrapping the core package.

Every endpoint is stateless: policy/network/corpus documents ride in the
request, defaults come from the builtin scenario files. Domain validation
errors map to 400 with the error class name in the detail.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..corpus import CorpusError, CorpusSpec, LabeledTransaction, generate_corpus
from ..data import load_builtin
from ..intent import RegistryError
from ..objectives import C3Input, HpsInput, ObjectiveError, c3_loss, hps_loss
from ..orchestrator import RunConfig, process_transaction
from ..payload import PayloadError, TransactionPayload
from ..policy import PolicyError, load_policy
from ..replay import (ReplayConfig, ablation_default_configs, bench_latency,
                      default_contexts, replay, run_ablation)
from ..router import MissingLinkModelError, NetworkState
from ..sanitizer import MissingLabelError, audit_violations
from . import schemas

EXIT_CODES = {"Allow": 0, "Block": 2, "StepUp-pending": 3}

_DOMAIN_ERRORS = (PolicyError, PayloadError, CorpusError, ObjectiveError,
                  RegistryError, MissingLabelError, MissingLinkModelError,
                  ValueError, KeyError)


def _policy(doc: dict | None):
    return load_policy(doc if doc is not None else load_builtin("policy:default"))


def _network(doc: dict | None) -> NetworkState:
    return NetworkState.from_dict(doc if doc is not None else load_builtin("network:reference"))


def _corpus(models: list[schemas.LabeledTransactionModel]) -> list[LabeledTransaction]:
    return [
        LabeledTransaction(
            payload=TransactionPayload.from_dict(m.payload.to_payload_dict()),
            ground_truth=m.ground_truth,
            pattern=m.pattern,
        )
        for m in models
    ]


def _run_config(model: schemas.RunConfigModel | None) -> RunConfig:
    if model is None:
        return RunConfig()
    return RunConfig.from_dict(model.model_dump())


def create_app() -> FastAPI:
    app = FastAPI(title="dmind3", version=__version__)

    def handle_domain_error(request, exc):
        return JSONResponse(status_code=400,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    for exc_class in _DOMAIN_ERRORS:
        app.add_exception_handler(exc_class, handle_domain_error)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/decide", response_model=schemas.DecideResponse)
    def decide(req: schemas.DecideRequest) -> schemas.DecideResponse:
        payload = TransactionPayload.from_dict(req.transaction.to_payload_dict())
        policy = _policy(req.policy)
        network = _network(req.network)
        private_ctx, public_ctx = default_contexts(policy)
        outcome = process_transaction(
            payload, private_ctx, public_ctx, policy, network,
            seed=req.seed, run_config=_run_config(req.config))
        return schemas.DecideResponse(
            verdict=outcome.verdict,
            exit_code=EXIT_CODES[outcome.verdict],
            outcome=outcome.to_dict(),
        )

    @app.post("/corpus/generate", response_model=schemas.CorpusResponse)
    def corpus_generate(req: schemas.CorpusRequest) -> schemas.CorpusResponse:
        items = generate_corpus(CorpusSpec.from_dict(req.spec))
        return schemas.CorpusResponse(count=len(items),
                                      items=[item.to_dict() for item in items])

    @app.post("/replay", response_model=schemas.ReplayResponse)
    def replay_endpoint(req: schemas.ReplayRequest) -> schemas.ReplayResponse:
        report = replay(
            _corpus(req.corpus), _policy(req.policy), _network(req.network),
            ReplayConfig(seed=req.seed, workers=req.workers, run=_run_config(req.config)))
        return schemas.ReplayResponse(report=report.to_dict())

    @app.post("/ablation", response_model=schemas.AblationResponse)
    def ablation(req: schemas.AblationRequest) -> schemas.AblationResponse:
        configs = ablation_default_configs(_policy(req.policy), seed=req.seed)
        result = run_ablation(configs, _corpus(req.corpus), _network(req.network))
        return schemas.AblationResponse(**result)

    @app.post("/audit-privacy", response_model=schemas.AuditResponse)
    def audit(req: schemas.AuditRequest) -> schemas.AuditResponse:
        if req.policy is not None:
            policy = _policy(req.policy)
        else:
            doc = load_builtin("policy:default")
            doc["profile"] = req.profile or "default"
            policy = load_policy(doc)
        payloads = [item.payload for item in _corpus(req.corpus)]
        report = audit_violations(payloads, policy)
        return schemas.AuditResponse(**report.to_dict())

    @app.post("/bench-latency", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest) -> schemas.BenchResponse:
        return schemas.BenchResponse(
            paths=bench_latency(_network(req.network), samples=req.samples, seed=req.seed))

    @app.post("/eval-loss", response_model=schemas.LossResponse)
    def eval_loss(req: schemas.LossRequest) -> schemas.LossResponse:
        if req.kind == "hps":
            loss = hps_loss(HpsInput.from_dict(req.instance))
        else:
            loss = c3_loss(C3Input.from_dict(req.instance))
        return schemas.LossResponse(kind=req.kind, loss=loss)

    return app


app = create_app()
