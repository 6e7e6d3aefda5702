"""Edge-local-cloud transaction decision stack.

Core package: payload parsing, signing-time policy gate, compute-plan
routing, privacy sanitization, tier stubs, orchestration, loss evaluators,
and the replay harness. The FastAPI service in ``dmind3.service`` wraps
this package; ``dmind3.cli`` is a thin client for it.
"""

__version__ = "0.1.0"
