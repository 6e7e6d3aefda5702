"""Builtin scenario documents shipped with the package.

Names resolve as ``<kind>:<variant>``, e.g. ``policy:default``,
``network:reference``, ``corpus:audit``. CLI flags accept either a file path
or ``builtin:<name>``.
"""

from __future__ import annotations

import json
from importlib import resources

_FILES = {
    "policy:default": "policy_default.json",
    "policy:strict": "policy_strict.json",
    "policy:user_override": "policy_user_override.json",
    "policy:tight_budget": "policy_tight_budget.json",
    "network:reference": "net_reference.json",
    "network:jittery": "net_jittery.json",
    "corpus:default": "corpus_default.json",
    "corpus:audit": "corpus_audit.json",
}


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_FILES))


def load_builtin(name: str) -> dict:
    try:
        filename = _FILES[name]
    except KeyError as exc:
        raise KeyError(f"no builtin named {name!r}; available: {builtin_names()}") from exc
    text = resources.files(__package__).joinpath(filename).read_text()
    return json.loads(text)
