"""Policy projection of a payload into its cloud-safe form, plus the audit.

Labels per field: public (kept verbatim), coarsen (replaced by a bucketed
derivative), forbid (dropped). A field with no label follows the policy's
missing_label_default; when that is unset a missing label is an error.

The canonical serialized form is sorted-key JSON with the standard ", " /
": " separators and lowercase hex, so it is bit-exact reproducible and the
whitespace-delimited token count (size_units) is meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .payload import PAYLOAD_FIELDS, TransactionPayload
from .policy import PROFILES, Policy  # noqa: F401  (profiles re-exported here)

# Derived fields the projection emits; labeled public in all shipped profiles
# so that projecting a projection changes nothing.
DERIVED_FIELDS = ("value_bucket", "destination_category", "calldata_selector")

DEFAULT_VALUE_BUCKETS = (
    ("<1 ETH", 10 ** 18),
    ("1-10 ETH", 10 ** 19),
    (">10 ETH", None),
)


class MissingLabelError(ValueError):
    """A payload field has no sensitivity label and no default applies."""


@dataclass(frozen=True)
class SanitizedPayload:
    data: dict
    field_manifest: tuple[tuple[str, str], ...]  # (field, kept|coarsened|dropped)
    size_units: int

    def to_canonical(self) -> str:
        return canonical_sanitized(self.data)

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "field_manifest": [list(item) for item in self.field_manifest],
            "size_units": self.size_units,
        }


def canonical_sanitized(data: dict) -> str:
    return json.dumps(data, sort_keys=True)


def field_label(field: str, policy: Policy) -> str:
    label = policy.sensitivity_labels.get(field)
    if label is None:
        if policy.missing_label_default == "public":
            return "public"
        if policy.missing_label_default == "sensitive":
            return "forbid"
        raise MissingLabelError(f"field {field!r} has no sensitivity label")
    return label


def value_bucket(value: int, policy: Policy) -> str:
    buckets = policy.value_buckets or DEFAULT_VALUE_BUCKETS
    for label, upper in buckets:
        if upper is None or value < upper:
            return label
    return buckets[-1][0]


def destination_category(destination: str | None, policy: Policy) -> str:
    if destination is None:
        return "unknown"
    if destination in policy.allowlist:
        return "allowlisted"
    if destination in policy.known_protocols:
        return "known-protocol"
    return "unknown"


def _coarsen(field: str, value, policy: Policy) -> tuple[str, object] | None:
    if field == "value":
        return "value_bucket", value_bucket(int(value), policy)
    if field == "destination":
        return "destination_category", destination_category(value, policy)
    if field == "calldata":
        raw = bytes.fromhex(value[2:]) if isinstance(value, str) else value
        sel = "0x" + raw[:4].hex() if len(raw) >= 4 else "none"
        return "calldata_selector", sel
    return None  # no coarsening defined: drop


def project_public(payload: TransactionPayload, policy: Policy) -> SanitizedPayload:
    """Deterministic projection; the manifest records an action per field."""
    return project_fields(payload.to_wire_fields(), policy)


def project_fields(fields: dict, policy: Policy) -> SanitizedPayload:
    out: dict = {}
    manifest: list[tuple[str, str]] = []
    for field in sorted(fields):
        value = fields[field]
        label = field_label(field, policy)
        if field in policy.sanitizer_bypass:
            # Test-only corruption: keeps the field regardless of its label.
            out[field] = value
            manifest.append((field, "kept"))
            continue
        if value is None:
            manifest.append((field, "dropped"))
            continue
        if label == "public":
            out[field] = value
            manifest.append((field, "kept"))
        elif label == "coarsen":
            coarse = _coarsen(field, value, policy)
            if coarse is None:
                manifest.append((field, "dropped"))
            else:
                out[coarse[0]] = coarse[1]
                manifest.append((field, "coarsened"))
        else:  # forbid
            manifest.append((field, "dropped"))
    serial = canonical_sanitized(out)
    return SanitizedPayload(
        data=out,
        field_manifest=tuple(manifest),
        size_units=len(serial.split()),
    )


def forbidden_fields(policy: Policy) -> tuple[str, ...]:
    """Payload fields the policy forbids from any cloud-bound serialization."""
    return tuple(f for f in PAYLOAD_FIELDS if field_label(f, policy) == "forbid")


def violating_fields(payload: TransactionPayload, policy: Policy) -> tuple[str, ...]:
    """Forbid-labeled fields present in the sanitized output.

    A field is present if its key survived, or if its serialized value
    (strings of 8+ chars, compared case-insensitively) appears inside the
    canonical serialization, e.g. an address echoed in kept free text.
    """
    sanitized = project_public(payload, policy)
    return _scan(sanitized, payload, policy)


def _scan(sanitized: SanitizedPayload, payload: TransactionPayload,
          policy: Policy) -> tuple[str, ...]:
    serial = sanitized.to_canonical().lower()
    fields = payload.to_wire_fields()
    hits = []
    for field in forbidden_fields(policy):
        value = fields.get(field)
        if value is None:
            continue
        if field in sanitized.data:
            hits.append(field)
            continue
        if isinstance(value, str) and len(value) >= 8 and value.lower() in serial:
            hits.append(field)
    return tuple(hits)


@dataclass(frozen=True)
class AuditReport:
    requests: int
    violations: int
    violation_rate: float
    mean_size_units: float

    def to_dict(self) -> dict:
        return {
            "requests": self.requests,
            "violations": self.violations,
            "violation_rate": self.violation_rate,
            "mean_size_units": self.mean_size_units,
        }


def audit_violations(corpus: list[TransactionPayload], policy: Policy) -> AuditReport:
    """Dry-run projection over a corpus; counts are commutative, so sharded
    execution with order-independent aggregation gives identical reports."""
    violations = 0
    total_size = 0
    for payload in corpus:
        sanitized = project_public(payload, policy)
        total_size += sanitized.size_units
        if _scan(sanitized, payload, policy):
            violations += 1
    requests = len(corpus)
    return AuditReport(
        requests=requests,
        violations=violations,
        violation_rate=violations / requests if requests else 0.0,
        mean_size_units=total_size / requests if requests else 0.0,
    )
