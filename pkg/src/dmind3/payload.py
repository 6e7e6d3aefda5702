"""Raw signing-time transaction payload and its wire schema.

Wire schema (one JSON object):
  {chain_id:int, from:hex20, to:hex20|null, value:decimal-string,
   data:0x-hex, gas_limit:int, nonce:int, ui_claim:string|null}

All 256-bit quantities are exact Python ints; no floats anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

MAX_UINT256 = (1 << 256) - 1

# Payload field names in wire order; sanitization labels are keyed by these.
PAYLOAD_FIELDS = (
    "chain_id", "sender", "destination", "value",
    "calldata", "gas_limit", "nonce", "ui_claim",
)


class PayloadError(ValueError):
    """Raised when a transaction document violates the wire schema."""


def normalize_address(value: str) -> str:
    """Validate and lowercase a 0x-prefixed 20-byte address."""
    if not isinstance(value, str) or not value.startswith("0x") or len(value) != 42:
        raise PayloadError(f"not a 20-byte hex address: {value!r}")
    try:
        bytes.fromhex(value[2:])
    except ValueError as exc:
        raise PayloadError(f"not a 20-byte hex address: {value!r}") from exc
    return value.lower()


def _hex_bytes(value: str, field: str) -> bytes:
    if not isinstance(value, str) or not value.startswith("0x"):
        raise PayloadError(f"{field} must be 0x-prefixed hex")
    try:
        return bytes.fromhex(value[2:])
    except ValueError as exc:
        raise PayloadError(f"{field} is not valid hex") from exc


@dataclass(frozen=True)
class TransactionPayload:
    chain_id: int
    sender: str
    destination: str | None  # absent = contract creation
    value: int               # wei
    calldata: bytes
    gas_limit: int
    nonce: int
    ui_claim: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sender", normalize_address(self.sender))
        if self.destination is not None:
            object.__setattr__(self, "destination", normalize_address(self.destination))
        if not 0 <= self.value <= MAX_UINT256:
            raise PayloadError("value outside uint256 range")
        if self.gas_limit < 0 or self.nonce < 0 or self.chain_id < 0:
            raise PayloadError("chain_id, gas_limit and nonce must be nonnegative")

    @classmethod
    def from_dict(cls, doc: dict) -> "TransactionPayload":
        try:
            return cls(
                chain_id=int(doc["chain_id"]),
                sender=doc["from"],
                destination=doc["to"] if doc.get("to") is not None else None,
                value=int(doc["value"]),
                calldata=_hex_bytes(doc.get("data", "0x"), "data"),
                gas_limit=int(doc["gas_limit"]),
                nonce=int(doc["nonce"]),
                ui_claim=doc.get("ui_claim"),
            )
        except KeyError as exc:
            raise PayloadError(f"missing transaction field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, PayloadError):
                raise
            raise PayloadError(f"malformed transaction document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "TransactionPayload":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PayloadError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise PayloadError("transaction document must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "from": self.sender,
            "to": self.destination,
            "value": str(self.value),
            "data": "0x" + self.calldata.hex(),
            "gas_limit": self.gas_limit,
            "nonce": self.nonce,
            "ui_claim": self.ui_claim,
        }

    def to_wire_fields(self) -> dict:
        """JSON-ready view keyed by field names; what sanitization labels key on."""
        return {
            "chain_id": self.chain_id,
            "sender": self.sender,
            "destination": self.destination,
            "value": str(self.value),
            "calldata": "0x" + self.calldata.hex(),
            "gas_limit": self.gas_limit,
            "nonce": self.nonce,
            "ui_claim": self.ui_claim,
        }


def canonical_json(obj) -> str:
    """Compact sorted-key JSON; the form digests and byte-equality run over."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
