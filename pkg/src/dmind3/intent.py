"""Edge intent extraction: calldata decoding and deterministic classification.

decode_calldata is total: any byte string maps to a DecodedCall, malformed
input is data rather than an error. classify_intent is a pure function of
(decoded, payload, registry) and computes the confidence score

    gamma = 0.5 * decode_completeness + 0.3 * registry_hit + 0.2 * args_plausible

capped at UNKNOWN_CONFIDENCE_CAP whenever the action is Unknown.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .keccak import selector as compute_selector
from .payload import MAX_UINT256, TransactionPayload

UNKNOWN_CONFIDENCE_CAP = 0.3
UNLIMITED_THRESHOLD = 1 << 255  # near-max amounts count as unlimited

_W_DECODE = 0.5
_W_REGISTRY = 0.3
_W_ARGS = 0.2

ZERO_ADDRESS = "0x" + "00" * 20


class CallKind(str, Enum):
    NATIVE_TRANSFER = "NativeTransfer"
    KNOWN_FUNCTION = "KnownFunction"
    UNKNOWN_FUNCTION = "UnknownFunction"
    CONTRACT_CREATION = "ContractCreation"


class ActionKind(str, Enum):
    TRANSFER = "Transfer"
    APPROVE = "Approve"
    PERMIT = "Permit"
    SWAP = "Swap"
    DELEGATE = "DelegateAction"
    GOVERNANCE = "GovernanceAction"
    UNKNOWN = "Unknown"


class RiskFlag(str, Enum):
    UNLIMITED_APPROVAL = "UnlimitedApproval"
    UNUSUAL_DELEGATE = "UnusualDelegate"
    PERMISSION_AMPLIFICATION = "PermissionAmplification"
    UNKNOWN_SELECTOR = "UnknownSelector"
    VALUE_WITH_UNKNOWN_CALL = "ValueWithUnknownCall"
    UI_MISMATCH_CANDIDATE = "UiMismatchCandidate"


ALL_FLAGS = tuple(RiskFlag)


class RegistryError(ValueError):
    """Registry document malformed or a stored selector fails recomputation."""


# ---------------------------------------------------------------------------
# ABI argument codec (flat types plus depth-1 dynamic arrays; see Non-goals)

_STATIC_RE = re.compile(r"^(uint|int)(\d+)$")
_BYTESN_RE = re.compile(r"^bytes(\d+)$")


def parse_arg_types(signature: str) -> tuple[str, ...]:
    lparen = signature.index("(")
    if not signature.endswith(")"):
        raise RegistryError(f"bad signature {signature!r}")
    inner = signature[lparen + 1:-1]
    if not inner:
        return ()
    return tuple(t.strip() for t in inner.split(","))


def _is_dynamic(abi_type: str) -> bool:
    return abi_type in ("bytes", "string") or abi_type.endswith("[]")


def _decode_static(word: bytes, abi_type: str):
    """(value, plausible) for one 32-byte head word."""
    as_int = int.from_bytes(word, "big")
    if abi_type == "address":
        addr = "0x" + word[12:].hex()
        plausible = word[:12] == b"\x00" * 12 and addr != ZERO_ADDRESS
        return addr, plausible
    if abi_type == "bool":
        return bool(as_int), as_int in (0, 1)
    m = _STATIC_RE.match(abi_type)
    if m:
        bits = int(m.group(2))
        return as_int, as_int < (1 << bits)
    m = _BYTESN_RE.match(abi_type)
    if m:
        n = int(m.group(1))
        return word[:n], True
    raise RegistryError(f"unsupported ABI type {abi_type!r}")


@dataclass
class _DecodeState:
    values: list
    consumed: int
    clean: bool
    plausible: bool


def decode_args(data: bytes, types: tuple[str, ...]) -> _DecodeState:
    """Best-effort ABI decode of the args section (calldata after selector).

    Never raises on malformed bytes; ``clean`` is False when anything did not
    decode, ``consumed`` counts the bytes accounted for so far.
    """
    state = _DecodeState(values=[], consumed=0, clean=True, plausible=True)
    head_size = 32 * len(types)
    if len(data) < head_size:
        state.clean = False
        return state
    state.consumed = head_size
    tail_spans: set[tuple[int, int]] = set()
    for i, abi_type in enumerate(types):
        word = data[32 * i:32 * i + 32]
        if not _is_dynamic(abi_type):
            value, plausible = _decode_static(word, abi_type)
            state.values.append(value)
            state.plausible &= plausible
            continue
        offset = int.from_bytes(word, "big")
        if offset > len(data) - 32 or offset % 32:
            state.clean = False
            return state
        length = int.from_bytes(data[offset:offset + 32], "big")
        if abi_type.endswith("[]"):
            elem_type = abi_type[:-2]
            if _is_dynamic(elem_type):  # depth > 1 stays out of scope
                state.clean = False
                return state
            end = offset + 32 + 32 * length
            if length > 2 ** 16 or end > len(data):
                state.clean = False
                return state
            elems = []
            for k in range(length):
                value, plausible = _decode_static(
                    data[offset + 32 + 32 * k:offset + 64 + 32 * k], elem_type)
                elems.append(value)
                state.plausible &= plausible
            state.values.append(tuple(elems))
            tail_spans.add((offset, end))
        else:  # bytes / string
            padded = 32 * ((length + 31) // 32)
            end = offset + 32 + padded
            if length > 2 ** 24 or end > len(data):
                state.clean = False
                return state
            raw = data[offset + 32:offset + 32 + length]
            state.values.append(raw.decode("utf-8", "replace") if abi_type == "string" else raw)
            tail_spans.add((offset, end))
    state.consumed = head_size + sum(end - start for start, end in tail_spans)
    return state


def encode_args(types: tuple[str, ...], values: list) -> bytes:
    """ABI-encode arguments (inverse of decode_args for supported types)."""
    heads: list[bytes] = []
    tails: list[bytes] = []
    tail_base = 32 * len(types)
    for abi_type, value in zip(types, values):
        if not _is_dynamic(abi_type):
            heads.append(_encode_static(abi_type, value))
            continue
        offset = tail_base + sum(len(t) for t in tails)
        heads.append(offset.to_bytes(32, "big"))
        if abi_type.endswith("[]"):
            elem_type = abi_type[:-2]
            body = b"".join(_encode_static(elem_type, v) for v in value)
            tails.append(len(value).to_bytes(32, "big") + body)
        else:
            raw = value.encode("utf-8") if isinstance(value, str) else bytes(value)
            padded = raw + b"\x00" * (-len(raw) % 32)
            tails.append(len(raw).to_bytes(32, "big") + padded)
    return b"".join(heads) + b"".join(tails)


def _encode_static(abi_type: str, value) -> bytes:
    if abi_type == "address":
        return b"\x00" * 12 + bytes.fromhex(value[2:])
    if abi_type == "bool":
        return int(bool(value)).to_bytes(32, "big")
    if _BYTESN_RE.match(abi_type):
        raw = bytes(value)
        return raw + b"\x00" * (32 - len(raw))
    return int(value).to_bytes(32, "big")


# ---------------------------------------------------------------------------
# Selector registry

@dataclass(frozen=True)
class RegistryEntry:
    selector: bytes
    signature: str
    action: ActionKind
    arg_types: tuple[str, ...]
    target_index: int | None
    # "arg:<i>" | "max_if_arg:<i>" | "tx_value" | None
    amount_source: str | None


# (signature, action, target_index, amount_source)
_DEFAULT_SIGNATURES = (
    ("transfer(address,uint256)", ActionKind.TRANSFER, 0, "arg:1"),
    ("transferFrom(address,address,uint256)", ActionKind.TRANSFER, 1, "arg:2"),
    ("safeTransferFrom(address,address,uint256)", ActionKind.TRANSFER, 1, "arg:2"),
    ("safeTransferFrom(address,address,uint256,bytes)", ActionKind.TRANSFER, 1, "arg:2"),
    ("mint(address,uint256)", ActionKind.TRANSFER, 0, "arg:1"),
    ("deposit()", ActionKind.TRANSFER, None, "tx_value"),
    ("withdraw(uint256)", ActionKind.TRANSFER, None, "arg:0"),
    ("approve(address,uint256)", ActionKind.APPROVE, 0, "arg:1"),
    ("increaseAllowance(address,uint256)", ActionKind.APPROVE, 0, "arg:1"),
    ("setApprovalForAll(address,bool)", ActionKind.APPROVE, 0, "max_if_arg:1"),
    ("permit(address,address,uint256,uint256,uint8,bytes32,bytes32)",
     ActionKind.PERMIT, 1, "arg:2"),
    ("permit(address,address,uint256,uint256,bool,uint8,bytes32,bytes32)",
     ActionKind.PERMIT, 1, "max_if_arg:4"),
    ("delegate(address)", ActionKind.DELEGATE, 0, None),
    ("delegateBySig(address,uint256,uint256,uint8,bytes32,bytes32)",
     ActionKind.DELEGATE, 0, None),
    ("castVote(uint256,uint8)", ActionKind.GOVERNANCE, None, None),
    ("castVoteWithReason(uint256,uint8,string)", ActionKind.GOVERNANCE, None, None),
    ("swapExactTokensForTokens(uint256,uint256,address[],address,uint256)",
     ActionKind.SWAP, 3, "arg:0"),
    ("swapTokensForExactTokens(uint256,uint256,address[],address,uint256)",
     ActionKind.SWAP, 3, "arg:0"),
    ("swapExactTokensForETH(uint256,uint256,address[],address,uint256)",
     ActionKind.SWAP, 3, "arg:0"),
    ("swapExactETHForTokens(uint256,address[],address,uint256)",
     ActionKind.SWAP, 2, "tx_value"),
)


class SelectorRegistry:
    """Immutable selector -> canonical signature map; selectors are always
    recomputed from the signature so the keccak invariant holds by build."""

    def __init__(self, entries: dict[bytes, RegistryEntry]):
        self._entries = dict(entries)

    @classmethod
    def default(cls) -> "SelectorRegistry":
        entries = {}
        for signature, action, target_index, amount_source in _DEFAULT_SIGNATURES:
            entry = RegistryEntry(
                selector=compute_selector(signature),
                signature=signature,
                action=action,
                arg_types=parse_arg_types(signature),
                target_index=target_index,
                amount_source=amount_source,
            )
            entries[entry.selector] = entry
        return cls(entries)

    @classmethod
    def from_documents(cls, docs: list[dict]) -> "SelectorRegistry":
        """Load from a registry file: list of {selector, signature, action}.

        A stored selector that does not equal keccak256(signature)[:4] is a
        RegistryError, not a warning.
        """
        entries = {}
        for doc in docs:
            signature = doc["signature"]
            computed = compute_selector(signature)
            stated = doc.get("selector")
            if stated is not None and bytes.fromhex(stated.removeprefix("0x")) != computed:
                raise RegistryError(
                    f"selector {stated} does not match keccak of {signature!r}")
            entry = RegistryEntry(
                selector=computed,
                signature=signature,
                action=ActionKind(doc["action"]),
                arg_types=parse_arg_types(signature),
                target_index=doc.get("target_index"),
                amount_source=doc.get("amount_source"),
            )
            entries[computed] = entry
        return cls(entries)

    def lookup(self, sel: bytes) -> RegistryEntry | None:
        return self._entries.get(sel)

    def entries(self) -> tuple[RegistryEntry, ...]:
        return tuple(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)


# ---------------------------------------------------------------------------
# Decoded call and intent

@dataclass(frozen=True)
class DecodedCall:
    kind: CallKind
    selector: bytes | None
    signature: str | None
    args: tuple
    decode_completeness: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "selector": "0x" + self.selector.hex() if self.selector else None,
            "signature": self.signature,
            "args": [_serialize_arg(a) for a in self.args],
            "decode_completeness": self.decode_completeness,
        }


def _serialize_arg(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return str(value)
    if isinstance(value, bytes):
        return "0x" + value.hex()
    if isinstance(value, tuple):
        return [_serialize_arg(v) for v in value]
    return value


@dataclass(frozen=True)
class Intent:
    action: ActionKind
    target: str | None
    amount: int | None
    unlimited_approval: bool
    risk_flags: frozenset[RiskFlag]
    confidence: float

    def to_dict(self) -> dict:
        return {
            "action": self.action.value,
            "target": self.target,
            "amount": str(self.amount) if self.amount is not None else None,
            "unlimited_approval": self.unlimited_approval,
            "risk_flags": sorted(flag.value for flag in self.risk_flags),
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Intent":
        return cls(
            action=ActionKind(doc["action"]),
            target=doc.get("target"),
            amount=int(doc["amount"]) if doc.get("amount") is not None else None,
            unlimited_approval=bool(doc.get("unlimited_approval", False)),
            risk_flags=frozenset(RiskFlag(f) for f in doc.get("risk_flags", [])),
            confidence=float(doc["confidence"]),
        )


def decode_calldata(payload: TransactionPayload, registry: SelectorRegistry) -> DecodedCall:
    """Total decode of the calldata; never raises on arbitrary bytes."""
    data = payload.calldata
    if payload.destination is None:
        return DecodedCall(CallKind.CONTRACT_CREATION, None, None, (), 0.0)
    if len(data) == 0:
        return DecodedCall(CallKind.NATIVE_TRANSFER, None, None, (), 1.0)
    if len(data) < 4:
        return DecodedCall(CallKind.UNKNOWN_FUNCTION, None, None, (), 0.0)
    sel = bytes(data[:4])
    entry = registry.lookup(sel)
    if entry is None:
        return DecodedCall(CallKind.UNKNOWN_FUNCTION, sel, None, (), 4 / len(data))
    result = decode_args(bytes(data[4:]), entry.arg_types)
    if not result.clean:
        completeness = (4 + result.consumed) / len(data)
        return DecodedCall(CallKind.UNKNOWN_FUNCTION, sel, None,
                           tuple(result.values), min(1.0, completeness))
    completeness = (4 + result.consumed) / len(data)
    return DecodedCall(CallKind.KNOWN_FUNCTION, sel, entry.signature,
                       tuple(result.values), min(1.0, completeness))


# Claimed-action keywords scanned in order; first hit wins.
_CLAIM_KEYWORDS = (
    (r"\b(send|sending|transfer)\b", ActionKind.TRANSFER),
    (r"\b(swap|swapping|trade|exchange)\b", ActionKind.SWAP),
    (r"\b(approve|approving|approval|allowance)\b", ActionKind.APPROVE),
    (r"\bpermit\b", ActionKind.PERMIT),
    (r"\b(delegate|delegating)\b", ActionKind.DELEGATE),
    (r"\b(vote|voting|proposal|governance)\b", ActionKind.GOVERNANCE),
)


def claimed_action(ui_claim: str | None) -> ActionKind | None:
    if not ui_claim:
        return None
    text = ui_claim.lower()
    for pattern, action in _CLAIM_KEYWORDS:
        if re.search(pattern, text):
            return action
    return None


def confidence_score(completeness: float, registry_hit: bool, args_plausible: bool,
                     action: ActionKind) -> float:
    gamma = (_W_DECODE * completeness
             + _W_REGISTRY * (1.0 if registry_hit else 0.0)
             + _W_ARGS * (1.0 if args_plausible else 0.0))
    if action is ActionKind.UNKNOWN:
        gamma = min(gamma, UNKNOWN_CONFIDENCE_CAP)
    return min(1.0, max(0.0, gamma))


def classify_intent(decoded: DecodedCall, payload: TransactionPayload,
                    registry: SelectorRegistry) -> Intent:
    """Deterministic intent classification; same inputs, identical Intent."""
    flags: set[RiskFlag] = set()
    target: str | None = None
    amount: int | None = None
    unlimited = False

    if decoded.kind is CallKind.NATIVE_TRANSFER:
        action = ActionKind.TRANSFER
        target = payload.destination
        amount = payload.value
        registry_hit = True
        plausible = True
    elif decoded.kind is CallKind.KNOWN_FUNCTION:
        entry = registry.lookup(decoded.selector)
        action = entry.action
        registry_hit = True
        # Plausibility re-derived from the decoded words, not trusted blindly.
        plausible = decode_args(bytes(payload.calldata[4:]), entry.arg_types).plausible
        if entry.target_index is not None and entry.target_index < len(decoded.args):
            candidate = decoded.args[entry.target_index]
            target = candidate if isinstance(candidate, str) else None
        amount, near_max = _extract_amount(entry, decoded, payload)
        # The bool field means "exactly max"; the risk flag also covers near-max.
        unlimited = (amount == MAX_UINT256
                     and action in (ActionKind.APPROVE, ActionKind.PERMIT))
        if near_max:
            flags.add(RiskFlag.UNLIMITED_APPROVAL)
            if action is ActionKind.PERMIT or _is_operator_approval(decoded):
                flags.add(RiskFlag.PERMISSION_AMPLIFICATION)
    else:  # UnknownFunction or ContractCreation
        action = ActionKind.UNKNOWN
        target = payload.destination
        amount = payload.value if payload.value > 0 else None
        registry_hit = False
        plausible = True
        if decoded.kind is CallKind.UNKNOWN_FUNCTION:
            flags.add(RiskFlag.UNKNOWN_SELECTOR)
            if payload.value > 0:
                flags.add(RiskFlag.VALUE_WITH_UNKNOWN_CALL)

    if action is ActionKind.DELEGATE and target is not None and target != payload.sender:
        flags.add(RiskFlag.UNUSUAL_DELEGATE)
    claimed = claimed_action(payload.ui_claim)
    if claimed is not None and claimed is not action:
        flags.add(RiskFlag.UI_MISMATCH_CANDIDATE)

    gamma = confidence_score(decoded.decode_completeness, registry_hit, plausible, action)
    return Intent(
        action=action,
        target=target,
        amount=amount,
        unlimited_approval=unlimited,
        risk_flags=frozenset(flags),
        confidence=gamma,
    )


def _extract_amount(entry: RegistryEntry, decoded: DecodedCall,
                    payload: TransactionPayload) -> tuple[int | None, bool]:
    """(amount, near_max): near_max marks approval amounts >= 2**255."""
    source = entry.amount_source
    if source is None:
        return None, False
    if source == "tx_value":
        return payload.value, False
    kind, _, index_text = source.partition(":")
    index = int(index_text)
    if index >= len(decoded.args):
        return None, False
    raw = decoded.args[index]
    if kind == "max_if_arg":
        # Blanket grant encoded as a bool; canonical amount is MAX_UINT256.
        granted = bool(raw)
        return (MAX_UINT256, True) if granted else (0, False)
    if not isinstance(raw, int) or isinstance(raw, bool):
        return None, False
    near_max = (entry.action in (ActionKind.APPROVE, ActionKind.PERMIT)
                and raw >= UNLIMITED_THRESHOLD)
    return raw, near_max


def _is_operator_approval(decoded: DecodedCall) -> bool:
    return decoded.signature == "setApprovalForAll(address,bool)"


def risk_features(intent: Intent) -> dict[str, int]:
    """One 0/1 indicator per defined flag, in stable RiskFlag order."""
    return {flag.value: int(flag in intent.risk_flags) for flag in ALL_FLAGS}
