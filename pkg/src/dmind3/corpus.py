"""Synthetic labeled transaction corpora for replay and audits.

Generation is a pure function of (spec, seed): pattern counts come from a
largest-remainder quota split, pattern-to-index assignment from one seeded
shuffle, and every payload field from a per-item RNG derived by a counter
scheme, so the same spec always serializes to byte-identical JSONL.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field

from .intent import encode_args, parse_arg_types
from .keccak import selector as compute_selector
from .payload import MAX_UINT256, TransactionPayload

PATTERNS = (
    "UnlimitedApprovalPhish",
    "ObfuscatedCalldata",
    "UiMismatch",
    "DelegateHijack",
    "CleanTransfer",
    "CleanSwap",
)
ADVERSARIAL_PATTERNS = PATTERNS[:4]
CLEAN_PATTERNS = PATTERNS[4:]

DEFAULT_PATTERN_MIX = {
    "UnlimitedApprovalPhish": 0.075,
    "ObfuscatedCalldata": 0.075,
    "UiMismatch": 0.075,
    "DelegateHijack": 0.075,
    "CleanTransfer": 0.4,
    "CleanSwap": 0.3,
}

# Fixed scenario addresses; the shipped policies allowlist the trusted peers
# and register the protocol contracts.
USER_ADDRESS = "0x" + "a1" * 20
TRUSTED_PEERS = tuple("0x" + f"b{i}" * 20 for i in range(2, 6))
KNOWN_PROTOCOLS = ("0x" + "c2" * 20, "0x" + "c3" * 20)
TOKEN_ADDRESS = "0x" + "d4" * 20
GOV_TOKEN_ADDRESS = "0x" + "d5" * 20
WRAPPED_NATIVE = "0x" + "d6" * 20

ETH = 10 ** 18

# A small slice of clean-transfer claims echoes the sender address the way
# some wallet UIs do; under a policy that keeps raw claim text this is the
# leak the sanitization audit exists to catch.
SENDER_ECHO_RATE = 0.002


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSpec:
    size: int
    adversarial_fraction: float = 0.3
    pattern_mix: dict = field(default_factory=lambda: dict(DEFAULT_PATTERN_MIX))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.size < 0:
            raise CorpusError("size must be nonnegative")
        if not 0.0 <= self.adversarial_fraction <= 1.0:
            raise CorpusError("adversarial_fraction must be in [0, 1]")
        unknown = set(self.pattern_mix) - set(PATTERNS)
        if unknown:
            raise CorpusError(f"unknown patterns in mix: {sorted(unknown)}")
        total = sum(self.pattern_mix.values())
        if self.pattern_mix and abs(total - 1.0) > 1e-9:
            raise CorpusError(f"pattern mix weights sum to {total}, not 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "CorpusSpec":
        return cls(
            size=int(doc["size"]),
            adversarial_fraction=float(doc.get("adversarial_fraction", 0.3)),
            pattern_mix=dict(doc.get("pattern_mix", DEFAULT_PATTERN_MIX)),
            seed=int(doc.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "adversarial_fraction": self.adversarial_fraction,
            "pattern_mix": dict(self.pattern_mix),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class LabeledTransaction:
    payload: TransactionPayload
    ground_truth: str  # "safe" | "unsafe"
    pattern: str

    def to_dict(self) -> dict:
        return {
            "payload": self.payload.to_dict(),
            "ground_truth": self.ground_truth,
            "pattern": self.pattern,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LabeledTransaction":
        return cls(
            payload=TransactionPayload.from_dict(doc["payload"]),
            ground_truth=doc["ground_truth"],
            pattern=doc["pattern"],
        )


def derive_seed(base: int, index: int, salt: str = "item") -> int:
    """Counter-based per-item seed; stable across worker counts."""
    digest = hashlib.sha256(f"{salt}:{base}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _quota(total: int, weights: dict[str, float]) -> dict[str, int]:
    """Largest-remainder allocation; counts stay within +-1 of expectation."""
    if total == 0 or not weights:
        return {name: 0 for name in weights}
    scale = sum(weights.values())
    shares = {name: total * w / scale for name, w in weights.items()}
    counts = {name: int(share) for name, share in shares.items()}
    leftover = total - sum(counts.values())
    by_remainder = sorted(weights, key=lambda n: (-(shares[n] - counts[n]), n))
    for name in by_remainder[:leftover]:
        counts[name] += 1
    return counts


def _calldata(signature: str, values: list) -> bytes:
    return compute_selector(signature) + encode_args(parse_arg_types(signature), values)


def _address(rng: random.Random) -> str:
    return "0x" + bytes(rng.randrange(256) for _ in range(20)).hex()


def _base_tx(rng: random.Random, destination: str, value: int, calldata: bytes,
             ui_claim: str | None) -> TransactionPayload:
    return TransactionPayload(
        chain_id=1,
        sender=USER_ADDRESS,
        destination=destination,
        value=value,
        calldata=calldata,
        gas_limit=rng.randrange(21_000, 400_000),
        nonce=rng.randrange(0, 5_000),
        ui_claim=ui_claim,
    )


def _gen_clean_transfer(rng: random.Random) -> LabeledTransaction:
    peer = rng.choice(TRUSTED_PEERS)
    if rng.random() < 0.5:
        amount = rng.randrange(ETH // 100, 5 * ETH)
        eth_amount = amount / ETH
        claim = f"Send {eth_amount:.2f} ETH to {peer}"
        if rng.random() < SENDER_ECHO_RATE:
            claim = f"Send {eth_amount:.2f} ETH from {USER_ADDRESS} to {peer}"
        payload = _base_tx(rng, peer, amount, b"", claim)
    else:
        amount = rng.randrange(1, 10_000) * ETH
        calldata = _calldata("transfer(address,uint256)", [peer, amount])
        payload = _base_tx(rng, TOKEN_ADDRESS, 0, calldata, f"Transfer tokens to {peer}")
    return LabeledTransaction(payload, "safe", "CleanTransfer")


def _gen_clean_swap(rng: random.Random) -> LabeledTransaction:
    router = rng.choice(KNOWN_PROTOCOLS)
    amount_in = rng.randrange(1, 2_000) * ETH
    calldata = _calldata(
        "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)",
        [amount_in, amount_in * 99 // 100, (TOKEN_ADDRESS, WRAPPED_NATIVE),
         USER_ADDRESS, 1_700_000_000 + rng.randrange(0, 100_000)],
    )
    payload = _base_tx(rng, router, 0, calldata, "Swap tokens at the best rate")
    return LabeledTransaction(payload, "safe", "CleanSwap")


def _gen_unlimited_phish(rng: random.Random) -> LabeledTransaction:
    attacker = _address(rng)
    variant = rng.randrange(3)
    if variant == 0:
        calldata = _calldata("approve(address,uint256)", [attacker, MAX_UINT256])
    elif variant == 1:
        calldata = _calldata("setApprovalForAll(address,bool)", [attacker, True])
    else:
        calldata = _calldata(
            "permit(address,address,uint256,uint256,uint8,bytes32,bytes32)",
            [USER_ADDRESS, attacker, MAX_UINT256, 1_800_000_000, 27,
             bytes(32), bytes(32)],
        )
    claim = rng.choice(("Claim your free NFT reward", "Verify wallet to continue", None))
    payload = _base_tx(rng, TOKEN_ADDRESS, 0, calldata, claim)
    return LabeledTransaction(payload, "unsafe", "UnlimitedApprovalPhish")


def _gen_obfuscated(rng: random.Random) -> LabeledTransaction:
    attacker = _address(rng)
    sel = bytes(rng.randrange(256) for _ in range(4))
    body = bytes(rng.randrange(256) for _ in range(rng.randrange(32, 160)))
    value = rng.randrange(ETH // 10, 2 * ETH)  # drains carry value
    claim = rng.choice(("Complete transaction", None))
    payload = _base_tx(rng, attacker, value, sel + body, claim)
    return LabeledTransaction(payload, "unsafe", "ObfuscatedCalldata")


def _gen_ui_mismatch(rng: random.Random) -> LabeledTransaction:
    attacker = _address(rng)
    amount = rng.randrange(100, 5_000) * ETH  # moderate, below the near-max flag
    calldata = _calldata("approve(address,uint256)", [attacker, amount])
    claim = f"Swap {rng.randrange(50, 500)} USDC for ETH"
    payload = _base_tx(rng, TOKEN_ADDRESS, 0, calldata, claim)
    return LabeledTransaction(payload, "unsafe", "UiMismatch")


def _gen_delegate_hijack(rng: random.Random) -> LabeledTransaction:
    attacker = _address(rng)
    calldata = _calldata("delegate(address)", [attacker])
    claim = rng.choice(("Claim staking rewards", None))
    payload = _base_tx(rng, GOV_TOKEN_ADDRESS, 0, calldata, claim)
    return LabeledTransaction(payload, "unsafe", "DelegateHijack")


_GENERATORS = {
    "CleanTransfer": _gen_clean_transfer,
    "CleanSwap": _gen_clean_swap,
    "UnlimitedApprovalPhish": _gen_unlimited_phish,
    "ObfuscatedCalldata": _gen_obfuscated,
    "UiMismatch": _gen_ui_mismatch,
    "DelegateHijack": _gen_delegate_hijack,
}


def generate_corpus(spec: CorpusSpec) -> list[LabeledTransaction]:
    """Exactly spec.size labeled items; byte-identical for the same spec."""
    adversarial_total = round(spec.size * spec.adversarial_fraction)
    clean_total = spec.size - adversarial_total
    adv_weights = {p: spec.pattern_mix.get(p, 0.0) for p in ADVERSARIAL_PATTERNS}
    clean_weights = {p: spec.pattern_mix.get(p, 0.0) for p in CLEAN_PATTERNS}
    if adversarial_total and not any(adv_weights.values()):
        adv_weights = {p: 1.0 for p in ADVERSARIAL_PATTERNS}
    if clean_total and not any(clean_weights.values()):
        clean_weights = {p: 1.0 for p in CLEAN_PATTERNS}
    counts = _quota(adversarial_total, adv_weights)
    counts.update(_quota(clean_total, clean_weights))

    assignment: list[str] = []
    for pattern in PATTERNS:
        assignment.extend([pattern] * counts.get(pattern, 0))
    random.Random(derive_seed(spec.seed, 0, "shuffle")).shuffle(assignment)

    items = []
    for index, pattern in enumerate(assignment):
        rng = random.Random(derive_seed(spec.seed, index, "gen"))
        items.append(_GENERATORS[pattern](rng))
    return items


def corpus_to_jsonl(items: list[LabeledTransaction]) -> str:
    return "\n".join(json.dumps(item.to_dict(), sort_keys=True) for item in items) + (
        "\n" if items else "")


def corpus_from_jsonl(text: str) -> list[LabeledTransaction]:
    items = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            items.append(LabeledTransaction.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CorpusError(f"bad corpus line {line_no}: {exc}") from exc
    return items
