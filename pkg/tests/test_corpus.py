from collections import Counter

import pytest

from dmind3.corpus import (ADVERSARIAL_PATTERNS, CorpusError, CorpusSpec,
                           DEFAULT_PATTERN_MIX, PATTERNS,
                           corpus_from_jsonl, corpus_to_jsonl, derive_seed,
                           generate_corpus)
from dmind3.intent import ActionKind, CallKind, SelectorRegistry, decode_calldata
from dmind3.payload import MAX_UINT256


def test_generation_is_deterministic():
    spec = CorpusSpec(size=300, adversarial_fraction=0.3, seed=42)
    first = corpus_to_jsonl(generate_corpus(spec))
    second = corpus_to_jsonl(generate_corpus(spec))
    assert first == second

    different = corpus_to_jsonl(generate_corpus(
        CorpusSpec(size=300, adversarial_fraction=0.3, seed=43)))
    assert different != first


def test_zero_adversarial_fraction_all_safe():
    corpus = generate_corpus(CorpusSpec(size=200, adversarial_fraction=0.0, seed=1))
    assert all(item.ground_truth == "safe" for item in corpus)


def test_pattern_quota_within_one_of_expectation():
    spec = CorpusSpec(size=1000, adversarial_fraction=0.3, seed=9)
    counts = Counter(item.pattern for item in generate_corpus(spec))
    assert sum(counts.values()) == 1000
    adversarial = sum(counts[p] for p in ADVERSARIAL_PATTERNS)
    assert adversarial == 300
    for pattern in PATTERNS:
        if pattern in ADVERSARIAL_PATTERNS:
            share = DEFAULT_PATTERN_MIX[pattern] / 0.3
            expected = 300 * share
        else:
            share = DEFAULT_PATTERN_MIX[pattern] / 0.7
            expected = 700 * share
        assert abs(counts[pattern] - expected) <= 1


def test_labels_follow_patterns():
    corpus = generate_corpus(CorpusSpec(size=400, adversarial_fraction=0.5, seed=3))
    for item in corpus:
        expected = "unsafe" if item.pattern in ADVERSARIAL_PATTERNS else "safe"
        assert item.ground_truth == expected


def test_unlimited_phish_decodes_to_near_max_grant():
    registry = SelectorRegistry.default()
    corpus = generate_corpus(CorpusSpec(
        size=60, adversarial_fraction=1.0, seed=5,
        pattern_mix={"UnlimitedApprovalPhish": 1.0}))
    for item in corpus:
        decoded = decode_calldata(item.payload, registry)
        assert decoded.kind is CallKind.KNOWN_FUNCTION
        entry_action = registry.lookup(decoded.selector).action
        assert entry_action in (ActionKind.APPROVE, ActionKind.PERMIT)
        sig = decoded.signature
        if sig == "setApprovalForAll(address,bool)":
            assert decoded.args[1] is True
        else:
            amount_index = 2 if sig.startswith("permit") else 1
            assert decoded.args[amount_index] == MAX_UINT256


def test_jsonl_roundtrip():
    corpus = generate_corpus(CorpusSpec(size=50, adversarial_fraction=0.4, seed=7))
    text = corpus_to_jsonl(corpus)
    parsed = corpus_from_jsonl(text)
    assert parsed == corpus


def test_jsonl_rejects_garbage():
    with pytest.raises(CorpusError):
        corpus_from_jsonl('{"payload": "nope"}\n')


def test_spec_validation():
    with pytest.raises(CorpusError):
        CorpusSpec(size=-1)
    with pytest.raises(CorpusError):
        CorpusSpec(size=10, adversarial_fraction=1.5)
    with pytest.raises(CorpusError):
        CorpusSpec(size=10, pattern_mix={"Nonsense": 1.0})
    with pytest.raises(CorpusError):
        CorpusSpec(size=10, pattern_mix={"CleanSwap": 0.4})


def test_derive_seed_stable_and_distinct():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert derive_seed(7, 3) != derive_seed(7, 4)
    assert derive_seed(7, 3) != derive_seed(8, 3)
    assert derive_seed(7, 3, "a") != derive_seed(7, 3, "b")


def test_empty_corpus():
    assert generate_corpus(CorpusSpec(size=0, seed=1)) == []
    assert corpus_to_jsonl([]) == ""
