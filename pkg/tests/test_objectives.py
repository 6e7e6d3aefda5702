"""Loss evaluators against independent direct-summation oracles.

The oracles below use plain loops and math.fsum, no numpy, and predate the
implementations they check.
"""

import math
import random

import pytest

from dmind3.objectives import (C3Input, HpsInput, NonFiniteInputError,
                               ShapeMismatchError, SupportMismatchError,
                               SupportViolationError, c3_loss, hps_loss,
                               kl_divergence)


def hps_oracle(inp: HpsInput) -> float:
    terms = []
    for row in inp.log_probs:
        for weight, log_prob in zip(inp.omega, row):
            terms.append(-weight * log_prob)
    penalties = []
    for theta, ref in zip(inp.layers_theta, inp.layers_ref):
        squares = []
        for theta_row, ref_row in zip(theta, ref):
            for a, b in zip(theta_row, ref_row):
                squares.append((a - b) ** 2)
        penalties.append(math.sqrt(math.fsum(squares)))
    return math.fsum(terms) + inp.lam * math.fsum(penalties)


def c3_oracle(inp: C3Input) -> float:
    terms = [-a * lp for a, lp in zip(inp.alpha, inp.log_probs_pos)]
    kl_terms = []
    for p, q in zip(inp.pi_theta, inp.pi_ref):
        if p > 0:
            kl_terms.append(p * math.log(p / q))
    return math.fsum(terms) + inp.lam * math.fsum(kl_terms)


def _random_hps(rng: random.Random) -> HpsInput:
    t, m, layers = rng.randint(1, 5), rng.randint(1, 4), rng.randint(0, 3)
    shapes = [(rng.randint(1, 4), rng.randint(1, 4)) for _ in range(layers)]
    return HpsInput(
        log_probs=tuple(tuple(-rng.expovariate(1.0) for _ in range(m)) for _ in range(t)),
        omega=tuple(rng.uniform(0, 2) for _ in range(m)),
        layers_theta=tuple(
            tuple(tuple(rng.uniform(-3, 3) for _ in range(c)) for _ in range(r))
            for r, c in shapes),
        layers_ref=tuple(
            tuple(tuple(rng.uniform(-3, 3) for _ in range(c)) for _ in range(r))
            for r, c in shapes),
        lam=rng.uniform(0, 2),
    )


def _random_distribution(rng: random.Random, size: int) -> tuple:
    raw = [rng.uniform(0.05, 1.0) for _ in range(size)]
    total = sum(raw)
    return tuple(x / total for x in raw)


def _random_c3(rng: random.Random) -> C3Input:
    t, support = rng.randint(1, 6), rng.randint(2, 6)
    return C3Input(
        alpha=tuple(rng.uniform(0, 3) for _ in range(t)),
        log_probs_pos=tuple(-rng.expovariate(1.0) for _ in range(t)),
        pi_theta=_random_distribution(rng, support),
        pi_ref=_random_distribution(rng, support),
        lam=rng.uniform(0, 2),
    )


# ---------------------------------------------------------------------------
# closed-form fixtures

def test_hps_zero_case():
    inp = HpsInput(log_probs=((0.0, 0.0), (0.0, 0.0)), omega=(1.0, 0.5),
                   layers_theta=(((1.0, 2.0),),), layers_ref=(((1.0, 2.0),),), lam=3.0)
    assert hps_loss(inp) == 0.0


def test_hps_frobenius_five():
    inp = HpsInput(log_probs=((0.0,),), omega=(1.0,),
                   layers_theta=(((3.0, 4.0), (0.0, 0.0)),),
                   layers_ref=(((0.0, 0.0), (0.0, 0.0)),), lam=1.0)
    assert hps_loss(inp) == 5.0


def test_hps_linear_in_omega():
    rng = random.Random(4)
    inp = _random_hps(rng)
    base = HpsInput(inp.log_probs, inp.omega, (), (), 0.0)
    doubled = HpsInput(inp.log_probs, tuple(2 * w for w in inp.omega), (), (), 0.0)
    assert hps_loss(doubled) == pytest.approx(2 * hps_loss(base), rel=1e-12)


def test_c3_zero_case():
    inp = C3Input(alpha=(1.0, 1.0), log_probs_pos=(0.0, 0.0),
                  pi_theta=(0.5, 0.5), pi_ref=(0.5, 0.5), lam=2.0)
    assert c3_loss(inp) == 0.0


def test_c3_alpha_scaling():
    rng = random.Random(8)
    inp = _random_c3(rng)
    scaled = C3Input(tuple(3.0 * a for a in inp.alpha), inp.log_probs_pos,
                     inp.pi_theta, inp.pi_ref, inp.lam)
    kl = kl_divergence(inp.pi_theta, inp.pi_ref)
    first = c3_loss(inp) - inp.lam * kl
    assert c3_loss(scaled) - inp.lam * kl == pytest.approx(3.0 * first, rel=1e-9)


def test_kl_identical_zero():
    assert kl_divergence((0.3, 0.7), (0.3, 0.7)) == 0.0


def test_kl_log_two():
    assert kl_divergence((1.0, 0.0), (0.5, 0.5)) == pytest.approx(math.log(2), rel=1e-12)


# ---------------------------------------------------------------------------
# errors

def test_hps_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        hps_loss(HpsInput(log_probs=((0.0, 0.0),), omega=(1.0,),
                          layers_theta=(), layers_ref=(), lam=0.0))
    with pytest.raises(ShapeMismatchError):
        hps_loss(HpsInput(log_probs=((0.0,),), omega=(1.0,),
                          layers_theta=(((1.0,),),), layers_ref=(((1.0, 2.0),),), lam=1.0))


def test_hps_non_finite():
    with pytest.raises(NonFiniteInputError):
        hps_loss(HpsInput(log_probs=((float("nan"),),), omega=(1.0,),
                          layers_theta=(), layers_ref=(), lam=0.0))


def test_c3_errors():
    with pytest.raises(ShapeMismatchError):
        c3_loss(C3Input(alpha=(1.0, 1.0), log_probs_pos=(0.0,),
                        pi_theta=(1.0,), pi_ref=(1.0,), lam=0.0))
    with pytest.raises(SupportMismatchError):
        c3_loss(C3Input(alpha=(1.0,), log_probs_pos=(0.0,),
                        pi_theta=(0.5, 0.5), pi_ref=(1.0,), lam=1.0))
    with pytest.raises(NonFiniteInputError):
        c3_loss(C3Input(alpha=(float("inf"),), log_probs_pos=(0.0,),
                        pi_theta=(1.0,), pi_ref=(1.0,), lam=0.0))


def test_kl_support_violation():
    with pytest.raises(SupportViolationError):
        kl_divergence((0.5, 0.5), (1.0, 0.0))


def test_kl_not_normalized():
    with pytest.raises(SupportMismatchError):
        kl_divergence((0.5, 0.6), (0.5, 0.5))


# ---------------------------------------------------------------------------
# oracle equivalence and properties (full sizes run in the acceptance suite)

def test_hps_matches_oracle():
    rng = random.Random(101)
    for _ in range(300):
        inp = _random_hps(rng)
        expected = hps_oracle(inp)
        got = hps_loss(inp)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-15)
        assert got >= 0.0


def test_c3_matches_oracle():
    rng = random.Random(202)
    for _ in range(300):
        inp = _random_c3(rng)
        got = c3_loss(inp)
        assert got == pytest.approx(c3_oracle(inp), rel=1e-12, abs=1e-15)
        assert got >= 0.0  # log-probs <= 0 and nonnegative weights


def test_kl_nonnegative_sampled():
    rng = random.Random(303)
    for _ in range(10_000):
        size = rng.randint(2, 8)
        p = _random_distribution(rng, size)
        q = _random_distribution(rng, size)
        kl = kl_divergence(p, q)
        assert kl >= 0.0
        if max(abs(a - b) for a, b in zip(p, q)) > 0.05:
            assert kl > 0.0  # zero only at equality
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-9)
