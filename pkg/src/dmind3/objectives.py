"""Pure reference evaluators for the two training losses; no training loop.

Both evaluators score one instance; averaging over a dataset is the
caller's job. Natural logarithms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ObjectiveError(ValueError):
    pass


class ShapeMismatchError(ObjectiveError):
    pass


class SupportMismatchError(ObjectiveError):
    pass


class SupportViolationError(ObjectiveError):
    pass


class NonFiniteInputError(ObjectiveError):
    pass


@dataclass(frozen=True)
class HpsInput:
    log_probs: tuple            # [t][i], each <= 0
    omega: tuple                # modality weights, length M
    layers_theta: tuple         # L matrices
    layers_ref: tuple           # L matrices, shapes match layers_theta
    lam: float = 0.0

    @classmethod
    def from_dict(cls, doc: dict) -> "HpsInput":
        return cls(
            log_probs=tuple(tuple(row) for row in doc["log_probs"]),
            omega=tuple(doc["omega"]),
            layers_theta=tuple(doc.get("layers_theta", [])),
            layers_ref=tuple(doc.get("layers_ref", [])),
            lam=float(doc.get("lambda", 0.0)),
        )


@dataclass(frozen=True)
class C3Input:
    alpha: tuple                # step weights, length T
    log_probs_pos: tuple        # length T, each <= 0
    pi_theta: tuple             # distribution over shared support
    pi_ref: tuple
    lam: float = 0.0

    @classmethod
    def from_dict(cls, doc: dict) -> "C3Input":
        return cls(
            alpha=tuple(doc["alpha"]),
            log_probs_pos=tuple(doc["log_probs_pos"]),
            pi_theta=tuple(doc["pi_theta"]),
            pi_ref=tuple(doc["pi_ref"]),
            lam=float(doc.get("lambda", 0.0)),
        )


def _require_finite(array: np.ndarray, what: str) -> None:
    if array.size and not np.all(np.isfinite(array)):
        raise NonFiniteInputError(f"{what} contains non-finite values")


def hps_loss(inp: HpsInput) -> float:
    """-sum_t sum_i omega_i * log_probs[t][i] + lambda * sum_l ||theta_l - ref_l||_F."""
    log_probs = np.asarray(inp.log_probs, dtype=float)
    omega = np.asarray(inp.omega, dtype=float)
    if log_probs.ndim != 2:
        raise ShapeMismatchError("log_probs must be a T x M matrix")
    if omega.ndim != 1 or omega.shape[0] != log_probs.shape[1]:
        raise ShapeMismatchError(
            f"omega length {omega.shape} does not match modality count {log_probs.shape[1]}")
    _require_finite(log_probs, "log_probs")
    _require_finite(omega, "omega")

    if len(inp.layers_theta) != len(inp.layers_ref):
        raise ShapeMismatchError("layer lists differ in length")
    penalty = 0.0
    for theta_l, ref_l in zip(inp.layers_theta, inp.layers_ref):
        a = np.asarray(theta_l, dtype=float)
        b = np.asarray(ref_l, dtype=float)
        if a.shape != b.shape:
            raise ShapeMismatchError(f"layer shapes differ: {a.shape} vs {b.shape}")
        _require_finite(a, "layers_theta")
        _require_finite(b, "layers_ref")
        penalty += float(np.sqrt(np.sum((a - b) ** 2)))
    nll = -float(np.sum(log_probs * omega[np.newaxis, :])) if log_probs.size else 0.0
    return nll + inp.lam * penalty


def c3_loss(inp: C3Input) -> float:
    """-sum_t alpha_t * log_probs_pos[t] + lambda * KL(pi_theta || pi_ref)."""
    alpha = np.asarray(inp.alpha, dtype=float)
    log_probs = np.asarray(inp.log_probs_pos, dtype=float)
    if alpha.shape != log_probs.shape or alpha.ndim != 1:
        raise ShapeMismatchError("alpha and log_probs_pos must be equal-length vectors")
    _require_finite(alpha, "alpha")
    _require_finite(log_probs, "log_probs_pos")
    kl = kl_divergence(inp.pi_theta, inp.pi_ref)
    nll = -float(np.sum(alpha * log_probs)) if alpha.size else 0.0
    return nll + inp.lam * kl


def kl_divergence(p, q) -> float:
    """sum_k p_k * log(p_k / q_k) with 0 * log(0/q) = 0; requires absolute
    continuity (q_k = 0 implies p_k = 0) and matching supports."""
    p_arr = np.asarray(p, dtype=float)
    q_arr = np.asarray(q, dtype=float)
    if p_arr.shape != q_arr.shape or p_arr.ndim != 1:
        raise SupportMismatchError("distributions must share one finite support")
    _require_finite(p_arr, "p")
    _require_finite(q_arr, "q")
    if np.any(p_arr < 0) or np.any(q_arr < 0):
        raise NonFiniteInputError("distributions must be nonnegative")
    for total, name in ((p_arr.sum(), "p"), (q_arr.sum(), "q")):
        if abs(total - 1.0) > 1e-9:
            raise SupportMismatchError(f"{name} sums to {total}, not 1")
    total = 0.0
    for pk, qk in zip(p_arr, q_arr):
        if pk == 0.0:
            continue
        if qk == 0.0:
            raise SupportViolationError("p has mass where q has none")
        total += pk * math.log(pk / qk)
    return total
