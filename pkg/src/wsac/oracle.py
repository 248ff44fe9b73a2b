"""Aggression-limited payoff and the exponentiated-weights policy oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cmdp import ConfigurationError, Policy


@dataclass(frozen=True, eq=False)
class PayoffTable:
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("payoff table has non-finite entries")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)


def _vals(f) -> np.ndarray:
    return np.asarray(getattr(f, "values", f), dtype=float)


def aggression_limited_payoff(f_r, f_c, lam: float, pi_ref: Policy) -> PayoffTable:
    """u(s,a) = f_r(s,a) - lam * max(f_c(s,a) - f_c(s, pi_ref), 0)."""
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    fr, fc = _vals(f_r), _vals(f_c)
    if fr.shape != fc.shape or fr.shape != pi_ref.probs.shape:
        raise ConfigurationError("payoff inputs differ in shape")
    ref_cost = (pi_ref.probs * fc).sum(axis=1, keepdims=True)
    return PayoffTable(fr - lam * np.maximum(fc - ref_cost, 0.0))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class OracleState:
    """Current iterate of pi_{k+1}(a|s) ∝ pi_k(a|s) exp(eta * u_k(s,a)).

    Accumulated log-weights are kept alongside the policy so that actions whose
    probability underflows can still recover.
    """

    policy: Policy
    eta: float
    k_total: int
    step: int = 0
    logits: np.ndarray | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        if self.step > self.k_total:
            raise ConfigurationError("step exceeds planned horizon")
        if self.logits is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "logits", np.log(self.policy.probs))

    @classmethod
    def start(cls, n_states: int, n_actions: int, eta: float, k_total: int) -> "OracleState":
        return cls(Policy.uniform(n_states, n_actions), eta, k_total)


def po_update(state: OracleState, u) -> OracleState:
    payoff = np.asarray(getattr(u, "u", u), dtype=float)
    if not np.all(np.isfinite(payoff)):
        raise FloatingPointError("payoff table has non-finite entries")
    if payoff.shape != state.policy.probs.shape:
        raise ConfigurationError("payoff shape does not match policy")
    if state.step >= state.k_total:
        raise ConfigurationError("oracle already performed its planned number of updates")
    # Per-state max subtraction: a no-op for the softmax, keeps logits bounded.
    shifted = payoff - payoff.max(axis=1, keepdims=True)
    logits = state.logits + state.eta * shifted
    logits = logits - logits.max(axis=1, keepdims=True)
    probs = _softmax_rows(logits)
    return replace(state, policy=Policy(probs), step=state.step + 1, logits=logits)


def default_eta(n_actions: float, v_max: float, k: int) -> float:
    """sqrt(log|A| / (2 V_max^2 K))."""
    if n_actions <= 0 or v_max <= 0 or k <= 0:
        raise ConfigurationError("n_actions, v_max and k must be positive")
    return math.sqrt(math.log(n_actions) / (2.0 * v_max**2 * k))


def regret_audit(payoffs: Sequence, iterates: Sequence[Policy], comparator: Policy, comparator_occ) -> float:
    """(1/K) sum_k E_{s ~ d^comp}[u_k(s, comp) - u_k(s, pi_k)]."""
    if len(payoffs) != len(iterates):
        raise ConfigurationError(f"{len(payoffs)} payoffs but {len(iterates)} iterates")
    if not payoffs:
        raise ConfigurationError("need at least one round")
    occ = np.asarray(getattr(comparator_occ, "d", comparator_occ), dtype=float)
    d_state = occ.sum(axis=1) if occ.ndim == 2 else occ
    total = 0.0
    for u, pi in zip(payoffs, iterates):
        table = np.asarray(getattr(u, "u", u), dtype=float)
        gap = ((comparator.probs - pi.probs) * table).sum(axis=1)
        total += float(d_state @ gap)
    return total / len(payoffs)
