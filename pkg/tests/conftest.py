from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wsac import Cmdp, Policy

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_cmdp(rng: np.random.Generator, S: int, A: int, gamma: float | None = None,
                sparse: bool = False) -> Cmdp:
    """Random instance; ``sparse`` zeroes some transition entries to exercise support edge cases."""
    P = rng.dirichlet(np.ones(S), size=(S, A))
    if sparse and S > 1:
        mask = rng.random((S, A, S)) < 0.4
        mask[..., 0] = False  # keep at least one entry per row
        P = np.where(mask, 0.0, P)
        P = P / P.sum(axis=2, keepdims=True)
    R = rng.random((S, A))
    C = rng.uniform(-1, 1, (S, A))
    g = float(rng.uniform(0.0, 0.95)) if gamma is None else gamma
    rho = rng.dirichlet(np.ones(S))
    return Cmdp(S, A, P, R, C, g, rho)


def random_policy(rng: np.random.Generator, S: int, A: int, deterministic: bool = False) -> Policy:
    if deterministic:
        return Policy.deterministic(rng.integers(0, A, S), A)
    return Policy(rng.dirichlet(np.ones(A), size=S))


def chain2(gamma: float = 0.9) -> Cmdp:
    """s0 -> s1 deterministically, s1 absorbing; reward 1 only in s1; start in s0."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    R = np.array([[0.0], [1.0]])
    C = np.array([[0.5], [-0.5]])
    return Cmdp(2, 1, P, R, C, gamma, np.array([1.0, 0.0]))


def chain2_two_actions(gamma: float = 0.9) -> Cmdp:
    """Two-action chain: action 0 moves to / stays in s1, action 1 goes to / stays in s0."""
    P = np.zeros((2, 2, 2))
    P[:, 0, 1] = 1.0
    P[:, 1, 0] = 1.0
    R = np.array([[0.0, 0.2], [1.0, 0.3]])
    C = np.array([[0.1, -0.2], [0.6, -0.1]])
    return Cmdp(2, 2, P, R, C, gamma, np.array([1.0, 0.0]))


def mc_values(cmdp: Cmdp, policy: Policy, start: int, n: int, rng: np.random.Generator, kind: str = "reward"):
    """Monte Carlo V(start) with geometric termination: the undiscounted return
    until a Bernoulli(1 - gamma) stop is an unbiased estimate of V. Returns (mean, stderr)."""
    table = cmdp.reward if kind == "reward" else cmdp.cost
    S, A = cmdp.n_states, cmdp.n_actions
    s = np.full(n, start)
    ret = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    pcdf = np.cumsum(policy.probs, axis=1)
    tcdf = np.cumsum(cmdp.transition, axis=2)
    while alive.any():
        idx = np.flatnonzero(alive)
        a = np.minimum((rng.random(idx.size)[:, None] >= pcdf[s[idx]]).sum(axis=1), A - 1)
        ret[idx] += table[s[idx], a]
        nxt = np.minimum((rng.random(idx.size)[:, None] >= tcdf[s[idx], a]).sum(axis=1), S - 1)
        s[idx] = nxt
        stop = rng.random(idx.size) >= cmdp.gamma
        alive[idx[stop]] = False
    return float(ret.mean()), float(ret.std(ddof=1) / np.sqrt(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
