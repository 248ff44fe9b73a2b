"""Exact tabular CMDP machinery: evaluation, occupancies, Bellman operators,
density ratios and an optimal safe policy solver.

Costs are stored already shifted by the budget, so a policy is safe iff
``J_c <= 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .simplex import LPInfeasible, solve_lp

PROB_TOL = 1e-12
FIXED_POINT_TOL = 1e-9
SUPPORT_ATOL = 1e-12


class ConfigurationError(ValueError):
    """Inputs with inconsistent shapes or out-of-range parameters."""


class CoverageError(ValueError):
    """Target occupancy puts mass where the behavior occupancy has none."""

    def __init__(self, state: int, action: int, mass: float):
        super().__init__(
            f"target occupancy has mass {mass:.3e} at (s={state}, a={action}) "
            "where the behavior occupancy is zero"
        )
        self.state = state
        self.action = action


class InfeasibleError(Exception):
    def __init__(self, min_cost: float):
        super().__init__(f"no policy satisfies J_c <= 0; minimal achievable J_c = {min_cost:.6g}")
        self.min_cost = min_cost


def _readonly(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Cmdp:
    n_states: int
    n_actions: int
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A) in [0, 1]
    cost: np.ndarray  # (S, A) in [-1, 1]
    gamma: float
    initial_dist: np.ndarray  # (S,)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        S, A = int(self.n_states), int(self.n_actions)
        if S < 1 or A < 1:
            raise ConfigurationError("n_states and n_actions must be positive")
        object.__setattr__(self, "n_states", S)
        object.__setattr__(self, "n_actions", A)
        P = _readonly(self.transition)
        R = _readonly(self.reward)
        C = _readonly(self.cost)
        rho = _readonly(self.initial_dist)
        if P.shape != (S, A, S) or R.shape != (S, A) or C.shape != (S, A) or rho.shape != (S,):
            raise ConfigurationError(
                f"shape mismatch: P{P.shape} R{R.shape} C{C.shape} rho{rho.shape} for S={S}, A={A}"
            )
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > PROB_TOL:
            raise ConfigurationError("transition rows must be nonnegative and sum to 1")
        if np.any(R < 0) or np.any(R > 1):
            raise ConfigurationError("reward entries must lie in [0, 1]")
        if np.any(C < -1) or np.any(C > 1):
            raise ConfigurationError("cost entries must lie in [-1, 1]")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > PROB_TOL:
            raise ConfigurationError("initial distribution must be a probability vector")
        if not 0.0 <= float(self.gamma) < 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "initial_dist", rho)

    @property
    def v_max(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    @classmethod
    def with_budget(cls, transition, reward, raw_cost, budget: float, gamma: float, initial_dist, **kw) -> "Cmdp":
        """Fold a per-step cost budget into the model: stores ``raw_cost - budget``."""
        return cls(
            n_states=np.shape(reward)[0],
            n_actions=np.shape(reward)[1],
            transition=transition,
            reward=reward,
            cost=np.asarray(raw_cost, dtype=float) - budget,
            gamma=gamma,
            initial_dist=initial_dist,
            **kw,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "rho": self.initial_dist.tolist(),
            "P": self.transition.tolist(),
            "R": self.reward.tolist(),
            "C": self.cost.tolist(),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Cmdp":
        return cls(
            n_states=doc["n_states"],
            n_actions=doc["n_actions"],
            transition=doc["P"],
            reward=doc["R"],
            cost=doc["C"],
            gamma=doc["gamma"],
            initial_dist=doc["rho"],
            metadata=dict(doc.get("metadata") or {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Cmdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        p = _readonly(self.probs)
        if p.ndim != 2:
            raise ConfigurationError(f"policy table must be 2-d, got shape {p.shape}")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > PROB_TOL:
            raise ConfigurationError("policy rows must be probability distributions")
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    def to_dict(self) -> dict[str, Any]:
        return {"probs": self.probs.tolist()}


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """Uniform per-episode mixture: draw one member at the start, follow it."""

    members: tuple[Policy, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ConfigurationError("mixture needs at least one member")
        shape = members[0].probs.shape
        if any(m.probs.shape != shape for m in members):
            raise ConfigurationError("mixture members must share (n_states, n_actions)")
        object.__setattr__(self, "members", members)

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self.members), 1.0 / len(self.members))

    def to_dict(self) -> dict[str, Any]:
        return {"members": [m.probs.tolist() for m in self.members]}


def policy_from_dict(doc: dict[str, Any]) -> Policy | MixturePolicy:
    if "members" in doc:
        return MixturePolicy(tuple(Policy(m) for m in doc["members"]))
    return Policy(doc["probs"])


@dataclass(frozen=True)
class ValueBundle:
    v_r: np.ndarray
    v_c: np.ndarray
    q_r: np.ndarray
    q_c: np.ndarray
    j_r: float
    j_c: float


@dataclass(frozen=True, eq=False)
class Occupancy:
    d: np.ndarray  # (S, A)

    def __post_init__(self):
        d = _readonly(self.d)
        if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
            raise ConfigurationError("occupancy must be nonnegative and sum to 1")
        object.__setattr__(self, "d", d)

    @property
    def state_marginal(self) -> np.ndarray:
        return self.d.sum(axis=1)


def _check_policy(cmdp: Cmdp, policy: Policy) -> None:
    if policy.probs.shape != (cmdp.n_states, cmdp.n_actions):
        raise ConfigurationError(
            f"policy shape {policy.probs.shape} does not match CMDP ({cmdp.n_states}, {cmdp.n_actions})"
        )


def policy_transition(cmdp: Cmdp, policy: Policy) -> np.ndarray:
    """State-to-state kernel P^pi[s, s'] under the policy."""
    return np.einsum("sa,sat->st", policy.probs, cmdp.transition)


def policy_eval(cmdp: Cmdp, policy: Policy) -> ValueBundle:
    _check_policy(cmdp, policy)
    g = cmdp.gamma
    system = np.eye(cmdp.n_states) - g * policy_transition(cmdp, policy)
    rhs = np.stack([(policy.probs * cmdp.reward).sum(1), (policy.probs * cmdp.cost).sum(1)], axis=1)
    v = np.linalg.solve(system, rhs)
    v_r, v_c = v[:, 0], v[:, 1]
    q_r = cmdp.reward + g * cmdp.transition @ v_r
    q_c = cmdp.cost + g * cmdp.transition @ v_c
    scale = 1.0 - g
    return ValueBundle(
        v_r=v_r,
        v_c=v_c,
        q_r=q_r,
        q_c=q_c,
        j_r=float(scale * cmdp.initial_dist @ v_r),
        j_c=float(scale * cmdp.initial_dist @ v_c),
    )


def occupancy(cmdp: Cmdp, policy: Policy) -> Occupancy:
    _check_policy(cmdp, policy)
    g = cmdp.gamma
    system = np.eye(cmdp.n_states) - g * policy_transition(cmdp, policy).T
    d_state = np.linalg.solve(system, (1.0 - g) * cmdp.initial_dist)
    d = np.maximum(d_state, 0.0)[:, None] * policy.probs
    return Occupancy(d / d.sum())


def mixture_eval(cmdp: Cmdp, mix: MixturePolicy) -> ValueBundle:
    """Per-episode mixture values: arithmetic means of the member values.

    The v/q fields are member averages, not the fixed point of any stationary policy.
    """
    bundles = [policy_eval(cmdp, m) for m in mix.members]
    return ValueBundle(
        v_r=np.mean([b.v_r for b in bundles], axis=0),
        v_c=np.mean([b.v_c for b in bundles], axis=0),
        q_r=np.mean([b.q_r for b in bundles], axis=0),
        q_c=np.mean([b.q_c for b in bundles], axis=0),
        j_r=float(np.mean([b.j_r for b in bundles])),
        j_c=float(np.mean([b.j_c for b in bundles])),
    )


def bellman_apply(cmdp: Cmdp, policy: Policy, f, kind: str = "reward") -> np.ndarray:
    """(T^pi f)(s,a) = R(s,a) + gamma * E_{s'}[f(s', pi)], unclipped."""
    _check_policy(cmdp, policy)
    values = np.asarray(getattr(f, "values", f), dtype=float)
    if values.shape != (cmdp.n_states, cmdp.n_actions):
        raise ConfigurationError(f"table shape {values.shape} does not match CMDP")
    if kind == "reward":
        base = cmdp.reward
    elif kind == "cost":
        base = cmdp.cost
    else:
        raise ConfigurationError(f"kind must be 'reward' or 'cost', got {kind!r}")
    next_v = (policy.probs * values).sum(axis=1)
    return base + cmdp.gamma * cmdp.transition @ next_v


def _as_table(occ) -> np.ndarray:
    return np.asarray(getattr(occ, "d", occ), dtype=float)


def importance_weights(target_occ, behavior_occ, atol: float = SUPPORT_ATOL) -> np.ndarray:
    """Density ratio d^pi / mu; zero wherever the behavior has no mass."""
    target, behavior = _as_table(target_occ), _as_table(behavior_occ)
    if target.shape != behavior.shape:
        raise ConfigurationError("occupancy shapes differ")
    support = behavior > atol
    bad = (~support) & (target > atol)
    if bad.any():
        s, a = (int(i) for i in np.argwhere(bad)[0])
        raise CoverageError(s, a, float(target[s, a]))
    w = np.zeros_like(target)
    w[support] = target[support] / behavior[support]
    return w


def concentrability(target_occ, behavior_occ, atol: float = SUPPORT_ATOL) -> float:
    """l2 concentrability ||d^pi / mu||_{2, mu}."""
    w = importance_weights(target_occ, behavior_occ, atol)
    return float(np.sqrt(np.sum(_as_table(behavior_occ) * w**2)))


def optimal_values(cmdp: Cmdp, kind: str = "reward", maximize: bool = True, tol: float = 1e-12, max_iter: int = 100_000):
    """Unconstrained value iteration. Returns (J, greedy deterministic Policy)."""
    base = cmdp.reward if kind == "reward" else cmdp.cost
    sign = 1.0 if maximize else -1.0
    v = np.zeros(cmdp.n_states)
    for _ in range(max_iter):
        q = sign * base + cmdp.gamma * cmdp.transition @ v
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    q = sign * base + cmdp.gamma * cmdp.transition @ v
    pol = Policy.deterministic(q.argmax(axis=1), cmdp.n_actions)
    # Re-evaluate the greedy policy exactly so J is a true policy value.
    vals = policy_eval(cmdp, pol)
    return (vals.j_r if kind == "reward" else vals.j_c), pol


def _flow_constraints(cmdp: Cmdp) -> tuple[np.ndarray, np.ndarray]:
    S, A, g = cmdp.n_states, cmdp.n_actions, cmdp.gamma
    # sum_a d(s,a) - gamma * sum_{s~,a~} P(s|s~,a~) d(s~,a~) = (1-gamma) rho(s)
    A_eq = np.kron(np.eye(S), np.ones((1, A))) - g * cmdp.transition.reshape(S * A, S).T
    return A_eq, (1.0 - g) * cmdp.initial_dist


def solve_optimal_safe(cmdp: Cmdp) -> Policy:
    """Max J_r subject to J_c <= 0 via the occupancy-measure LP."""
    S, A = cmdp.n_states, cmdp.n_actions
    A_eq, b_eq = _flow_constraints(cmdp)
    try:
        res = solve_lp(-cmdp.reward.ravel(), A_eq, b_eq, A_ub=cmdp.cost.reshape(1, -1), b_ub=[0.0])
    except LPInfeasible:
        min_cost = solve_lp(cmdp.cost.ravel(), A_eq, b_eq).fun
        raise InfeasibleError(min_cost) from None
    d = res.x.reshape(S, A)
    mass = d.sum(axis=1, keepdims=True)
    probs = np.where(mass > PROB_TOL, d / np.where(mass > PROB_TOL, mass, 1.0), 1.0 / A)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return Policy(probs)


def min_safe_cost(cmdp: Cmdp) -> float:
    """Smallest achievable J_c over all policies."""
    A_eq, b_eq = _flow_constraints(cmdp)
    return solve_lp(cmdp.cost.ravel(), A_eq, b_eq).fun
