"""Empirical losses and the two adversarial critics of the WSAC loop.

Every expectation over the data is taken through a :class:`SampleMeasure`,
the (s,a,s') sufficient statistics of a dataset. Building the same statistics
from an exact occupancy gives the population versions with no sampling.

For a box weight class the inner maximization over ``w in [0, b_w]^{SxA}`` of
``|sum_{s,a} w(s,a) x(s,a)|``, with ``x`` the mass-weighted mean residual, is
``b_w * max(sum x^+, sum x^-)``: put full weight on one sign, zero on the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from .cmdp import Cmdp, ConfigurationError, Policy
from .data import Dataset
from .simplex import LPError


@dataclass(frozen=True, eq=False)
class SampleMeasure:
    n_states: int
    n_actions: int
    gamma: float
    sa_mass: np.ndarray  # (S, A): n(s,a)/N, or mu(s,a)
    next_mass: np.ndarray  # (S, A, S): n(s,a,s')/N, or mu(s,a) P(s'|s,a)
    reward_sum: np.ndarray  # (S, A, S): sum of r over the group, / N
    reward_sq: np.ndarray
    cost_sum: np.ndarray
    cost_sq: np.ndarray
    n: int | None = None  # sample size; None for an exact population

    @property
    def state_mass(self) -> np.ndarray:
        return self.sa_mass.sum(axis=1)

    @property
    def v_max(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "SampleMeasure":
        S, A = ds.n_states, ds.n_actions
        flat = (ds.s * A + ds.a) * S + ds.s_next
        size = S * A * S

        def group(weights):
            return np.bincount(flat, weights=weights, minlength=size).reshape(S, A, S) / ds.n

        nxt = np.bincount(flat, minlength=size).reshape(S, A, S) / ds.n
        return cls(
            S, A, ds.gamma,
            sa_mass=nxt.sum(axis=2),
            next_mass=nxt,
            reward_sum=group(ds.r),
            reward_sq=group(ds.r**2),
            cost_sum=group(ds.c),
            cost_sq=group(ds.c**2),
            n=ds.n,
        )

    @classmethod
    def from_model(cls, cmdp: Cmdp, behavior_occ) -> "SampleMeasure":
        mu = np.asarray(getattr(behavior_occ, "d", behavior_occ), dtype=float)
        nxt = mu[:, :, None] * cmdp.transition
        R = cmdp.reward[:, :, None]
        C = cmdp.cost[:, :, None]
        return cls(
            cmdp.n_states, cmdp.n_actions, cmdp.gamma,
            sa_mass=mu.copy(),
            next_mass=nxt,
            reward_sum=nxt * R,
            reward_sq=nxt * R**2,
            cost_sum=nxt * C,
            cost_sq=nxt * C**2,
        )


def as_measure(data) -> SampleMeasure:
    if isinstance(data, SampleMeasure):
        return data
    if isinstance(data, Dataset):
        return SampleMeasure.from_dataset(data)
    raise TypeError(f"expected Dataset or SampleMeasure, got {type(data).__name__}")


@dataclass(frozen=True, eq=False)
class QTable:
    values: np.ndarray
    lower: float
    upper: float
    objective: float = math.nan
    trace: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if self.lower > self.upper:
            raise ConfigurationError("lower bound exceeds upper bound")
        slack = 1e-9 * max(1.0, abs(self.upper), abs(self.lower))
        if np.any(v < self.lower - slack) or np.any(v > self.upper + slack):
            raise ConfigurationError(f"table entries leave [{self.lower}, {self.upper}]")
        v = np.clip(v, self.lower, self.upper)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def reward_table(cls, values, v_max: float, **kw) -> "QTable":
        return cls(values, 0.0, v_max, **kw)

    @classmethod
    def cost_table(cls, values, v_max: float, **kw) -> "QTable":
        return cls(values, -v_max, v_max, **kw)


@dataclass(frozen=True)
class WeightClass:
    """``box``: w in [0, bound]^{SxA}. ``two_point``: w in {0, bound}, squared-residual surrogate."""

    variant: str
    bound: float

    def __post_init__(self):
        if self.variant not in ("box", "two_point"):
            raise ConfigurationError(f"unknown weight class {self.variant!r}")
        if not self.bound > 0:
            raise ConfigurationError("weight bound must be positive")
        if self.variant == "box" and self.bound < 1.0:
            # The all-one weight must belong to the class.
            raise ConfigurationError("box weight bound b_w must be >= 1")

    @classmethod
    def box(cls, b_w: float = 1.0) -> "WeightClass":
        return cls("box", b_w)

    @classmethod
    def two_point(cls, c_inf: float = 1.0) -> "WeightClass":
        return cls("two_point", c_inf)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "bound": self.bound}

    @classmethod
    def from_dict(cls, doc: dict) -> "WeightClass":
        return cls(doc["variant"], float(doc["bound"]))


@dataclass(frozen=True)
class CriticSolverCfg:
    """``method='exact'`` solves the box case as an LP and the two-point case with
    L-BFGS-B; ``'subgradient'`` runs projected subgradient descent with averaging."""

    max_iters: int = 2000
    step_size: float | None = None  # None -> V_max
    tol: float | None = None  # None -> 1e-4 * V_max
    init: str = "zero"
    method: str = "exact"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError("step_size must be positive")
        if self.tol is not None and self.tol < 0:
            raise ConfigurationError("tol must be nonnegative")
        if self.init not in ("zero", "midpoint"):
            raise ConfigurationError(f"init must be 'zero' or 'midpoint', got {self.init!r}")
        if self.method not in ("exact", "subgradient"):
            raise ConfigurationError(f"method must be 'exact' or 'subgradient', got {self.method!r}")


def _check(m: SampleMeasure, policy: Policy, f=None) -> None:
    shape = (m.n_states, m.n_actions)
    if policy.probs.shape != shape:
        raise ConfigurationError(f"policy shape {policy.probs.shape} != {shape}")
    if f is not None and np.shape(getattr(f, "values", f)) != shape:
        raise ConfigurationError(f"table shape does not match {shape}")


def _values(f) -> np.ndarray:
    return np.asarray(getattr(f, "values", f), dtype=float)


def _sums(m: SampleMeasure, kind: str) -> tuple[np.ndarray, np.ndarray]:
    if kind == "reward":
        return m.reward_sum, m.reward_sq
    if kind == "cost":
        return m.cost_sum, m.cost_sq
    raise ConfigurationError(f"kind must be 'reward' or 'cost', got {kind!r}")


def loss_coefficients(m: SampleMeasure, policy: Policy) -> np.ndarray:
    """L(pi, f) = <coef, f> with coef(s,a) = m(s) pi(a|s) - m(s,a)."""
    return m.state_mass[:, None] * policy.probs - m.sa_mass


def loss_l(data, policy: Policy, f) -> float:
    """E_D[f(s, pi) - f(s, a)]."""
    m = as_measure(data)
    _check(m, policy, f)
    return float(np.sum(loss_coefficients(m, policy) * _values(f)))


def residual_masses(data, policy: Policy, f, kind: str) -> np.ndarray:
    """x(s,a) = (1/N) sum over samples at (s,a) of f(s,a) - r - gamma f(s', pi)."""
    m = as_measure(data)
    _check(m, policy, f)
    sums, _ = _sums(m, kind)
    f = _values(f)
    v_next = (policy.probs * f).sum(axis=1)
    return m.sa_mass * f - sums.sum(axis=2) - m.gamma * m.next_mass @ v_next


def _squared_residual(m: SampleMeasure, policy: Policy, f: np.ndarray, kind: str) -> float:
    sums, sq = _sums(m, kind)
    v_next = (policy.probs * f).sum(axis=1)
    y = f[:, :, None] - m.gamma * v_next[None, None, :]
    return float(np.sum(m.next_mass * y**2 - 2.0 * y * sums + sq))


def weighted_bellman_error(data, policy: Policy, f, wc: WeightClass, kind: str = "reward") -> float:
    m = as_measure(data)
    _check(m, policy, f)
    if wc.variant == "two_point":
        return wc.bound * max(_squared_residual(m, policy, _values(f), kind), 0.0)
    x = residual_masses(m, policy, f, kind)
    return wc.bound * max(x[x > 0].sum(), -x[x < 0].sum())


class _CriticProblem:
    """min_f <lin, f> + beta * E(pi, f) over the box [lo, hi]^{SxA}."""

    def __init__(self, m: SampleMeasure, policy: Policy, lin: np.ndarray, beta: float, wc: WeightClass,
                 kind: str, lo: float, hi: float):
        S, A = m.n_states, m.n_actions
        self.m, self.policy, self.kind, self.wc = m, policy, kind, wc
        self.shape = (S, A)
        self.lin = lin.ravel()
        self.beta = beta
        self.lo, self.hi = lo, hi
        sums, _ = _sums(m, kind)
        # x = A f - b as a dense linear map on the flattened table.
        nxt = m.next_mass.reshape(S * A, S)
        self.A = np.diag(m.sa_mass.ravel()) - m.gamma * (nxt[:, :, None] * policy.probs[None]).reshape(S * A, S * A)
        self.b = sums.sum(axis=2).ravel()

    def value(self, f: np.ndarray) -> float:
        return float(self.lin @ f.ravel()) + self.beta * self.bellman(f)

    def bellman(self, f: np.ndarray) -> float:
        if self.beta == 0:
            return 0.0
        return weighted_bellman_error(self.m, self.policy, f.reshape(self.shape), self.wc, self.kind)

    def subgradient(self, f: np.ndarray) -> np.ndarray:
        g = self.lin.copy()
        if self.beta == 0:
            return g
        if self.wc.variant == "box":
            x = self.A @ f - self.b
            pos, neg = x[x > 0].sum(), -x[x < 0].sum()
            if pos >= neg and pos > 0:
                g += self.beta * self.wc.bound * (self.A.T @ (x > 0))
            elif neg > pos:
                g -= self.beta * self.wc.bound * (self.A.T @ (x < 0))
            return g
        return g + self.beta * self._quad_grad(f)

    def _quad_grad(self, f: np.ndarray) -> np.ndarray:
        m, pi = self.m, self.policy.probs
        sums, _ = _sums(m, self.kind)
        F = f.reshape(self.shape)
        v_next = (pi * F).sum(axis=1)
        y = F[:, :, None] - m.gamma * v_next[None, None, :]
        dy = 2.0 * (m.next_mass * y - sums)
        grad = dy.sum(axis=2)
        grad += pi * (-m.gamma * dy.sum(axis=(0, 1)))[:, None]
        return self.wc.bound * grad.ravel()

    def corner(self, fill: np.ndarray) -> np.ndarray:
        """Minimizer of the linear part alone; zero coefficients keep `fill`."""
        return np.where(self.lin > 0, self.lo, np.where(self.lin < 0, self.hi, fill))

    def solve_lp(self) -> np.ndarray:
        n = self.lin.size
        kappa = self.beta * self.wc.bound
        c = np.concatenate([self.lin, np.full(n, kappa), [kappa]])
        A_ub = np.zeros((n + 1, 2 * n + 1))
        A_ub[:n, :n] = self.A
        A_ub[:n, n : 2 * n] = -np.eye(n)
        A_ub[n, :n] = -self.A.sum(axis=0)
        A_ub[n, -1] = -1.0
        b_ub = np.concatenate([self.b, [-self.b.sum()]])
        bounds = [(self.lo, self.hi)] * n + [(0.0, None)] * (n + 1)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            raise LPError(f"critic LP failed: {res.message}")
        return np.clip(res.x[:n], self.lo, self.hi)

    def solve_smooth(self, f0: np.ndarray, tol: float) -> np.ndarray:
        res = minimize(
            lambda z: (self.value(z), self.subgradient(z)),
            f0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(self.lo, self.hi)] * self.lin.size,
            options={"maxiter": 10_000, "ftol": 1e-15, "gtol": 1e-12},
        )
        return np.clip(res.x, self.lo, self.hi)

    def solve_subgradient(self, f0: np.ndarray, max_iters: int, step: float, tol: float):
        f = f0.copy()
        avg = f0.copy()
        best_f, best = f0.copy(), self.value(f0)
        lower = -math.inf
        trace = [best]
        for t in range(1, max_iters + 1):
            g = self.subgradient(f)
            val = self.value(f)
            if val < best:
                best, best_f = val, f.copy()
            # Linearization minimized over the box is a valid lower bound.
            lower = max(lower, val + float(np.sum(np.minimum(g * (self.lo - f), g * (self.hi - f)))))
            norm = float(np.linalg.norm(g))
            if norm == 0.0:
                trace.append(best)
                break
            f = np.clip(f - (step / math.sqrt(t)) * g / norm, self.lo, self.hi)
            avg += (f - avg) / (t + 1)
            avg_val = self.value(avg)
            if avg_val < best:
                best, best_f = avg_val, avg.copy()
            trace.append(best)
            if best - lower <= tol:
                break
        return best_f, tuple(trace)


def _solve(m: SampleMeasure, policy: Policy, lin: np.ndarray, beta: float, wc: WeightClass, kind: str,
           lo: float, hi: float, cfg: CriticSolverCfg) -> QTable:
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    v_max = m.v_max
    prob = _CriticProblem(m, policy, lin, beta, wc, kind, lo, hi)
    init = 0.0 if cfg.init == "zero" else 0.5 * (lo + hi)
    f0 = np.full(lin.size, init)
    tol = 1e-4 * v_max if cfg.tol is None else cfg.tol
    trace: tuple = ()
    if beta == 0:
        f = prob.corner(f0)
    elif cfg.method == "subgradient":
        step = v_max if cfg.step_size is None else cfg.step_size
        f, trace = prob.solve_subgradient(f0, cfg.max_iters, step, tol)
    elif wc.variant == "box":
        f = prob.solve_lp()
    else:
        f = prob.solve_smooth(f0, tol)
    obj = prob.value(f)
    if not math.isfinite(obj):
        raise FloatingPointError("critic objective is not finite")
    return QTable(f.reshape(m.n_states, m.n_actions), lo, hi, objective=obj, trace=trace or (obj,))


def critic_objective_reward(data, policy: Policy, f, beta: float, wc: WeightClass) -> float:
    return loss_l(data, policy, f) + beta * weighted_bellman_error(data, policy, f, wc, "reward")


def critic_objective_cost(data, policy: Policy, f, lam: float, beta: float, wc: WeightClass) -> float:
    return -lam * loss_l(data, policy, f) + beta * weighted_bellman_error(data, policy, f, wc, "cost")


def critic_solve_reward(data, policy: Policy, beta: float, wc: WeightClass,
                        cfg: CriticSolverCfg = CriticSolverCfg()) -> QTable:
    """Pessimistic reward critic: argmin_f L(pi, f) + beta * E(pi, f) over [0, V_max]."""
    m = as_measure(data)
    _check(m, policy)
    lin = loss_coefficients(m, policy).ravel()
    return _solve(m, policy, lin, beta, wc, "reward", 0.0, m.v_max, cfg)


def critic_solve_cost(data, policy: Policy, lam: float, beta: float, wc: WeightClass,
                      cfg: CriticSolverCfg = CriticSolverCfg()) -> QTable:
    """Cost critic, pessimistic about the cost of pi: argmin_f -lam * L(pi, f) + beta * E_c(pi, f) over [-V_max, V_max]."""
    if not lam > 0:
        raise ConfigurationError("lambda must be positive")
    m = as_measure(data)
    _check(m, policy)
    lin = -lam * loss_coefficients(m, policy).ravel()
    return _solve(m, policy, lin, beta, wc, "cost", -m.v_max, m.v_max, cfg)
