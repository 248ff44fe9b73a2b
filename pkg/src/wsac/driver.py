"""The WSAC loop: critics, aggression-limited payoff, oracle update, uniform mixture."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .cmdp import Cmdp, ConfigurationError, CoverageError, MixturePolicy, Policy, importance_weights, occupancy
from .critics import (
    CriticSolverCfg,
    SampleMeasure,
    WeightClass,
    as_measure,
    critic_solve_cost,
    critic_solve_reward,
    loss_l,
    weighted_bellman_error,
)
from .oracle import OracleState, PayoffTable, aggression_limited_payoff, default_eta, po_update

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "crit_obj_r", "crit_obj_c", "L_r", "L_c", "E_r", "E_c", "payoff_min", "payoff_max"]


@dataclass(frozen=True)
class WsacConfig:
    beta: float = 2.0
    lam: float = 2.0
    k: int = 100
    eta: float | None = None
    weight_class: WeightClass = field(default_factory=WeightClass.box)
    critic_cfg: CriticSolverCfg = field(default_factory=CriticSolverCfg)
    seed: int = 0
    mode: str = "empirical"
    # (initial, upper): lambda rises linearly from initial to upper over the K rounds.
    lambda_schedule: tuple[float, float] | None = None
    # Ablation switches.
    actor: str = "exp_weights"  # or "greedy"
    payoff: str = "aggression_limited"  # or "lagrangian": f_r - lam * f_c

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigurationError("beta must be >= 0")
        if not self.lam > 0:
            raise ConfigurationError("lambda must be > 0")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.eta is not None and not self.eta > 0:
            raise ConfigurationError("eta must be > 0")
        if self.mode not in ("empirical", "exact"):
            raise ConfigurationError(f"mode must be 'empirical' or 'exact', got {self.mode!r}")
        if self.lambda_schedule is not None:
            lo, hi = self.lambda_schedule
            if lo < 0 or hi <= 0 or hi < lo:
                raise ConfigurationError("lambda schedule needs 0 <= initial <= upper, upper > 0")
            object.__setattr__(self, "lambda_schedule", (float(lo), float(hi)))
        if self.actor not in ("exp_weights", "greedy"):
            raise ConfigurationError(f"unknown actor {self.actor!r}")
        if self.payoff not in ("aggression_limited", "lagrangian"):
            raise ConfigurationError(f"unknown payoff {self.payoff!r}")

    def lambda_at(self, k: int) -> float:
        """Penalty weight used in round k (1-based); positive for every k >= 1."""
        if self.lambda_schedule is None:
            return self.lam
        lo, hi = self.lambda_schedule
        return lo + (hi - lo) * k / self.k

    @property
    def lambda_upper(self) -> float:
        return self.lam if self.lambda_schedule is None else self.lambda_schedule[1]


@dataclass(frozen=True)
class IterationRecord:
    k: int
    critic_objective_r: float
    critic_objective_c: float
    loss_l_r: float
    loss_l_c: float
    bellman_err_r: float
    bellman_err_c: float
    payoff_min: float
    payoff_max: float
    payoff_mean: float
    lam: float
    exact_loss_l_r: float | None = None
    exact_loss_l_c: float | None = None


@dataclass
class RunTrace:
    records: list[IterationRecord]
    final: MixturePolicy
    eta: float
    payoffs: list[PayoffTable] = field(default_factory=list)
    reward_critics: list[np.ndarray] = field(default_factory=list)
    cost_critics: list[np.ndarray] = field(default_factory=list)
    coverage_violation: str | None = None

    @property
    def iterates(self) -> tuple[Policy, ...]:
        return self.final.members

    def rows(self) -> list[list]:
        return [
            [r.k, r.critic_objective_r, r.critic_objective_c, r.loss_l_r, r.loss_l_c,
             r.bellman_err_r, r.bellman_err_c, r.payoff_min, r.payoff_max]
            for r in self.records
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def _greedy(u: np.ndarray) -> Policy:
    return Policy.deterministic(u.argmax(axis=1), u.shape[1])


def _run_loop(m: SampleMeasure, pi_ref: Policy, cfg: WsacConfig,
              exact: SampleMeasure | None = None) -> tuple[MixturePolicy, RunTrace]:
    S, A = m.n_states, m.n_actions
    if pi_ref.probs.shape != (S, A):
        raise ConfigurationError("reference policy shape does not match the data")
    if cfg.eta is not None:
        eta = cfg.eta
    else:
        # A single action leaves nothing to learn; any positive step works.
        eta = default_eta(A, m.v_max, cfg.k) if A > 1 else 1.0
    state = OracleState.start(S, A, eta, cfg.k)
    wc, ccfg = cfg.weight_class, cfg.critic_cfg
    iterates, records, payoffs, frs, fcs = [], [], [], [], []
    for k in range(1, cfg.k + 1):
        pi_k = state.policy
        iterates.append(pi_k)
        lam = cfg.lambda_at(k)
        f_r = critic_solve_reward(m, pi_k, cfg.beta, wc, ccfg)
        f_c = critic_solve_cost(m, pi_k, lam, cfg.beta, wc, ccfg)
        if cfg.payoff == "aggression_limited":
            u = aggression_limited_payoff(f_r, f_c, lam, pi_ref)
        else:
            u = PayoffTable(f_r.values - lam * f_c.values)
        rec = IterationRecord(
            k=k,
            critic_objective_r=f_r.objective,
            critic_objective_c=f_c.objective,
            loss_l_r=loss_l(m, pi_k, f_r),
            loss_l_c=loss_l(m, pi_k, f_c),
            bellman_err_r=weighted_bellman_error(m, pi_k, f_r, wc, "reward"),
            bellman_err_c=weighted_bellman_error(m, pi_k, f_c, wc, "cost"),
            payoff_min=float(u.u.min()),
            payoff_max=float(u.u.max()),
            payoff_mean=float(u.u.mean()),
            lam=lam,
            exact_loss_l_r=None if exact is None else loss_l(exact, pi_k, f_r),
            exact_loss_l_c=None if exact is None else loss_l(exact, pi_k, f_c),
        )
        records.append(rec)
        payoffs.append(u)
        frs.append(f_r.values)
        fcs.append(f_c.values)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("k=%d crit_r=%.6g crit_c=%.6g payoff=[%.4g, %.4g]", k, rec.critic_objective_r,
                      rec.critic_objective_c, rec.payoff_min, rec.payoff_max)
        if cfg.actor == "greedy":
            state = replace(state, policy=_greedy(u.u), step=state.step + 1, logits=None)
        else:
            state = po_update(state, u)
    mix = MixturePolicy(tuple(iterates))
    trace = RunTrace(records, mix, eta, payoffs, frs, fcs)
    return mix, trace


def run_wsac(dataset, pi_ref: Policy, cfg: WsacConfig,
             exact: SampleMeasure | None = None) -> tuple[MixturePolicy, RunTrace]:
    """Run K rounds on the empirical losses; output Unif(pi_1, ..., pi_K).

    ``exact`` (a population measure) only adds drift diagnostics to the trace.
    """
    if cfg.mode != "empirical":
        raise ConfigurationError("run_wsac expects cfg.mode == 'empirical'")
    return _run_loop(as_measure(dataset), pi_ref, cfg, exact)


def run_wsac_exact(cmdp: Cmdp, behavior: Policy, pi_ref: Policy, cfg: WsacConfig) -> tuple[MixturePolicy, RunTrace]:
    """Same loop with every data expectation replaced by the exact one under d^behavior."""
    if cfg.mode != "exact":
        raise ConfigurationError("run_wsac_exact expects cfg.mode == 'exact'")
    mu = occupancy(cmdp, behavior)
    note = None
    try:
        importance_weights(occupancy(cmdp, pi_ref), mu)
    except CoverageError as err:
        note = str(err)
        log.warning("reference policy not covered by behavior: %s", note)
    m = SampleMeasure.from_model(cmdp, mu)
    mix, trace = _run_loop(m, pi_ref, cfg)
    trace.coverage_violation = note
    return mix, trace
