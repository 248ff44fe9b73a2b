"""Experiment harness: instance generation, sweeps, CSV tables and SVG plots.

Every sweep is split into independent cells (instance x grid point x data seed).
Cells run in a process pool when ``workers > 1``; results are gathered in cell
order, so the output files do not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .cmdp import (
    Cmdp,
    ConfigurationError,
    CoverageError,
    InfeasibleError,
    Policy,
    concentrability,
    occupancy,
    optimal_values,
    policy_eval,
    solve_optimal_safe,
)
from .critics import CriticSolverCfg, WeightClass
from .data import behavior_clone, make_rng, mixture_behavior, sample_dataset
from .driver import WsacConfig, run_wsac
from .oracle import regret_audit
from .plotting import line_chart

log = logging.getLogger(__name__)

# Offset between successive regeneration attempts of an infeasible instance.
REGEN_OFFSET = 1_000_003
MAX_REGEN = 100
NORM_EPS = 1e-6


# ---------------------------------------------------------------- spec types


@dataclass(frozen=True)
class GeneratorSpec:
    n_states: int = 20
    n_actions: int = 4
    gamma: float = 0.9
    cost_threshold: float = 0.1
    seed: int = 0
    transition_concentration: float = 1.0
    # Raw per-step cost is U**cost_exponent; exponent 1 is the uniform draw.
    cost_exponent: float = 2.0
    n_instances: int = 1

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ConfigurationError("n_states and n_actions must be positive")
        if not 0.0 <= self.cost_threshold <= 1.0:
            raise ConfigurationError(f"cost threshold must lie in [0, 1], got {self.cost_threshold}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if not self.transition_concentration > 0 or not self.cost_exponent > 0:
            raise ConfigurationError("concentration and cost exponent must be positive")
        if self.n_instances < 1:
            raise ConfigurationError("n_instances must be >= 1")

    @property
    def instance_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.n_instances)]


@dataclass(frozen=True)
class DataSpec:
    n_samples: tuple[int, ...] = (20000,)
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        object.__setattr__(self, "n_samples", tuple(int(n) for n in self.n_samples))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.n_samples or not self.seeds:
            raise ConfigurationError("data grids must be nonempty")
        if min(self.n_samples) < 1:
            raise ConfigurationError("sample sizes must be positive")


@dataclass(frozen=True)
class SweepSpec:
    beta: tuple[float, ...] = (1.0, 0.5, 0.05)
    lambda_ranges: tuple[tuple[float, float], ...] = ((0.0, 1.0), (0.0, 2.0), (1.0, 2.0))
    mix_p: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    # Behavior mixture weight used by the ablation, sensitivity and rate studies.
    behavior_p: float = 0.5
    tolerance: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "lambda_ranges", tuple((float(lo), float(hi)) for lo, hi in self.lambda_ranges))
        object.__setattr__(self, "mix_p", tuple(float(p) for p in self.mix_p))
        if not self.beta or not self.lambda_ranges or not self.mix_p:
            raise ConfigurationError("sweep grids must be nonempty")
        if any(b < 0 for b in self.beta):
            raise ConfigurationError("beta values must be >= 0")
        if any(not 0.0 <= p <= 1.0 for p in (*self.mix_p, self.behavior_p)):
            raise ConfigurationError("mixture weights must lie in [0, 1]")
        for lo, hi in self.lambda_ranges:
            if lo < 0 or hi <= 0 or hi < lo:
                raise ConfigurationError(f"bad lambda range ({lo}, {hi})")


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "results"
    # Wall-clock columns break bit-for-bit reproducibility, so they are opt-in.
    timing: bool = False


# Harness defaults. The theoretical step size sqrt(ln|A| / (2 V_max^2 K)) is a
# worst-case choice that barely moves the policy within a few hundred rounds.
DEFAULT_WSAC = {"beta": 2.0, "lam": 2.0, "k": 200, "eta": 1.0}
_WSAC_KEYS = {"beta", "lam", "k", "eta", "seed", "lambda_schedule", "actor", "payoff", "weight_class", "critic_cfg"}


@dataclass(frozen=True)
class ExperimentSpec:
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    data: DataSpec = field(default_factory=DataSpec)
    wsac: dict = field(default_factory=lambda: dict(DEFAULT_WSAC))
    sweep: SweepSpec = field(default_factory=SweepSpec)
    outputs: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self):
        unknown = set(self.wsac) - _WSAC_KEYS
        if unknown:
            raise ConfigurationError(f"unknown wsac override(s): {sorted(unknown)}")
        self.wsac_config()  # validate early

    def wsac_config(self, **extra) -> WsacConfig:
        kw = {**DEFAULT_WSAC, **self.wsac, **extra}
        if isinstance(kw.get("weight_class"), dict):
            kw["weight_class"] = WeightClass.from_dict(kw["weight_class"])
        if isinstance(kw.get("critic_cfg"), dict):
            kw["critic_cfg"] = CriticSolverCfg(**kw["critic_cfg"])
        if kw.get("lambda_schedule") is not None:
            kw["lambda_schedule"] = tuple(kw["lambda_schedule"])
        return WsacConfig(**kw)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentSpec":
        known = {"generator", "data", "wsac", "sweep", "outputs"}
        extra = set(doc) - known
        if extra:
            raise ConfigurationError(f"unknown spec section(s): {sorted(extra)}")
        try:
            return cls(
                generator=GeneratorSpec(**doc.get("generator", {})),
                data=DataSpec(**doc.get("data", {})),
                wsac={**DEFAULT_WSAC, **doc.get("wsac", {})},
                sweep=SweepSpec(**doc.get("sweep", {})),
                outputs=OutputSpec(**doc.get("outputs", {})),
            )
        except TypeError as err:
            raise ConfigurationError(str(err)) from None

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "generator": asdict(self.generator),
            "data": {"n_samples": list(self.data.n_samples), "seeds": list(self.data.seeds)},
            "wsac": dict(self.wsac),
            "sweep": {
                "beta": list(self.sweep.beta),
                "lambda_ranges": [list(r) for r in self.sweep.lambda_ranges],
                "mix_p": list(self.sweep.mix_p),
                "behavior_p": self.sweep.behavior_p,
                "tolerance": self.sweep.tolerance,
            },
            "outputs": asdict(self.outputs),
        }

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(self, generator=replace(self.generator, seed=int(seed)))


# ---------------------------------------------------------------- instances


def draw_cmdp(gen: GeneratorSpec, seed: int) -> Cmdp:
    """One raw draw; no feasibility check."""
    rng = make_rng(seed)
    S, A = gen.n_states, gen.n_actions
    P = rng.dirichlet(np.full(S, gen.transition_concentration), size=(S, A))
    # Renormalize: for huge concentrations the Dirichlet sampler's rounding can
    # leave rows a few ulps away from 1.
    P = P / P.sum(axis=2, keepdims=True)
    reward = rng.random((S, A))
    raw_cost = rng.random((S, A)) ** gen.cost_exponent
    meta = {
        "seed": int(seed),
        "cost_threshold": gen.cost_threshold,
        "transition_concentration": gen.transition_concentration,
        "cost_exponent": gen.cost_exponent,
    }
    return Cmdp.with_budget(P, reward, raw_cost, gen.cost_threshold, gen.gamma, np.full(S, 1.0 / S), metadata=meta)


def gen_cmdp(gen: GeneratorSpec, seed: int | None = None) -> Cmdp:
    """Draw a feasible instance; infeasible draws are retried at seed + j * REGEN_OFFSET."""
    base = gen.seed if seed is None else int(seed)
    best = math.inf
    for j in range(MAX_REGEN):
        s = base + j * REGEN_OFFSET
        cmdp = draw_cmdp(gen, s)
        try:
            solve_optimal_safe(cmdp)
        except InfeasibleError as err:
            log.info("instance seed %d infeasible (min J_c = %.4g); regenerating", s, err.min_cost)
            best = min(best, err.min_cost)
            continue
        meta = {**cmdp.metadata, "requested_seed": base, "regenerations": j}
        return replace(cmdp, metadata=meta)
    raise InfeasibleError(best)


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class RewardScale:
    r_min: float
    r_max: float
    kappa: float

    @classmethod
    def of(cls, cmdp: Cmdp) -> "RewardScale":
        r_max, _ = optimal_values(cmdp, "reward", maximize=True)
        r_min, _ = optimal_values(cmdp, "reward", maximize=False)
        return cls(r_min, r_max, float(cmdp.metadata.get("cost_threshold", 0.0)))

    def reward(self, j_r: float) -> float:
        span = self.r_max - self.r_min
        return 0.0 if span <= 0 else (j_r - self.r_min) / span

    def cost(self, j_c: float) -> float:
        """Raw cost over the threshold; J_c is stored shifted by -kappa."""
        return (j_c + self.kappa + NORM_EPS) / (self.kappa + NORM_EPS)


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class ResultRow:
    run_id: str
    seed: int
    n: int
    beta: float
    lambda_lo: float
    lambda_hi: float
    mix_p: float
    j_r_behavior: float
    j_c_behavior: float
    j_r_wsac: float
    j_c_wsac: float
    c_l2_ref: float
    regret_audit: float
    wall_ms: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            # c_l2_ref is +inf when the reference escapes the behavior's support.
            if isinstance(v, float) and (math.isnan(v) or (math.isinf(v) and f.name != "c_l2_ref")):
                raise FloatingPointError(f"non-finite {f.name} in {self.run_id}")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_rows(path, rows: Sequence[ResultRow]) -> None:
    write_csv(path, ResultRow.columns(), (r.values() for r in rows))


# ---------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    """Everything one WSAC run needs; picklable for the worker pool."""

    run_id: str
    cmdp: Cmdp
    behavior: Policy
    pi_ref: Policy | None  # None: clone the behavior from the dataset
    n: int
    data_seed: int
    cfg: WsacConfig
    mix_p: float
    timing: bool = False


@dataclass(frozen=True)
class CellResult:
    row: ResultRow
    j_r_ref: float
    j_c_ref: float
    iterate_j_r: tuple[float, ...]
    iterate_j_c: tuple[float, ...]
    regret_detail: float


def _concentrability(cmdp: Cmdp, pi_ref: Policy, behavior_occ) -> float:
    try:
        return concentrability(occupancy(cmdp, pi_ref), behavior_occ)
    except CoverageError:
        return math.inf


def run_cell(cell: Cell) -> CellResult:
    t0 = time.perf_counter()
    cmdp = cell.cmdp
    data = sample_dataset(cmdp, cell.behavior, cell.n, cell.data_seed)
    pi_ref = behavior_clone(data) if cell.pi_ref is None else cell.pi_ref
    mix, trace = run_wsac(data, pi_ref, cell.cfg)
    vb = policy_eval(cmdp, cell.behavior)
    vr = policy_eval(cmdp, pi_ref)
    member_vals = [policy_eval(cmdp, p) for p in mix.members]
    j_r = float(np.mean([v.j_r for v in member_vals]))
    j_c = float(np.mean([v.j_c for v in member_vals]))
    ref_occ = occupancy(cmdp, pi_ref)
    regret = regret_audit(trace.payoffs, mix.members, pi_ref, ref_occ)
    wall = (time.perf_counter() - t0) * 1e3 if cell.timing else 0.0
    lo, hi = cell.cfg.lambda_schedule or (cell.cfg.lam, cell.cfg.lam)
    row = ResultRow(
        run_id=cell.run_id,
        seed=int(cell.data_seed),
        n=int(cell.n),
        beta=float(cell.cfg.beta),
        lambda_lo=float(lo),
        lambda_hi=float(hi),
        mix_p=float(cell.mix_p),
        j_r_behavior=float(vb.j_r),
        j_c_behavior=float(vb.j_c),
        j_r_wsac=j_r,
        j_c_wsac=j_c,
        c_l2_ref=_concentrability(cmdp, pi_ref, occupancy(cmdp, cell.behavior)),
        regret_audit=float(regret),
        wall_ms=float(wall),
    )
    return CellResult(
        row, float(vr.j_r), float(vr.j_c),
        tuple(float(v.j_r) for v in member_vals), tuple(float(v.j_c) for v in member_vals), float(regret),
    )


def run_cells(cells: Sequence[Cell], workers: int = 1) -> list[CellResult]:
    """Order-preserving map over cells."""
    if workers <= 1 or len(cells) <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, cells, chunksize=1))


def _instances(spec: ExperimentSpec) -> list[tuple[int, Cmdp, Policy]]:
    out = []
    for s in spec.generator.instance_seeds:
        cmdp = gen_cmdp(spec.generator, s)
        out.append((s, cmdp, solve_optimal_safe(cmdp)))
    return out


def _out_dir(spec: ExperimentSpec, out: str | Path | None) -> Path:
    d = Path(out if out is not None else spec.outputs.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def pos(x: float) -> float:
    return max(float(x), 0.0)


# ---------------------------------------------------------------- studies


@dataclass
class StudyResult:
    rows: list[ResultRow]
    cells: list[CellResult]
    summary: list[dict[str, Any]] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)
    table: list[list] = field(default_factory=list)
    fit: "RateFit | None" = None


def run_figure1(spec: ExperimentSpec, out=None, workers: int = 1) -> StudyResult:
    """Behavior = mixture of the optimal safe policy and uniform at each p; reference = cloned behavior."""
    cfg = spec.wsac_config()
    cells = []
    for inst_seed, cmdp, opt in _instances(spec):
        uniform = Policy.uniform(cmdp.n_states, cmdp.n_actions)
        for ip, p in enumerate(spec.sweep.mix_p):
            mu = mixture_behavior(opt, uniform, p)
            for n in spec.data.n_samples:
                for ds in spec.data.seeds:
                    cells.append(Cell(
                        f"fig1/i{inst_seed}/p{p:g}/n{n}/s{ds}", cmdp, mu, None, n,
                        derive_seed(inst_seed, ip, n, ds), cfg, p, spec.outputs.timing,
                    ))
    results = run_cells(cells, workers)
    rows = [r.row for r in results]
    d = _out_dir(spec, out)
    res = StudyResult(rows, results)
    write_rows(d / "figure1.csv", rows)
    res.files.append(d / "figure1.csv")

    summary = []
    for p in spec.sweep.mix_p:
        sel = [r for r in rows if r.mix_p == p]
        summary.append({
            "mix_p": p,
            "j_r_behavior": float(np.mean([r.j_r_behavior for r in sel])),
            "j_c_behavior": float(np.mean([r.j_c_behavior for r in sel])),
            "j_r_wsac": float(np.mean([r.j_r_wsac for r in sel])),
            "j_c_wsac": float(np.mean([r.j_c_wsac for r in sel])),
        })
    res.summary = summary
    ps = [s["mix_p"] for s in summary]
    line_chart(
        d / "figure1.svg",
        {
            "reward WSAC": (ps, [s["j_r_wsac"] for s in summary]),
            "reward behavior": (ps, [s["j_r_behavior"] for s in summary]),
            "cost WSAC": (ps, [s["j_c_wsac"] for s in summary]),
            "cost behavior": (ps, [s["j_c_behavior"] for s in summary]),
        },
        title="WSAC vs behavior (cost shifted by threshold)",
        xlabel="share of optimal policy in behavior",
        ylabel="per-step value",
    )
    res.files.append(d / "figure1.svg")
    return res


ABLATIONS: dict[str, dict[str, Any]] = {
    "all": {},
    "no_regret_oracle": {"actor": "greedy"},
    "no_aggression_limit": {"payoff": "lagrangian"},
    "no_bellman_reg": {"beta": 0.0},
}
ABLATION_COLUMNS = ["config", "instance", "seed", "j_r", "j_c", "reward_norm", "cost_norm"]
ABLATION_SUMMARY_COLUMNS = ["config", "runs", "cost_mean", "cost_std", "reward_mean", "reward_std"]


def run_ablation(spec: ExperimentSpec, out=None, workers: int = 1) -> StudyResult:
    """Four configurations on each instance; behavior mixes optimal-safe and uniform at sweep.behavior_p."""
    p = spec.sweep.behavior_p
    n = spec.data.n_samples[0]
    cells, meta = [], []
    scales = {}
    for inst_seed, cmdp, opt in _instances(spec):
        scales[inst_seed] = RewardScale.of(cmdp)
        mu = mixture_behavior(opt, Policy.uniform(cmdp.n_states, cmdp.n_actions), p)
        for ds in spec.data.seeds:
            seed = derive_seed(inst_seed, ds, n)
            for name, override in ABLATIONS.items():
                cells.append(Cell(f"ablation/{name}/i{inst_seed}/s{ds}", cmdp, mu, None, n, seed,
                                  spec.wsac_config(**override), p, spec.outputs.timing))
                meta.append((name, inst_seed, ds))
    results = run_cells(cells, workers)
    rows = [r.row for r in results]
    table = []
    for (name, inst, ds), r in zip(meta, rows):
        sc = scales[inst]
        table.append([name, inst, ds, r.j_r_wsac, r.j_c_wsac, sc.reward(r.j_r_wsac), sc.cost(r.j_c_wsac)])
    summary = []
    for name in ABLATIONS:
        sel = [t for t in table if t[0] == name]
        rn = np.array([t[5] for t in sel])
        cn = np.array([t[6] for t in sel])
        summary.append({
            "config": name, "runs": len(sel),
            "cost_mean": float(cn.mean()), "cost_std": float(cn.std()),
            "reward_mean": float(rn.mean()), "reward_std": float(rn.std()),
        })
    d = _out_dir(spec, out)
    write_rows(d / "ablation_runs.csv", rows)
    write_csv(d / "ablation.csv", ABLATION_COLUMNS, table)
    write_csv(d / "ablation_summary.csv", ABLATION_SUMMARY_COLUMNS,
              ([s[c] for c in ABLATION_SUMMARY_COLUMNS] for s in summary))
    return StudyResult(rows, results, summary,
                       [d / "ablation_runs.csv", d / "ablation.csv", d / "ablation_summary.csv"], table)


def ablation_instance_means(table: Sequence[Sequence], config: str) -> dict[int, float]:
    """Mean normalized cost per instance for one configuration."""
    acc: dict[int, list[float]] = {}
    for row in table:
        if row[0] == config:
            acc.setdefault(row[1], []).append(row[6])
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


SENSITIVITY_COLUMNS = ["run_id", "beta", "lambda_lo", "lambda_hi", "j_r_behavior", "j_c_behavior",
                       "j_r_wsac", "j_c_wsac", "cost_bound", "flag"]


def run_sensitivity(spec: ExperimentSpec, out=None, workers: int = 1) -> StudyResult:
    """beta x lambda-schedule grid; flags any run whose final cost breaks the excess bound."""
    p = spec.sweep.behavior_p
    n = spec.data.n_samples[0]
    cells = []
    for inst_seed, cmdp, opt in _instances(spec):
        mu = mixture_behavior(opt, Policy.uniform(cmdp.n_states, cmdp.n_actions), p)
        for ds in spec.data.seeds:
            seed = derive_seed(inst_seed, ds, n)
            for beta in spec.sweep.beta:
                for lo, hi in spec.sweep.lambda_ranges:
                    cfg = spec.wsac_config(beta=beta, lam=hi, lambda_schedule=(lo, hi))
                    cells.append(Cell(f"sens/b{beta:g}/l{lo:g}-{hi:g}/i{inst_seed}/s{ds}", cmdp, mu, None, n,
                                      seed, cfg, p, spec.outputs.timing))
    results = run_cells(cells, workers)
    rows = [r.row for r in results]
    v_max = 1.0 / (1.0 - spec.generator.gamma)
    table = []
    for r in rows:
        bound = pos(r.j_c_behavior) + v_max / r.lambda_hi + spec.sweep.tolerance
        table.append([r.run_id, r.beta, r.lambda_lo, r.lambda_hi, r.j_r_behavior, r.j_c_behavior,
                      r.j_r_wsac, r.j_c_wsac, bound, int(pos(r.j_c_wsac) > bound)])
    d = _out_dir(spec, out)
    write_rows(d / "sensitivity_runs.csv", rows)
    write_csv(d / "sensitivity.csv", SENSITIVITY_COLUMNS, table)

    # Running-mixture curves: value of Unif(pi_1..pi_k) against k, averaged over runs per setting.
    curves_r, curves_c = {}, {}
    for beta in spec.sweep.beta:
        for lo, hi in spec.sweep.lambda_ranges:
            sel = [c for c in results if c.row.beta == beta and c.row.lambda_lo == lo and c.row.lambda_hi == hi]
            jr = np.mean([np.cumsum(c.iterate_j_r) / np.arange(1, len(c.iterate_j_r) + 1) for c in sel], axis=0)
            jc = np.mean([np.cumsum(c.iterate_j_c) / np.arange(1, len(c.iterate_j_c) + 1) for c in sel], axis=0)
            ks = list(range(1, len(jr) + 1))
            label = f"beta={beta:g} lambda=[{lo:g},{hi:g}]"
            curves_r[label] = (ks, jr.tolist())
            curves_c[label] = (ks, jc.tolist())
    line_chart(d / "sensitivity_reward.svg", curves_r, title="reward of running mixture",
               xlabel="iteration", ylabel="J_r")
    line_chart(d / "sensitivity_cost.svg", curves_c, title="cost of running mixture (shifted)",
               xlabel="iteration", ylabel="J_c")
    flags = sum(t[-1] for t in table)
    if flags:
        log.warning("%d sensitivity run(s) exceeded the cost bound", flags)
    summary = [dict(zip(SENSITIVITY_COLUMNS, t)) for t in table]
    files = [d / "sensitivity_runs.csv", d / "sensitivity.csv", d / "sensitivity_reward.svg", d / "sensitivity_cost.svg"]
    return StudyResult(rows, results, summary, files, table)


@dataclass(frozen=True)
class RateFit:
    slope: float
    slope_se: float
    intercept: float
    n_grid: tuple[int, ...]
    mean_subopt: tuple[float, ...]
    se_subopt: tuple[float, ...]


def fit_rate(n_grid: Sequence[int], subopt: np.ndarray) -> RateFit:
    """OLS of log(mean suboptimality) on log N.

    ``subopt`` has shape (len(n_grid), seeds). The slope's standard error is the
    delta-method propagation of the per-N standard errors of the means; it
    shrinks like 1/sqrt(seeds).
    """
    subopt = np.asarray(subopt, dtype=float)
    if subopt.ndim != 2 or subopt.shape[0] != len(n_grid):
        raise ConfigurationError("subopt must be (len(n_grid), seeds)")
    if len(n_grid) < 2:
        raise ConfigurationError("need at least two sample sizes")
    means = subopt.mean(axis=1)
    k = subopt.shape[1]
    ses = subopt.std(axis=1, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(len(n_grid))
    x = np.log(np.asarray(n_grid, dtype=float))
    if np.any(means <= 0):
        return RateFit(math.nan, math.nan, math.nan, tuple(n_grid), tuple(means), tuple(ses))
    y = np.log(means)
    dx = x - x.mean()
    w = dx / (dx @ dx)
    slope = float(w @ (y - y.mean()))
    intercept = float(y.mean() - slope * x.mean())
    slope_se = float(math.sqrt(np.sum((w * ses / means) ** 2)))
    return RateFit(slope, slope_se, intercept, tuple(int(n) for n in n_grid), tuple(means), tuple(ses))


RATE_COLUMNS = ["n", "seed", "j_r_ref", "j_r_wsac", "subopt"]
RATE_SUMMARY_COLUMNS = ["n", "mean_subopt", "se_subopt"]


def run_rate(spec: ExperimentSpec, out=None, workers: int = 1) -> StudyResult:
    """Suboptimality against the reward-optimal reference as N grows.

    The reference is the unconstrained reward-optimal deterministic policy, so
    J_r(ref) - J_r(pi_bar) >= 0 on every run; the behavior mixes it with uniform.
    """
    grid = sorted(spec.data.n_samples)
    if len(grid) < 3 or grid[-1] < 16 * grid[0]:
        raise ConfigurationError("rate study needs >= 3 sample sizes spanning >= 16x")
    inst_seed = spec.generator.seed
    cmdp = gen_cmdp(spec.generator, inst_seed)
    _, ref = optimal_values(cmdp, "reward", maximize=True)
    mu = mixture_behavior(ref, Policy.uniform(cmdp.n_states, cmdp.n_actions), spec.sweep.behavior_p)
    cfg = spec.wsac_config()
    cells = [
        Cell(f"rate/i{inst_seed}/n{n}/s{ds}", cmdp, mu, ref, n, derive_seed(inst_seed, ds, n), cfg,
             spec.sweep.behavior_p, spec.outputs.timing)
        for n in grid for ds in spec.data.seeds
    ]
    results = run_cells(cells, workers)
    rows = [r.row for r in results]
    k = len(spec.data.seeds)
    # Suboptimality is clipped at 0 only against float noise: the reference is reward-optimal.
    sub = np.array([max(c.j_r_ref - c.row.j_r_wsac, 0.0) for c in results]).reshape(len(grid), k)
    fit = fit_rate(grid, sub)
    d = _out_dir(spec, out)
    write_rows(d / "rate_runs.csv", rows)
    write_csv(d / "rate.csv", RATE_COLUMNS,
              ([c.row.n, c.row.seed, c.j_r_ref, c.row.j_r_wsac, s] for c, s in zip(results, sub.ravel())))
    write_csv(d / "rate_summary.csv", RATE_SUMMARY_COLUMNS, zip(grid, fit.mean_subopt, fit.se_subopt))
    write_csv(d / "rate_fit.csv", ["slope", "slope_se", "intercept"], [[fit.slope, fit.slope_se, fit.intercept]])
    series = {"mean suboptimality": (list(grid), list(fit.mean_subopt))}
    if math.isfinite(fit.slope):
        series["fit"] = (list(grid), [math.exp(fit.intercept) * n**fit.slope for n in grid])
    line_chart(d / "rate.svg", series, title=f"suboptimality vs N (slope {fit.slope:.3f})",
               xlabel="N", ylabel="J_r(ref) - J_r(WSAC)", logx=True, logy=math.isfinite(fit.slope))
    files = [d / "rate_runs.csv", d / "rate.csv", d / "rate_summary.csv", d / "rate_fit.csv", d / "rate.svg"]
    return StudyResult(rows, results, [asdict(fit)], files, sub.tolist(), fit)


STUDIES: dict[str, Callable[..., StudyResult]] = {
    "figure1": run_figure1,
    "ablation": run_ablation,
    "sensitivity": run_sensitivity,
    "rate": run_rate,
}
