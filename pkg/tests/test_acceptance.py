"""Acceptance criteria 1-7. Each test prints one PASS/FAIL line before asserting."""

from __future__ import annotations

import math
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_cmdp, random_policy
from test_cmdp import enumerate_safe_optimum
from test_critics import grid_box_error, lattice_objective, small_dataset
from test_oracle import STREAMS, hinge_terms, make_stream, play, worst_regret
from wsac import (
    Policy,
    SampleMeasure,
    WeightClass,
    WsacConfig,
    critic_solve_cost,
    critic_solve_reward,
    min_safe_cost,
    mixture_behavior,
    mixture_eval,
    policy_eval,
    run_wsac,
    run_wsac_exact,
    sample_dataset,
    solve_optimal_safe,
    weighted_bellman_error,
)
from wsac.experiments import (
    Cell,
    ExperimentSpec,
    GeneratorSpec,
    ablation_instance_means,
    derive_seed,
    gen_cmdp,
    pos,
    run_ablation,
    run_cells,
    run_rate,
)

pytestmark = pytest.mark.slow
TESTS = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    return emit


def _behavior(cmdp, p=0.5):
    return mixture_behavior(solve_optimal_safe(cmdp), Policy.uniform(cmdp.n_states, cmdp.n_actions), p)


def test_1_exact_mode_safe_improvement(report):
    gen = GeneratorSpec()
    lam = 20.0
    cfg = WsacConfig(beta=2.0, lam=lam, k=500, mode="exact")
    worst_r, worst_c, t0 = math.inf, math.inf, time.perf_counter()
    for seed in range(10):
        m = gen_cmdp(gen, seed)
        mu = _behavior(m)
        mix, _ = run_wsac_exact(m, mu, mu, cfg)
        v, b = mixture_eval(m, mix), policy_eval(m, mu)
        worst_r = min(worst_r, v.j_r - (b.j_r - 1e-2))
        worst_c = min(worst_c, pos(b.j_c) + m.v_max / lam + 1e-2 - pos(v.j_c))
    ok = worst_r >= 0 and worst_c >= 0
    report(1, ok, f"min reward slack {worst_r:.4g}, min cost slack {worst_c:.4g}, "
                  f"{time.perf_counter() - t0:.0f}s")
    assert ok


def test_2_safe_robust_policy_improvement(report):
    spec = ExperimentSpec.from_dict({"generator": {"n_instances": 5}})
    lam = spec.wsac_config().lam
    cells = []
    for s in spec.generator.instance_seeds:
        m = gen_cmdp(spec.generator, s)
        mu = _behavior(m)
        for beta in (0.0, 0.5, 2.0, 8.0):
            for ds in range(3):
                cells.append(Cell(f"srpi/i{s}/b{beta:g}/s{ds}", m, mu, mu, 20000, derive_seed(s, ds, 20000),
                                  spec.wsac_config(beta=beta), 0.5))
    t0 = time.perf_counter()
    rows = [c.row for c in run_cells(cells)]
    v_max = 1.0 / (1.0 - spec.generator.gamma)
    slack_r = [r.j_r_wsac - (r.j_r_behavior - 0.05) for r in rows]
    slack_c = [pos(r.j_c_behavior) + 0.05 + v_max / lam - pos(r.j_c_wsac) for r in rows]
    ok = min(slack_r) >= 0 and min(slack_c) >= 0
    report(2, ok, f"{len(rows)} runs, min reward slack {min(slack_r):.4g}, min cost slack {min(slack_c):.4g}, "
                  f"{time.perf_counter() - t0:.0f}s")
    assert ok


def test_3_statistical_rate(report, tmp_path):
    spec = ExperimentSpec.from_dict({"data": {"n_samples": [500, 2000, 8000, 32000], "seeds": list(range(20))}})
    t0 = time.perf_counter()
    fit = run_rate(spec, out=tmp_path).fit
    ok = -0.8 <= fit.slope <= -0.3
    means = ", ".join(f"{m:.4g}" for m in fit.mean_subopt)
    report(3, ok, f"slope {fit.slope:.3f} +/- {fit.slope_se:.3f}, mean subopt [{means}], "
                  f"{time.perf_counter() - t0:.0f}s")
    assert ok


def test_4_ablation_direction(report, tmp_path):
    spec = ExperimentSpec.from_dict({"generator": {"n_instances": 10},
                                     "data": {"n_samples": [20000], "seeds": [0]}})
    res = run_ablation(spec, out=tmp_path)
    full = ablation_instance_means(res.table, "all")
    no_reg = ablation_instance_means(res.table, "no_bellman_reg")
    higher = sum(no_reg[i] > full[i] for i in full)
    summ = {s["config"]: s for s in res.summary}
    ok = higher >= 8
    report(4, ok, f"beta=0 costlier on {higher}/10; normalized cost all={summ['all']['cost_mean']:.3f}, "
                  f"beta=0 {summ['no_bellman_reg']['cost_mean']:.3f}")
    assert ok


def test_5_oracle_equivalence(report):
    box = WeightClass.box()
    grid_err = 0.0
    for i in range(200):
        rng = np.random.default_rng(10_000 + i)
        ds = small_dataset(rng, n=int(rng.integers(1, 9)))
        pi = random_policy(rng, 2, 2)
        f = rng.uniform(-5, 5, (2, 2))
        for kind in ("reward", "cost"):
            grid_err = max(grid_err, abs(weighted_bellman_error(ds, pi, f, box, kind)
                                         - grid_box_error(ds, pi, f, 1.0, kind)))

    lattice_ok = True
    for i in range(10):
        rng = np.random.default_rng(20_000 + i)
        m = random_cmdp(rng, 2, 2, gamma=0.5)
        ds = sample_dataset(m, random_policy(rng, 2, 2), 40, seed=i)
        pi = random_policy(rng, 2, 2)
        meas = SampleMeasure.from_dataset(ds)
        if i % 2 == 0:
            q = critic_solve_reward(ds, pi, 2.0, box)
            best, res = lattice_objective(meas, pi, 1.0, 2.0, box, "reward", 0.0, 2.0)
        else:
            q = critic_solve_cost(ds, pi, 1.5, 2.0, box)
            best, res = lattice_objective(meas, pi, -1.5, 2.0, box, "cost", -2.0, 2.0)
        lattice_ok &= q.objective <= best + 1e-9 and best - q.objective <= res

    enum_err = 0.0
    for i in range(10):
        rng = np.random.default_rng(30_000 + i)
        while True:
            m = random_cmdp(rng, 3, 2, gamma=0.9)
            if min_safe_cost(m) < -1e-6:
                break
        enum_err = max(enum_err, abs(policy_eval(m, solve_optimal_safe(m)).j_r - enumerate_safe_optimum(m)))

    ok = grid_err <= 1e-9 and lattice_ok and enum_err <= 1e-3
    report(5, ok, f"grid max diff {grid_err:.2g}, lattice within resolution {lattice_ok}, "
                  f"enumeration max diff {enum_err:.2g}")
    assert ok


def test_6_no_regret(report):
    worst_ratio = 0.0
    for i, (kind, A, K) in enumerate(STREAMS):
        S, v_max = 3, 10.0
        payoffs, iterates = play(make_stream(kind, S, A, v_max), S, A, K, v_max, seed=i)
        d_state = np.random.default_rng(1000 + i).dirichlet(np.ones(S))
        worst_ratio = max(worst_ratio, worst_regret(payoffs, iterates, d_state)
                          / (v_max * math.sqrt(2 * math.log(A) / K)))

    hinge_slack = math.inf
    for seed in range(20):
        rng = np.random.default_rng(300 + seed)
        S, A = 5, 3
        m = random_cmdp(rng, S, A, gamma=0.8)
        mu = random_policy(rng, S, A)
        ref = Policy.deterministic(rng.integers(A, size=S), A)
        lam = float(rng.choice([0.5, 2.0, 10.0]))
        cfg = WsacConfig(beta=float(rng.choice([0.0, 2.0])), lam=lam, k=30, eta=float(rng.choice([0.1, 1.0])))
        _, trace = run_wsac(sample_dataset(m, mu, 400, seed=seed), ref, cfg)
        eps_opt, _, hinge = hinge_terms(m, trace, ref)
        hinge_slack = min(hinge_slack, eps_opt + m.v_max / lam - hinge)

    ok = len(STREAMS) == 50 and worst_ratio <= 1.0 and hinge_slack >= 0
    report(6, ok, f"50 streams, max regret/bound {worst_ratio:.3f}; 20 runs, min hinge-bound slack {hinge_slack:.4g}")
    assert ok


def test_7_invariant_suite(report):
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", str(TESTS / "test_invariants.py"), "-q", "-p", "no:cacheprovider",
         "--hypothesis-show-statistics"],
        capture_output=True, text=True, cwd=TESTS.parent,
    )
    elapsed = time.perf_counter() - t0
    counts = [int(c) for c in re.findall(r"(\d+) passing examples", proc.stdout)]
    passed = re.search(r"(\d+) passed", proc.stdout)
    n_tests = int(passed.group(1)) if passed else 0
    ok = proc.returncode == 0 and elapsed < 300 and n_tests >= 1 and len(counts) >= n_tests \
        and min(counts, default=0) >= 1000
    report(7, ok, f"{n_tests} properties, min cases {min(counts, default=0)}, {elapsed:.0f}s")
    assert ok, proc.stdout[-3000:]
