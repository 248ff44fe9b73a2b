"""Command-line entry point: ``wsac <subcommand> --spec SPEC.json --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .cmdp import (
    Cmdp,
    ConfigurationError,
    CoverageError,
    InfeasibleError,
    MixturePolicy,
    Policy,
    mixture_eval,
    policy_eval,
    policy_from_dict,
    solve_optimal_safe,
)
from .data import Dataset, behavior_clone, mixture_behavior, sample_dataset
from .driver import run_wsac
from .experiments import STUDIES, ExperimentSpec, RewardScale, derive_seed, gen_cmdp, pos
from .simplex import LPError

log = logging.getLogger("wsac")

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
# Exit status for violated invariants / infeasible inputs, as opposed to I/O trouble (1).
EXIT_INVARIANT = 2


def _configure_logging() -> None:
    level = os.environ.get("WSAC_LOG", "warning").lower()
    if level not in LOG_LEVELS:
        raise ConfigurationError(f"WSAC_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec()
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    return spec


def _out(args, spec: ExperimentSpec) -> Path:
    d = Path(args.out or spec.outputs.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1))
    print(path)


def cmd_gen_cmdp(args) -> int:
    spec = _load_spec(args)
    d = _out(args, spec)
    for s in spec.generator.instance_seeds:
        cmdp = gen_cmdp(spec.generator, s)
        path = d / f"cmdp_{s}.json"
        cmdp.save(path)
        print(path)
    return 0


def _cmdp_for(args, spec: ExperimentSpec) -> Cmdp:
    return Cmdp.load(args.cmdp) if args.cmdp else gen_cmdp(spec.generator)


def cmd_gen_data(args) -> int:
    spec = _load_spec(args)
    d = _out(args, spec)
    cmdp = _cmdp_for(args, spec)
    p = spec.sweep.behavior_p if args.p is None else args.p
    behavior = mixture_behavior(solve_optimal_safe(cmdp), Policy.uniform(cmdp.n_states, cmdp.n_actions), p)
    _write_json(d / "behavior.json", behavior.to_dict())
    seed0 = int(cmdp.metadata.get("requested_seed", spec.generator.seed))
    for n in spec.data.n_samples:
        for ds in spec.data.seeds:
            data = sample_dataset(cmdp, behavior, n, derive_seed(seed0, ds, n))
            path = d / f"data_n{n}_s{ds}.jsonl"
            data.save_jsonl(path)
            print(path)
    return 0


def cmd_train(args) -> int:
    spec = _load_spec(args)
    d = _out(args, spec)
    data = Dataset.load_jsonl(args.data)
    if args.pi_ref:
        ref = policy_from_dict(json.loads(Path(args.pi_ref).read_text()))
        if not isinstance(ref, Policy):
            raise ConfigurationError("reference policy must be a single stationary policy")
    else:
        ref = behavior_clone(data)
    extra = {} if args.seed is None else {"seed": args.seed}
    mix, trace = run_wsac(data, ref, spec.wsac_config(**extra))
    _write_json(d / "policy.json", mix.to_dict())
    trace.to_csv(d / "trace.csv")
    print(d / "trace.csv")
    return 0


def cmd_eval(args) -> int:
    spec = _load_spec(args)
    d = _out(args, spec)
    if not args.cmdp:
        raise ConfigurationError("eval needs --cmdp")
    cmdp = Cmdp.load(args.cmdp)
    pol = policy_from_dict(json.loads(Path(args.policy).read_text()))
    vals = mixture_eval(cmdp, pol) if isinstance(pol, MixturePolicy) else policy_eval(cmdp, pol)
    scale = RewardScale.of(cmdp)
    doc = {
        "j_r": vals.j_r,
        "j_c": vals.j_c,
        "reward_normalized": scale.reward(vals.j_r),
        "cost_normalized": scale.cost(vals.j_c),
        "safe": bool(vals.j_c <= 1e-9),
    }
    if args.behavior:
        beh = policy_from_dict(json.loads(Path(args.behavior).read_text()))
        vb = mixture_eval(cmdp, beh) if isinstance(beh, MixturePolicy) else policy_eval(cmdp, beh)
        lam = spec.wsac_config().lambda_upper
        bound = pos(vb.j_c) + cmdp.v_max / lam
        doc.update({
            "j_r_behavior": vb.j_r,
            "j_c_behavior": vb.j_c,
            "cost_excess_bound": bound,
            "cost_within_bound": bool(pos(vals.j_c) <= bound),
        })
    _write_json(d / "eval.json", doc)
    return 0


def _study(name):
    def run(args) -> int:
        spec = _load_spec(args)
        res = STUDIES[name](spec, out=_out(args, spec), workers=args.workers)
        for f in res.files:
            print(f)
        if name == "rate" and res.fit is not None:
            print(f"slope {res.fit.slope:.4f} +/- {res.fit.slope_se:.4f}")
        if name == "sensitivity":
            flagged = [t for t in res.table if t[-1]]
            if flagged:
                print(f"{len(flagged)} run(s) exceeded the cost bound", file=sys.stderr)
        return 0
    return run


COMMANDS = {
    "gen-cmdp": cmd_gen_cmdp,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "figure1": _study("figure1"),
    "ablation": _study("ablation"),
    "sensitivity": _study("sensitivity"),
    "rate": _study("rate"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsac", description="Tabular WSAC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--spec", help="ExperimentSpec JSON (defaults used when omitted)")
        p.add_argument("--out", help="output directory (overrides outputs.directory)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="override the generator seed")
        if name in ("gen-data", "eval"):
            p.add_argument("--cmdp", help="CMDP JSON; generated from the experiment spec when omitted")
        if name == "gen-data":
            p.add_argument("--p", type=float, default=None, help="share of the optimal safe policy in the behavior")
        if name == "train":
            p.add_argument("--data", required=True, help="dataset JSONL")
            p.add_argument("--pi-ref", help="reference policy JSON; behavior clone of the data when omitted")
        if name == "eval":
            p.add_argument("--policy", required=True)
            p.add_argument("--behavior", help="behavior policy JSON for the cost-excess check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        if args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
        return COMMANDS[args.command](args)
    except (ConfigurationError, CoverageError, InfeasibleError, LPError, FloatingPointError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
